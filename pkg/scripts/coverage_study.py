"""Coverage of the contrast and coherence-time intervals over replicate scans."""

import argparse

import numpy as np

from corrspec.core import ClockSpec, lifetime_contrast
from corrspec.estimation import fit_contrast_decay, fit_fringe_mle
from corrspec.protocol import REFERENCE_PROBE_COUNTS, REFERENCE_T_LIST, coherence_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replicates", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--fidelity", type=float, default=1.0)
    ap.add_argument("--t-prime", type=float, default=20.6)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    spec = ClockSpec(t_prime=args.t_prime, detection_fidelity=args.fidelity)
    truth_c = lifetime_contrast(np.array(REFERENCE_T_LIST), spec) * spec.detection_contrast
    c_hits = np.zeros(len(REFERENCE_T_LIST))
    tc_hits, modes = 0, []
    for r in range(args.replicates):
        data = coherence_scan(REFERENCE_T_LIST, REFERENCE_PROBE_COUNTS, spec, args.seed, stream=(r,),
                              workers=args.workers)
        fits = [fit_fringe_mle(d) for d in data]
        for i, f in enumerate(fits):
            c_hits[i] += f.contrast_ci[0] <= truth_c[i] <= f.contrast_ci[1]
        dec = fit_contrast_decay([(f.t, f) for f in fits])
        tc_hits += dec.ci_lower <= args.t_prime <= dec.ci_upper
        modes.append(dec.t_c)

    n = args.replicates
    print("contrast interval coverage per T:")
    for t, h in zip(REFERENCE_T_LIST, c_hits):
        print(f"  T={t:4.1f} s  {h / n:.2f}")
    print(f"T_C interval coverage: {tc_hits / n:.2f} (nominal 0.68)")
    print(f"T_C posterior modes: median {np.median(modes):.1f} s, "
          f"fraction at prior edge {np.mean(np.array(modes) > 24.9):.2f}")


if __name__ == "__main__":
    main()
