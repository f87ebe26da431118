"""Spread of the 1 s instability inferred from single 300-probe sessions at T = 3 s.

Compares the contrast-based estimate with the fitted-phase-error estimate
over many independent sessions.
"""

import argparse

import numpy as np

from corrspec.core import ClockSpec
from corrspec.estimation import (extrapolate_sigma1s, fit_fringe_mle, phase_to_fractional_sigma,
                                 sigma1s_from_contrast)
from corrspec.protocol import default_phase_grid, session_duration, simulate_fringe, split_probes


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sessions", type=int, default=300)
    ap.add_argument("--contrast", type=float, default=0.4363,
                    help="pair contrast before readout errors")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    t, n = 3.0, 300
    spec = ClockSpec(t_prime=-t / np.log(2 * args.contrast))
    grid = default_phase_grid()
    dur = session_duration(t, n, spec)
    by_c, by_phase = [], []
    for s in range(args.sessions):
        f = fit_fringe_mle(simulate_fringe(t, grid, split_probes(n, grid.size), spec,
                                           args.seed, stream=(s,)))
        by_c.append(sigma1s_from_contrast(f.contrast, t, n, spec) if f.contrast > 0 else np.inf)
        by_phase.append(extrapolate_sigma1s(phase_to_fractional_sigma(f.phase_err, t, spec), dur))
    band = (0.7 * 3.7e-16, 1.3 * 3.7e-16)
    for name, x in (("contrast", np.array(by_c)), ("phase error", np.array(by_phase))):
        inside = np.mean((x >= band[0]) & (x <= band[1]))
        lo, med, hi = np.percentile(x, [5, 50, 95])
        print(f"{name:>12}: median {med:.3g}, 90% range [{lo:.3g}, {hi:.3g}], "
              f"inside 3.7e-16 +-30%: {inside:.0%}")


if __name__ == "__main__":
    main()
