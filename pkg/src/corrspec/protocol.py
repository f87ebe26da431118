"""Monte-Carlo model of the two-atom correlation Ramsey sequence.

Per probe: both atoms see the same, uniformly random laser phase; each atom
independently flips with its Ramsey probability after amplitude damping over
the free-evolution time; each readout is then misassigned with probability
``1 - detection_fidelity``. The laser phase is never recorded, only whether
the two atoms agreed.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from corrspec.core import ClockSpec
from corrspec.rng import check_seed, substream

TWO_PI = 2.0 * np.pi

#: Free-evolution times and probe counts of the reference fringe scan.
REFERENCE_T_LIST = (0.1, 0.5, 1.0, 2.0, 3.0, 5.0)
REFERENCE_PROBE_COUNTS = (1500, 600, 600, 360, 300, 100)

DEFAULT_GRID_POINTS = 24
DEFAULT_GRID_SPAN = 2.5 * TWO_PI

_DOWN, _UP = 0, 1
_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)


def default_phase_grid(n_points: int = DEFAULT_GRID_POINTS,
                       span: float = DEFAULT_GRID_SPAN) -> np.ndarray:
    return np.linspace(0.0, span, n_points)


@dataclass(frozen=True)
class ProbeConfig:
    """One Ramsey interrogation.

    ``y_offsets`` are the atoms' fractional frequency offsets from the laser;
    ``delta_phi_z`` is the applied differential phase k.(r1 - r2).
    """

    t: float
    y_offsets: tuple = (0.0, 0.0)
    delta_phi_z: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"t must be positive, got {self.t}")
        if len(self.y_offsets) != 2:
            raise ValueError("y_offsets needs one entry per atom")
        if any(not abs(y) < 1e-6 for y in self.y_offsets):
            raise ValueError("fractional offsets must satisfy |y| < 1e-6")
        if not np.isfinite(self.delta_phi_z):
            raise ValueError("delta_phi_z must be finite")
        check_seed(self.seed)


@dataclass(frozen=True)
class JointOutcome:
    flipped_1: bool
    flipped_2: bool
    correlated: bool
    final_states: tuple = (0, 0)

    def __post_init__(self):
        if self.correlated != (self.flipped_1 == self.flipped_2):
            raise ValueError("correlated must equal (flipped_1 == flipped_2)")


@dataclass
class FringeDataset:
    """Correlated counts versus applied differential phase at one Ramsey time."""

    t: float
    delta_phi_z: np.ndarray
    n_correlated: np.ndarray
    n_total: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.delta_phi_z = np.asarray(self.delta_phi_z, dtype=float)
        self.n_correlated = np.asarray(self.n_correlated, dtype=np.int64)
        self.n_total = np.asarray(self.n_total, dtype=np.int64)
        n = len(self.delta_phi_z)
        if n == 0 or len(self.n_correlated) != n or len(self.n_total) != n:
            raise ValueError("fringe columns must be non-empty and equal length")
        if np.any(self.n_total <= 0):
            raise ValueError("every point needs n_total > 0")
        if np.any(self.n_correlated < 0) or np.any(self.n_correlated > self.n_total):
            raise ValueError("need 0 <= n_correlated <= n_total")
        if np.any(np.diff(self.delta_phi_z) <= 0):
            raise ValueError("delta_phi_z must be strictly increasing")

    @property
    def points(self):
        return list(zip(self.delta_phi_z.tolist(), self.n_correlated.tolist(),
                        self.n_total.tolist()))

    @property
    def fractions(self) -> np.ndarray:
        return self.n_correlated / self.n_total

    @property
    def total_probes(self) -> int:
        return int(self.n_total.sum())


def _rotation(theta, phi):
    gen = np.cos(phi) * _SX + np.sin(phi) * _SY
    return np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * gen


def damped_ramsey_flip_probability(dphi: float, t: float, t_prime: float,
                                   initial: int = _DOWN) -> float:
    """Flip probability from explicit density-matrix evolution.

    pi/2 pulse, free precession by ``dphi`` with an amplitude-damping channel
    (|up> decays to |down> with time constant ``t_prime``), second pi/2 pulse.
    """
    rho = np.zeros((2, 2), dtype=complex)
    rho[initial, initial] = 1.0
    r = _rotation(np.pi / 2, 0.0)
    rho = r @ rho @ r.conj().T
    gamma = -np.expm1(-t / t_prime)
    # sqrt(1 - gamma) written directly to keep precision when gamma -> 1
    k0 = np.array([[1.0, 0.0], [0.0, np.exp(-0.5 * t / t_prime)]], dtype=complex)
    k1 = np.array([[0.0, np.sqrt(gamma)], [0.0, 0.0]], dtype=complex)
    rho = k0 @ rho @ k0.conj().T + k1 @ rho @ k1.conj().T
    u = np.diag([1.0, np.exp(-1j * dphi)])
    rho = u @ rho @ u.conj().T
    rho = r @ rho @ r.conj().T
    return float(np.real(rho[1 - initial, 1 - initial]))


def damped_flip_probability(dphi, t, t_prime):
    """Closed form of :func:`damped_ramsey_flip_probability`.

    The channel shrinks the transverse Bloch component by exp(-t / 2T');
    the longitudinal part it builds up is rotated into the equator by the
    second pulse and never reaches the measured population.
    """
    eta = np.exp(-0.5 * t / t_prime)
    return 0.5 * (1.0 + eta * np.cos(dphi))


def _atom_phases(phi_l, config_t, y_offsets, delta_phi_z, nu):
    # the whole applied differential phase is put on atom 2
    d1 = phi_l - TWO_PI * nu * y_offsets[0] * config_t
    d2 = phi_l - delta_phi_z - TWO_PI * nu * y_offsets[1] * config_t
    return d1, d2


def simulate_probe(config: ProbeConfig, spec: ClockSpec,
                   rng: np.random.Generator | None = None,
                   initial: tuple = (0, 0),
                   laser_phase: float | None = None) -> JointOutcome:
    """Run a single probe with exact density-matrix evolution per atom.

    The laser phase is drawn uniformly unless ``laser_phase`` pins it.
    """
    if rng is None:
        rng = substream(config.seed, "probe")
    phi_l = rng.uniform(0.0, TWO_PI) if laser_phase is None else float(laser_phase)
    phases = _atom_phases(phi_l, config.t, config.y_offsets, config.delta_phi_z, spec.nu)
    p = [damped_ramsey_flip_probability(d, config.t, spec.t_prime, s)
         for d, s in zip(phases, initial)]
    flips = rng.random(2) < np.array(p)
    misread = rng.random(2) < (1.0 - spec.detection_fidelity)
    seen = flips ^ misread
    final = tuple(int(s) ^ int(f) for s, f in zip(initial, flips))
    return JointOutcome(bool(seen[0]), bool(seen[1]), bool(seen[0] == seen[1]), final)


def simulate_probes(config: ProbeConfig, spec: ClockSpec, n: int,
                    rng: np.random.Generator, initial: tuple = (0, 0),
                    phi_l_offset: float = 0.0):
    """Vectorised run of ``n`` consecutive probes with the same settings.

    Returns ``(flipped_1, flipped_2, final_states)`` where the flip arrays are
    the *observed* flips. Atom states carry over from probe to probe.
    """
    phi_l = rng.uniform(0.0, TWO_PI, size=n) + phi_l_offset
    d1, d2 = _atom_phases(phi_l, config.t, config.y_offsets, config.delta_phi_z, spec.nu)
    p = np.stack([damped_flip_probability(d1, config.t, spec.t_prime),
                  damped_flip_probability(d2, config.t, spec.t_prime)], axis=1)
    flips = rng.random((n, 2)) < p
    misread = rng.random((n, 2)) < (1.0 - spec.detection_fidelity)
    seen = flips ^ misread
    final = np.asarray(initial, dtype=np.int64) ^ (np.bitwise_xor.reduce(flips, axis=0)
                                                   if n else np.zeros(2, bool))
    return seen[:, 0], seen[:, 1], tuple(int(s) for s in final)


def split_probes(total: int, n_points: int) -> np.ndarray:
    """Equal allocation of ``total`` probes, remainder to the leading points."""
    if total < n_points:
        raise ValueError(f"{total} probes cannot cover {n_points} grid points")
    base, extra = divmod(int(total), int(n_points))
    counts = np.full(n_points, base, dtype=np.int64)
    counts[:extra] += 1
    return counts


def simulate_fringe(t: float, phase_grid, n_probes_per_point, spec: ClockSpec,
                    seed: int, y_offsets=(0.0, 0.0), stream: tuple = (),
                    phi_l_offset: float = 0.0) -> FringeDataset:
    """Correlated counts at each applied phase for one Ramsey time.

    ``n_probes_per_point`` is an int or one count per grid point. Grid point
    ``j`` draws from substream ``(seed, "fringe", *stream, j)``.
    """
    grid = np.asarray(phase_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("phase grid is empty")
    counts = np.broadcast_to(np.asarray(n_probes_per_point, dtype=np.int64), grid.shape)
    if np.any(counts <= 0):
        raise ValueError("n_probes_per_point must be positive")
    n_corr = np.empty(grid.size, dtype=np.int64)
    state = (0, 0)
    for j, (dz, n) in enumerate(zip(grid, counts)):
        cfg = ProbeConfig(t=t, y_offsets=tuple(y_offsets), delta_phi_z=float(dz),
                          seed=seed)
        rng = substream(seed, "fringe", *stream, j)
        f1, f2, state = simulate_probes(cfg, spec, int(n), rng, state, phi_l_offset)
        n_corr[j] = int(np.count_nonzero(f1 == f2))
    return FringeDataset(t=float(t), delta_phi_z=grid, n_correlated=n_corr,
                         n_total=counts.copy(), meta={"seed": seed, "stream": list(stream)})


def _scan_one(args):
    t, grid, total, spec, seed, y_offsets, stream = args
    return simulate_fringe(t, grid, split_probes(total, len(grid)), spec, seed,
                           y_offsets=y_offsets, stream=stream)


def coherence_scan(t_list=REFERENCE_T_LIST, probe_counts=REFERENCE_PROBE_COUNTS,
                   spec: ClockSpec | None = None, seed: int = 0, phase_grid=None,
                   y_offsets=(0.0, 0.0), stream: tuple = (),
                   workers: int = 1) -> list[FringeDataset]:
    """One fringe per Ramsey time; each total probe count is spread over the grid."""
    t_list, probe_counts = list(t_list), list(probe_counts)
    if len(t_list) != len(probe_counts):
        raise ValueError("t_list and probe_counts must have equal length")
    spec = spec or ClockSpec()
    grid = default_phase_grid() if phase_grid is None else np.asarray(phase_grid, float)
    jobs = [(t, grid, n, spec, seed, tuple(y_offsets), tuple(stream) + (i,))
            for i, (t, n) in enumerate(zip(t_list, probe_counts))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_scan_one, jobs))
    return [_scan_one(j) for j in jobs]


def session_duration(t: float, n_probes: int, spec: ClockSpec,
                     overhead: float | None = None) -> float:
    """Wall-clock length of ``n_probes`` probes including per-probe dead time."""
    if n_probes <= 0:
        raise ValueError("n_probes must be positive")
    oh = spec.session_overhead if overhead is None else overhead
    return n_probes * (t + oh)
