"""Scenario files: one TOML document with a section per module.

Every physical quantity carries its unit in the key name. Unknown keys are
errors, so a typo never silently falls back to a default.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from corrspec.core import ClockSpec
from corrspec.detection import (DEFAULT_BRIGHT, DEFAULT_CYCLE_DURATION, DEFAULT_DARK,
                                DEFAULT_MAPPING, DetectionModel)
from corrspec.protocol import (DEFAULT_GRID_POINTS, DEFAULT_GRID_SPAN, REFERENCE_PROBE_COUNTS,
                               REFERENCE_T_LIST, default_phase_grid)
from corrspec.remote import LaserNoiseModel, RemoteConfig, calibrated
from corrspec.rng import check_seed


class ConfigError(ValueError):
    """Invalid scenario; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class ClockSection:
    nu_hz: float = 1.121e15
    t_prime_s: float = 20.6
    detection_fidelity: float = 0.99
    overhead_s: float = 0.1
    session_overhead_s: float = 0.753


@dataclass
class ProtocolSection:
    t_list_s: list = field(default_factory=lambda: list(REFERENCE_T_LIST))
    probe_counts: list = field(default_factory=lambda: list(REFERENCE_PROBE_COUNTS))
    grid_points: int = DEFAULT_GRID_POINTS
    grid_span_rad: float = DEFAULT_GRID_SPAN
    y_offsets: list = field(default_factory=lambda: [0.0, 0.0])


@dataclass
class EstimationSection:
    prior_lower_s: float = 0.0
    prior_upper_s: float = 25.0
    coherence_time_s: float = 9.7
    t_min_s: float = 0.05
    t_max_s: float = 25.0
    t_points: int = 200


@dataclass
class DetectionSection:
    bright_counts: float = DEFAULT_BRIGHT
    dark_counts: float = DEFAULT_DARK
    mapping: list = field(default_factory=lambda: [list(r) for r in DEFAULT_MAPPING])
    cycle_duration_s: float = DEFAULT_CYCLE_DURATION
    threshold: float = 0.99
    max_cycles: int = 200
    n_trials: int = 10000


@dataclass
class RemoteSection:
    n_a: int = 100
    n_b: int = 100
    true_dphi_ab_rad: float = 0.3
    prior_dphi_ab_rad: float | None = None
    prior_var_rad2: float = 0.01
    theta_a_rad: float = 0.0
    theta_b_rad: float = 0.0
    calibrate: bool = True
    synchronized: bool = True
    t_s: float = 3.0
    tau_s: float = 1.0
    noise_kind: str = "uniform-random"
    noise_step_rad: float = 1.0
    noise_components: int = 5
    guard_epsilon: float = 0.0
    n_shots: int = 10000


@dataclass
class OutputSection:
    dir: str = "out"


_SECTIONS = {
    "clock": ClockSection,
    "protocol": ProtocolSection,
    "estimation": EstimationSection,
    "detection": DetectionSection,
    "remote": RemoteSection,
    "output": OutputSection,
}


@dataclass
class Scenario:
    seed: int | None = None
    clock: ClockSection = field(default_factory=ClockSection)
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    estimation: EstimationSection = field(default_factory=EstimationSection)
    detection: DetectionSection = field(default_factory=DetectionSection)
    remote: RemoteSection = field(default_factory=RemoteSection)
    output: OutputSection = field(default_factory=OutputSection)

    # ---- construction -------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        sc = cls()
        for key, value in raw.items():
            if key == "seed":
                sc.seed = value
            elif key in _SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError(key, "expected a table")
                setattr(sc, key, _build_section(key, _SECTIONS[key], value))
            else:
                raise ConfigError(key, "unknown key")
        return sc

    @classmethod
    def load(cls, path) -> "Scenario":
        text = Path(path).read_text()
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"not valid TOML ({exc})") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)

    def scenario_hash(self) -> str:
        """SHA-256 of the canonical JSON form; independent of key order.

        The output directory is excluded so that the same scenario written to
        two places hashes identically.
        """
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # ---- validation and typed views -----------------------------------

    def validate(self) -> "Scenario":
        try:
            self.seed = check_seed(self.seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError("seed", str(exc)) from exc
        self.clock_spec()
        self.phase_grid()
        p = self.protocol
        if len(p.t_list_s) != len(p.probe_counts):
            raise ConfigError("protocol.probe_counts", "must match protocol.t_list_s in length")
        if any(not t > 0 for t in p.t_list_s):
            raise ConfigError("protocol.t_list_s", "Ramsey times must be positive")
        if any(int(n) < p.grid_points for n in p.probe_counts):
            raise ConfigError("protocol.probe_counts", "each count must cover every grid point")
        if len(p.y_offsets) != 2 or any(not abs(y) < 1e-6 for y in p.y_offsets):
            raise ConfigError("protocol.y_offsets", "need two offsets with |y| < 1e-6")
        e = self.estimation
        if not 0 <= e.prior_lower_s < e.prior_upper_s:
            raise ConfigError("estimation.prior_upper_s", "prior bounds must satisfy 0 <= lower < upper")
        if not 0 < e.t_min_s < e.t_max_s or e.t_points < 2:
            raise ConfigError("estimation.t_max_s", "need 0 < t_min_s < t_max_s and t_points >= 2")
        if not e.coherence_time_s > 0:
            raise ConfigError("estimation.coherence_time_s", "must be positive")
        self.detection_model()
        if self.detection.n_trials < 1:
            raise ConfigError("detection.n_trials", "must be positive")
        self.remote_config()
        if self.remote.n_shots < 1:
            raise ConfigError("remote.n_shots", "must be positive")
        if not self.remote.tau_s > 0:
            raise ConfigError("remote.tau_s", "must be positive")
        return self

    def clock_spec(self) -> ClockSpec:
        c = self.clock
        return _wrap_errors("clock", lambda: ClockSpec(
            nu=c.nu_hz, t_prime=c.t_prime_s, detection_fidelity=c.detection_fidelity,
            overhead=c.overhead_s, session_overhead=c.session_overhead_s), {
            "nu": "nu_hz", "t_prime": "t_prime_s", "detection_fidelity": "detection_fidelity",
            "overhead": "overhead_s"})

    def phase_grid(self) -> np.ndarray:
        p = self.protocol
        if p.grid_points < 4:
            raise ConfigError("protocol.grid_points", "need at least 4 points")
        if not p.grid_span_rad > np.pi:
            raise ConfigError("protocol.grid_span_rad", "grid must span more than pi")
        return default_phase_grid(p.grid_points, p.grid_span_rad)

    def detection_model(self) -> DetectionModel:
        d = self.detection
        return _wrap_errors("detection", lambda: DetectionModel.from_rates(
            d.bright_counts, d.dark_counts, d.mapping, cycle_duration=d.cycle_duration_s,
            threshold=d.threshold, max_cycles=d.max_cycles), {
            "threshold": "threshold", "max_cycles": "max_cycles", "mean": "bright_counts"})

    def remote_config(self) -> RemoteConfig:
        r = self.remote
        noise = _wrap_errors("remote", lambda: LaserNoiseModel(
            kind=r.noise_kind, step=r.noise_step_rad, n_components=r.noise_components),
            {"kind": "noise_kind", "non-negative": "noise_step_rad"})
        cfg = _wrap_errors("remote", lambda: RemoteConfig(
            n_a=r.n_a, n_b=r.n_b, theta_a=r.theta_a_rad, theta_b=r.theta_b_rad,
            true_dphi_ab=r.true_dphi_ab_rad, laser_noise=noise, synchronized=r.synchronized,
            t=r.t_s, prior_dphi_ab=r.prior_dphi_ab_rad, prior_var=r.prior_var_rad2,
            guard_epsilon=r.guard_epsilon), {
            "atom": "n_a", "prior_var": "prior_var_rad2", "guard": "guard_epsilon",
            "t must": "t_s"})
        return calibrated(cfg) if r.calibrate else cfg


def _build_section(name, cls, table):
    known = {f.name: f for f in fields(cls)}
    defaults = cls()
    kwargs = {}
    for key, value in table.items():
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown key")
        default = getattr(defaults, key)
        kwargs[key] = _coerce(f"{name}.{key}", value, default)
    return cls(**{**asdict(defaults), **kwargs})


def _coerce(key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, "expected true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, "expected an integer")
        return value
    if isinstance(default, float) or default is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, "expected a number")
        if not np.isfinite(value):
            raise ConfigError(key, "must be finite")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(key, "expected a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(key, "expected an array")
        return value
    return value


def _wrap_errors(section, build, hints):
    try:
        return build()
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        key = next((v for k, v in hints.items() if k in msg), "?")
        raise ConfigError(f"{section}.{key}", msg) from exc
