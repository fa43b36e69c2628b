"""Run configuration: a single JSON document, validated with defaults.

Unknown keys are rejected so a typo cannot silently fall back to a default.
Only ``output_dir`` may be overridden from the environment (IBCMPS_OUTPUT_DIR).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .mpo import SpinOperators, nn_mpo, spin_operators


@dataclass(frozen=True)
class ModelConfig:
    name: str
    spin: float = 1.0
    coupling: float = 1.0
    field: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    chi: int
    window_size: int
    dt: float
    t_max: float
    chi_max: int
    trotter_order: int = 4
    perturbation_site: int = 0          # 1-based; 0 means window_size // 2
    perturbation_operator: str = "S+"
    itebd_schedule: tuple = ((0.1, 300), (0.01, 300), (0.001, 200))
    energy_tol: float = 1e-9
    q_points: int = 201
    omega_max: float = 4.0
    omega_points: int = 401
    t_window: float | None = None       # None means t_max
    output_dir: str = "runs/out"
    seed: int = 0
    svd_tol: float = 1e-12
    env_tol: float = 1e-10
    measure_every: int = 1
    checkpoint_every: int = 200
    alarm_threshold: float = 1e-5

    @property
    def flip_site(self) -> int:
        return self.perturbation_site if self.perturbation_site else self.window_size // 2

    @property
    def effective_t_window(self) -> float:
        return self.t_max if self.t_window is None else self.t_window

    def canonical_json(self) -> str:
        def enc(o):
            if isinstance(o, ModelConfig):
                return {"name": o.name, "spin": o.spin, "coupling": o.coupling,
                        "field": o.field}
            raise TypeError
        return json.dumps(self, default=lambda o: o.__dict__, sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


_TOP_KEYS = {
    "model", "chi", "chi_max", "window_size", "perturbation", "dt", "t_max",
    "trotter_order", "itebd_schedule", "energy_tol", "spectral", "t_window",
    "output_dir", "seed", "svd_tol", "env_tol", "measure_every",
    "checkpoint_every", "alarm_threshold",
}
_MODEL_KEYS = {"name", "spin", "coupling", "field"}
_PERT_KEYS = {"site", "operator"}
_SPECTRAL_KEYS = {"q_points", "omega_max", "omega_points"}
_MODELS = {"heisenberg_s1", "heisenberg"}


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON configuration document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"syntax error at line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")

    def need(key):
        if key not in doc:
            raise ConfigError(f"missing required key {key!r}")
        return doc[key]

    model_raw = need("model")
    if isinstance(model_raw, str):
        model_raw = {"name": model_raw}
    if not isinstance(model_raw, dict):
        raise ConfigError("model must be a name or an object")
    bad = set(model_raw) - _MODEL_KEYS
    if bad:
        raise ConfigError(f"unknown model keys: {sorted(bad)}")
    name = model_raw.get("name")
    if name not in _MODELS:
        raise ConfigError(f"unknown model {name!r}; supported: {sorted(_MODELS)}")
    if name == "heisenberg_s1":
        model = ModelConfig(name=name, spin=1.0,
                            coupling=float(model_raw.get("coupling", 1.0)),
                            field=float(model_raw.get("field", 0.0)))
    else:
        model = ModelConfig(name=name, spin=float(model_raw.get("spin", 1.0)),
                            coupling=float(model_raw.get("coupling", 1.0)),
                            field=float(model_raw.get("field", 0.0)))
    if round(2 * model.spin + 1) < 2 or abs(2 * model.spin - round(2 * model.spin)) > 1e-12:
        raise ConfigError(f"spin must be a positive (half-)integer, got {model.spin}")

    chi = _int_in(need("chi"), "chi", 1, None)
    window_size = _int_in(need("window_size"), "window_size", 2, None)
    if window_size % 2:
        raise ConfigError(f"window_size must be even, got {window_size}")
    dt = _float_in(need("dt"), "dt", strictly_positive=True)
    t_max = _float_in(need("t_max"), "t_max", nonnegative=True)
    chi_max = _int_in(doc.get("chi_max", 3 * chi // 2), "chi_max", 1, None)
    order = _int_in(doc.get("trotter_order", 4), "trotter_order", 1, None)
    if order not in (1, 2, 4):
        raise ConfigError(f"trotter_order must be 1, 2 or 4, got {order}")

    pert = doc.get("perturbation", {})
    if not isinstance(pert, dict) or set(pert) - _PERT_KEYS:
        raise ConfigError("perturbation must be an object with keys site, operator")
    site = _int_in(pert.get("site", 0), "perturbation.site", 0, window_size)
    op_name = pert.get("operator", "S+")
    if op_name not in ("S+", "S-", "Sz", "Sx", "Sy"):
        raise ConfigError(f"unknown perturbation operator {op_name!r}")

    sched_raw = doc.get("itebd_schedule", [[0.1, 300], [0.01, 300], [0.001, 200]])
    try:
        sched = tuple((float(a), int(b)) for a, b in sched_raw)
    except (TypeError, ValueError):
        raise ConfigError("itebd_schedule must be a list of [dtau, n_iterations]")
    if any(dtau <= 0 or n <= 0 for dtau, n in sched):
        raise ConfigError("itebd_schedule entries must be positive")
    if any(b >= a for (a, _), (b, _) in zip(sched, sched[1:])):
        raise ConfigError("itebd dtau values must be strictly decreasing")

    spectral = doc.get("spectral", {})
    if not isinstance(spectral, dict) or set(spectral) - _SPECTRAL_KEYS:
        raise ConfigError("spectral must be an object with keys "
                          f"{sorted(_SPECTRAL_KEYS)}")
    q_points = _int_in(spectral.get("q_points", 201), "spectral.q_points", 2, None)
    omega_max = _float_in(spectral.get("omega_max", 4.0), "spectral.omega_max",
                          strictly_positive=True)
    omega_points = _int_in(spectral.get("omega_points", 401), "spectral.omega_points",
                           2, None)

    t_window = doc.get("t_window", None)
    if t_window is not None:
        t_window = _float_in(t_window, "t_window", strictly_positive=True)
        if t_window > t_max and t_max > 0:
            raise ConfigError("t_window must not exceed t_max")

    output_dir = os.environ.get("IBCMPS_OUTPUT_DIR") or doc.get("output_dir", "runs/out")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir must be a non-empty string")

    return RunConfig(
        model=model,
        chi=chi,
        window_size=window_size,
        dt=dt,
        t_max=t_max,
        chi_max=chi_max,
        trotter_order=order,
        perturbation_site=site,
        perturbation_operator=op_name,
        itebd_schedule=sched,
        energy_tol=_float_in(doc.get("energy_tol", 1e-9), "energy_tol",
                             strictly_positive=True),
        q_points=q_points,
        omega_max=omega_max,
        omega_points=omega_points,
        t_window=t_window,
        output_dir=output_dir,
        seed=_int_in(doc.get("seed", 0), "seed", 0, None),
        svd_tol=_float_in(doc.get("svd_tol", 1e-12), "svd_tol", nonnegative=True),
        env_tol=_float_in(doc.get("env_tol", 1e-10), "env_tol", strictly_positive=True),
        measure_every=_int_in(doc.get("measure_every", 1), "measure_every", 1, None),
        checkpoint_every=_int_in(doc.get("checkpoint_every", 200), "checkpoint_every",
                                 0, None),
        alarm_threshold=_float_in(doc.get("alarm_threshold", 1e-5), "alarm_threshold",
                                  strictly_positive=True),
    )


def _int_in(value, name, lo, hi):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"{name} must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(f"{name} must be <= {hi}, got {value}")
    return value


def _float_in(value, name, strictly_positive=False, nonnegative=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    value = float(value)
    if strictly_positive and value <= 0:
        raise ConfigError(f"{name} must be > 0, got {value}")
    if nonnegative and value < 0:
        raise ConfigError(f"{name} must be >= 0, got {value}")
    return value


def build_model(model: ModelConfig):
    """Spin operators, two-site Hamiltonian matrix, and MPO of a model."""
    ops = spin_operators(model.spin)
    j = model.coupling
    terms = [(j * ops.sx, ops.sx), (j * ops.sy, ops.sy), (j * ops.sz, ops.sz)]
    fld = model.field * ops.sz if model.field else None
    mpo = nn_mpo(terms, field=fld, d=ops.d)
    h2 = np.zeros((ops.d**2, ops.d**2), dtype=np.complex128)
    for left_op, right_op in terms:
        h2 += np.kron(left_op, right_op)
    return ops, h2, mpo


def perturbation_matrix(ops: SpinOperators, name: str) -> np.ndarray:
    return {"S+": ops.sp, "S-": ops.sm, "Sz": ops.sz, "Sx": ops.sx, "Sy": ops.sy}[name]
