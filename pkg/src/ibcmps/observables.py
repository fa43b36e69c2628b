"""Measurements on windows and their Fourier analysis.

The unequal-time correlator is the overlap of the evolved, locally flipped
state with the unperturbed window, one lowering operator inserted per site;
the exterior contracts to identities because both states share their
boundary bases. Its Fourier transform (cosine form, Gaussian time window)
gives the spectral function, whose ridge maximum traces the dispersion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError
from .imps import left_transfer, right_transfer
from .mpo import spin_operators
from .window import WindowState, site_expectations


@dataclass(frozen=True)
class SpaceTimeRecord:
    """Complex field on a rectangular (time x position) grid."""

    times: np.ndarray       # increasing, starting at 0
    positions: np.ndarray   # integer offsets relative to the perturbed site
    values: np.ndarray      # complex, shape (n_times, n_positions)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        positions = np.asarray(self.positions, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.complex128)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "values", values)
        if values.shape != (len(times), len(positions)):
            raise DimensionError("values grid does not match times x positions")
        if len(times) and (times[0] != 0.0 or np.any(np.diff(times) <= 0)):
            raise DimensionError("times must start at 0 and increase")


@dataclass(frozen=True)
class SpectralGrid:
    """S(q, omega) on a rectangular grid; rows are q, columns are omega."""

    q_values: np.ndarray
    omega_values: np.ndarray
    s: np.ndarray            # real, shape (n_q, n_omega)
    window_time: float | None

    def __post_init__(self):
        if self.s.shape != (len(self.q_values), len(self.omega_values)):
            raise DimensionError("spectral grid shape mismatch")
        if not np.all(np.isfinite(self.s)):
            raise NumericalError("spectral function contains non-finite values")


@dataclass(frozen=True)
class Dispersion:
    points: tuple            # ((q, omega_peak), ...)
    gap: float               # omega_peak at the grid q nearest pi
    excluded_q: tuple = ()   # q values dropped because their column was all zero


def sz_profile(w: WindowState) -> np.ndarray:
    """<S^z(x)> for each window site."""
    d = w.d
    ops = spin_operators((d - 1) / 2.0)
    vals = site_expectations(w, ops.sz)
    worst = float(np.max(np.abs(vals.imag))) if len(vals) else 0.0
    if worst > 1e-10:
        raise NumericalError(f"magnetization has imaginary part {worst:.3e}")
    return vals.real


def unequal_time_correlator(
    ground: WindowState,
    evolved: WindowState,
    e_ref: float,
    op: np.ndarray | None = None,
) -> np.ndarray:
    """e^{i e_ref t} <ground| op_x |evolved> for every window site x.

    ``op`` defaults to the lowering operator of the local spin. Boundary
    bonds contract as identities: the exterior of both windows is the same
    ground state expressed in the same effective bases.
    """
    if ground.n_sites != evolved.n_sites or ground.d != evolved.d:
        raise DimensionError("window geometries do not match")
    if ground.tensors[0].shape[0] != evolved.tensors[0].shape[0] or \
            ground.tensors[-1].shape[2] != evolved.tensors[-1].shape[2]:
        raise DimensionError("boundary bases do not match")
    d = ground.d
    if op is None:
        op = spin_operators((d - 1) / 2.0).sm
    op = np.asarray(op, dtype=np.complex128)

    bra = ground.effective_tensors()
    ket = evolved.effective_tensors()
    n = len(bra)
    rights = [None] * (n + 1)
    rights[n] = np.eye(bra[-1].shape[2], dtype=np.complex128)
    for i in range(n - 1, -1, -1):
        rights[i] = right_transfer(rights[i + 1], ket[i], bra=bra[i])
    left = np.eye(bra[0].shape[0], dtype=np.complex128)
    out = np.zeros(n, dtype=np.complex128)
    for i in range(n):
        mid = left_transfer(left, ket[i], op, bra=bra[i])
        out[i] = np.sum(mid * rights[i + 1])
        left = left_transfer(left, ket[i], bra=bra[i])

    phase = np.exp(1j * e_ref * evolved.time)
    prefactor = np.conj(ground.amplitude) * evolved.amplitude
    return phase * prefactor * out


def greens_function(a: SpaceTimeRecord) -> SpaceTimeRecord:
    """G = -i A, pointwise."""
    return SpaceTimeRecord(times=a.times, positions=a.positions, values=-1j * a.values)


def default_q_grid(n: int = 201) -> np.ndarray:
    return np.linspace(0.0, np.pi, n)


def default_omega_grid(n: int = 401, omega_max: float = 4.0) -> np.ndarray:
    return np.linspace(0.0, omega_max, n)


def spectral_function(
    g: SpaceTimeRecord,
    q_values: np.ndarray,
    omega_values: np.ndarray,
    t_window: float | None,
) -> SpectralGrid:
    """Cosine-transform the Green's function record into S(q, omega).

    S = -(1/pi) Im[ 2 sum_t dt w_t cos(omega t) sum_x cos(q x) G(x,t) e(t) ]
    with trapezoidal endpoint weights w_t and the Gaussian window
    e(t) = exp(-4 (t/T)^2) when ``t_window`` is given.
    """
    q_values = np.asarray(q_values, dtype=np.float64)
    omega_values = np.asarray(omega_values, dtype=np.float64)
    if len(q_values) == 0 or len(omega_values) == 0:
        raise DimensionError("q and omega grids must be non-empty")
    times = g.times
    if len(times) < 2:
        raise DimensionError("need at least two time samples")
    dts = np.diff(times)
    if np.max(np.abs(dts - dts[0])) > 1e-10 * dts[0]:
        raise DimensionError("time grid must be uniform")
    dt = float(dts[0])
    if t_window is not None and t_window > times[-1] + 1e-12:
        raise DimensionError("t_window exceeds the recorded time span")

    weights = np.full(len(times), dt)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    if t_window is not None:
        weights = weights * np.exp(-4.0 * (times / t_window) ** 2)

    cos_qx = np.cos(np.outer(q_values, g.positions))          # (nq, nx)
    cos_wt = np.cos(np.outer(omega_values, times))            # (nw, nt)
    gq = cos_qx @ g.values.T                                  # (nq, nt)
    z = 2.0 * (gq * weights[None, :]) @ cos_wt.T              # (nq, nw)
    s = -z.imag / np.pi
    return SpectralGrid(
        q_values=q_values, omega_values=omega_values, s=s,
        window_time=t_window,
    )


def extract_dispersion(grid: SpectralGrid) -> Dispersion:
    """Ridge maximum per momentum; ties break toward smaller omega."""
    points = []
    excluded = []
    for iq, q in enumerate(grid.q_values):
        col = grid.s[iq]
        if np.max(np.abs(col)) == 0.0:
            excluded.append(float(q))
            continue
        points.append((float(q), float(grid.omega_values[int(np.argmax(col))])))
    if not points:
        raise NumericalError("spectral function is identically zero")
    qs = np.array([p[0] for p in points])
    gap = points[int(np.argmin(np.abs(qs - np.pi)))][1]
    return Dispersion(points=tuple(points), gap=gap, excluded_q=tuple(excluded))
