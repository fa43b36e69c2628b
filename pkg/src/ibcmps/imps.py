"""Uniform infinite MPS in canonical form.

State convention (one-site unit cell): |Psi> = ... lam G lam G lam ...,
stored as the pair (gamma, lam). Site tensors are arrays with axes
(left_bond, phys, right_bond). Mixed canonical tensors are A = lam*G
(left-isometric) and B = G*lam (right-isometric).

Environment-like matrices are chi x chi arrays indexed (bra, ket).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CanonicalizationError, ConvergenceError, DimensionError
from .tensor import DenseTensor

BOND_LABELS = ("left", "phys", "right")
ENV_LABELS = ("bra", "ket")

_LAMBDA_CUTOFF = 1e-12  # Schmidt values below this are dropped


def left_transfer(
    e: np.ndarray,
    a: np.ndarray,
    x: np.ndarray | None = None,
    bra: np.ndarray | None = None,
) -> np.ndarray:
    """T_X(E) = sum_{s s'} <s|X|s'> A^{s dag} E A^{s'}, bra index on rows.

    ``bra`` defaults to ``a``; passing a different tensor gives the mixed
    transfer used in overlaps.
    """
    bra = a if bra is None else bra
    if x is None:
        tmp = np.tensordot(e, a, axes=(1, 0))        # (bra, p, r_ket)
    else:
        ax = np.tensordot(a, x, axes=(1, 1)).transpose(0, 2, 1)  # ket layer carries s'
        tmp = np.tensordot(e, ax, axes=(1, 0))
    return np.tensordot(bra.conj(), tmp, axes=([0, 1], [0, 1]))


def right_transfer(
    e: np.ndarray,
    b: np.ndarray,
    x: np.ndarray | None = None,
    bra: np.ndarray | None = None,
) -> np.ndarray:
    """Mirror of :func:`left_transfer` for right environments."""
    bra = b if bra is None else bra
    if x is None:
        tmp = np.tensordot(b, e, axes=(2, 1))        # (ket, p, bra_old)
    else:
        bx = np.tensordot(b, x, axes=(1, 1)).transpose(0, 2, 1)
        tmp = np.tensordot(bx, e, axes=(2, 1))
    return np.tensordot(bra.conj(), tmp, axes=([1, 2], [1, 2]))


def left_residual(a: np.ndarray) -> float:
    chi = a.shape[2]
    g = np.einsum("ipx,ipy->xy", a.conj(), a)
    return float(np.max(np.abs(g - np.eye(chi))))


def right_residual(b: np.ndarray) -> float:
    chi = b.shape[0]
    g = np.einsum("xpi,ypi->xy", b, b.conj())
    return float(np.max(np.abs(g - np.eye(chi))))


@dataclass(frozen=True)
class InfiniteMps:
    """Canonical one-site translationally invariant iMPS."""

    gamma: DenseTensor  # labels (left, phys, right)
    lam: np.ndarray     # positive, descending, unit 2-norm
    d: int
    chi: int

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=np.float64)
        object.__setattr__(self, "lam", lam)
        g = self.gamma
        if g.labels != BOND_LABELS:
            raise DimensionError(f"gamma labels must be {BOND_LABELS}, got {g.labels}")
        chi_l, d, chi_r = g.dims
        if not (chi_l == chi_r == self.chi == len(lam)) or d != self.d:
            raise DimensionError("gamma dims inconsistent with (d, chi)")
        if np.any(lam <= 0) or np.any(np.diff(lam) > 1e-12):
            raise CanonicalizationError("lambda must be positive and descending")
        if abs(np.sum(lam**2) - 1.0) > 1e-12:
            raise CanonicalizationError("lambda must have unit 2-norm")
        res_l = left_residual(self.a_array())
        res_r = right_residual(self.b_array())
        if max(res_l, res_r) > 1e-8:
            raise CanonicalizationError(
                f"canonical residuals too large: left {res_l:.2e}, right {res_r:.2e}"
            )

    def a_array(self) -> np.ndarray:
        """Left-isometric tensor A = lam * gamma."""
        return self.lam[:, None, None] * self.gamma.data

    def b_array(self) -> np.ndarray:
        """Right-isometric tensor B = gamma * lam."""
        return self.gamma.data * self.lam[None, None, :]

    def rho(self) -> np.ndarray:
        """Reduced density matrix on a bond, diag(lambda^2)."""
        return np.diag(self.lam**2).astype(np.complex128)

    def schmidt_spectrum(self) -> "SchmidtSpectrum":
        w = self.lam**2
        return SchmidtSpectrum(
            values=self.lam.copy(),
            entanglement_entropy=float(-np.sum(w * np.log(w))),
        )

    def site_expectation(self, op: np.ndarray) -> complex:
        """<op> on one site of the infinite chain."""
        a = self.a_array()
        t = left_transfer(np.eye(self.chi, dtype=np.complex128), a, np.asarray(op))
        return complex(np.sum(np.diag(t) * self.lam**2))


@dataclass(frozen=True)
class SchmidtSpectrum:
    values: np.ndarray
    entanglement_entropy: float


def transfer_apply(e: DenseTensor, a: DenseTensor, x: np.ndarray, side: str) -> DenseTensor:
    """Apply the generalized transfer operator for local operator ``x``.

    ``side='left'`` propagates a left environment through one site of ``a``;
    ``side='right'`` is the mirrored form.
    """
    if e.labels != ENV_LABELS:
        e = e.permuted(ENV_LABELS) if set(e.labels) == set(ENV_LABELS) else e
    if e.labels != ENV_LABELS:
        raise DimensionError(f"environment labels must be {ENV_LABELS}")
    arr = a.permuted(BOND_LABELS).data if a.labels != BOND_LABELS else a.data
    x = np.asarray(x, dtype=np.complex128)
    if x.shape != (arr.shape[1], arr.shape[1]):
        raise DimensionError(f"operator shape {x.shape} does not match d={arr.shape[1]}")
    if side == "left":
        if e.dims != (arr.shape[0], arr.shape[0]):
            raise DimensionError("environment does not match the left bond")
        out = left_transfer(e.data, arr, x)
    elif side == "right":
        if e.dims != (arr.shape[2], arr.shape[2]):
            raise DimensionError("environment does not match the right bond")
        out = right_transfer(e.data, arr, x)
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return DenseTensor(ENV_LABELS, out)


def dominant_eigenpair(
    a: DenseTensor | np.ndarray,
    side: str,
    tol: float = 1e-12,
    max_iter: int = 10000,
) -> tuple[float, DenseTensor]:
    """Dominant eigenvalue and Hermitian eigenmatrix of the identity transfer map.

    Power iteration from the identity; the iterate is re-Hermitized every
    step so the result stays in the positive cone. The eigenmatrix is scaled
    to trace chi (identity for a canonical tensor).
    """
    arr = a.data if isinstance(a, DenseTensor) else np.asarray(a, dtype=np.complex128)
    step = left_transfer if side == "left" else right_transfer
    chi = arr.shape[0] if side == "left" else arr.shape[2]
    e = np.eye(chi, dtype=np.complex128)
    eta = 1.0
    for _ in range(max_iter):
        te = step(e, arr)
        te = 0.5 * (te + te.conj().T)
        eta = float(np.real(np.vdot(e, te) / np.vdot(e, e)))
        resid = float(np.max(np.abs(te - eta * e)))
        nrm = np.linalg.norm(te)
        if nrm == 0:
            raise ConvergenceError("transfer map annihilated the iterate")
        e = te / nrm
        if resid <= tol * abs(eta) * max(1.0, np.linalg.norm(e)):
            break
    else:
        raise ConvergenceError(
            f"dominant eigenpair did not converge within {max_iter} iterations",
            residual=resid,
        )
    tr = np.trace(e).real
    if tr < 0:
        e = -e
        tr = -tr
    if tr > 1e-14:
        e = e * (chi / tr)
    return eta, DenseTensor(ENV_LABELS, e)


def _qr_pos(m: np.ndarray):
    """QR with the R diagonal made real positive (deterministic gauge)."""
    q, r = np.linalg.qr(m)
    diag = np.diag(r)
    absd = np.abs(diag)
    safe = np.where(absd > 1e-300, absd, 1.0)
    phase = np.where(absd > 1e-300, diag / safe, 1.0)
    return q * phase[None, :], r * phase.conj()[:, None]


def _left_orthonormalize(m: np.ndarray, l0: np.ndarray, tol: float, max_iter: int):
    """Iterate QR of (L M) until the gauge L is stationary.

    Returns (a_l, l) with a_l exactly left-isometric and a_l L = L M / eta.
    """
    chi = m.shape[0]
    l = l0 / np.linalg.norm(l0)
    for _ in range(max_iter):
        t = np.tensordot(l, m, axes=(1, 0)).reshape(-1, chi)  # (k*p, chi)
        q, r = _qr_pos(t)
        nrm = np.linalg.norm(r)
        r = r / nrm
        delta = float(np.max(np.abs(r - l))) if r.shape == l.shape else np.inf
        l = r
        if delta <= tol:
            a_l = q.reshape(l0.shape[0], m.shape[1], -1)
            return a_l, l
    raise ConvergenceError("left orthonormalization stalled (state may be non-injective)")


def _right_orthonormalize(m: np.ndarray, r0: np.ndarray, tol: float, max_iter: int):
    """Mirror of :func:`_left_orthonormalize`: M R = R A_R / eta."""
    chi = m.shape[2]
    r = r0 / np.linalg.norm(r0)
    for _ in range(max_iter):
        t = np.tensordot(m, r, axes=(2, 0)).reshape(chi, -1)  # (chi, p*k)
        q, rr = _qr_pos(t.conj().T)
        nrm = np.linalg.norm(rr)
        new_r = rr.conj().T / nrm
        delta = float(np.max(np.abs(new_r - r))) if new_r.shape == r.shape else np.inf
        r = new_r
        if delta <= tol:
            a_r = q.conj().T.reshape(-1, m.shape[1], r0.shape[1])
            return a_r, r
    raise ConvergenceError("right orthonormalization stalled (state may be non-injective)")


def _psd_factor(e: np.ndarray) -> np.ndarray:
    """Factor a Hermitian PSD matrix as F with F^dag F = e (rows may be null)."""
    w, u = np.linalg.eigh(0.5 * (e + e.conj().T))
    w = np.clip(w, 0.0, None)
    return (np.sqrt(w)[:, None] * u.conj().T)


def canonicalize(
    gamma: DenseTensor | np.ndarray,
    lam: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 10000,
) -> InfiniteMps:
    """Bring a uniform MPS (gamma, lam) to canonical form.

    The left/right dominant eigenmatrices of the transfer operator are
    computed, factorized, and used to seed a QR-based gauge iteration whose
    fixed point gives exactly isometric tensors; the SVD of the resulting
    center matrix yields the new Schmidt values. Schmidt values below 1e-12
    are dropped (with the bond dimension reduced accordingly).
    """
    arr = gamma.data if isinstance(gamma, DenseTensor) else np.asarray(gamma, dtype=np.complex128)
    lam = np.asarray(lam, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != arr.shape[2] or arr.shape[0] != len(lam):
        raise DimensionError(f"bad uniform MPS shapes: gamma {arr.shape}, lam {lam.shape}")
    chi, d, _ = arr.shape
    m = lam[:, None, None] * arr  # A-candidate

    eta, l_env = dominant_eigenpair(m, "left", tol=tol, max_iter=max_iter)
    if eta <= 0:
        raise CanonicalizationError("transfer operator has non-positive dominant eigenvalue")
    m = m / np.sqrt(eta)
    _, r_env = dominant_eigenpair(m, "right", tol=tol, max_iter=max_iter)

    # seed gauges from the fixed points, then polish to machine precision
    l_seed = _psd_factor(l_env.data)
    r_seed = _psd_factor(r_env.data.T).conj().T
    polish_tol = 100 * max(tol, 1e-15)
    a_l, l_gauge = _left_orthonormalize(m, l_seed, polish_tol, max_iter)
    a_r, r_gauge = _right_orthonormalize(m, r_seed, polish_tol, max_iter)

    c = l_gauge @ r_gauge
    u, s, vh = np.linalg.svd(c)
    s = s / np.linalg.norm(s)
    keep = int(np.sum(s > _LAMBDA_CUTOFF))
    if keep == 0:
        raise CanonicalizationError("all Schmidt values below cutoff")
    u, s, vh = u[:, :keep], s[:keep], vh[:keep, :]
    s = s / np.linalg.norm(s)

    a_new = np.einsum("ia,ipj,jb->apb", u.conj(), a_l, u)
    gamma_new = a_new / s[:, None, None]

    psi = InfiniteMps(
        gamma=DenseTensor(BOND_LABELS, gamma_new),
        lam=s,
        d=d,
        chi=keep,
    )
    # a consistency check on the discarded-gauge side; failure indicates a
    # non-injective input whose canonical form does not exist
    b_new = np.einsum("ai,ipj,jb->apb", vh, a_r, vh.conj().T)
    mismatch = float(np.max(np.abs(a_new * s[None, None, :] - s[:, None, None] * b_new)))
    if mismatch > 1e-8:
        raise CanonicalizationError(
            f"mixed-canonical intertwining failed ({mismatch:.2e}); "
            "the input state appears rank-deficient or non-injective"
        )
    return psi


def to_mixed_canonical(psi: InfiniteMps):
    """Return (A, lam, B) with A = lam*gamma and B = gamma*lam."""
    a = DenseTensor(BOND_LABELS, psi.a_array())
    b = DenseTensor(BOND_LABELS, psi.b_array())
    return a, psi.lam.copy(), b
