"""Block operators describing the semi-infinite exterior of a window.

Walking the lower-triangular MPO column by column (bottom-up) against the
canonical iMPS turns each channel into either a fixed point of the identity
transfer map (the identity channel), a single transfer application (channels
with zero diagonal), or, for the top channel, a linear equation

    (1 - T_I)(H) = C - e0 * 1,    e0 = tr(rho C),

whose traceless solution is the effective boundary Hamiltonian. The linear
equation is solved iteratively with the identity/rho eigenpair deflated;
a truncated geometric sum serves as fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import (
    ConvergenceError,
    DimensionError,
    NumericalError,
    UnsupportedHamiltonianError,
)
from .imps import InfiniteMps, left_transfer, right_transfer
from .mpo import Mpo
from .tensor import DenseTensor

DEFAULT_TOL = 1e-10
MAX_SOLVER_ITER = 5000


@dataclass(frozen=True)
class BoundaryEnvironment:
    """Vector of block operators for one side of the window.

    ``components`` is indexed by MPO column for the left side (effective
    Hamiltonian first, identity channel last) and by MPO row for the right
    side (identity first, effective Hamiltonian last).
    """

    components: tuple
    e0: float
    side: str
    chi: int
    rho: np.ndarray = field(repr=False)
    source: np.ndarray = field(repr=False)  # accumulated C of the top channel

    def __post_init__(self):
        ident = self.identity_channel()
        if np.max(np.abs(ident - np.eye(self.chi))) > 1e-8:
            raise NumericalError("identity channel deviates from the identity")
        h = self.effective_hamiltonian()
        if np.max(np.abs(h - h.conj().T)) > 1e-8:
            raise NumericalError("effective Hamiltonian channel is not Hermitian")
        if abs(np.trace(self.rho @ h)) > 1e-8:
            raise NumericalError("effective Hamiltonian is not trace-free against rho")

    def identity_channel(self) -> np.ndarray:
        return self.components[-1] if self.side == "left" else self.components[0]

    def effective_hamiltonian(self) -> np.ndarray:
        return self.components[0] if self.side == "left" else self.components[-1]

    def middle_channels(self) -> tuple:
        return tuple(self.components[1:-1])


@dataclass(frozen=True)
class EffectiveCouplings:
    """The chi x chi spin operators coupling the boundary to the edge site."""

    s_tilde: tuple  # (Sx, Sy, Sz)

    def __post_init__(self):
        for m in self.s_tilde:
            if np.max(np.abs(m - m.conj().T)) > 1e-8:
                raise NumericalError("effective coupling operator is not Hermitian")


def energy_per_site(rho, c) -> float:
    """tr(rho C); raises if the imaginary part exceeds 1e-8."""
    rho = rho.data if isinstance(rho, DenseTensor) else np.asarray(rho)
    c = c.data if isinstance(c, DenseTensor) else np.asarray(c)
    val = complex(np.trace(rho @ c))
    if abs(val.imag) > 1e-8:
        raise NumericalError(f"energy per site has imaginary part {val.imag:.3e}")
    return float(val.real)


def solve_deflated(transfer, rhs, rho, tol: float = DEFAULT_TOL,
                   max_iter: int = MAX_SOLVER_ITER) -> DenseTensor:
    """Solve (1 - T)(X) = deflate(rhs) on the subspace tr(rho X) = 0.

    ``transfer`` is a callable E -> T_I(E) on chi x chi arrays. The identity
    component of the solution is pinned to zero. GMRES with operator-only
    access; if it stalls, a truncated geometric sum takes over.
    """
    rhs = rhs.data if isinstance(rhs, DenseTensor) else np.asarray(rhs, dtype=np.complex128)
    rho = rho.data if isinstance(rho, DenseTensor) else np.asarray(rho)
    chi = rhs.shape[0]
    eye = np.eye(chi, dtype=np.complex128)

    def deflate(x):
        return x - np.trace(rho @ x) * eye

    b = deflate(rhs)
    if np.max(np.abs(b)) == 0:
        return DenseTensor(("bra", "ket"), np.zeros((chi, chi), dtype=np.complex128))

    def matvec(v):
        x = v.reshape(chi, chi)
        return (x - deflate(transfer(x))).ravel()

    op = spla.LinearOperator((chi * chi, chi * chi), matvec=matvec, dtype=np.complex128)
    sol, info = spla.gmres(
        op, b.ravel(), rtol=tol, atol=0.0,
        restart=min(chi * chi, 200), maxiter=max_iter,
    )
    x = deflate(sol.reshape(chi, chi))
    resid = np.max(np.abs(x - deflate(transfer(x)) - b))
    scale = max(np.max(np.abs(b)), 1.0)
    if info != 0 or resid > 100 * tol * scale:
        x = _geometric_sum(transfer, deflate, b, tol, cap=200000)
        resid = np.max(np.abs(x - deflate(transfer(x)) - b))
        if resid > 100 * tol * scale:
            raise ConvergenceError(
                f"deflated solve failed to converge (residual {resid:.3e})",
                residual=float(resid),
            )
    x = 0.5 * (x + x.conj().T)
    x = deflate(x)
    return DenseTensor(("bra", "ket"), x)


def _geometric_sum(transfer, deflate, b, tol, cap):
    total = b.copy()
    term = b
    for _ in range(cap):
        term = deflate(transfer(term))
        total += term
        if np.max(np.abs(term)) < 0.01 * tol * max(np.max(np.abs(total)), 1.0):
            return total
    raise ConvergenceError("geometric-sum fallback did not damp below tolerance")


def compute_environment(
    psi: InfiniteMps, mpo: Mpo, side: str, tol: float = DEFAULT_TOL
) -> BoundaryEnvironment:
    """Solve the block-operator recursion for one side of the window."""
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if mpo.d != psi.d:
        raise DimensionError("MPO physical dimension does not match the state")
    c = mpo.c
    chi = psi.chi
    rho = psi.rho()
    eye = np.eye(chi, dtype=np.complex128)
    w = mpo.w

    if side == "left":
        a = psi.a_array()
        apply_t = lambda e, x=None: left_transfer(e, a, x)
        # channel order: columns c-1 (identity) down to 0 (Hamiltonian)
        order = range(c - 1, -1, -1)
        def off_diag(alpha):  # entries feeding column alpha from below
            return [(beta, w[beta, alpha]) for beta in range(alpha + 1, c)]
        ident_channel, top_channel = c - 1, 0
    else:
        bcan = psi.b_array()
        apply_t = lambda e, x=None: right_transfer(e, bcan, x)
        order = range(c)
        def off_diag(beta):  # entries feeding row beta from above
            return [(alpha, w[beta, alpha]) for alpha in range(beta)]
        ident_channel, top_channel = 0, c - 1

    comps: dict[int, np.ndarray] = {}
    e0 = 0.0
    source_top = None
    for k in order:
        diag = w[k, k]
        src = np.zeros((chi, chi), dtype=np.complex128)
        for j, op in off_diag(k):
            if np.max(np.abs(op)) > 0:
                src += apply_t(comps[j], op)
        if k == ident_channel:
            comps[k] = eye.copy()
        elif np.max(np.abs(diag)) == 0:
            comps[k] = src
        elif k == top_channel and np.allclose(diag, np.eye(mpo.d)):
            e0 = energy_per_site(rho, src)
            h = solve_deflated(apply_t, src, rho, tol=tol)
            comps[k] = h.data
            source_top = src
        else:
            raise UnsupportedHamiltonianError(
                f"MPO channel {k} has a nonzero diagonal outside the identity channels"
            )

    components = tuple(comps[k] for k in range(c))
    if source_top is None:
        raise UnsupportedHamiltonianError("MPO has no Hamiltonian channel to solve")
    return BoundaryEnvironment(
        components=components, e0=e0, side=side, chi=chi, rho=rho, source=source_top
    )


def effective_couplings(env: BoundaryEnvironment) -> EffectiveCouplings:
    """Extract (Sx, Sy, Sz) boundary couplings from a Heisenberg-layout environment."""
    if len(env.components) != 5:
        raise DimensionError(
            f"expected the 5-channel spin layout, got {len(env.components)} channels"
        )
    mats = tuple(0.5 * (m + m.conj().T) for m in env.middle_channels())
    return EffectiveCouplings(s_tilde=mats)


def boundary_interaction(env: BoundaryEnvironment, mpo: Mpo) -> np.ndarray:
    """Hermitian matrix of the boundary-window coupling term.

    Left side: acts on (boundary bond x edge site), returned with row/column
    index order (bond, phys). Right side: (phys, bond).
    """
    c, d, chi = mpo.c, mpo.d, env.chi
    out = np.zeros((chi, d, chi, d), dtype=np.complex128)
    if env.side == "left":
        for beta in range(1, c - 1):
            out += np.einsum("ab,pq->apbq", env.components[beta], mpo.w[beta, 0])
        mat = out.reshape(chi * d, chi * d)
    else:
        for beta in range(1, c - 1):
            out += np.einsum("ab,pq->apbq", env.components[beta], mpo.w[c - 1, beta])
        mat = out.transpose(1, 0, 3, 2).reshape(d * chi, d * chi)
    defect = np.max(np.abs(mat - mat.conj().T))
    if defect > 1e-8:
        raise NumericalError(f"boundary interaction not Hermitian ({defect:.3e})")
    return 0.5 * (mat + mat.conj().T)
