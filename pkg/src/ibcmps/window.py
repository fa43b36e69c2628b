"""Finite evolution window embedded in the infinite chain.

The window is a finite MPS in mixed canonical form whose edge bonds carry
the chi-dimensional effective bases of the two semi-infinite exteriors. The
boundary pseudosites are pure identity selectors and are never materialized;
boundary evolution operators act directly on the edge bond indices.

The orthogonality center is a (generally rectangular) matrix sitting on one
of the N+1 bonds; tensors to its left are left-isometric, tensors to its
right are right-isometric. Two-site gates enter at a neighbouring bond and
update via one truncated SVD; the center then shifts bond by bond through
sign-fixed QR splits (truncation-free), so no Schmidt values are ever
inverted anywhere in the sweep.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .environment import BoundaryEnvironment, boundary_interaction, compute_environment
from .errors import AnnihilationError, DimensionError, NumericalError
from .imps import InfiniteMps, left_transfer, right_transfer
from .mpo import Mpo
from .tensor import expm_hermitian_matrix, truncation_rank

DISCARDED_ALARM = 1e-5  # per-step discarded weight that triggers a warning


@dataclass
class WindowState:
    """Mixed-canonical window with attached infinite boundaries.

    ``amplitude`` tracks the norm of the represented (unnormalized) state
    relative to the stored normalized tensors; local operators fold their
    pre-normalization norm into it.
    """

    tensors: list            # N arrays (left, phys, right)
    center: np.ndarray       # orthogonality-center matrix at bond ortho_position
    ortho_position: int      # 0..N; tensors[:p] left-isometric, tensors[p:] right-isometric
    left_env: BoundaryEnvironment
    right_env: BoundaryEnvironment
    mpo: Mpo
    chi_max: int
    svd_tol: float = 1e-12
    accumulated_discarded_weight: float = 0.0
    last_step_discarded: float = 0.0
    time: float = 0.0
    amplitude: complex = 1.0
    alarm_threshold: float = DISCARDED_ALARM
    _ground_e0: float = field(default=0.0, repr=False)

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def d(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def lambda_center(self) -> np.ndarray:
        """Schmidt values at the current center bond."""
        return np.linalg.svd(self.center, compute_uv=False)

    @property
    def max_bond(self) -> int:
        return max(t.shape[2] for t in self.tensors)

    def copy(self) -> "WindowState":
        return replace(self, tensors=list(self.tensors))

    def norm(self) -> float:
        """Norm of the stored state from the isometric structure."""
        return float(np.linalg.norm(self.center))

    def isometry_residual(self) -> float:
        """Largest deviation of any tensor from its canonical constraint."""
        worst = 0.0
        for i, t in enumerate(self.tensors):
            l, d, r = t.shape
            if i < self.ortho_position:
                g = t.reshape(l * d, r)
                defect = np.max(np.abs(g.conj().T @ g - np.eye(r)))
            else:
                g = t.reshape(l, d * r)
                defect = np.max(np.abs(g @ g.conj().T - np.eye(l)))
            worst = max(worst, float(defect))
        return worst

    def effective_tensors(self) -> list:
        """Site tensors with the center absorbed (for measurements)."""
        ts = list(self.tensors)
        p = self.ortho_position
        if p == self.n_sites:
            ts[-1] = np.tensordot(ts[-1], self.center, axes=(2, 0))
        else:
            ts[p] = np.tensordot(self.center, ts[p], axes=(1, 0))
        return ts


def open_window(
    psi: InfiniteMps,
    n: int,
    mpo: Mpo,
    chi_max: int | None = None,
    svd_tol: float = 1e-12,
    env_tol: float = 1e-10,
) -> WindowState:
    """Cut an N-site window out of the infinite ground state.

    The window holds N copies of the unit-cell tensor in mixed canonical
    arrangement with the Schmidt values at the central bond, and carries the
    left/right block operators of the exterior.
    """
    if n < 2 or n % 2 != 0:
        raise DimensionError(f"window size must be even and >= 2, got {n}")
    left_env = compute_environment(psi, mpo, "left", tol=env_tol)
    right_env = compute_environment(psi, mpo, "right", tol=env_tol)
    a = psi.a_array()
    b = psi.b_array()
    half = n // 2
    tensors = [a.copy() for _ in range(half)] + [b.copy() for _ in range(half)]
    w = WindowState(
        tensors=tensors,
        center=np.diag(psi.lam).astype(np.complex128),
        ortho_position=half,
        left_env=left_env,
        right_env=right_env,
        mpo=mpo,
        chi_max=chi_max if chi_max is not None else psi.chi,
        svd_tol=svd_tol,
        _ground_e0=left_env.e0,
    )
    return w


def _qr_pos(m):
    q, r = np.linalg.qr(m)
    diag = np.diag(r)
    absd = np.abs(diag)
    safe = np.where(absd > 1e-300, absd, 1.0)
    phase = np.where(absd > 1e-300, diag / safe, 1.0)
    return q * phase[None, :], r * phase.conj()[:, None]


def _move_right(w: WindowState):
    # center shifts never truncate, so a sign-fixed QR is an exact and
    # cheaper stand-in for the SVD split; the next gate SVD re-diagonalizes
    p = w.ortho_position
    t = w.tensors[p]
    _, d, r = t.shape
    m = np.tensordot(w.center, t, axes=(1, 0))      # (a, d, r)
    a = m.shape[0]
    q, rr = _qr_pos(m.reshape(a * d, r))
    w.tensors[p] = q.reshape(a, d, q.shape[1])
    w.center = rr
    w.ortho_position = p + 1


def _move_left(w: WindowState):
    p = w.ortho_position
    t = w.tensors[p - 1]
    l, d, _ = t.shape
    m = np.tensordot(t, w.center, axes=(2, 0))      # (l, d, b)
    b = m.shape[2]
    q, rr = _qr_pos(m.reshape(l, d * b).conj().T)
    w.tensors[p - 1] = q.conj().T.reshape(-1, d, b)
    w.center = rr.conj().T
    w.ortho_position = p - 1


def _move_center_to(w: WindowState, bond: int):
    while w.ortho_position < bond:
        _move_right(w)
    while w.ortho_position > bond:
        _move_left(w)


def _apply_bond_gate(w: WindowState, i: int, gate: np.ndarray):
    """Two-site gate on sites (i, i+1); center must be on bond i, i+1 or i+2."""
    p = w.ortho_position
    d = w.d
    if p == i:
        th = np.tensordot(w.center, w.tensors[i], axes=(1, 0))
        th = np.tensordot(th, w.tensors[i + 1], axes=(2, 0))
    elif p == i + 1:
        th = np.tensordot(w.tensors[i], w.center, axes=(2, 0))
        th = np.tensordot(th, w.tensors[i + 1], axes=(2, 0))
    elif p == i + 2:
        th = np.tensordot(w.tensors[i], w.tensors[i + 1], axes=(2, 0))
        th = np.tensordot(th, w.center, axes=(3, 0))
    else:
        raise DimensionError(f"center at bond {p} cannot reach gate ({i},{i+1})")
    if gate is not None:
        th = np.tensordot(th, gate.reshape(d, d, d, d), axes=([1, 2], [2, 3]))
        th = th.transpose(0, 2, 3, 1)
    l, _, _, r = th.shape
    u, s, vh = np.linalg.svd(th.reshape(l * d, d * r), full_matrices=False)
    keep = truncation_rank(s, w.chi_max, w.svd_tol)
    total = float(np.sum(s**2))
    dw = float(np.sum(s[keep:] ** 2) / total) if total > 0 else 0.0
    nrm = np.linalg.norm(s[:keep])
    w.tensors[i] = u[:, :keep].reshape(l, d, keep)
    w.tensors[i + 1] = vh[:keep].reshape(keep, d, r)
    w.center = np.diag(s[:keep] / nrm).astype(np.complex128)
    w.ortho_position = i + 1
    w.last_step_discarded += dw
    w.accumulated_discarded_weight += dw


def _apply_left_boundary(w: WindowState, mat: np.ndarray):
    """Unitary on (boundary bond x edge site); center must be at bond 0."""
    if w.ortho_position != 0:
        raise DimensionError("left boundary gate needs the center at bond 0")
    t = np.tensordot(w.center, w.tensors[0], axes=(1, 0))  # (chi_b, d, r)
    cb, d, r = t.shape
    t = (mat @ t.reshape(cb * d, r)).reshape(cb, d, r)
    # re-split with the boundary index untouched: t = C' Q, Q right-isometric
    q1, r1 = _qr_pos(t.reshape(cb, d * r).conj().T)
    w.center = r1.conj().T
    w.tensors[0] = q1.conj().T.reshape(-1, d, r)


def _apply_right_boundary(w: WindowState, mat: np.ndarray):
    """Unitary on (edge site x boundary bond); center must be at bond N."""
    n = w.n_sites
    if w.ortho_position != n:
        raise DimensionError("right boundary gate needs the center at bond N")
    t = np.tensordot(w.tensors[n - 1], w.center, axes=(2, 0))  # (l, d, chi_b)
    l, d, cb = t.shape
    t = (t.reshape(l, d * cb) @ mat.T).reshape(l, d, cb)
    q, rr = _qr_pos(t.reshape(l * d, cb))
    w.tensors[n - 1] = q.reshape(l, d, -1)
    w.center = rr


def window_bond_hamiltonians(mpo: Mpo, n: int) -> list:
    """Two-site matrices of the window Hamiltonian, one per interior bond.

    Single-site field terms are split half/half onto neighbouring bonds,
    with the full weight at the chain ends.
    """
    c, d = mpo.c, mpo.d
    interaction = np.zeros((d * d, d * d), dtype=np.complex128)
    for beta in range(1, c - 1):
        interaction += np.kron(mpo.w[c - 1, beta], mpo.w[beta, 0])
    fld = mpo.w[c - 1, 0]
    eye = np.eye(d)
    out = []
    for i in range(n - 1):
        wl = 1.0 if i == 0 else 0.5
        wr = 1.0 if i == n - 2 else 0.5
        out.append(interaction + wl * np.kron(fld, eye) + wr * np.kron(eye, fld))
    return out


@dataclass
class TrotterPlan:
    """Gate schedule of one time step.

    ``gate_sequence`` holds (kind, coefficient) entries where kind is a bond
    index, 'boundary-left' or 'boundary-right'; within one substep gates
    commute, so only the substep order is dynamically rearranged into sweeps.
    """

    order: int
    dt: float
    n_sites: int
    substeps: tuple          # ((group, coeff), ...) with group 'odd' | 'even'
    gate_sequence: tuple
    _gate_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        sums: dict = {}
        for kind, coeff in self.gate_sequence:
            sums[kind] = sums.get(kind, 0.0) + coeff
        for kind, total in sums.items():
            if abs(total - 1.0) > 1e-12:
                raise NumericalError(f"coefficients for {kind!r} sum to {total}, not 1")


def build_trotter_plan(order: int, dt: float, n_sites: int) -> TrotterPlan:
    """Suzuki-Trotter plan: odd bonds in one group, even bonds plus both
    boundary terms in the other. Order 4 is the real-coefficient fractal of
    five second-order kernels."""
    if order not in (1, 2, 4):
        raise DimensionError(f"trotter order must be 1, 2 or 4, got {order}")
    if n_sites < 2 or n_sites % 2:
        raise DimensionError("window size must be even and >= 2")
    if order == 1:
        subs = [("odd", 1.0), ("even", 1.0)]
    elif order == 2:
        subs = [("odd", 0.5), ("even", 1.0), ("odd", 0.5)]
    else:
        a = 1.0 / (4.0 - 4.0 ** (1.0 / 3.0))
        m = 1.0 - 4.0 * a
        kernels = [a, a, m, a, a]
        subs = []
        for k in kernels:
            subs += [("odd", 0.5 * k), ("even", k), ("odd", 0.5 * k)]
        # merge adjacent same-group substeps (exact: they commute)
        merged = [subs[0]]
        for g, c in subs[1:]:
            if merged[-1][0] == g:
                merged[-1] = (g, merged[-1][1] + c)
            else:
                merged.append((g, c))
        subs = merged
    seq = []
    for group, coeff in subs:
        if group == "odd":
            seq += [(i, coeff) for i in range(0, n_sites - 1, 2)]
        else:
            seq.append(("boundary-left", coeff))
            seq += [(i, coeff) for i in range(1, n_sites - 1, 2)]
            seq.append(("boundary-right", coeff))
    return TrotterPlan(
        order=order, dt=dt, n_sites=n_sites,
        substeps=tuple(subs), gate_sequence=tuple(seq),
    )


def _bond_gate(plan: TrotterPlan, w: WindowState, i: int, coeff: float) -> np.ndarray:
    key = ("bond", i, round(coeff, 14))
    if key not in plan._gate_cache:
        if "hamiltonians" not in plan._gate_cache:
            plan._gate_cache["hamiltonians"] = window_bond_hamiltonians(w.mpo, w.n_sites)
        hs = plan._gate_cache["hamiltonians"]
        plan._gate_cache[key] = expm_hermitian_matrix(hs[i], -1j * coeff * plan.dt)
    return plan._gate_cache[key]


def _boundary_gate(plan: TrotterPlan, w: WindowState, side: str, coeff: float) -> np.ndarray:
    key = (side, round(coeff, 14))
    if key not in plan._gate_cache:
        d = w.d
        if side == "boundary-left":
            env = w.left_env
            h = np.kron(env.effective_hamiltonian(), np.eye(d))
            h = h + boundary_interaction(env, w.mpo)
        else:
            env = w.right_env
            h = np.kron(np.eye(d), env.effective_hamiltonian())
            h = h + boundary_interaction(env, w.mpo)
        plan._gate_cache[key] = expm_hermitian_matrix(h, -1j * coeff * plan.dt)
    return plan._gate_cache[key]


def tebd_step(w: WindowState, plan: TrotterPlan) -> WindowState:
    """Advance the window by one time step of the plan.

    Substeps sweep alternately left-to-right and right-to-left; the center
    shifts between gate applications by single-bond SVDs. Per-step discarded
    weight is logged and an alarm warning is emitted above the threshold.
    """
    if plan.n_sites != w.n_sites:
        raise DimensionError("plan was built for a different window size")
    w = w.copy()
    w.last_step_discarded = 0.0
    n = w.n_sites
    for group, coeff in plan.substeps:
        if group == "odd":
            bonds = list(range(0, n - 1, 2))
            if w.ortho_position > n // 2:
                for i in reversed(bonds):
                    _move_center_to(w, i + 2)
                    _apply_bond_gate(w, i, _bond_gate(plan, w, i, coeff))
            else:
                for i in bonds:
                    _move_center_to(w, i)
                    _apply_bond_gate(w, i, _bond_gate(plan, w, i, coeff))
        else:
            bonds = list(range(1, n - 1, 2))
            if w.ortho_position > n // 2:
                _move_center_to(w, n)
                _apply_right_boundary(w, _boundary_gate(plan, w, "boundary-right", coeff))
                for i in reversed(bonds):
                    _move_center_to(w, i + 2)
                    _apply_bond_gate(w, i, _bond_gate(plan, w, i, coeff))
                _move_center_to(w, 0)
                _apply_left_boundary(w, _boundary_gate(plan, w, "boundary-left", coeff))
            else:
                _move_center_to(w, 0)
                _apply_left_boundary(w, _boundary_gate(plan, w, "boundary-left", coeff))
                for i in bonds:
                    _move_center_to(w, i)
                    _apply_bond_gate(w, i, _bond_gate(plan, w, i, coeff))
                _move_center_to(w, n)
                _apply_right_boundary(w, _boundary_gate(plan, w, "boundary-right", coeff))
    w.time += plan.dt
    if w.last_step_discarded > w.alarm_threshold:
        warnings.warn(
            f"discarded weight {w.last_step_discarded:.2e} in one step exceeds "
            f"{w.alarm_threshold:.1e}; evolution may be under-resolved",
            stacklevel=2,
        )
    return w


def apply_local_operator(w: WindowState, site: int, op: np.ndarray) -> WindowState:
    """Multiply one site (1-based) by a local operator and renormalize.

    The pre-normalization norm of op|Psi> is folded into ``amplitude``.
    Raises :class:`AnnihilationError` if the operator kills the state.
    """
    if not 1 <= site <= w.n_sites:
        raise DimensionError(f"site {site} outside window 1..{w.n_sites}")
    op = np.asarray(op, dtype=np.complex128)
    d = w.d
    if op.shape != (d, d):
        raise DimensionError(f"operator must be {d}x{d}")
    w = w.copy()
    i = site - 1
    _move_center_to(w, i)
    t = np.tensordot(w.center, w.tensors[i], axes=(1, 0))   # (a, d, r)
    t = np.tensordot(op, t, axes=(1, 1)).transpose(1, 0, 2)
    nrm = float(np.linalg.norm(t))
    if nrm < 1e-14:
        raise AnnihilationError("local operator annihilated the state")
    t = t / nrm
    a, _, r = t.shape
    q1, r1 = _qr_pos(t.reshape(a, d * r).conj().T)
    w.center = r1.conj().T
    w.tensors[i] = q1.conj().T.reshape(-1, d, r)
    w.amplitude = w.amplitude * nrm
    return w


def expand_window(w: WindowState, n_left: int, n_right: int, psi: InfiniteMps) -> WindowState:
    """Grow the window by inserting ground-state A tensors on the left and
    B tensors on the right; environments and all existing observables are
    untouched."""
    if n_left < 0 or n_right < 0:
        raise DimensionError("expansion counts must be nonnegative")
    if psi.chi != w.tensors[0].shape[0] or psi.chi != w.tensors[-1].shape[2]:
        raise DimensionError("ground state bond dimension does not match the window edges")
    w = w.copy()
    a = psi.a_array()
    b = psi.b_array()
    w.tensors = [a.copy() for _ in range(n_left)] + w.tensors \
        + [b.copy() for _ in range(n_right)]
    w.ortho_position += n_left
    return w


def window_energy(w: WindowState) -> float:
    """<H_eff> of the window including boundary terms, via the MPO sandwich
    between the stored block-operator vectors."""
    mpo = w.mpo
    c = mpo.c
    ts = w.effective_tensors()
    # left block-operator vector, indexed by the MPO bond
    lvec = [m.copy() for m in w.left_env.components]
    for t in ts:
        new = []
        for bcol in range(c):
            acc = np.zeros((t.shape[2], t.shape[2]), dtype=np.complex128)
            for arow in range(c):
                op = mpo.w[arow, bcol]
                if np.max(np.abs(op)) == 0:
                    continue
                acc += left_transfer(lvec[arow], t, op)
            new.append(acc)
        lvec = new
    val = 0.0j
    for bcol in range(c):
        val += np.sum(lvec[bcol] * w.right_env.components[bcol])
    if abs(val.imag) > 1e-8:
        raise NumericalError(f"window energy has imaginary part {val.imag:.3e}")
    return float(val.real)


def site_expectations(w: WindowState, op: np.ndarray) -> np.ndarray:
    """<op> at every window site (complex values; caller decides realness)."""
    op = np.asarray(op, dtype=np.complex128)
    ts = w.effective_tensors()
    n = len(ts)
    rights = [None] * (n + 1)
    rights[n] = np.eye(ts[-1].shape[2], dtype=np.complex128)
    for i in range(n - 1, -1, -1):
        rights[i] = right_transfer(rights[i + 1], ts[i])
    left = np.eye(ts[0].shape[0], dtype=np.complex128)
    vals = np.zeros(n, dtype=np.complex128)
    for i in range(n):
        mid = left_transfer(left, ts[i], op)
        vals[i] = np.sum(mid * rights[i + 1])
        left = left_transfer(left, ts[i])
    return vals
