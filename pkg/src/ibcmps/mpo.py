"""Matrix product operators for nearest-neighbour spin chains.

The operator-valued matrix W is lower triangular with identity channels in
the top-left and bottom-right corners. Per-site contraction of the bottom
row (left boundary) through to column 0 (right boundary) reassembles the
Hamiltonian as a sum of local terms. Block-operator channels downstream are
indexed to match W's columns, identity channel last.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UnsupportedHamiltonianError


@dataclass(frozen=True)
class SpinOperators:
    """Spin-S matrices in the basis m = S, S-1, ..., -S."""

    s: float
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    sp: np.ndarray
    sm: np.ndarray

    @property
    def d(self) -> int:
        return self.sz.shape[0]

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.d, dtype=np.complex128)


def spin_operators(s: float) -> SpinOperators:
    """Construct S^x, S^y, S^z, S^+, S^- for spin magnitude ``s``."""
    d = round(2 * s + 1)
    if abs(2 * s + 1 - d) > 1e-12 or d < 2:
        raise DimensionError(f"invalid spin magnitude {s}")
    m = s - np.arange(d)  # S, S-1, ..., -S
    sz = np.diag(m).astype(np.complex128)
    # <m+1|S+|m> = sqrt(S(S+1) - m(m+1))
    amp = np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1))
    sp = np.zeros((d, d), dtype=np.complex128)
    sp[np.arange(d - 1), np.arange(1, d)] = amp
    sm = sp.conj().T
    sx = 0.5 * (sp + sm)
    sy = -0.5j * (sp - sm)
    return SpinOperators(s=s, sx=sx, sy=sy, sz=sz, sp=sp, sm=sm)


@dataclass(frozen=True)
class Mpo:
    """Site-local operator-valued matrix of a translationally invariant MPO.

    ``w[i, j]`` is the d x d operator in row i, column j. Row index is the
    MPO bond coming in from the left.
    """

    w: np.ndarray  # (c, c, d, d)
    d: int

    def __post_init__(self):
        w = np.ascontiguousarray(self.w, dtype=np.complex128)
        object.__setattr__(self, "w", w)
        c = w.shape[0]
        if w.shape != (c, c, self.d, self.d):
            raise DimensionError(f"W must be (c, c, d, d), got {w.shape}")
        iu = np.triu_indices(c, k=1)
        if np.max(np.abs(w[iu])) > 0:
            raise UnsupportedHamiltonianError("W must be lower triangular")
        eye = np.eye(self.d)
        if not np.allclose(w[0, 0], eye) or not np.allclose(w[c - 1, c - 1], eye):
            raise UnsupportedHamiltonianError(
                "W[0,0] and W[c-1,c-1] must be identity channels"
            )

    @property
    def c(self) -> int:
        """MPO bond dimension."""
        return self.w.shape[0]

    def left_boundary(self) -> np.ndarray:
        """Row vector selecting the bottom row of W."""
        v = np.zeros(self.c)
        v[self.c - 1] = 1.0
        return v

    def right_boundary(self) -> np.ndarray:
        """Column vector selecting column 0 of W."""
        v = np.zeros(self.c)
        v[0] = 1.0
        return v


def heisenberg_s1_mpo() -> Mpo:
    """Spin-1 isotropic antiferromagnetic Heisenberg chain, bond dimension 5."""
    ops = spin_operators(1.0)
    return nn_mpo(
        [(ops.sx, ops.sx), (ops.sy, ops.sy), (ops.sz, ops.sz)], d=3
    )


def nn_mpo(h_terms, field: np.ndarray | None = None, d: int | None = None) -> Mpo:
    """Lower-triangular MPO for sum_i sum_k left_k(i) right_k(i+1) + sum_i field(i).

    Coupling constants are expected folded into the left operator of each
    term. Bond dimension is 2 + number of terms.
    """
    h_terms = [(np.asarray(a, dtype=np.complex128), np.asarray(b, dtype=np.complex128))
               for a, b in h_terms]
    if not h_terms and field is None:
        raise UnsupportedHamiltonianError("no interaction terms and no field")
    if d is None:
        d = (h_terms[0][0] if h_terms else field).shape[0]
    for a, b in h_terms:
        if a.shape != (d, d) or b.shape != (d, d):
            raise DimensionError(f"term operators must be {d}x{d}")
    if field is not None and np.asarray(field).shape != (d, d):
        raise DimensionError(f"field must be {d}x{d}")

    c = 2 + len(h_terms)
    w = np.zeros((c, c, d, d), dtype=np.complex128)
    eye = np.eye(d)
    w[0, 0] = eye
    w[c - 1, c - 1] = eye
    for k, (left_op, right_op) in enumerate(h_terms):
        w[k + 1, 0] = right_op
        w[c - 1, k + 1] = left_op
    if field is not None:
        w[c - 1, 0] = np.asarray(field, dtype=np.complex128)
    return Mpo(w=w, d=d)


def assemble_dense(mpo: Mpo, n: int) -> np.ndarray:
    """Contract ``n`` copies of W between boundary vectors into a d^n x d^n matrix.

    Exponential in ``n``; intended for small-system checks.
    """
    if n < 1:
        raise DimensionError("need at least one site")
    d, c = mpo.d, mpo.c
    # start from the bottom row: (c, d, d) slice selected by the left boundary
    acc = mpo.w[c - 1]  # (c_right, dout, din) with open column index first
    for _ in range(n - 1):
        # acc: (c, D, D); contract open channel with the next W's row index
        acc = np.einsum("aij,abkl->bikjl", acc, mpo.w)
        dd = acc.shape[1] * acc.shape[2]
        acc = acc.reshape(c, dd, dd)
    return acc[0]  # close with the right boundary (column 0)
