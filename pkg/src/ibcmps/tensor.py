"""Dense complex tensors with named indices.

This is the numerical substrate for everything else: labeled contraction,
truncated SVD with a deterministic treatment of degenerate singular values,
and the Hermitian matrix exponential used to build evolution gates.

Data is always stored row-major over the declared label order, so every
operation has a reproducible output layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, LabelError, NumericalError

# Relative spread below which neighbouring singular values are treated as
# one degenerate block for truncation purposes.
_DEGENERACY_RTOL = 1e-12


@dataclass(frozen=True)
class DenseTensor:
    """Complex tensor with one unique name per index.

    ``data.shape`` defines the extents; ``labels`` names the axes in
    storage order.
    """

    labels: tuple[str, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim and not data.flags["C_CONTIGUOUS"]:
            data = np.ascontiguousarray(data)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "data", data)
        if len(set(labels)) != len(labels):
            raise LabelError(f"duplicate index labels: {labels}")
        if data.ndim != len(labels):
            raise DimensionError(
                f"{data.ndim} axes but {len(labels)} labels {labels}"
            )

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelError(f"label {label!r} not in {self.labels}") from None

    def dim(self, label: str) -> int:
        return self.data.shape[self.axis(label)]

    def permuted(self, new_labels) -> "DenseTensor":
        """Reorder axes into ``new_labels`` (must be a permutation)."""
        new_labels = tuple(new_labels)
        if set(new_labels) != set(self.labels):
            raise LabelError(f"{new_labels} is not a permutation of {self.labels}")
        perm = [self.labels.index(l) for l in new_labels]
        return DenseTensor(new_labels, np.transpose(self.data, perm))

    def relabeled(self, mapping: dict) -> "DenseTensor":
        return DenseTensor(tuple(mapping.get(l, l) for l in self.labels), self.data)


def contract(a: DenseTensor, b: DenseTensor, pairs) -> DenseTensor:
    """Contract ``a`` with ``b`` over label pairs ``[(label_in_a, label_in_b), ...]``.

    The result carries the remaining labels of ``a`` followed by the
    remaining labels of ``b``, in their original order.
    """
    pairs = list(pairs)
    ax_a = [a.axis(la) for la, _ in pairs]
    ax_b = [b.axis(lb) for _, lb in pairs]
    for (la, lb), ia, ib in zip(pairs, ax_a, ax_b):
        if a.data.shape[ia] != b.data.shape[ib]:
            raise DimensionError(
                f"extent mismatch {la!r}({a.data.shape[ia]}) vs {lb!r}({b.data.shape[ib]})"
            )
    out_labels = tuple(l for l in a.labels if l not in {p[0] for p in pairs}) + tuple(
        l for l in b.labels if l not in {p[1] for p in pairs}
    )
    if len(set(out_labels)) != len(out_labels):
        raise LabelError(f"contraction output has clashing labels {out_labels}")
    out = np.tensordot(a.data, b.data, axes=(ax_a, ax_b))
    return DenseTensor(out_labels, out)


@dataclass(frozen=True)
class SvdResult:
    """Truncated SVD of a tensor viewed as a matrix.

    ``u`` is left-isometric over its row labels, ``v`` right-isometric over
    its column labels, ``s`` descending and nonnegative.
    ``discarded_weight`` is sum of squared dropped singular values over the
    total sum of squares.
    """

    u: DenseTensor
    s: np.ndarray
    v: DenseTensor
    discarded_weight: float


def truncation_rank(s: np.ndarray, chi_max: int, tol: float) -> int:
    """How many singular values of the descending vector ``s`` to keep.

    Keeps the stricter of ``chi_max`` and the relative threshold
    ``tol * s_max``, then widens the cut through any degenerate block it
    would otherwise split (never beyond ``chi_max``).
    """
    if chi_max < 1:
        raise DimensionError(f"chi_max must be >= 1, got {chi_max}")
    smax = s[0] if len(s) else 0.0
    keep = int(np.sum(s >= tol * smax)) if smax > 0 else len(s)
    keep = max(1, min(keep, chi_max, len(s)))
    while keep < min(chi_max, len(s)) and s[keep] >= s[keep - 1] * (1.0 - _DEGENERACY_RTOL):
        keep += 1
    return keep


def svd_truncate(
    t: DenseTensor,
    left_labels,
    chi_max: int,
    tol: float = 0.0,
    bond_label: str = "bond",
) -> SvdResult:
    """SVD of ``t`` split as (left_labels | rest), keeping the stricter of
    ``chi_max`` and the relative threshold ``tol``.

    Degenerate values straddling the cut are kept as a whole block (up to
    ``chi_max``) so the result does not depend on an arbitrary basis choice
    inside the multiplet.
    """
    if chi_max < 1:
        raise DimensionError(f"chi_max must be >= 1, got {chi_max}")
    left_labels = tuple(left_labels)
    right_labels = tuple(l for l in t.labels if l not in left_labels)
    for l in left_labels:
        t.axis(l)  # raises LabelError for unknown labels
    if not left_labels or not right_labels:
        raise LabelError("bipartition must leave labels on both sides")
    perm = t.permuted(left_labels + right_labels)
    dl = int(np.prod([t.dim(l) for l in left_labels]))
    dr = int(np.prod([t.dim(l) for l in right_labels]))
    if dl == 0 or dr == 0:
        raise DimensionError("cannot SVD an empty matrix")
    m = perm.data.reshape(dl, dr)

    u, s, vh = np.linalg.svd(m, full_matrices=False)

    total = float(np.sum(s**2))
    keep = truncation_rank(s, chi_max, tol)
    discarded = float(np.sum(s[keep:] ** 2) / total) if total > 0 else 0.0
    u = u[:, :keep]
    s = s[:keep].copy()
    vh = vh[:keep, :]

    u_t = DenseTensor(
        left_labels + (bond_label,),
        u.reshape([t.dim(l) for l in left_labels] + [keep]),
    )
    v_t = DenseTensor(
        (bond_label,) + right_labels,
        vh.reshape([keep] + [t.dim(l) for l in right_labels]),
    )
    return SvdResult(u=u_t, s=s, v=v_t, discarded_weight=discarded)


def hermitian_expm(
    h: DenseTensor, theta: complex, row_labels=None
) -> DenseTensor:
    """exp(theta * h) for Hermitian ``h`` via eigendecomposition.

    ``h`` is viewed as a matrix over (row_labels | rest); by default the
    first half of its labels are rows. For purely imaginary ``theta`` the
    result is unitary. Raises if ``h`` is not Hermitian to 1e-8 in max-abs;
    the input is symmetrized before exponentiating.
    """
    if row_labels is None:
        if len(h.labels) % 2 != 0:
            raise LabelError("cannot infer a row/column split from an odd rank")
        row_labels = h.labels[: len(h.labels) // 2]
    row_labels = tuple(row_labels)
    col_labels = tuple(l for l in h.labels if l not in row_labels)
    perm = h.permuted(row_labels + col_labels)
    dl = int(np.prod([h.dim(l) for l in row_labels]))
    dr = int(np.prod([h.dim(l) for l in col_labels]))
    if dl != dr:
        raise DimensionError(f"matrix view is {dl}x{dr}, not square")
    m = perm.data.reshape(dl, dr)
    herm_defect = float(np.max(np.abs(m - m.conj().T))) if dl else 0.0
    if herm_defect > 1e-8:
        raise NumericalError(f"matrix not Hermitian: max |h - h^dag| = {herm_defect:.3e}")
    m = 0.5 * (m + m.conj().T)
    w, vecs = np.linalg.eigh(m)
    out = (vecs * np.exp(theta * w)) @ vecs.conj().T
    shape = [h.dim(l) for l in row_labels] + [h.dim(l) for l in col_labels]
    return DenseTensor(row_labels + col_labels, out.reshape(shape)).permuted(h.labels)


def expm_hermitian_matrix(m: np.ndarray, theta: complex) -> np.ndarray:
    """Array-level variant of :func:`hermitian_expm` for square matrices."""
    defect = float(np.max(np.abs(m - m.conj().T)))
    if defect > 1e-8:
        raise NumericalError(f"matrix not Hermitian: max |h - h^dag| = {defect:.3e}")
    m = 0.5 * (m + m.conj().T)
    w, vecs = np.linalg.eigh(m)
    return (vecs * np.exp(theta * w)) @ vecs.conj().T
