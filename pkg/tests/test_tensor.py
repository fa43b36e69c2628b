"""Tensor-core: labeled contraction, truncated SVD, Hermitian exponential."""

import numpy as np
import pytest

from ibcmps.errors import DimensionError, LabelError, NumericalError
from ibcmps.mpo import heisenberg_s1_mpo, spin_operators
from ibcmps.tensor import DenseTensor, contract, hermitian_expm, svd_truncate


def t2(labels, arr):
    return DenseTensor(tuple(labels), np.asarray(arr, dtype=complex))


class TestContract:
    def test_identity_times_identity(self):
        a = t2(("i", "j"), np.eye(2))
        b = t2(("k", "l"), np.eye(2))
        out = contract(a, b, [("j", "k")])
        assert out.labels == ("i", "l")
        np.testing.assert_allclose(out.data, np.eye(2))

    def test_full_trace_of_mdagm(self):
        # sum of squared entries of [[1,2],[3,4]] = 30, by hand
        m = np.array([[1, 2], [3, 4]], dtype=complex)
        a = t2(("i", "j"), m.conj())
        b = t2(("i2", "j2"), m)
        out = contract(a, b, [("i", "i2"), ("j", "j2")])
        assert out.labels == ()
        assert abs(out.data - 30.0) < 1e-14

    def test_mpo_physical_trace(self):
        # tracing the physical legs of W replaces each operator entry by its
        # trace: spin operators vanish, identities give d = 3
        mpo = heisenberg_s1_mpo()
        w = DenseTensor(("row", "col", "out", "in"), mpo.w)
        ident = t2(("p", "q"), np.eye(3))
        out = contract(w, ident, [("out", "p"), ("in", "q")])
        expected = np.zeros((5, 5))
        expected[0, 0] = expected[4, 4] = 3.0
        np.testing.assert_allclose(out.data, expected, atol=1e-14)

    def test_bilinearity(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            a = t2(("i", "j", "k"), rng.normal(size=(2, 3, 4))
                   + 1j * rng.normal(size=(2, 3, 4)))
            b = t2(("x", "j", "k"), rng.normal(size=(5, 3, 4))
                   + 1j * rng.normal(size=(5, 3, 4)))
            alpha = complex(rng.normal(), rng.normal())
            scaled = t2(a.labels, alpha * a.data)
            lhs = contract(scaled, b, [("j", "j"), ("k", "k")]).data
            rhs = alpha * contract(a, b, [("j", "j"), ("k", "k")]).data
            assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))

    def test_label_not_found(self):
        a = t2(("i", "j"), np.eye(2))
        with pytest.raises(LabelError):
            contract(a, a.relabeled({"i": "x", "j": "y"}), [("nope", "x")])

    def test_dimension_mismatch(self):
        a = t2(("i", "j"), np.eye(2))
        b = t2(("k", "l"), np.eye(3))
        with pytest.raises(DimensionError):
            contract(a, b, [("j", "k")])

    def test_duplicate_labels_rejected(self):
        with pytest.raises(LabelError):
            t2(("i", "i"), np.eye(2))


class TestSvdTruncate:
    def test_identity_full_rank(self):
        res = svd_truncate(t2(("a", "b"), np.eye(3)), ["a"], chi_max=3)
        np.testing.assert_allclose(res.s, [1, 1, 1])
        assert res.discarded_weight == 0.0

    def test_rank_one_matrix(self):
        # eigenvalues of M^dag M are {4, 0}: single singular value 2
        res = svd_truncate(t2(("a", "b"), np.ones((2, 2))), ["a"], chi_max=1)
        np.testing.assert_allclose(res.s, [2.0], atol=1e-14)
        assert res.discarded_weight < 1e-28

    def test_diag_discard(self):
        res = svd_truncate(t2(("a", "b"), np.diag([4.0, 3.0])), ["a"], chi_max=1)
        np.testing.assert_allclose(res.s, [4.0])
        assert abs(res.discarded_weight - 9.0 / 25.0) < 1e-14

    def test_isometries_and_reconstruction(self):
        rng = np.random.default_rng(5)
        m = rng.normal(size=(8, 6)) + 1j * rng.normal(size=(8, 6))
        t = t2(("a", "b"), m)
        for chi in (1, 3, 6):
            res = svd_truncate(t, ["a"], chi_max=chi)
            u = res.u.data.reshape(8, -1)
            v = res.v.data.reshape(-1, 6)
            assert np.max(np.abs(u.conj().T @ u - np.eye(u.shape[1]))) < 1e-12
            assert np.max(np.abs(v @ v.conj().T - np.eye(v.shape[0]))) < 1e-12
            recon = (u * res.s) @ v
            rel = np.sum(np.abs(m - recon) ** 2) / np.sum(np.abs(m) ** 2)
            assert rel <= res.discarded_weight + 1e-12

    def test_threshold_and_cap_take_the_stricter(self):
        t = t2(("a", "b"), np.diag([1.0, 0.5, 1e-9, 1e-12]))
        res = svd_truncate(t, ["a"], chi_max=10, tol=1e-6)
        assert len(res.s) == 2
        res = svd_truncate(t, ["a"], chi_max=1, tol=0.0)
        assert len(res.s) == 1

    def test_degenerate_block_kept_together(self):
        t = t2(("a", "b"), np.diag([1.0, 0.7, 0.7, 0.1]))
        res = svd_truncate(t, ["a"], chi_max=4, tol=0.69)
        # threshold alone would cut inside the 0.7 pair; the block survives
        assert len(res.s) == 3

    def test_chi_max_invalid(self):
        with pytest.raises(DimensionError):
            svd_truncate(t2(("a", "b"), np.eye(2)), ["a"], chi_max=0)

    def test_empty_matrix(self):
        with pytest.raises(DimensionError):
            svd_truncate(t2(("a", "b"), np.zeros((0, 2))), ["a"], chi_max=1)


class TestHermitianExpm:
    def test_zero_exponent(self):
        rng = np.random.default_rng(1)
        m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        h = t2(("a", "b"), m + m.conj().T)
        out = hermitian_expm(h, 0.0)
        np.testing.assert_allclose(out.data, np.eye(4), atol=1e-14)

    def test_diagonal_phases(self):
        sz = spin_operators(1.0).sz
        out = hermitian_expm(t2(("a", "b"), sz), -1j * np.pi)
        np.testing.assert_allclose(np.diag(out.data), [-1, 1, -1], atol=1e-12)

    def test_quarter_turn_amplitudes(self):
        sx = spin_operators(1.0).sx
        u = hermitian_expm(t2(("a", "b"), sx), -1j * np.pi / 2).data
        vec = u @ np.array([1.0, 0.0, 0.0])
        np.testing.assert_allclose(np.abs(vec) ** 2, [0.25, 0.5, 0.25], atol=1e-12)

    @pytest.mark.parametrize("delta", [0.01, 0.05])
    def test_unitarity(self, delta):
        rng = np.random.default_rng(9)
        m = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        h = t2(("a", "b"), m + m.conj().T)
        fwd = hermitian_expm(h, -1j * delta).data
        bwd = hermitian_expm(h, +1j * delta).data
        assert np.max(np.abs(fwd @ bwd - np.eye(6))) <= 1e-10
        assert np.max(np.abs(fwd.conj().T @ fwd - np.eye(6))) <= 1e-10

    def test_four_leg_gate(self):
        # two-site gates enter as rank-4 tensors split (out,out | in,in)
        rng = np.random.default_rng(3)
        m = rng.normal(size=(9, 9))
        h = (m + m.T).reshape(3, 3, 3, 3)
        out = hermitian_expm(DenseTensor(("a", "b", "c", "d"), h), -1j * 0.1)
        u = out.data.reshape(9, 9)
        assert np.max(np.abs(u.conj().T @ u - np.eye(9))) <= 1e-10

    def test_non_hermitian_rejected(self):
        bad = t2(("a", "b"), [[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(NumericalError):
            hermitian_expm(bad, -1j * 0.1)
