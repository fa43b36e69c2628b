"""Block operators, the deflated linear solve, and effective couplings."""

import numpy as np
import pytest

from conftest import as_site_tensor, random_canonical
from ibcmps.environment import (
    boundary_interaction,
    compute_environment,
    effective_couplings,
    energy_per_site,
    solve_deflated,
)
from ibcmps.errors import DimensionError, NumericalError, UnsupportedHamiltonianError
from ibcmps.imps import canonicalize, left_transfer, transfer_apply
from ibcmps.mpo import Mpo, nn_mpo, spin_operators
from ibcmps.tensor import DenseTensor
from oracles import heisenberg_two_site, truncated_geometric_sum


def product_psi(level=1):
    g = np.zeros((1, 3, 1), dtype=complex)
    g[0, level, 0] = 1.0
    return canonicalize(g, np.array([1.0]))


class TestComputeEnvironment:
    def test_identity_channel(self, psi16, heis_mpo):
        for side in ("left", "right"):
            env = compute_environment(psi16, heis_mpo, side)
            ident = env.identity_channel()
            assert np.max(np.abs(ident - np.eye(psi16.chi))) <= 1e-10

    def test_product_state_all_zero(self, heis_mpo):
        # |0>^inf: every single-site spin expectation vanishes and the
        # two-site oracle gives <00|S.S|00> = 0
        h2 = heisenberg_two_site()
        zero_state = np.zeros(9)
        zero_state[4] = 1.0  # |m=0, m=0> in the 9-dim two-site basis
        assert abs(zero_state @ h2 @ zero_state) < 1e-14

        env = compute_environment(product_psi(), heis_mpo, "left")
        assert abs(env.e0) < 1e-12
        for m in env.middle_channels():
            assert np.max(np.abs(m)) < 1e-12
        assert np.max(np.abs(env.effective_hamiltonian())) < 1e-12

    def test_spin_channel_matches_single_transfer(self, psi16, heis_mpo):
        # the Sz channel solves in one application of the generalized
        # transfer operator to the identity channel
        env = compute_environment(psi16, heis_mpo, "left")
        e = DenseTensor(("bra", "ket"), np.eye(psi16.chi, dtype=complex))
        sz = spin_operators(1.0).sz
        direct = transfer_apply(e, as_site_tensor(psi16.a_array()), sz, "left")
        np.testing.assert_array_equal(env.components[3], direct.data)

    def test_linear_equation_residual(self, psi16, heis_mpo):
        for side in ("left", "right"):
            env = compute_environment(psi16, heis_mpo, side, tol=1e-12)
            h = env.effective_hamiltonian()
            if side == "left":
                a = psi16.a_array()
                th = left_transfer(h, a)
            else:
                from ibcmps.imps import right_transfer
                th = right_transfer(h, psi16.b_array())
            resid = h - th - (env.source - env.e0 * np.eye(psi16.chi))
            assert np.max(np.abs(resid)) <= 1e-8
            assert abs(np.trace(env.rho @ h)) <= 1e-10

    def test_nonidentity_diagonal_rejected(self):
        ops = spin_operators(1.0)
        w = np.zeros((3, 3, 3, 3), dtype=complex)
        w[0, 0] = np.eye(3)
        w[2, 2] = np.eye(3)
        w[1, 1] = 0.5 * np.eye(3)   # decaying interaction channel
        w[1, 0] = ops.sz
        w[2, 1] = ops.sz
        mpo = Mpo(w=w, d=3)
        with pytest.raises(UnsupportedHamiltonianError):
            compute_environment(product_psi(), mpo, "left")


class TestEnergyPerSite:
    def test_identity_source(self):
        rho = np.diag([0.7, 0.3]).astype(complex)
        assert abs(energy_per_site(rho, np.eye(2)) - 1.0) < 1e-14

    def test_zero_source(self):
        rho = np.diag([0.7, 0.3]).astype(complex)
        assert energy_per_site(rho, np.zeros((2, 2))) == 0.0

    def test_imaginary_part_rejected(self):
        rho = np.diag([1.0]).astype(complex)
        with pytest.raises(NumericalError):
            energy_per_site(rho, np.array([[1e-3j]]))


class TestSolveDeflated:
    def test_zero_transfer_returns_rhs(self):
        rng = np.random.default_rng(0)
        rho = np.diag([0.6, 0.4]).astype(complex)
        m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        rhs = m + m.conj().T
        rhs = rhs - np.trace(rho @ rhs) * np.eye(2)  # already deflated
        out = solve_deflated(lambda x: np.zeros_like(x), rhs, rho)
        assert np.max(np.abs(out.data - rhs)) < 1e-12

    def test_pure_identity_source_gives_zero(self, psi16):
        a = psi16.a_array()
        rho = psi16.rho()
        e0 = -1.4
        out = solve_deflated(lambda x: left_transfer(x, a), e0 * np.eye(psi16.chi), rho)
        assert np.max(np.abs(out.data)) < 1e-12

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_geometric_series(self, seed):
        psi = random_canonical(4, 3, seed=seed)
        a = psi.a_array()
        rho = psi.rho()
        rng = np.random.default_rng(100 + seed)
        m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rhs = m + m.conj().T
        transfer = lambda x: left_transfer(x, a)
        got = solve_deflated(transfer, rhs, rho, tol=1e-12).data
        want = truncated_geometric_sum(transfer, rhs, rho, tol=1e-13)
        assert np.max(np.abs(got - want)) < 1e-8
        assert abs(np.trace(rho @ got)) < 1e-10

    def test_idempotent_and_deterministic(self, psi16, heis_mpo):
        env = compute_environment(psi16, heis_mpo, "left")
        a = psi16.a_array()
        transfer = lambda x: left_transfer(x, a)
        one = solve_deflated(transfer, env.source, psi16.rho()).data
        two = solve_deflated(transfer, env.source, psi16.rho()).data
        np.testing.assert_array_equal(one, two)
        # feeding the solution back through deflation changes nothing
        redeflated = one - np.trace(psi16.rho() @ one) * np.eye(psi16.chi)
        assert np.max(np.abs(redeflated - one)) < 1e-12


class TestEffectiveCouplings:
    def test_product_state_zero(self, heis_mpo):
        env = compute_environment(product_psi(), heis_mpo, "left")
        cpl = effective_couplings(env)
        for m in cpl.s_tilde:
            assert np.max(np.abs(m)) < 1e-12

    def test_ground_state_sz_traceless(self, psi16, heis_mpo):
        env = compute_environment(psi16, heis_mpo, "left")
        cpl = effective_couplings(env)
        assert abs(np.trace(psi16.rho() @ cpl.s_tilde[2])) <= 1e-8

    def test_spin_rotation_symmetry(self, psi16, heis_mpo):
        # without symmetry-blocked tensors the truncation splits multiplets
        # near the cut, so compare the couplings through weight-dominated
        # moments rather than raw spectra
        env = compute_environment(psi16, heis_mpo, "left")
        cpl = effective_couplings(env)
        rho = psi16.rho()
        moments = [float(np.trace(rho @ m @ m).real) for m in cpl.s_tilde]
        assert abs(moments[0] - moments[1]) < 2e-4
        assert abs(moments[0] - moments[2]) < 2e-4

    def test_wrong_layout_rejected(self, psi16):
        ops = spin_operators(1.0)
        mpo = nn_mpo([(ops.sz, ops.sz)], d=3)
        env = compute_environment(psi16, mpo, "left")
        with pytest.raises(DimensionError):
            effective_couplings(env)

    def test_boundary_interaction_hermitian(self, psi16, heis_mpo):
        for side in ("left", "right"):
            env = compute_environment(psi16, heis_mpo, side)
            mat = boundary_interaction(env, heis_mpo)
            assert np.max(np.abs(mat - mat.conj().T)) < 1e-12
