import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import root

from orthocs.errors import DegenerateHessian, InfeasibleNorms
from orthocs.free_energy import (_hessian_direct,
                                 check_feasible, free_energy_gradient,
                                 free_energy_hessian, solve_multipliers)

from oracles import fd_gradient, fd_jacobian


def random_feasible(rng, T, lo=0.4, hi=2.2):
    while True:
        v = rng.uniform(lo, hi, T)
        if np.all(v < v.sum() - v):
            return v


class TestSolveMultipliers:
    def test_symmetric_t3(self):
        sol = solve_multipliers(np.ones(3))
        assert sol.multipliers == pytest.approx([2 / 3] * 3, abs=1e-12)
        assert sol.shares == pytest.approx([1 / 3] * 3, abs=1e-13)

    @pytest.mark.parametrize("T", [3, 4, 5, 6, 8])
    @pytest.mark.parametrize("scale", [0.3, 1.0, 4.0])
    def test_uniform_closed_form(self, T, scale):
        v = np.full(T, scale)
        sol = solve_multipliers(v)
        assert sol.multipliers == pytest.approx([(T - 1) / (T * scale)] * T, rel=1e-11)

    def test_two_blocks_constrained(self):
        for v in (0.5, 1.0, 3.7):
            sol = solve_multipliers(np.array([v, v]))
            assert sol.multipliers == pytest.approx([1 / (2 * v)] * 2, rel=1e-14)
            assert sol.shares == pytest.approx([0.5, 0.5], abs=1e-15)
            assert sol.value == pytest.approx(-0.5 * np.log(v) - 0.5, rel=1e-14)

    def test_two_blocks_unequal_rejected(self):
        with pytest.raises(InfeasibleNorms):
            solve_multipliers(np.array([1.0, 1.5]))

    def test_triangle_violation_rejected(self):
        with pytest.raises(InfeasibleNorms):
            solve_multipliers(np.array([1.0, 1.0, 2.5]))
        with pytest.raises(InfeasibleNorms):
            check_feasible(np.array([5.0, 1.0, 1.0, 1.0]))

    def test_nonpositive_rejected(self):
        with pytest.raises(InfeasibleNorms):
            solve_multipliers(np.array([1.0, -1.0, 1.0]))

    def test_against_generic_root_solver(self):
        """Stationarity solved by a generic nonlinear root finder."""
        rng = np.random.default_rng(7)
        for T in (3, 4, 5):
            v = random_feasible(rng, T)
            sol = solve_multipliers(v)

            def stationarity(lam):
                inv = 1.0 / lam
                shares = inv / inv.sum()
                return lam * v - (1.0 - shares)

            generic = root(stationarity, np.full(T, 1.0), tol=1e-13)
            assert generic.success
            assert sol.multipliers == pytest.approx(generic.x, rel=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=3, max_value=6), st.integers(min_value=0, max_value=2 ** 31))
    def test_identities(self, T, seed):
        v = random_feasible(np.random.default_rng(seed), T)
        sol = solve_multipliers(v)
        assert abs(sol.shares.sum() - 1.0) < 1e-12
        assert v * sol.multipliers == pytest.approx(1.0 - sol.shares, abs=1e-10)


class TestGradient:
    def test_symmetric_value(self):
        g = free_energy_gradient(np.ones(3))
        assert g == pytest.approx([-1 / 6] * 3, abs=1e-12)
        # the saddle-equation combination -2 dF/dv = shares / v
        assert -2.0 * g == pytest.approx([1 / 3] * 3, abs=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        T = rng.integers(3, 6)
        v = random_feasible(rng, T)
        g = free_energy_gradient(v)
        fd = fd_gradient(lambda u: solve_multipliers(u).value, v, h=1e-6)
        assert g == pytest.approx(fd, abs=1e-6)

    def test_two_blocks_along_constraint(self):
        # sum of componentwise values equals d/dv of (-log(v)/2 - 1/2)
        for v in (0.7, 1.0, 2.0):
            g = free_energy_gradient(np.array([v, v]))
            assert g.sum() == pytest.approx(-1.0 / (2.0 * v), rel=1e-12)


class TestHessian:
    @pytest.mark.parametrize("seed", range(4))
    def test_matches_fd_of_gradient(self, seed):
        rng = np.random.default_rng(100 + seed)
        T = int(rng.integers(3, 6))
        v = random_feasible(rng, T)
        sol = solve_multipliers(v)
        if np.any(sol.shares >= 0.5):
            pytest.skip("sampled a constrained-curvature point")
        h = free_energy_hessian(v, sol)
        fd = 2.0 * fd_jacobian(lambda u: free_energy_gradient(u), v, h=1e-5)
        assert h == pytest.approx(fd, abs=1e-5)
        assert h == pytest.approx(h.T, abs=0.0)  # symmetric by construction

    @pytest.mark.parametrize("T", [3, 4, 6])
    def test_uniform_contractions(self, T):
        v = np.full(T, 1.3)
        h = free_energy_hessian(v)
        # row sums add up to the on-diagonal curvature of the uniform section
        assert h.sum(axis=1) == pytest.approx([1.0 / (T * 1.3 ** 2)] * T, rel=1e-9)
        assert h.sum() == pytest.approx(1.3 ** -2, rel=1e-9)

    def test_two_blocks_degenerate(self):
        with pytest.raises(DegenerateHessian):
            free_energy_hessian(np.array([1.0, 1.0]))

    def test_large_share_degenerate(self):
        # v proportional to R(1-R) with R = (0.6, 0.2, 0.2) is feasible but
        # puts one share above 1/2
        v = np.array([0.24, 0.16, 0.16])
        sol = solve_multipliers(v)
        assert sol.shares[0] > 0.5
        with pytest.raises(DegenerateHessian):
            free_energy_hessian(v, sol)

    def test_direct_inverse_agrees_with_factorized(self):
        rng = np.random.default_rng(3)
        while True:
            v = random_feasible(rng, 4)
            sol = solve_multipliers(v)
            if np.all(sol.shares < 0.5):
                break
        assert _hessian_direct(v, sol) == pytest.approx(
            free_energy_hessian(v, sol), rel=1e-10, abs=1e-12)

    def test_direct_inverse_beyond_half_share(self):
        v = np.array([0.24, 0.16, 0.16])
        sol = solve_multipliers(v)
        h = _hessian_direct(v, sol)
        fd = 2.0 * fd_jacobian(lambda u: free_energy_gradient(u), v, h=1e-5)
        assert h == pytest.approx(fd, abs=2e-4)


class TestSphericalSampling:
    def test_small_dimension_trend(self):
        """Loop-closure frequency ordering at tiny dimension follows the exponent.

        Exact agreement is not expected at finite size; only the monotone
        trend in the third block norm is checked.
        """
        rng = np.random.default_rng(42)
        grid = [1.0, 1.5, 1.9]
        for M in (2, 3):
            hits = []
            exponents = []
            n = 1_000_000
            for v3 in grid:
                radii = np.sqrt(M * np.array([1.0, 1.0, v3]))
                total = np.zeros((n, M))
                for r in radii:
                    g = rng.standard_normal((n, M))
                    total += r * g / np.linalg.norm(g, axis=1, keepdims=True)
                hits.append(np.mean(np.linalg.norm(total, axis=1) / np.sqrt(M) < 0.35))
                exponents.append(solve_multipliers(np.array([1.0, 1.0, v3])).value)
            assert exponents[0] > exponents[1] > exponents[2]
            assert hits[0] > hits[1] > hits[2]
