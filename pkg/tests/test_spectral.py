"""Stationary laws, uniformization, quadratic forms, optimal constants."""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from pjmp import (
    DegenerateModelError,
    SparseGenerator,
    assemble_generator,
    enumerate_states,
    estimate_weight_F,
    gamma_vector,
    poincare_constant,
    propagate_function,
    semigroup_variance_profile,
    stationary,
    transient_distribution,
    variance_and_energy,
    weighted_F_exact,
    weighted_F_vector,
)


@pytest.fixture(scope="module")
def ring2_box10(ring2):
    space = enumerate_states(ring2, ring2.zero_state(), 10.0)
    gen = assemble_generator(ring2, space)
    return space, gen, stationary(gen)


class TestStationary:
    def test_residual_and_cross_checks(self, ring2_box10):
        _space, _gen, mu = ring2_box10
        assert mu.residual <= 1e-10
        assert mu.dense_tv is not None and mu.dense_tv <= 1e-10
        assert mu.power_tv is not None and mu.power_tv <= 1e-10

    def test_zero_inflow_state_is_transient(self, ring2_box10):
        space, _gen, mu = ring2_box10
        k = space.position(space.net.zero_state())
        assert mu.probabilities[k] == 0.0
        assert k not in set(int(j) for j in mu.support)

    def test_swap_symmetry(self, ring2, ring2_box10):
        space, _gen, mu = ring2_box10
        for k in range(1, 11):
            a = mu.probabilities[space.position(ring2.state([k, 0]))]
            b = mu.probabilities[space.position(ring2.state([0, k]))]
            assert a == pytest.approx(b, rel=1e-12)

    def test_zero_weights_point_mass(self, zero2):
        space = enumerate_states(zero2, zero2.zero_state(), 5.0)
        gen = assemble_generator(zero2, space)
        mu = stationary(gen)
        assert mu.probabilities[space.position(zero2.zero_state())] == 1.0

    def test_absorbing_from_positive_start(self, single1):
        space = enumerate_states(single1, single1.state([3]), 5.0)
        gen = assemble_generator(single1, space)
        mu = stationary(gen)
        assert mu.probabilities[space.position(single1.zero_state())] == 1.0

    def test_multiple_closed_classes_named(self):
        # two disconnected 2-cycles
        q = sp.csr_matrix(
            np.array(
                [
                    [-1.0, 1.0, 0.0, 0.0],
                    [1.0, -1.0, 0.0, 0.0],
                    [0.0, 0.0, -2.0, 2.0],
                    [0.0, 0.0, 2.0, -2.0],
                ]
            )
        )
        with pytest.raises(DegenerateModelError, match="do not communicate"):
            stationary(SparseGenerator.from_matrix(q))

    def test_probabilities_normalized(self, ring2_box10):
        _space, _gen, mu = ring2_box10
        assert mu.probabilities.sum() == pytest.approx(1.0, abs=1e-14)
        assert (mu.probabilities >= 0).all()

    def test_dense_check_skipped_above_cutoff(self, ring2_box10):
        _space, gen, _mu = ring2_box10
        mu = stationary(gen, dense_cutoff=5)
        assert mu.dense_tv is None
        assert mu.power_tv is not None and mu.power_tv <= 1e-10


class TestTransient:
    def test_time_zero_point_mass(self, ring2_box10):
        space, gen, _mu = ring2_box10
        k = space.position(space.net.zero_state())
        v = transient_distribution(gen, k, 0.0)
        assert v[k] == 1.0 and v.sum() == 1.0

    def test_no_jump_probability(self, ring2, ring2_box10):
        # the origin has no inflow, so its mass at time t is exactly the
        # probability of total silence, e^{-3t}
        space, gen, _mu = ring2_box10
        k = space.position(ring2.zero_state())
        v = transient_distribution(gen, k, 1.0, eps=1e-13)
        assert v[k] == pytest.approx(math.exp(-3.0), rel=1e-10)

    def test_mass_within_eps(self, ring2_box10):
        space, gen, _mu = ring2_box10
        rng = np.random.default_rng(0)
        for _ in range(5):
            k = int(rng.integers(0, len(space)))
            t = float(rng.uniform(0.1, 3.0))
            v = transient_distribution(gen, k, t, eps=1e-9)
            assert (v >= 0).all()
            assert abs(v.sum() - 1.0) <= 1e-9

    def test_duality_with_function_propagation(self, ring2_box10):
        space, gen, _mu = ring2_box10
        f = np.cos(np.arange(len(space)))
        k = space.position(space.net.zero_state())
        lhs = float(transient_distribution(gen, k, 1.7, eps=1e-13) @ f)
        rhs = float(propagate_function(gen, f, 1.7, eps=1e-13)[k])
        assert lhs == pytest.approx(rhs, rel=1e-9)

    def test_negative_time_rejected(self, ring2_box10):
        _space, gen, _mu = ring2_box10
        with pytest.raises(ValueError):
            transient_distribution(gen, 0, -1.0)

    def test_matches_simulation_frequencies(self, ring2):
        # full-distribution cross-check between uniformization and the
        # event-driven simulator: every state with nonnegligible mass within
        # 4 binomial standard errors
        from pjmp import simulate_path

        space = enumerate_states(ring2, ring2.zero_state(), 25.0)
        gen = assemble_generator(ring2, space)
        t = 1.2
        exact = transient_distribution(gen, space.position(ring2.zero_state()), t, eps=1e-12)
        n = 20000
        counts = {}
        for s in range(n):
            fin = simulate_path(ring2, ring2.zero_state(), t, seed=700_000 + s).final_state
            counts[fin] = counts.get(fin, 0) + 1
        for k, x in enumerate(space.states):
            p = exact[k]
            if p < 1e-4:
                continue
            p_hat = counts.get(x, 0) / n
            se = math.sqrt(p * (1 - p) / n)
            assert abs(p_hat - p) <= 4 * se, (x.numerators, p, p_hat)


class TestQuadraticForms:
    def test_constant_function(self, ring2_box10):
        _space, gen, mu = ring2_box10
        var, energy = variance_and_energy(gen, mu, np.full(gen.dimension, 3.3))
        assert var == pytest.approx(0.0, abs=1e-14)
        assert energy == pytest.approx(0.0, abs=1e-12)

    def test_integration_by_parts(self, ring2_box10):
        # -mu(f Qf) equals mu(Gamma(f,f)) under stationarity
        _space, gen, mu = ring2_box10
        rng = np.random.default_rng(1)
        for _ in range(20):
            f = rng.standard_normal(gen.dimension)
            _var, energy = variance_and_energy(gen, mu, f)
            direct = float(mu.probabilities @ gamma_vector(gen, f))
            assert energy == pytest.approx(direct, rel=1e-10, abs=1e-12)

    def test_coordinate_function_strictly_positive(self, ring2_box10):
        space, gen, mu = ring2_box10
        f = space.coordinate_values()[0]
        var, energy = variance_and_energy(gen, mu, f)
        assert var > 0 and energy > 0

    def test_symmetrized_operator_self_adjoint(self, ring2_box10):
        _space, gen, mu = ring2_box10
        supp = mu.support
        q = gen.matrix[np.ix_(supp, supp)].toarray()
        p = mu.probabilities[supp]
        s_op = -(q + np.diag(1.0 / p) @ q.T @ np.diag(p)) / 2.0
        rng = np.random.default_rng(2)
        for _ in range(10):
            f = rng.standard_normal(len(supp))
            g = rng.standard_normal(len(supp))
            left = float(p @ ((s_op @ f) * g))
            right = float(p @ (f * (s_op @ g)))
            assert left == pytest.approx(right, rel=1e-12, abs=1e-12)


class TestPoincare:
    def test_two_state_closed_form(self):
        a, b = 0.7, 2.3
        q = sp.csr_matrix(np.array([[-a, a], [b, -b]]))
        gen = SparseGenerator.from_matrix(q)
        mu = stationary(gen)
        gap = poincare_constant(gen, mu)
        assert gap.c_opt == pytest.approx(1.0 / (a + b), rel=1e-10)

    def test_degenerate_single_state(self, zero2):
        space = enumerate_states(zero2, zero2.zero_state(), 5.0)
        gen = assemble_generator(zero2, space)
        mu = stationary(gen)
        gap = poincare_constant(gen, mu)
        assert gap.degenerate and gap.c_opt is None

    def test_rayleigh_oracle(self, ring2_box10):
        _space, gen, mu = ring2_box10
        gap = poincare_constant(gen, mu)
        rng = np.random.default_rng(3)
        sup_ratio = 0.0
        for _ in range(1000):
            f = rng.standard_normal(gen.dimension)
            var, energy = variance_and_energy(gen, mu, f)
            assert var <= gap.c_opt * energy + 1e-12
            sup_ratio = max(sup_ratio, var / energy)
        var_s, en_s = variance_and_energy(gen, mu, gap.optimizer)
        assert sup_ratio <= gap.c_opt + 1e-12
        assert var_s / en_s == pytest.approx(gap.c_opt, rel=1e-6)

    def test_iterative_agrees_with_direct(self, ring2):
        space = enumerate_states(ring2, ring2.zero_state(), 30.0)
        gen = assemble_generator(ring2, space)
        mu = stationary(gen)
        direct = poincare_constant(gen, mu, method="direct")
        iterative = poincare_constant(gen, mu, method="iterative")
        assert iterative.method == "iterative"
        assert iterative.c_opt == pytest.approx(direct.c_opt, rel=1e-8)

    def test_auto_dispatch_above_cutoff(self, ring2):
        space = enumerate_states(ring2, ring2.zero_state(), 30.0)
        gen = assemble_generator(ring2, space)
        mu = stationary(gen)
        gap = poincare_constant(gen, mu, dense_cutoff=10)
        assert gap.method == "iterative"


class TestWeightedIntegral:
    def test_zero_time(self, ring2_box10):
        space, gen, _mu = ring2_box10
        assert weighted_F_exact(gen, space.total_rates(), 0, 0.0) == 0.0

    def test_short_time_derivative(self, ring2, ring2_box10):
        space, gen, _mu = ring2_box10
        k = space.position(ring2.zero_state())
        h = 1e-4
        deriv = weighted_F_exact(gen, space.total_rates(), k, h, eps=1e-14) / h
        assert deriv == pytest.approx(3.0, abs=1e-2)

    def test_matches_monte_carlo(self, ring2):
        space = enumerate_states(ring2, ring2.zero_state(), 25.0)
        gen = assemble_generator(ring2, space)
        k = space.position(ring2.zero_state())
        exact = weighted_F_exact(gen, space.total_rates(), k, 5.0, eps=1e-12)
        est = estimate_weight_F(ring2, ring2.zero_state(), 5.0, 4000, seed=11)
        assert abs(est.mean - exact) <= 4 * est.std_error

    def test_vector_matches_pointwise(self, ring2_box10):
        space, gen, _mu = ring2_box10
        vec = weighted_F_vector(gen, space.total_rates(), 2.0)
        for k in (0, 3, 7):
            assert vec[k] == weighted_F_exact(gen, space.total_rates(), k, 2.0)


class TestVarianceProfile:
    def test_constant_function_zero(self, ring2_box10):
        _space, gen, mu = ring2_box10
        lhs, energy, weighted = semigroup_variance_profile(
            gen, mu, np.full(gen.dimension, 2.0), [0.5, 1.0]
        )
        assert np.allclose(lhs, 0.0, atol=1e-12)
        assert energy == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(weighted, 0.0, atol=1e-12)

    def test_short_time_slope_is_twice_energy(self, ring2_box10):
        # first-order expansion: Var under P_t is t*(L f^2 - 2 f Lf) + O(t^2),
        # which is 2 t Gamma(f,f); the slope of the averaged variance is
        # therefore twice the energy
        _space, gen, mu = ring2_box10
        rng = np.random.default_rng(4)
        f = rng.standard_normal(gen.dimension)
        t = 1e-3
        lhs, energy, _w = semigroup_variance_profile(gen, mu, f, [t], eps=1e-14)
        assert lhs[0] / t == pytest.approx(2.0 * energy, rel=0.1)

    def test_pointwise_variance_vs_monte_carlo(self, ring2):
        from pjmp import estimate_semigroup

        space = enumerate_states(ring2, ring2.zero_state(), 20.0)
        gen = assemble_generator(ring2, space)
        totals = space.totals()
        t = 1.5
        for start in ([0, 0], [3, 0]):
            x = ring2.state(start)
            k = space.position(x)
            pf = propagate_function(gen, totals, t, eps=1e-13)[k]
            pf2 = propagate_function(gen, totals**2, t, eps=1e-13)[k]
            exact_var = pf2 - pf**2
            mean_est, var_est = estimate_semigroup(
                ring2, lambda y: y.total(), x, t, 20000, seed=7
            )
            assert abs(mean_est.mean - pf) <= 4 * mean_est.std_error
            assert abs(var_est.mean - exact_var) <= 4 * var_est.std_error
