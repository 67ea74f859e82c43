import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp

from efpe.smoothing import (
    DgfWeights,
    DomainError,
    InfeasiblePerturbation,
    Smoother,
    WeightScheme,
    check_xi,
    compute_weights,
    entropy_diameter_bound,
    entropy_grad,
    entropy_value,
    hessian_quadratic,
    perturb_map,
    perturbed_simplex_conjugate,
    smoothed_best_response,
    strong_convexity_l1,
    treeplex_dgf_grad,
    treeplex_dgf_value,
    unperturb_map,
)
from efpe.treeplex import ROOT, SimplexSpec, build_treeplex, max_l1_cutoff, subtree_max_l1_cutoff, validate_point
from oracles import conjugate_oracle, constraint_matrix, smoothed_br_oracle
from test_treeplex import random_point, treeplexes


def parent_mass(t, q):
    return np.where(t.seq_parent == ROOT, 1.0, q[np.maximum(t.seq_parent, 0)])


def random_weights(t, rng, scheme=WeightScheme.RECURRENCE):
    return DgfWeights(rng.uniform(0.5, 3.0, size=t.num_simplexes), scheme)


def direct_dgf(t, q, beta, xi):
    total = 0.0
    for j in range(t.num_simplexes):
        s, n = t.start[j], t.size[j]
        par = 1.0 if t.parent[j] == ROOT else q[t.parent[j]]
        u = (q[s: s + n] / par - xi) / (1 - n * xi)
        total += beta[j] * par * float(np.sum(u * np.log(u)))
    return total


D2 = build_treeplex([SimplexSpec(2)])


class TestSimplexMaps:
    def test_vertex(self):
        np.testing.assert_allclose(unperturb_map([1.0, 0.0], 0.1), [0.9, 0.1])

    @given(st.floats(0.0, 0.49))
    def test_uniform_fixed_point(self, xi):
        np.testing.assert_allclose(perturb_map([0.5, 0.5], xi), [0.5, 0.5])
        np.testing.assert_allclose(unperturb_map([0.5, 0.5], xi), [0.5, 0.5])

    @given(st.integers(0, 2**31))
    def test_round_trip(self, seed):
        q = np.random.default_rng(seed).dirichlet(np.ones(3))
        np.testing.assert_allclose(perturb_map(unperturb_map(q, 0.2), 0.2), q, atol=1e-14)

    def test_infeasible(self):
        with pytest.raises(InfeasiblePerturbation):
            perturb_map([0.5, 0.5], 0.5)
        with pytest.raises(InfeasiblePerturbation):
            unperturb_map([1.0, 0.0, 0.0], 0.4)
        with pytest.raises(InfeasiblePerturbation):
            check_xi(D2, 0.5)
        with pytest.raises(InfeasiblePerturbation):
            check_xi(D2, -0.1)


class TestEntropy:
    def test_values(self):
        assert entropy_value([0.5, 0.5]) == pytest.approx(-math.log(2))
        assert entropy_value([1.0, 0.0]) == 0.0

    def test_grad_fd(self):
        q = np.random.default_rng(0).dirichlet(np.ones(3))
        eps = 1e-6
        fd = [(entropy_value(q + eps * e) - entropy_value(q - eps * e)) / (2 * eps) for e in np.eye(3)]
        np.testing.assert_allclose(entropy_grad(q), fd, atol=1e-6)

    def test_grad_domain(self):
        with pytest.raises(DomainError):
            entropy_grad([1.0, 0.0])


class TestConjugate:
    def test_symmetric(self):
        v, q = perturbed_simplex_conjugate([0.0, 0.0], 0.1)
        assert v == pytest.approx(math.log(2))
        np.testing.assert_allclose(q, [0.5, 0.5])

    def test_unperturbed(self):
        v, q = perturbed_simplex_conjugate([1.0, 0.0], 0.0)
        assert v == pytest.approx(1.313262, abs=1e-6)
        np.testing.assert_allclose(q, [0.731059, 0.268941], atol=1e-6)

    def test_perturbed_against_oracle(self):
        v, q = perturbed_simplex_conjugate([1.0, 0.0], 0.1)
        s = np.exp([0.8, 0.0]) / np.exp([0.8, 0.0]).sum()
        np.testing.assert_allclose(q, 0.8 * s + 0.1, atol=1e-15)
        ov, oq = conjugate_oracle(np.array([[1.0, 0.0]]), 0.1)
        assert v == pytest.approx(ov[0], abs=1e-6)
        np.testing.assert_allclose(q, oq[0], atol=1e-6)

    @given(st.lists(st.floats(-20, 20), min_size=1, max_size=6), st.floats(0.0, 0.99))
    def test_lemma_identity(self, g, frac):
        g = np.array(g)
        xi = frac / len(g)
        v, q = perturbed_simplex_conjugate(g, xi)
        c = 1 - len(g) * xi
        assert v == pytest.approx(logsumexp(c * g) + xi * g.sum(), abs=1e-12)
        assert (q >= xi).all()
        assert q.sum() == pytest.approx(1.0, abs=1e-12)


class TestWeights:
    def test_single_simplex(self):
        w = compute_weights(D2, "recurrence")
        assert w.alpha[0] == w.beta[0] == 1.0
        assert compute_weights(D2, "convergence").beta[0] == 2.0

    def test_chain_recurrence(self):
        t = build_treeplex([SimplexSpec(2), SimplexSpec(2, parent=0)])
        w = compute_weights(t, "recurrence")
        assert list(w.alpha) == [3.0, 1.0]
        assert list(w.beta) == [3.0, 2.0]

    @given(treeplexes())
    def test_recurrence_invariants(self, t):
        w = compute_weights(t, WeightScheme.RECURRENCE)
        for j in range(t.num_simplexes):
            if t.parent[j] == ROOT:
                assert w.beta[j] == w.alpha[j]
            else:
                assert w.beta[j] > w.alpha[j]

    def test_convergence_closed_form(self, leduc3):
        t = leduc3.X
        w = compute_weights(t, WeightScheme.CONVERGENCE)
        for j in range(t.num_simplexes):
            d = int(t.depth[j])
            expect = 2 + sum(2**r * (subtree_max_l1_cutoff(t, j, r) - 1) for r in range(1, d + 1))
            assert w.beta[j] == expect
        # the root-level cutoff agrees with the whole-treeplex one on a single root
        single = build_treeplex([SimplexSpec(2), SimplexSpec(2, parent=0), SimplexSpec(3, parent=1)])
        for r in range(3):
            assert subtree_max_l1_cutoff(single, 0, r) == max_l1_cutoff(single, r)

    def test_scaling(self, kuhn):
        w = compute_weights(kuhn.X, "convergence", 0.1)
        np.testing.assert_allclose(w.effective, 0.1 * w.beta)
        assert strong_convexity_l1(kuhn.X, w) == pytest.approx(0.1 / kuhn.X.max_l1)
        with pytest.raises(ValueError):
            w.scaled(0.0)

    def test_dumps(self):
        text = compute_weights(D2, "convergence").dumps()
        assert text == "# scheme=convergence gamma=1.0\n0 2.0\n"


class TestDiameter:
    def test_examples(self, kuhn):
        assert entropy_diameter_bound(D2) == pytest.approx(2.7726, abs=1e-4)
        for m in (3, 5):
            assert entropy_diameter_bound(build_treeplex([SimplexSpec(m)])) == pytest.approx(4 * math.log(m))
        t = kuhn.X
        assert entropy_diameter_bound(t) == pytest.approx(t.max_l1**2 * 2 ** (t.depth_q + 2) * math.log(2))


class TestTreeplexDgf:
    def test_uniform_fixed_point(self):
        w = DgfWeights(np.array([1.0]), WeightScheme.RECURRENCE)
        assert treeplex_dgf_value(D2, [0.5, 0.5], w, 0.1) == pytest.approx(-math.log(2))

    def test_reduces_to_entropy(self):
        t = build_treeplex([SimplexSpec(4)])
        w = DgfWeights(np.array([1.0]), WeightScheme.RECURRENCE)
        q = np.random.default_rng(2).dirichlet(np.ones(4))
        assert treeplex_dgf_value(t, q, w, 0.0) == entropy_value(q)

    @pytest.mark.parametrize("xi", [0.0, 0.05])
    def test_value_matches_direct_formula(self, kuhn, xi):
        rng = np.random.default_rng(4)
        w = random_weights(kuhn.X, rng)
        for _ in range(20):
            q = random_point(kuhn.X, rng, xi)
            assert treeplex_dgf_value(kuhn.X, q, w, xi) == pytest.approx(direct_dgf(kuhn.X, q, w.beta, xi), abs=1e-10)

    @pytest.mark.parametrize("xi", [0.0, 0.05])
    def test_grad_fd(self, kuhn, xi):
        rng = np.random.default_rng(5)
        t = kuhn.X
        w = random_weights(t, rng)
        for _ in range(20):
            q = random_point(t, rng, xi)
            g = treeplex_dgf_grad(t, q, w, xi)
            eps = 1e-7 * np.maximum(q, 1e-3)
            fd = np.array([
                (treeplex_dgf_value(t, q + e * d, w, xi) - treeplex_dgf_value(t, q - e * d, w, xi)) / (2 * e)
                for e, d in zip(eps, np.eye(t.n))
            ])
            assert np.linalg.norm(fd - g) <= 1e-6 * np.linalg.norm(g)

    def test_domain(self):
        w = DgfWeights(np.array([1.0]), WeightScheme.RECURRENCE)
        with pytest.raises(DomainError):
            treeplex_dgf_grad(D2, [0.1, 0.9], w, 0.1)
        with pytest.raises(DomainError):
            hessian_quadratic(D2, [1.0, 0.0], [1.0, -1.0], w, 0.0)
        with pytest.raises(DomainError):
            treeplex_dgf_value(D2, [0.05, 0.95], w, 0.1)


class TestHessian:
    def test_examples(self, kuhn):
        w = DgfWeights(np.array([1.0]), WeightScheme.RECURRENCE)
        assert hessian_quadratic(D2, [0.5, 0.5], [1.0, -1.0], w) == pytest.approx(4.0)
        wk = compute_weights(kuhn.X)
        assert hessian_quadratic(kuhn.X, random_point(kuhn.X, np.random.default_rng(0)), np.zeros(12), wk) == 0.0

    @pytest.mark.parametrize("xi", [0.0, 0.05])
    def test_second_difference(self, kuhn, xi):
        rng = np.random.default_rng(6)
        t = kuhn.X
        w = random_weights(t, rng)
        for _ in range(20):
            q = random_point(t, rng, xi)
            h = rng.normal(size=t.n)
            # step small enough to stay interior
            eps = 1e-2 * (q - xi * parent_mass(t, q)).min() / np.abs(h).max()
            f0 = treeplex_dgf_value(t, q, w, xi)
            fd = (treeplex_dgf_value(t, q + eps * h, w, xi) - 2 * f0 + treeplex_dgf_value(t, q - eps * h, w, xi)) / eps**2
            exact = hessian_quadratic(t, q, h, w, xi)
            assert fd == pytest.approx(exact, rel=1e-4)

    @settings(max_examples=50)
    @given(treeplexes(), st.integers(0, 2**31), st.sampled_from([0.0, 0.01, 0.1]))
    def test_strong_convexity(self, t, seed, xi):
        if xi * t.max_simplex_size >= 1:
            return
        rng = np.random.default_rng(seed)
        w = compute_weights(t, WeightScheme.RECURRENCE)
        q = random_point(t, rng, xi)
        h = rng.normal(size=t.n)
        v = hessian_quadratic(t, q, h, w, xi)
        assert v >= h @ h - 1e-8
        assert v >= np.abs(h).sum() ** 2 / t.max_l1 - 1e-8


class TestSmoothedBestResponse:
    def test_zero_gradient(self):
        for mu in (0.1, 3.0):
            v, q = smoothed_best_response(build_treeplex([SimplexSpec(3)]), np.zeros(3),
                                          DgfWeights(np.array([1.0]), WeightScheme.RECURRENCE), 0.0, mu)
            np.testing.assert_allclose(q, 1 / 3)
            assert v == pytest.approx(mu * math.log(3))

    def test_large_mu(self):
        w = DgfWeights(np.array([1.0]), WeightScheme.RECURRENCE)
        _, q = smoothed_best_response(build_treeplex([SimplexSpec(3)]), [1.0, -2.0, 0.5], w, 0.0, 1e6)
        np.testing.assert_allclose(q, 1 / 3, atol=1e-6)

    def test_bad_mu(self):
        w = DgfWeights(np.array([1.0]), WeightScheme.RECURRENCE)
        with pytest.raises(ValueError):
            smoothed_best_response(D2, [0.0, 0.0], w, 0.0, 0.0)

    @pytest.mark.parametrize("xi", [0.0, 0.01])
    def test_kuhn_against_optimiser(self, kuhn, xi):
        rng = np.random.default_rng(8)
        t = kuhn.X
        w = compute_weights(t, "convergence")
        for _ in range(3):
            g = rng.normal(size=t.n) * 2
            v, q = smoothed_best_response(t, g, w, xi, 1.0)
            ov, oq = smoothed_br_oracle(t, g, w.effective, xi, 1.0)
            assert v == pytest.approx(ov, abs=1e-5)
            np.testing.assert_allclose(q, oq, atol=1e-5)

    @pytest.mark.parametrize("xi", [0.0, 0.01, 0.1])
    def test_fenchel_and_stationarity(self, leduc3, xi):
        rng = np.random.default_rng(9)
        t = leduc3.Y
        w = compute_weights(t, "recurrence", 0.3)
        for _ in range(5):
            g = rng.normal(size=t.n)
            mu = rng.uniform(0.2, 2.0)
            v, q = smoothed_best_response(t, g, w, xi, mu)
            pm = parent_mass(t, q)
            assert (q - xi * pm >= 0).all()
            assert validate_point(t, q, xi)
            assert v == pytest.approx(g @ q - mu * treeplex_dgf_value(t, q, w, xi), abs=1e-10)
            # KKT: the residual is normal to the affine hull, i.e. E^T lam
            r = g - mu * treeplex_dgf_grad(t, q, w, xi)
            E, _ = constraint_matrix(t)
            lam = np.linalg.lstsq(E.T, r, rcond=None)[0]
            assert np.abs(E.T @ lam - r).max() < 1e-6 * max(1.0, np.abs(r).max())

    def test_smoother_prox_value(self, kuhn):
        s = Smoother(kuhn.X, compute_weights(kuhn.X), 0.05)
        assert s.prox_value(np.zeros(kuhn.X.n), 2.0) == pytest.approx(0.0, abs=1e-12)
        assert validate_point(kuhn.X, s.center, 0.05)
