import numpy as np
import pytest

from congestion_pricing import CongestionPricingError, DimensionError, make_quadratic_game, quad_cost, quad_gradient
from congestion_pricing.quadgame import QuadGameParams, kron_matrix, make_params, psd_sqrt


def custom(n, Q, Cmat=None, c=None):
    d = Q.shape[0]
    Cmat = np.zeros((d, d)) if Cmat is None else Cmat
    c = np.zeros(n * d) if c is None else c
    A = 4.0 * np.kron(np.ones((1, n)), np.eye(d))
    return QuadGameParams(n, d, Q, Cmat, c, A, np.full(d, 16.0))


def test_scalar_q():
    q = np.random.default_rng(5).standard_normal((1, 1))[0, 0]
    p = make_params(1, 1, seed=5)
    assert p.Q[0, 0] == pytest.approx(2 * abs(q) + 1, rel=1e-14)


def test_q_positive_definite_and_symmetric():
    for seed in range(20):
        p = make_params(4, 5, seed=seed)
        assert np.array_equal(p.Q, p.Q.T)
        assert np.linalg.eigvalsh(p.Q).min() >= 1 - 1e-9


def test_same_seed_same_game():
    a, b = make_params(5, 3, seed=7), make_params(5, 3, seed=7)
    assert np.array_equal(a.Q, b.Q) and np.array_equal(a.A, b.A)
    assert not np.array_equal(a.Q, make_params(5, 3, seed=8).Q)


def test_psd_sqrt():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((4, 4))
    G = M.T @ M
    R = psd_sqrt(G)
    np.testing.assert_allclose(R @ R, G, atol=1e-10)
    with pytest.raises(CongestionPricingError):
        psd_sqrt(-np.eye(2))


def test_gradient_small_examples():
    p = custom(2, np.eye(3), Cmat=np.zeros((3, 3)))
    np.testing.assert_array_equal(quad_gradient(np.zeros(6), p), np.zeros(6))
    p1 = custom(1, np.eye(2))
    np.testing.assert_array_equal(quad_gradient([1.0, 0.0], p1), [-1.0, 0.0])
    assert quad_cost(0, [1.0, 0.0], p1) == 0.5
    assert quad_cost(0, [0.0, 0.0], make_params(1, 2)) == 0.0
    with pytest.raises(DimensionError):
        quad_gradient(np.zeros(5), p1)
    with pytest.raises(DimensionError):
        quad_cost(3, np.zeros(2), p1)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    p = make_params(4, 3, seed=2)
    p = QuadGameParams(p.n, p.d, p.Q, rng.uniform(0, 2, (3, 3)), rng.standard_normal(12), p.A, p.b)
    h = 1e-5
    for _ in range(100):
        x = rng.uniform(0, 1, 12)
        v = quad_gradient(x, p)
        for i in range(p.n):
            fd = np.empty(p.d)
            for k in range(p.d):
                e = np.zeros(12)
                e[i * p.d + k] = h
                fd[k] = -(quad_cost(i, x + e, p) - quad_cost(i, x - e, p)) / (2 * h)
            blk = v[i * p.d:(i + 1) * p.d]
            assert np.allclose(blk, fd, rtol=1e-6, atol=1e-6 * np.abs(blk).max())


def test_blockwise_matches_kronecker():
    rng = np.random.default_rng(2)
    for n in range(1, 5):
        for d in range(1, 4):
            p = make_params(n, d, seed=n * 10 + d)
            p = QuadGameParams(n, d, p.Q, rng.standard_normal((d, d)), rng.standard_normal(n * d), p.A, p.b)
            M = kron_matrix(p)
            for _ in range(10):
                x = rng.standard_normal(n * d)
                np.testing.assert_allclose(quad_gradient(x, p), M @ x - p.c, rtol=0, atol=1e-12)


def test_batched_gradient():
    g = make_quadratic_game(5, 3)
    X = g.sample(np.random.default_rng(0), 7)
    np.testing.assert_allclose(g.gradient(X), np.array([g.gradient(x) for x in X]), atol=1e-14)


def test_exchangeable_costs():
    p = make_params(6, 4, seed=3)
    xi = np.random.default_rng(0).dirichlet(np.ones(4))
    x = np.tile(xi, 6)
    costs = [quad_cost(i, x, p) for i in range(6)]
    assert np.ptp(costs) == 0.0


def test_monotone_bench():
    g = make_quadratic_game(20, 5)
    rng = np.random.default_rng(9)
    X, Y = g.sample(rng, 10_000), g.sample(rng, 10_000)
    assert np.max(np.sum((X - Y) * (g.gradient(X) - g.gradient(Y)), axis=1)) <= 1e-9


def test_bench_structure():
    g = make_quadratic_game(20, 5)
    p = g.params
    assert np.array_equal(p.Cmat, 4 * np.eye(5)) and not np.any(p.c)
    assert np.array_equal(p.b, np.full(5, 16.0))
    assert g.n_players == 20 and g.n_resources == 5
    assert g.oracle == {"kind": "quadratic", "n": 20, "d": 5, "build_seed": 0, "capacity": 16.0}
