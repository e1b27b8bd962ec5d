import json

import numpy as np
import pytest

from congestion_pricing import (ActionSet, DimensionError, DomainError, GameSpec, NoiseModel,
                                ResourceConstraints, congestion, game_from_json, game_to_json,
                                make_game, make_quadratic_game, noisy_gradient)


def test_congestion_scalar():
    rc = ResourceConstraints([[1.0]], [0.0])
    assert congestion([2.0], rc).tolist() == [2.0]


def test_congestion_dimension_mismatch():
    rc = ResourceConstraints(np.ones((2, 3)), np.zeros(2))
    with pytest.raises(DimensionError) as ei:
        congestion(np.ones(4), rc)
    assert ei.value.to_dict()["details"]["expected"] == 3


def test_slater_point_strictly_negative():
    g = make_quadratic_game(3, 2, capacity=6.25)
    xs = g.resources.slater_point
    assert xs is not None
    assert np.all(congestion(xs, g.resources) < 0)


def test_bad_slater_point_rejected():
    with pytest.raises(DomainError):
        ResourceConstraints([[1.0]], [0.5], slater_point=[0.6])


def test_uniform_point_zero_congestion_on_default_bench():
    g = make_quadratic_game(20, 5)
    x = np.full(100, 0.2)
    np.testing.assert_allclose(g.resources.A @ x, 16.0, atol=1e-12)
    np.testing.assert_allclose(congestion(x, g.resources), 0.0, atol=1e-12)
    # tight capacity: the uniform point is not strictly feasible
    assert g.resources.slater_point is None


def test_congestion_affine():
    rng = np.random.default_rng(1)
    rc = ResourceConstraints(rng.standard_normal((3, 6)), rng.standard_normal(3))
    for _ in range(100):
        x, y, a = rng.standard_normal(6), rng.standard_normal(6), rng.uniform()
        lhs = congestion(a * x + (1 - a) * y, rc)
        rhs = a * congestion(x, rc) + (1 - a) * congestion(y, rc)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_noiseless_gradient_is_exact():
    g = make_quadratic_game(4, 3)
    x = g.center()
    rng = np.random.default_rng(0)
    state = rng.bit_generator.state
    out = noisy_gradient(x, g, NoiseModel(), rng)
    assert np.array_equal(out, g.gradient(x))
    assert rng.bit_generator.state == state


def test_noise_reproducible():
    g = make_quadratic_game(4, 3)
    x = g.center()
    a = noisy_gradient(x, g, NoiseModel.gaussian(5), np.random.default_rng(7))
    b = noisy_gradient(x, g, NoiseModel.gaussian(5), np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_noise_mean_zero():
    g = make_quadratic_game(2, 2)
    x = g.center()
    v = g.v(x)
    rng = np.random.default_rng(3)
    draws = np.array([noisy_gradient(x, g, NoiseModel.gaussian(5), rng) for _ in range(100_000)])
    assert np.all(np.abs((draws - v).mean(axis=0)) <= 4 * 5 / np.sqrt(100_000))


def test_monotone_on_sampled_pairs():
    for n, d, cap in [(20, 5, None), (3, 2, 6.25)]:
        g = make_quadratic_game(n, d, capacity=cap)
        rng = np.random.default_rng(11)
        X, Xp = g.sample(rng, 10_000), g.sample(rng, 10_000)
        inner = np.sum((X - Xp) * (g.gradient(X) - g.gradient(Xp)), axis=1)
        assert inner.max() <= 1e-9


def test_action_set_membership_and_projection():
    s = ActionSet.simplex(3)
    assert s.contains([0.2, 0.3, 0.5])
    assert not s.contains([0.2, 0.3, 0.6])
    p = s.project(np.array([2.0, -1.0, 0.5]))
    assert s.contains(p)
    box = ActionSet.box(2, -1.0, 1.0)
    assert box.contains([1.0, -1.0])
    assert not box.contains([1.1, 0.0])
    assert box.n_vertices() == 4


def test_unbounded_box_rejected():
    with pytest.raises(DomainError):
        ActionSet.box(2, 0.0, np.inf)


def test_gradient_dimension_checked():
    bad = make_game([ActionSet.simplex(2)], lambda x: np.zeros(3), [[1.0, 1.0]], [1.0])
    with pytest.raises(DimensionError):
        bad.v(np.array([0.5, 0.5]))


def test_json_round_trip():
    g = make_quadratic_game(3, 2, seed=4, capacity=6.25)
    text = game_to_json(g, NoiseModel.gaussian(5))
    g2, noise = game_from_json(text)
    assert noise == NoiseModel.gaussian(5)
    assert g2.dims == g.dims
    assert np.array_equal(g2.resources.A, g.resources.A)
    x = g.sample(np.random.default_rng(0))
    assert np.array_equal(g2.gradient(x), g.gradient(x))
    d = json.loads(text)
    assert d["n_players"] == 3 and len(d["A"]) == 2 * 6


def test_json_needs_gradient_without_oracle():
    g = make_game([ActionSet.box(1)], lambda x: 1 - x, [[1.0]], [0.5])
    with pytest.raises(DomainError):
        game_from_json(game_to_json(g))
    g2, _ = game_from_json(game_to_json(g), gradient=lambda x: 1 - x)
    assert g2.v(np.array([0.25]))[0] == 0.75
