import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mixest.errors import DomainError, InvalidInputError
from mixest.simplex import (
    EUCLIDEAN,
    NEGATIVE_ENTROPY,
    as_weights,
    bregman_divergence,
    get_mirror,
    kl_divergence,
    project_simplex,
    r_phi,
    uniform,
)

from oracles import simplex_grid, zoom_minimize

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def interior(rng, M, n):
    return rng.dirichlet(np.ones(M), size=n) * (1 - 1e-6 * M) + 1e-6


@pytest.mark.parametrize(
    "v, expected",
    [([0.6, 0.6], [0.5, 0.5]), ([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]), ([1.5, -0.5], [1.0, 0.0])],
)
def test_projection_examples(v, expected):
    np.testing.assert_allclose(project_simplex(v), expected, atol=1e-15)


@pytest.mark.parametrize("M", [2, 3])
def test_projection_matches_grid_oracle(rng, M):
    for v in rng.normal(0, 1.5, size=(100, M)):
        ref = zoom_minimize(lambda Z: np.sum((Z - v) ** 2, axis=1), M)
        np.testing.assert_allclose(project_simplex(v), ref, atol=1e-6)


@given(arrays(np.float64, st.integers(2, 12), elements=finite))
def test_projection_lands_on_simplex_and_is_idempotent(v):
    p = project_simplex(v)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) <= 1e-9
    np.testing.assert_array_equal(project_simplex(p), p)


def test_projection_batches_along_last_axis(rng):
    V = rng.normal(size=(5, 4))
    np.testing.assert_array_equal(project_simplex(V), np.stack([project_simplex(v) for v in V]))


@pytest.mark.parametrize("bad", [[np.nan, 0.5], [np.inf, 0.0], [1.0]])
def test_projection_rejects_bad_input(bad):
    with pytest.raises(InvalidInputError):
        project_simplex(bad)


@pytest.mark.parametrize(
    "p, q, expected",
    [
        ([0.5, 0.5], [0.5, 0.5], 0.0),
        ([1.0, 0.0], [0.5, 0.5], math.log(2)),
        ([0.3, 0.7], [0.6, 0.4], 0.3 * math.log(0.5) + 0.7 * math.log(1.75)),
    ],
)
def test_kl_examples(p, q, expected):
    assert kl_divergence(p, q) == pytest.approx(expected, abs=1e-12)


def test_kl_worked_value():
    # direct summation: -0.2079442 + 0.3917310
    assert kl_divergence([0.3, 0.7], [0.6, 0.4]) == pytest.approx(0.1837869, abs=1e-7)


def test_kl_infinite_is_a_value_not_an_error():
    assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf
    out = kl_divergence([[0.5, 0.5], [1.0, 0.0]], [[1.0, 0.0], [1.0, 0.0]])
    assert out[0] == math.inf and out[1] == 0.0


def test_bregman_examples():
    assert bregman_divergence(EUCLIDEAN, [0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.0625, abs=1e-15)
    assert bregman_divergence(NEGATIVE_ENTROPY, [0.2, 0.8], [0.2, 0.8]) == pytest.approx(0.0, abs=1e-15)
    assert bregman_divergence(NEGATIVE_ENTROPY, [1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-12)


def test_bregman_entropy_needs_interior_second_argument():
    with pytest.raises(DomainError):
        bregman_divergence(NEGATIVE_ENTROPY, [0.5, 0.5], [1.0, 0.0])


def test_bregman_reductions_on_random_pairs(rng):
    for M in (2, 3, 7):
        X, Y = interior(rng, M, 200), interior(rng, M, 200)
        for x, y in zip(X, Y):
            assert bregman_divergence(EUCLIDEAN, x, y) == pytest.approx(0.5 * np.sum((x - y) ** 2), abs=1e-12)
            assert bregman_divergence(NEGATIVE_ENTROPY, x, y) == pytest.approx(kl_divergence(x, y), abs=1e-12)


@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_bregman_identity_and_nonnegativity(M, seed):
    r = np.random.default_rng(seed)
    x, y = interior(r, M, 2)
    for mirror in (EUCLIDEAN, NEGATIVE_ENTROPY):
        assert bregman_divergence(mirror, x, x) == pytest.approx(0.0, abs=1e-14)
        assert bregman_divergence(mirror, x, y) >= 0


def test_pinsker(rng):
    X, Y = interior(rng, 5, 1000), interior(rng, 5, 1000)
    l1 = np.abs(X - Y).sum(axis=1)
    assert np.all(0.5 * l1**2 <= kl_divergence(X, Y) + 1e-15)


def test_r_phi_examples():
    assert r_phi(NEGATIVE_ENTROPY, 2) == pytest.approx(0.832555, abs=1e-6)
    assert r_phi(EUCLIDEAN, 2) == pytest.approx(0.5, abs=1e-15)
    assert r_phi(NEGATIVE_ENTROPY, 1189) == pytest.approx(math.sqrt(math.log(1189)), abs=1e-12)
    assert r_phi(NEGATIVE_ENTROPY, 1189) == pytest.approx(2.66099, abs=1e-5)


@pytest.mark.parametrize("M", [2, 3, 4])
def test_r_phi_matches_grid_extrema(M):
    if M <= 3:
        Z = simplex_grid(M, 1e-3)
    else:
        a = np.arange(0, 1.0001, 0.02)
        G = np.array(np.meshgrid(a, a, a, indexing="ij")).reshape(3, -1).T
        G = G[G.sum(axis=1) <= 1 + 1e-12]
        Z = np.column_stack([G, np.clip(1 - G.sum(axis=1), 0, None)])
    for mirror in (EUCLIDEAN, NEGATIVE_ENTROPY):
        phi = mirror.phi(Z)
        assert math.sqrt(phi.max() - phi.min()) == pytest.approx(r_phi(mirror, M), abs=1e-3)


def test_mirror_lookup_and_weights():
    assert get_mirror("kl") is NEGATIVE_ENTROPY
    assert get_mirror("l2") is EUCLIDEAN
    with pytest.raises(InvalidInputError):
        get_mirror("hyperbolic")
    np.testing.assert_array_equal(uniform(4), np.full(4, 0.25))
    with pytest.raises(InvalidInputError):
        as_weights([0.5, 0.6])
    with pytest.raises(InvalidInputError):
        as_weights([1.2, -0.2])
