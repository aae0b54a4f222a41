import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmplln.errors import NonSimpleLeading, Reducible, SemigroupOverflow
from bmplln.model import build_model, mean_generator
from bmplln.spectral import (
    compute_eigendata,
    h1_gap,
    integrated_semigroup_apply,
    is_irreducible,
    semigroup_apply,
    semigroup_matrix,
)

from conftest import motion_only, random_model, series_expm

GOLDEN = (1 + math.sqrt(5)) / 2


def check_invariants(A, sd):
    scale = np.abs(A).max() + abs(sd.lam)
    assert np.abs(A @ sd.phi - sd.lam * sd.phi).max() <= 1e-10 * scale * np.abs(sd.phi).max()
    assert np.abs(sd.phi_tilde @ A - sd.lam * sd.phi_tilde).max() <= 1e-10 * scale
    assert sd.phi_tilde.sum() == pytest.approx(1.0, abs=1e-12)
    assert sd.phi_tilde @ sd.phi == pytest.approx(1.0, abs=1e-12)
    assert np.all(sd.phi > 0) and np.all(sd.phi_tilde > 0)


def test_one_state(yule_sd):
    assert yule_sd.lam == 1.0
    np.testing.assert_array_equal(yule_sd.phi, [1.0])
    np.testing.assert_array_equal(yule_sd.phi_tilde, [1.0])
    assert math.isinf(yule_sd.spectral_gap)
    assert yule_sd.to_dict()["spectral_gap"] is None


def test_two_state_against_characteristic_polynomial(two_state, two_sd):
    roots = np.sort(np.roots([1.0, -1.0, -1.0]).real)
    assert two_sd.lam == pytest.approx(roots[1], abs=1e-12)
    assert two_sd.lam == pytest.approx(GOLDEN, abs=1e-12)
    assert two_sd.spectral_gap == pytest.approx(math.sqrt(5), abs=1e-12)
    # right eigenvector of [[0,1],[1,1]] is proportional to (1, lambda)
    assert two_sd.phi[1] / two_sd.phi[0] == pytest.approx(GOLDEN, rel=1e-12)
    check_invariants(mean_generator(two_state), two_sd)


def test_pure_killing_is_not_supercritical():
    m = motion_only([[-2.0, 1.0], [1.0, -3.0]])
    sd = compute_eigendata(mean_generator(m))
    assert sd.lam < 0
    assert not sd.supercritical
    assert not sd.to_dict()["supercritical"]


def test_reducible_raises():
    A = np.array([[1.0, 0.5], [0.0, 2.0]])
    assert not is_irreducible(A)
    with pytest.raises(Reducible):
        compute_eigendata(A)


@pytest.mark.parametrize("A", [
    [[0.0, 1.0], [-1.0, 0.0]],   # leading pair is complex
    [[2.0, 1.0], [-1.0, 0.0]],   # double eigenvalue 1
])
def test_non_simple_leading_raises(A):
    with pytest.raises(NonSimpleLeading):
        compute_eigendata(A)


def test_semigroup_examples(yule, two_state, two_sd):
    f = np.array([0.3, -1.7])
    assert semigroup_apply(mean_generator(two_state), 0.0, f) is not f
    np.testing.assert_array_equal(semigroup_apply(mean_generator(two_state), 0.0, f), f)
    assert semigroup_apply(mean_generator(yule), 1.0, [1.0])[0] == pytest.approx(math.e, rel=1e-15)
    A = mean_generator(two_state)
    for t in (0.1, 1.0, 5.0, 20.0):
        got = semigroup_apply(A, t, two_sd.phi)
        np.testing.assert_allclose(got, math.exp(two_sd.lam * t) * two_sd.phi, rtol=1e-9)


@pytest.mark.parametrize("t", [0.01, 0.1, 0.5])
def test_semigroup_matches_series(two_state, t):
    A = mean_generator(two_state)
    np.testing.assert_allclose(semigroup_matrix(A, t), series_expm(A, t), rtol=1e-13)


def test_overflow_guard(yule):
    A = mean_generator(yule)
    semigroup_apply(A, 699.0, [1.0])
    with pytest.raises(SemigroupOverflow):
        semigroup_apply(A, 701.0, [1.0])
    with pytest.raises(ValueError):
        semigroup_apply(A, -1.0, [1.0])


def test_integrated_semigroup(two_state, two_sd):
    A = mean_generator(two_state)
    t = 1.5
    got = integrated_semigroup_apply(A, t, two_sd.phi)
    np.testing.assert_allclose(got, (math.exp(two_sd.lam * t) - 1) / two_sd.lam * two_sd.phi, rtol=1e-12)
    np.testing.assert_array_equal(integrated_semigroup_apply(A, 0.0, two_sd.phi), [0.0, 0.0])


def test_h1_gap_examples(yule, yule_sd, two_state, two_sd):
    for t in (0.0, 1.0, 7.5):
        assert h1_gap(mean_generator(yule), yule_sd, t) <= 1e-12
    A = mean_generator(two_state)
    direct = max(
        sum(abs((x == y) / two_sd.phi[x] - two_sd.phi_tilde[y]) for y in range(2)) for x in range(2)
    )
    assert h1_gap(A, two_sd, 0.0) == pytest.approx(direct, rel=1e-14)
    assert direct > 0
    g3, g6 = h1_gap(A, two_sd, 3.0), h1_gap(A, two_sd, 6.0)
    assert g6 <= g3 * math.exp(-two_sd.spectral_gap * 3) * (1 + 1e-6)


def test_h1_gap_is_sup_over_unit_ball(two_state, two_sd):
    # on two states the sup over |f| <= 1 is attained at a sign vector
    A = mean_generator(two_state)
    t = 0.7
    P = semigroup_matrix(A, t)
    best = 0.0
    for f in ([1, 1], [1, -1], [-1, 1], [-1, -1]):
        f = np.array(f, dtype=float)
        vals = math.exp(-two_sd.lam * t) * (P @ f) / two_sd.phi - two_sd.phi_tilde @ f
        best = max(best, np.abs(vals).max())
    assert h1_gap(A, two_sd, t) == pytest.approx(best, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(s=st.floats(0, 5), t=st.floats(0, 5), seed=st.integers(0, 2**32 - 1))
def test_semigroup_property(two_state, s, t, seed):
    A = mean_generator(two_state)
    f = np.random.default_rng(seed).normal(size=2)
    lhs = semigroup_apply(A, s + t, f)
    rhs = semigroup_apply(A, s, semigroup_apply(A, t, f))
    assert np.abs(lhs - rhs).max() <= 1e-9 * np.abs(semigroup_matrix(A, s + t)).max() * np.abs(f).max()


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 6), t=st.floats(0, 3))
def test_random_model_invariants(seed, n, t):
    A = mean_generator(random_model(np.random.default_rng(seed), n))
    sd = compute_eigendata(A)
    check_invariants(A, sd)
    assert sd.spectral_gap > 0
    f = np.random.default_rng(seed + 1).normal(size=n)
    # left eigenmeasure grows at the leading rate
    left = sd.phi_tilde @ semigroup_apply(A, t, f)
    assert left == pytest.approx(math.exp(sd.lam * t) * (sd.phi_tilde @ f),
                                 abs=1e-9 * math.exp(sd.lam * t) * np.abs(f).sum())


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.1, 3), b=st.floats(0.1, 3), g0=st.floats(0, 3), g1=st.floats(0, 3),
       t=st.floats(0, 4))
def test_h1_gap_decays_at_spectral_gap(a, b, g0, g1, t):
    # two states: exactly one subdominant mode, so the decay is an exact exponential
    m = build_model("ab", [[-a, a], [b, -b]], [g0, g1], [[(1.0, [0, 0])], [(1.0, [1, 1])]])
    A = mean_generator(m)
    sd = compute_eigendata(A)
    base = h1_gap(A, sd, 1.0)
    later = h1_gap(A, sd, 1.0 + t)
    assert later <= base * math.exp(-sd.spectral_gap * t) * (1 + 1e-6) + 1e-13
    assert later <= h1_gap(A, sd, 1.0 + t / 2) * (1 + 1e-9) + 1e-13
