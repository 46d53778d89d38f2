import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iltlab.errors import ConditionViolated, NoConvergence, ResidualTooLarge
from iltlab.ground_state import (
    GaussianMixture,
    cached_ground_state,
    coefficients,
    fixed_point_ground_state,
    gn_ratio_from_norms,
    gn_violation_search,
    kappa_from_M,
    kappa_from_ground_state,
    radial_norms,
    random_gaussian_mixture,
    rate_constants,
    solve_ground_state,
    variational_M,
)

CASES = [(2, 2), (2, 3), (3, 2), (2, 4)]


@pytest.fixture(scope="module", params=CASES, ids=lambda c: f"d{c[0]}p{c[1]}")
def gs(request):
    return cached_ground_state(*request.param)


def test_profile_is_ground_state(gs):
    assert np.all(gs.f > 0)
    assert np.all(np.diff(gs.f) < 0)
    assert gs.diagnostics["positive"] and gs.diagnostics["strictly_decreasing"]


def test_integral_identity(gs):
    assert gs.identity_gap < 1e-6


def test_second_order_residual(gs):
    finer = solve_ground_state(gs.d, gs.p, h=gs.h / 2)
    assert gs.residual / finer.residual >= 3
    assert finer.mass == pytest.approx(gs.mass, rel=1e-8)


def test_solvers_agree(gs):
    fp = fixed_point_ground_state(gs.d, gs.p)
    assert fp["mass"] == pytest.approx(gs.mass, rel=1e-4)
    assert fp["amplitude"] == pytest.approx(gs.amplitude, rel=1e-3)


def test_kappa_2_2_mass():
    g = cached_ground_state(2, 2)
    assert g.mass == pytest.approx(2 * math.pi * 1.86225, rel=5e-3)
    assert kappa_from_ground_state(g) == pytest.approx(0.6430, abs=1e-3)


def test_condition_checked():
    for d, p in [(3, 3), (4, 2), (1, 2), (2, 1)]:
        with pytest.raises(ConditionViolated):
            solve_ground_state(d, p)


def test_residual_tolerance_enforced():
    with pytest.raises(ResidualTooLarge):
        solve_ground_state(2, 2, tol=1e-6)


def test_bracket_without_transition():
    with pytest.raises(NoConvergence):
        solve_ground_state(2, 2, bracket=(0.1, 0.5))


def test_M_kappa_algebra():
    k = 0.6429877725925831
    assert variational_M(2, 2, k) == pytest.approx(k**4 / 2, rel=1e-14)
    for p in (3, 4, 5):
        expected = (1 / p) * (2 * (p - 1) / p) ** (p - 1) * k ** (2 * p)
        assert variational_M(2, p, k) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 2.0), st.sampled_from(CASES))
def test_M_roundtrip(kappa, case):
    d, p = case
    assert kappa_from_M(d, p, variational_M(d, p, kappa)) == pytest.approx(kappa, rel=1e-12)


def test_rate_constants_srw():
    rc = rate_constants(2, 2, [[0.5, 0], [0, 0.5]])
    k = rc.kappa
    assert rc.gamma_alpha == pytest.approx(k**-4, rel=1e-12)
    assert rc.gamma_alpha == pytest.approx(5.850, abs=5e-3)
    assert rc.lil_brownian == pytest.approx(k**4, rel=1e-12)
    assert rc.lil_walk == pytest.approx(2 * k**4, rel=1e-12)
    assert rc.moderate_coeff == pytest.approx(0.5 * k**-4, rel=1e-12)
    assert rc.moderate_coeff == pytest.approx(2.925, abs=3e-3)
    assert kappa_from_M(2, 2, rc.M) == pytest.approx(k, rel=1e-10)
    assert all(v > 0 for key, v in rc.as_dict().items() if key not in ("d", "p"))


def test_rate_constants_3_2():
    rc = rate_constants(3, 2)
    assert rc.lil_brownian == pytest.approx(rc.kappa**4, rel=1e-12)


def test_gaussian_closed_forms():
    # f = exp(-a|x|^2) in d = 2
    a = 0.7
    g = GaussianMixture(np.array([1.0]), np.array([a]), np.zeros((1, 2)))
    mass, grad, pot = g.norms(2)
    assert mass == pytest.approx(math.pi / (2 * a), rel=1e-14)
    assert grad == pytest.approx(math.pi, rel=1e-14)       # 4a^2 * (d / 4a) * pi / 2a
    assert pot == pytest.approx(math.pi / (4 * a), rel=1e-14)


def test_gaussian_mixture_matches_grid():
    rng = np.random.default_rng(3)
    w = np.array([1.0, -0.4])
    al = np.array([0.8, 1.7])
    c = rng.normal(size=(2, 2)) * 0.5
    g = GaussianMixture(w, al, c)
    x = np.linspace(-9, 9, 1201)
    X, Y = np.meshgrid(x, x, indexing="ij")
    f = sum(wi * np.exp(-ai * ((X - ci[0]) ** 2 + (Y - ci[1]) ** 2)) for wi, ai, ci in zip(w, al, c))
    fx, fy = np.gradient(f, x, x)
    h2 = (x[1] - x[0]) ** 2
    mass, grad, pot = g.norms(2)
    assert mass == pytest.approx(np.sum(f**2) * h2, rel=1e-6)
    assert grad == pytest.approx(np.sum(fx**2 + fy**2) * h2, rel=1e-3)
    assert pot == pytest.approx(np.sum(f**4) * h2, rel=1e-6)


def test_single_gaussian_below_kappa():
    k = kappa_from_ground_state(cached_ground_state(2, 2))
    g = GaussianMixture(np.array([1.0]), np.array([1.0]), np.zeros((1, 2)))
    assert g.gn_ratio(2) < k


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 20.0), st.integers(0, 10**6))
def test_gn_ratio_scale_invariant(lam, seed):
    g = random_gaussian_mixture(np.random.default_rng(seed), 2)
    assert g.scaled(lam).gn_ratio(2) == pytest.approx(g.gn_ratio(2), rel=1e-10)


def test_ground_state_attains_kappa(gs):
    k = kappa_from_ground_state(gs)
    ratio = gn_ratio_from_norms(gs.d, gs.p, *radial_norms(gs.d, gs.p, gs.r, gs.f, gs.df))
    assert ratio == pytest.approx(k, rel=1e-3)


@pytest.mark.parametrize("case", [(2, 2), (3, 2)])
def test_violation_search(case):
    d, p = case
    k = kappa_from_ground_state(cached_ground_state(d, p))
    res = gn_violation_search(k, d, p, count=200, seed=1)
    assert not res.exceeded
    assert 0.5 * k < res.max_ratio <= k * 1.001


def test_coefficients():
    assert coefficients(2, 2) == (1.0, 1.0)
    assert coefficients(3, 2) == (1.5, 0.5)
