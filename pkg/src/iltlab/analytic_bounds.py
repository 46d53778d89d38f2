"""Closed-form integrals around the Gagliardo-Nirenberg constant.

The p-fold resolvent integral

    R(d, p) = int_{R^d} ( int_0^inf e^{-t} p_t(x) dt )^p dx

is never done in x.  Integrating out x gives

    R = (2 pi)^{-d(p-1)/2} int_{(0,inf)^p} e^{-(t_1+..+t_p)} e_{p-1}(t)^{-d/2} dt,

with e_{p-1} the elementary symmetric polynomial of degree p-1.  Writing
t = s w with s = sum t_k and w on the unit simplex, e_{p-1} is homogeneous of
degree p-1, so the s-integral is Gamma(p - d(p-1)/2) and what is left is a
(p-1)-dimensional integral over the simplex.  By symmetry it equals p! times
the integral over the ordered chamber w_1 >= w_2 >= ... >= w_p, which we
parametrise as

    w = (1 - s_1, s_1 (1 - s_2), ..., s_1 ... s_{p-1}),

with Jacobian prod_k s_k^(p-2-k) and ranges s_k <= 1 / (2 - s_{k+1}),
s_{p-1} <= 1/2.  The only singular point of the integrand (a vertex of the
simplex) is then out of the chamber except for one integrable corner.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .errors import NoConvergence
from .ground_state import check_condition


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error: float
    d: int
    p: int


def _esym(w: Sequence[float], k: int) -> float:
    e = [1.0] + [0.0] * k
    for x in w:
        for j in range(k, 0, -1):
            e[j] += e[j - 1] * x
    return e[k]


def _chamber_integral(d: int, p: int, tol: float) -> tuple[float, float]:
    m = p - 1

    def integrand(*s):
        w = []
        acc = 1.0
        for k in range(m):
            w.append(acc * (1 - s[k]))
            acc *= s[k]
        w.append(acc)
        jac = 1.0
        for k in range(m):
            jac *= s[k] ** (m - 1 - k)
        return jac * _esym(w, p - 1) ** (-d / 2)

    ranges = [(lambda *later: (0.0, 1.0 / (2.0 - later[0]))) for _ in range(m - 1)]
    ranges.append((0.0, 0.5))
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.nquad(integrand, ranges,
                                       opts={"epsabs": tol, "epsrel": tol, "limit": 200})
        except integrate.IntegrationWarning as exc:
            raise NoConvergence(f"simplex quadrature: {exc}") from None
    return math.factorial(p) * val, math.factorial(p) * err


def resolvent_p_integral(d: int, p: int, tol: float = 1e-10) -> QuadratureResult:
    """R(d, p) with an error estimate (finite exactly under p(d-2) < d)."""
    check_condition(d, p)
    S, err = _chamber_integral(d, p, tol)
    pref = (2 * math.pi) ** (-d * (p - 1) / 2) * gamma_fn(p - d * (p - 1) / 2)
    return QuadratureResult(pref * S, pref * err, d, p)


def kappa_upper_bound(d: int, p: int, resolvent: float | None = None) -> float:
    """Upper bound on kappa(d, p) from the resolvent integral."""
    check_condition(d, p)
    R = resolvent_p_integral(d, p).value if resolvent is None else resolvent
    t = d * (p - 1)
    s = 2 * p - t
    return (p / t) ** (t / (4 * p)) * (2 * p / s) ** (s / (4 * p)) * R ** (1 / (2 * p))


def gamma_lower_bound(d: int, p: int, resolvent: float | None = None) -> float:
    """Lower bound on the large-deviation rate gamma_alpha(d, p)."""
    check_condition(d, p)
    R = resolvent_p_integral(d, p).value if resolvent is None else resolvent
    t = d * (p - 1)
    s = 2 * p - t
    return (t / 2) * (s / (2 * p)) ** (s / t) * R ** (-2 / t)


def bounds_report(d: int, p: int, tol: float = 1e-10) -> dict:
    res = resolvent_p_integral(d, p, tol)
    return {
        "d": d,
        "p": p,
        "resolvent_integral": res.value,
        "bound_2_4": kappa_upper_bound(d, p, res.value),
        "gamma_lower_1_14": gamma_lower_bound(d, p, res.value),
        "error_estimates": {"resolvent_integral": res.error},
    }


# --------------------------------------------------------------------------
# ordered-simplex identity

@dataclass(frozen=True)
class IdentityReport:
    lhs: float
    rhs: float
    gap: float
    m: int


class _Cheb:
    """Chebyshev interpolant on [0, T]."""

    def __init__(self, values_at_nodes: np.ndarray, T: float):
        self.T = T
        self.coef = C.chebfit(_cheb_nodes(len(values_at_nodes), T) * 2 / T - 1,
                              values_at_nodes, len(values_at_nodes) - 1)

    def __call__(self, t):
        return C.chebval(np.asarray(t) * 2 / self.T - 1, self.coef)


def _cheb_nodes(N: int, T: float) -> np.ndarray:
    k = np.arange(N)
    return T / 2 * (1 - np.cos(np.pi * (k + 0.5) / N))


def ordered_simplex_identity_check(phis: Sequence[Callable], T: float = 60.0,
                                   nodes: int = 200, gl_points: int = 160) -> IdentityReport:
    """Compare

        int_0^inf e^{-t} int_{0 < s_1 < .. < s_m < t} phi_1(s_1) prod_{k>1} phi_k(s_k - s_{k-1}) ds dt

    with prod_k int_0^inf e^{-t} phi_k(t) dt.

    The left side is evaluated directly: the weighted functions
    E_k(s) = e^{-s} (phi_1 * ... * phi_k)(s) are built by successive
    convolutions (Gauss-Legendre on [0, s]) and stored as Chebyshev
    interpolants on [0, T]; a final convolution with e^{-t} and an adaptive
    outer integral give the left side.  ``phis`` must be vectorised,
    nonnegative, and e^{-t} phi_k must be negligible beyond T.
    """
    m = len(phis)
    if m < 1:
        raise ValueError("need at least one test function")
    xg, wg = np.polynomial.legendre.leggauss(gl_points)
    v = (xg + 1) / 2
    wv = wg / 2
    tn = _cheb_nodes(nodes, T)

    def weighted(phi):
        return lambda t: np.exp(-t) * phi(t)

    funcs = [weighted(ph) for ph in phis] + [lambda t: np.exp(-t)]
    E = _Cheb(funcs[0](tn), T)
    for psi in funcs[1:]:
        # (E * psi)(s) = s * int_0^1 E(s v) psi(s (1 - v)) dv
        S = tn[:, None]
        vals = S[:, 0] * ((E(S * v) * psi(S * (1 - v))) @ wv)
        E = _Cheb(vals, T)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            lhs = integrate.quad(E, 0, T, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
            rhs = 1.0
            for ph in phis:
                rhs *= integrate.quad(weighted(ph), 0, np.inf, epsabs=1e-14,
                                      epsrel=1e-12, limit=400)[0]
        except integrate.IntegrationWarning as exc:
            raise NoConvergence(f"identity quadrature: {exc}") from None
    gap = abs(lhs - rhs) / max(abs(rhs), 1e-300)
    return IdentityReport(float(lhs), float(rhs), float(gap), m)


def exp_polynomial(coeffs: Sequence[float], powers: Sequence[int], rates: Sequence[float]):
    """phi(t) = sum_j c_j t^{k_j} e^{-a_j t}; returns (phi, exact weighted integral)."""
    c = np.asarray(coeffs, float)
    k = np.asarray(powers, int)
    a = np.asarray(rates, float)

    def phi(t):
        t = np.asarray(t, float)
        return np.sum(c * t[..., None] ** k * np.exp(-a * t[..., None]), axis=-1)

    exact = float(sum(cj * math.factorial(kj) / (1 + aj) ** (kj + 1) for cj, kj, aj in zip(c, k, a)))
    return phi, exact


def random_exp_polynomial(rng: np.random.Generator, terms: int = 3):
    n = int(rng.integers(1, terms + 1))
    return exp_polynomial(rng.uniform(0.1, 2.0, n), rng.integers(0, 4, n), rng.uniform(0.0, 2.0, n))
