"""Ground state of  a*Lap f - b*f + f^(2p-1) = 0  and the constants built on it.

Here a = d(p-1)/2 and b = (2p - d(p-1))/2.  The positive radial solution
with the smallest L^2 norm gives the best Gagliardo-Nirenberg constant

    kappa(d, p) = (p * ||f0||_2^(-2(p-1)))^(1/(2p)),

and from kappa follow the variational value M, the large-deviation rate
gamma_alpha, the moderate-deviation coefficient and the LIL constants.

Two independent solvers are provided: radial shooting on the amplitude
f(0) (the default) and a Petviashvili fixed-point iteration on a
finite-volume radial grid, used as a cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.linalg import solve_banded

from .errors import ConditionViolated, ConfigError, NoConvergence, ResidualTooLarge
from .walk_engine import unit_ball_volume

TAIL_THRESHOLD = 1e-8


def check_condition(d: int, p: int) -> None:
    if d < 2 or p < 2 or p * (d - 2) >= d:
        raise ConditionViolated(f"(d, p) = ({d}, {p}) violates p(d-2) < d, d >= 2, p >= 2")


def coefficients(d: int, p: int) -> tuple[float, float]:
    """(a, b) = (d(p-1)/2, (2p - d(p-1))/2)."""
    return d * (p - 1) / 2, (2 * p - d * (p - 1)) / 2


def surface_area(d: int) -> float:
    return d * unit_ball_volume(d)


@dataclass(frozen=True)
class GroundState:
    d: int
    p: int
    r: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    df: np.ndarray = field(repr=False)
    amplitude: float
    h: float
    r_max: float
    r_cut: float
    mass: float            # ||f||_2^2
    grad: float            # ||grad f||_2^2
    pot: float             # ||f||_{2p}^{2p}
    residual: float
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def identity_gap(self) -> float:
        """Relative defect of a*||grad f||^2 + b*||f||^2 = ||f||_{2p}^{2p}."""
        a, b = coefficients(self.d, self.p)
        return abs(a * self.grad + b * self.mass - self.pot) / self.pot

    def norms(self) -> dict:
        return {"L2_sq": self.mass, "grad_L2_sq": self.grad, "L2p_pow_2p": self.pot}


# --------------------------------------------------------------------------
# shooting

def _rhs(d, p):
    a, b = coefficients(d, p)
    q = 2 * p - 1

    def rhs(r, y):
        f, g = y
        return [g, (b * f - f**q) / a - (d - 1) / r * g]
    return rhs


def _series_start(amp, d, p, r0):
    a, b = coefficients(d, p)
    f2 = (b * amp - amp ** (2 * p - 1)) / (a * d)
    return [amp + 0.5 * f2 * r0 * r0, f2 * r0]


def _shoot(amp, d, p, r_max, r0=1e-4, rtol=1e-12, atol=1e-14):
    """Integrate from r0 and report the first event: +1 zero crossing, -1 upturn, 0 neither."""
    def cross(r, y):
        return y[0]
    cross.terminal, cross.direction = True, -1

    def upturn(r, y):
        return y[1]
    upturn.terminal, upturn.direction = True, 1

    sol = solve_ivp(_rhs(d, p), (r0, r_max), _series_start(amp, d, p, r0), method="DOP853",
                    rtol=rtol, atol=atol, events=[cross, upturn], dense_output=True)
    if sol.t_events[0].size:
        return 1, sol
    if sol.t_events[1].size:
        return -1, sol
    return 0, sol


def _find_amplitude(d, p, r_max, bracket, steps, scan_points=60):
    lo_amp, hi_amp = bracket
    grid = np.geomspace(lo_amp, hi_amp, scan_points)
    lo = hi = None
    for amp in grid:
        kind, _ = _shoot(amp, d, p, r_max)
        if kind == 1:
            hi = amp
            break
        lo = amp
    if lo is None or hi is None:
        raise NoConvergence(f"no sign change of the shooting classification in {bracket}")
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        kind, _ = _shoot(mid, d, p, r_max)
        if kind == 1:
            hi = mid
        else:
            lo = mid
    return lo, hi


def _fd_residual(d, p, f, h):
    """Max central-difference residual of the radial equation on a uniform grid."""
    a, b = coefficients(d, p)
    q = 2 * p - 1
    r = np.arange(len(f)) * h
    res = np.empty(len(f) - 1)
    # r = 0: Laplacian -> d * f''(0), f''(0) ~ 2 (f1 - f0) / h^2
    res[0] = d * 2 * (f[1] - f[0]) / h**2 - (b * f[0] - f[0] ** q) / a
    fi = f[1:-1]
    lap = (f[2:] - 2 * fi + f[:-2]) / h**2 + (d - 1) / r[1:-1] * (f[2:] - f[:-2]) / (2 * h)
    res[1:] = lap - (b * fi - fi**q) / a
    return float(np.max(np.abs(res)))


def solve_ground_state(d: int, p: int, *, tol: float = 5e-2, r_max: float = 20.0,
                       h: float = 0.005, bracket=(0.1, 10.0), bisection_steps: int = 200,
                       cross_check: bool = False) -> GroundState:
    """Ground state by amplitude shooting.

    The amplitude is bracketed between trajectories whose first event is an
    upturn (f' > 0, amplitude too small) and a zero crossing (too large);
    a coarse geometric scan picks the smallest such transition so excited
    states are never selected.  The profile is kept up to the radius where
    it falls below ``TAIL_THRESHOLD`` or where the two bracketing
    trajectories separate; the tail beyond is closed with the decay
    f ~ c r^(-(d-1)/2) exp(-mu r), mu = sqrt(b/a).

    ``residual`` is the max central-difference residual of the profile on
    the h-grid.  It is the O(h^2) truncation error of that stencil (it
    drops 4x when h halves) and grows with p, hence the loose default
    ``tol``; the norms themselves are accurate to about 1e-8.
    """
    check_condition(d, p)
    if tol <= 0 or h <= 0 or r_max <= 0:
        raise ConfigError("tolerances must be positive")
    a, b = coefficients(d, p)
    mu = math.sqrt(b / a)
    lo, hi = _find_amplitude(d, p, r_max, bracket, bisection_steps)
    _, sol_lo = _shoot(lo, d, p, r_max)
    _, sol_hi = _shoot(hi, d, p, r_max)
    r_end = min(sol_lo.t[-1], sol_hi.t[-1])
    probe = np.linspace(1e-4, r_end, 20001)
    f_lo = sol_lo.sol(probe)[0]
    f_hi = sol_hi.sol(probe)[0]
    bad = (np.abs(f_lo - f_hi) > 1e-6 * np.abs(f_lo)) | (f_lo < TAIL_THRESHOLD)
    r_cut = float(probe[np.argmax(bad)]) if bad.any() else float(r_end)

    npts = int(round(r_cut / h))
    npts += npts % 2                      # Simpson wants an even interval count
    r = np.arange(npts + 1) * h
    r_cut = float(r[-1])
    rr = np.maximum(r, 1e-4)
    Y = sol_lo.sol(rr)
    f, df = Y[0].copy(), Y[1].copy()
    f[0], df[0] = lo, 0.0

    w = surface_area(d) * r ** (d - 1)
    mass = simpson(w * f**2, x=r)
    grad = simpson(w * df**2, x=r)
    pot = simpson(w * f ** (2 * p), x=r)
    # analytic tail beyond r_cut
    R, fR = r_cut, f[-1]
    c = fR * R ** ((d - 1) / 2) * math.exp(mu * R)
    omega = surface_area(d)
    tail_mass = omega * c * c * math.exp(-2 * mu * R) / (2 * mu)
    mass += tail_mass
    grad += mu * mu * tail_mass
    pot += omega * c ** (2 * p) * R ** ((d - 1) * (1 - p)) * math.exp(-2 * p * mu * R) / (2 * p * mu)

    positive = bool(np.all(f > 0))
    decreasing = bool(np.all(np.diff(f) < 0))
    residual = _fd_residual(d, p, f, h)
    diagnostics = {
        "amplitude_bracket": [lo, hi],
        "tail_mass": tail_mass,
        "positive": positive,
        "strictly_decreasing": decreasing,
        "solver": "shooting/DOP853",
    }
    gs = GroundState(d, p, r, f, df, float(lo), h, r_max, r_cut,
                     float(mass), float(grad), float(pot), residual, diagnostics)
    diagnostics["identity_gap"] = gs.identity_gap
    if not (positive and decreasing):
        raise NoConvergence("shooting profile is not positive and decreasing")
    if residual > tol:
        raise ResidualTooLarge(f"max residual {residual:.3e} exceeds tol {tol:.1e}")
    if cross_check:
        fp_mass = fixed_point_ground_state(d, p)["mass"]
        diagnostics["fixed_point_mass"] = fp_mass
        diagnostics["solver_rel_diff"] = abs(fp_mass - gs.mass) / gs.mass
    return gs


# --------------------------------------------------------------------------
# Petviashvili cross-check

def _petviashvili(d, p, r_max, cells, max_iter=2000, tol=1e-13):
    a, b = coefficients(d, p)
    h = r_max / cells
    r = (np.arange(cells) + 0.5) * h
    r_out = (np.arange(cells) + 1.0) * h
    r_in = np.arange(cells) * h
    w = r ** (d - 1)
    up = -a * r_out ** (d - 1) / (h * h * w)
    lo = -a * r_in ** (d - 1) / (h * h * w)
    diag = b - up - lo
    diag[-1] += up[-1]                    # f(r_max) = 0 through an odd ghost cell
    band = np.zeros((3, cells))
    band[0, 1:] = up[:-1]
    band[1] = diag
    band[2, :-1] = lo[1:]
    q = 2 * p - 1
    gamma = q / (q - 1)
    f = 2.0 * np.exp(-r * r / 2)
    for it in range(max_iter):
        Lf = diag * f
        Lf[:-1] += up[:-1] * f[1:]
        Lf[1:] += lo[1:] * f[:-1]
        nl = f**q
        stab = np.sum(w * f * Lf) / np.sum(w * f * nl)
        new = stab**gamma * solve_banded((1, 1), band, nl)
        if np.max(np.abs(new - f)) < tol:
            f = new
            break
        f = new
    else:
        raise NoConvergence("fixed-point iteration did not converge")
    return surface_area(d) * np.sum(w * f * f) * h, f, r, it


def fixed_point_ground_state(d: int, p: int, r_max: float = 24.0, cells: int = 4000) -> dict:
    """Ground-state mass from the fixed-point solver, Richardson-extrapolated
    over ``cells`` and ``2*cells`` (second-order scheme)."""
    check_condition(d, p)
    m1, _, _, it1 = _petviashvili(d, p, r_max, cells)
    m2, f2, r2, it2 = _petviashvili(d, p, r_max, 2 * cells)
    return {"mass": m2 + (m2 - m1) / 3, "mass_coarse": m1, "mass_fine": m2,
            "amplitude": float(f2[0]), "iterations": (it1, it2)}


# --------------------------------------------------------------------------
# constants

def kappa_from_ground_state(gs: GroundState) -> float:
    p = gs.p
    return (p * gs.mass ** (-(p - 1))) ** (1 / (2 * p))


def kappa_from_mass(p: int, mass: float) -> float:
    return (p * mass ** (-(p - 1))) ** (1 / (2 * p))


def variational_M(d: int, p: int, kappa: float) -> float:
    """Supremum of (int |f|^{2p})^{1/p} - (1/2) int |grad f|^2 over unit-L2 f."""
    check_condition(d, p)
    s = 2 * p - d * (p - 1)
    t = d * (p - 1)
    return (s / (2 * p)) * (t / p) ** (t / s) * kappa ** (4 * p / s)


def kappa_from_M(d: int, p: int, M: float) -> float:
    check_condition(d, p)
    s = 2 * p - d * (p - 1)
    t = d * (p - 1)
    return (M / ((s / (2 * p)) * (t / p) ** (t / s))) ** (s / (4 * p))


@dataclass(frozen=True)
class RateConstants:
    d: int
    p: int
    det_gamma: float
    kappa: float
    M: float
    gamma_alpha: float
    moderate_coeff: float
    lil_brownian: float
    lil_walk: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@lru_cache(maxsize=None)
def cached_ground_state(d: int, p: int) -> GroundState:
    return solve_ground_state(d, p)


def rate_constants(d: int, p: int, gamma=None, kappa: float | None = None) -> RateConstants:
    """All constants for (d, p) and covariance ``gamma`` (identity if omitted)."""
    check_condition(d, p)
    if gamma is None:
        det = 1.0
    else:
        g = np.asarray(gamma, dtype=float)
        if g.shape != (d, d) or not np.allclose(g, g.T):
            raise ConfigError("covariance must be a symmetric d x d matrix")
        if np.any(np.linalg.eigvalsh(g) <= 0):
            raise ConfigError("covariance must be positive definite")
        det = float(np.linalg.det(g))
    if kappa is None:
        kappa = kappa_from_ground_state(cached_ground_state(d, p))
    t = d * (p - 1)
    gamma_alpha = (p / 2) * kappa ** (-4 * p / t)
    lil_b = (2 / p) ** (t / 2) * kappa ** (2 * p)
    return RateConstants(
        d=d, p=p, det_gamma=det, kappa=kappa, M=variational_M(d, p, kappa),
        gamma_alpha=gamma_alpha,
        moderate_coeff=det ** (1 / d) * gamma_alpha,
        lil_brownian=lil_b,
        lil_walk=det ** (-(p - 1) / 2) * lil_b,
    )


# --------------------------------------------------------------------------
# Gagliardo-Nirenberg ratio on trial functions

def gn_exponent(d: int, p: int) -> float:
    return d * (p - 1) / (2 * p)


def gn_ratio_from_norms(d: int, p: int, mass: float, grad: float, pot: float) -> float:
    """||f||_{2p} / (||grad f||_2^theta ||f||_2^(1-theta))."""
    th = gn_exponent(d, p)
    return pot ** (1 / (2 * p)) / (grad ** (th / 2) * mass ** ((1 - th) / 2))


@dataclass(frozen=True)
class GaussianMixture:
    """f(x) = sum_i w_i exp(-alpha_i |x - c_i|^2); all norms in closed form."""

    weights: np.ndarray
    alphas: np.ndarray
    centers: np.ndarray

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    def scaled(self, lam: float) -> "GaussianMixture":
        """x -> f(lam * x)."""
        return GaussianMixture(self.weights, self.alphas * lam**2, self.centers / lam)

    def _product_integrals(self, idx: np.ndarray) -> np.ndarray:
        """int prod_k g_{idx[:, k]} dx for each row of index tuples."""
        al = self.alphas[idx]
        ce = self.centers[idx]
        A = al.sum(axis=1)
        m = (al[..., None] * ce).sum(axis=1) / A[:, None]
        expo = (al * (ce**2).sum(-1)).sum(axis=1) - A * (m**2).sum(-1)
        return (math.pi / A) ** (self.d / 2) * np.exp(-expo)

    def norms(self, p: int) -> tuple[float, float, float]:
        K = len(self.weights)
        w, al, ce, d = self.weights, self.alphas, self.centers, self.d
        pairs = np.array(np.meshgrid(np.arange(K), np.arange(K), indexing="ij")).reshape(2, -1).T
        Z = self._product_integrals(pairs)
        ww = w[pairs[:, 0]] * w[pairs[:, 1]]
        mass = float(np.sum(ww * Z))
        ai, aj = al[pairs[:, 0]], al[pairs[:, 1]]
        ci, cj = ce[pairs[:, 0]], ce[pairs[:, 1]]
        A = ai + aj
        mean = (ai[:, None] * ci + aj[:, None] * cj) / A[:, None]
        second = ((mean - ci) * (mean - cj)).sum(-1) + d / (2 * A)
        grad = float(np.sum(ww * 4 * ai * aj * second * Z))
        # (sum w_i g_i)^{2p} through multisets of size 2p
        pot = 0.0
        for combo in _multisets(K, 2 * p):
            counts = np.bincount(combo, minlength=K)
            coef = math.factorial(2 * p)
            for c in counts:
                coef //= math.factorial(int(c))
            pot += coef * float(np.prod(w[list(combo)])) * \
                float(self._product_integrals(np.array([combo]))[0])
        return mass, grad, pot

    def gn_ratio(self, p: int) -> float:
        return gn_ratio_from_norms(self.d, p, *self.norms(p))


def _multisets(K, size, start=0):
    if size == 0:
        yield ()
        return
    for i in range(start, K):
        for rest in _multisets(K, size - 1, i):
            yield (i,) + rest


def radial_norms(d: int, p: int, r: np.ndarray, f: np.ndarray, df: np.ndarray):
    """Norms of a radial profile sampled on a uniform grid (Simpson)."""
    w = surface_area(d) * r ** (d - 1)
    return (simpson(w * f**2, x=r), simpson(w * df**2, x=r), simpson(w * np.abs(f) ** (2 * p), x=r))


def _radial_trial(rng, d, p):
    r = np.linspace(0.0, 60.0, 24001)
    kind = rng.integers(3)
    s = rng.uniform(0.3, 3.0)
    x = r / s
    if kind == 0:                          # sech^k
        k = rng.uniform(0.5, 3.0)
        f = np.cosh(x) ** (-k)
        df = -k * np.tanh(x) * f / s
    elif kind == 1:                        # exp(-x^q), q >= 1 keeps the gradient square integrable
        q = rng.uniform(1.0, 3.0)
        f = np.exp(-(x**q))
        df = -q * x ** (q - 1) * f / s
    else:                                  # (1 + x^2)^(-beta) with fast enough decay
        beta = rng.uniform(max(1.5, d / 2 + 0.5), 5.0)
        f = (1 + x * x) ** (-beta)
        df = -2 * beta * x * (1 + x * x) ** (-beta - 1) / s
    return gn_ratio_from_norms(d, p, *radial_norms(d, p, r, f, df))


def random_gaussian_mixture(rng, d, max_components=3) -> GaussianMixture:
    K = int(rng.integers(1, max_components + 1))
    weights = rng.uniform(-1.0, 1.0, K)
    weights[0] = abs(weights[0]) + 0.1
    alphas = rng.uniform(0.2, 3.0, K)
    centers = rng.normal(0.0, 1.0, (K, d))
    return GaussianMixture(weights, alphas, centers)


@dataclass(frozen=True)
class GNSearchResult:
    max_ratio: float
    kappa: float
    count: int
    exceeded: bool


def gn_violation_search(kappa: float, d: int, p: int, count: int = 1000, seed: int = 0,
                        family: str = "mixed", grid_tol: float = 1e-3) -> GNSearchResult:
    """Largest GN ratio over ``count`` random trial functions.

    Families: ``"gaussian"`` (mixtures with closed-form norms), ``"radial"``
    (sech / stretched-exponential / algebraic profiles on a radial grid) or
    ``"mixed"`` (alternating).  ``exceeded`` is set if any ratio passes
    kappa * (1 + grid_tol).
    """
    rng = np.random.default_rng(seed)
    best = 0.0
    for i in range(count):
        use_gauss = family == "gaussian" or (family == "mixed" and i % 2 == 0)
        if use_gauss:
            ratio = random_gaussian_mixture(rng, d).gn_ratio(p)
        else:
            ratio = _radial_trial(rng, d, p)
        best = max(best, ratio)
    return GNSearchResult(best, kappa, count, bool(best > kappa * (1 + grid_tol)))
