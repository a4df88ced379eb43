"""Closed-form densities for validation.

Both particle systems started from a point source at the blow-up time t0
have Gaussian positions.  With tau = t - t0:

* shear + x-diffusion: Var X = D^2 tau, Cov = D^2 tau^2 / 2, Var Y = D^2 tau^3 / 3
  (exactly self-similar: x ~ tau^(1/2), y ~ tau^(3/2));
* shear + xy-diffusion: Var Y = D^2 (tau + tau^3 / 3), approaching the same
  rescaled shape as tau grows.

Rescaled coordinates are u = x / (c tau)^(1/2), v = y / (c tau)^(3/2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.integrate import dblquad

from .sde import Model


@dataclass(frozen=True)
class AnalyticParams:
    D: float = 5.0
    t0: float = 0.0
    c: float = 0.2

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError("D must be positive")
        if not self.c > 0:
            raise ValueError("c must be positive")

    def tau(self, t: float) -> float:
        tau = t - self.t0
        if not tau > 0:
            raise ValueError(f"evaluation time t={t} must exceed the blow-up time t0={self.t0}")
        return tau


def pdf_selfsimilar(x, y, t: float, params: AnalyticParams = AnalyticParams(),
                    shear_factor: float = 6.0):
    """Self-similar density of the shear + x-diffusion system.

    ``shear_factor`` is the coefficient of the conditional term in the
    exponent; anything but 6 gives a field that no longer solves the
    evolution equation (used as a negative control).
    """
    tau = params.tau(t)
    D2 = params.D**2
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    expo = shear_factor * (y - 0.5 * x * tau) ** 2 / (D2 * tau**3) + x**2 / (2 * D2 * tau)
    return math.sqrt(3.0) / (math.pi * D2 * tau**2) * np.exp(-expo)


def pdf_asymptotic(x, y, t: float, params: AnalyticParams = AnalyticParams()):
    """Density of the shear + xy-diffusion system from a point source at t0."""
    tau = params.tau(t)
    D2 = params.D**2
    g = 1.0 + tau**2 / 12.0
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    expo = (y - 0.5 * x * tau) ** 2 / (2 * D2 * tau * g) + x**2 / (2 * D2 * tau)
    return np.exp(-expo) / (2 * math.pi * D2 * tau * math.sqrt(g))


class Moments(NamedTuple):
    std_x: float
    std_y: float
    corr: float


def _moments(var_x, cov, var_y) -> Moments:
    return Moments(math.sqrt(var_x), math.sqrt(var_y), cov / math.sqrt(var_x * var_y))


def moments_selfsimilar(t: float, params: AnalyticParams = AnalyticParams()) -> Moments:
    tau = params.tau(t)
    D2 = params.D**2
    return _moments(D2 * tau, D2 * tau**2 / 2, D2 * tau**3 / 3)


def moments_asymptotic(t: float, params: AnalyticParams = AnalyticParams()) -> Moments:
    tau = params.tau(t)
    D2 = params.D**2
    return _moments(D2 * tau, D2 * tau**2 / 2, D2 * (tau + tau**3 / 3))


def conditional_var_asymptotic(t: float, params: AnalyticParams = AnalyticParams()) -> float:
    """Var(Y | X) = D^2 tau (1 + tau^2 / 12)."""
    tau = params.tau(t)
    return params.D**2 * tau * (1 + tau**2 / 12)


def rescaled_moments(params: AnalyticParams = AnalyticParams(), t: Optional[float] = None) -> Moments:
    """Statistics of the rescaled family; ``t`` given selects the asymptotic system."""
    c, D2 = params.c, params.D**2
    if t is None:
        return _moments(D2 / c, D2 / (2 * c**2), D2 / (3 * c**3))
    tau = params.tau(t)
    return _moments(D2 / c, D2 / (2 * c**2), D2 / (3 * c**3) * (1 + 3 / tau**2))


def _cdf(pdf: Callable, x: float, y: float, t: float, params: AnalyticParams, tol: float) -> float:
    if x == -np.inf or y == -np.inf:
        return 0.0
    val, _ = dblquad(lambda yy, xx: float(pdf(xx, yy, t, params)), -np.inf, x,
                     -np.inf, y, epsabs=tol, epsrel=tol)
    return float(min(max(val, 0.0), 1.0))


def cdf_selfsimilar(x: float, y: float, t: float, params: AnalyticParams = AnalyticParams(),
                    tol: float = 1e-8) -> float:
    params.tau(t)
    return _cdf(pdf_selfsimilar, x, y, t, params, tol)


def cdf_asymptotic(x: float, y: float, t: float, params: AnalyticParams = AnalyticParams(),
                   tol: float = 1e-8) -> float:
    params.tau(t)
    return _cdf(pdf_asymptotic, x, y, t, params, tol)


def rescaled_cdf(u: float, v: float, t: float, params: AnalyticParams = AnalyticParams(),
                 model: Model = Model.DIFFUSIVE_X, tol: float = 1e-8) -> float:
    """Rescaled CDF F_UV(u, v) at time t (time-independent for the x-diffusion system)."""
    s = params.c * params.tau(t)
    x, y = u * math.sqrt(s), v * s**1.5
    if Model(model) is Model.DIFFUSIVE_X:
        return cdf_selfsimilar(x, y, t, params, tol)
    return cdf_asymptotic(x, y, t, params, tol)


class Residual(NamedTuple):
    residual: float
    scale: float     # largest magnitude among the individual terms

    @property
    def relative(self) -> float:
        return abs(self.residual) / self.scale if self.scale else abs(self.residual)


def pde_residual(pdf: Callable, x: float, y: float, t: float, params: AnalyticParams = AnalyticParams(),
                 model: Model = Model.DIFFUSIVE_X, rel_step: float = 1e-4) -> Residual:
    """P_t + x P_y - D^2/2 P_xx [- D^2/2 P_yy] by centred finite differences.

    Steps are ``rel_step`` times the natural spread of each coordinate.
    """
    tau = params.tau(t)
    D2 = params.D**2
    hx = rel_step * math.sqrt(D2 * tau)
    hy = rel_step * math.sqrt(D2 * (tau + tau**3 / 3))
    ht = rel_step * tau
    f = lambda a, b, s: float(pdf(a, b, s, params))
    p0 = f(x, y, t)
    p_t = (f(x, y, t + ht) - f(x, y, t - ht)) / (2 * ht)
    p_y = (f(x, y + hy, t) - f(x, y - hy, t)) / (2 * hy)
    p_xx = (f(x + hx, y, t) - 2 * p0 + f(x - hx, y, t)) / hx**2
    terms = [p_t, x * p_y, 0.5 * D2 * p_xx]
    res = p_t + x * p_y - 0.5 * D2 * p_xx
    if Model(model) is Model.DIFFUSIVE_XY:
        p_yy = (f(x, y + hy, t) - 2 * p0 + f(x, y - hy, t)) / hy**2
        terms.append(0.5 * D2 * p_yy)
        res -= 0.5 * D2 * p_yy
    return Residual(float(res), float(max(abs(v) for v in terms)))


def density_operator(g: Callable[[float, float], float], x: float, y: float, D: float,
                     model: Model = Model.DIFFUSIVE_X, hx: float = 1e-3,
                     hy: Optional[float] = None) -> float:
    """-x g_y + D^2/2 g_xx [+ D^2/2 g_yy] for a time-independent field g."""
    hy = hx if hy is None else hy
    g0 = g(x, y)
    g_y = (g(x, y + hy) - g(x, y - hy)) / (2 * hy)
    g_xx = (g(x + hx, y) - 2 * g0 + g(x - hx, y)) / hx**2
    val = -x * g_y + 0.5 * D**2 * g_xx
    if Model(model) is Model.DIFFUSIVE_XY:
        val += 0.5 * D**2 * (g(x, y + hy) - 2 * g0 + g(x, y - hy)) / hy**2
    return float(val)


def scaling_identity_residual(g: Callable[[float, float], float], x: float, y: float, A: float,
                              p: float, a: float, D: float, model: Model = Model.DIFFUSIVE_X,
                              h: float = 1e-3) -> Residual:
    """L[g(./A, ./A^p)](x, y) - A^a L[g](x/A, y/A^p) for the density operator L.

    Difference steps are scaled with the coordinates so both sides sample
    the same points of ``g``.
    """
    scaled = lambda xx, yy: g(xx / A, yy / A**p)
    lhs = density_operator(scaled, x, y, D, model, h * A, h * A**p)
    rhs = A**a * density_operator(g, x / A, y / A**p, D, model, h)
    return Residual(lhs - rhs, max(abs(lhs), abs(rhs)))
