"""Equation-free detection of scale invariance.

The coarse operator D (with dF/dt = D(F)) is never written down.  Its value
on a product-Gaussian test CDF at a point is estimated from short particle
bursts.  Exponents (p, a) with

    D(F(x/A, y/A**p)) = A**a D(F)(x/A, y/A**p)

are found by Newton iteration on p using two probe points, after which
a = log_A of an operator ratio and the similarity exponent is -1/a.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr, ndtri

from .sde import Model, RngStream, SdeParams, advance, draw_noise

log = logging.getLogger(__name__)

_SQRT2PI = math.sqrt(2.0 * math.pi)


class ProbeError(RuntimeError):
    """The Newton probe cannot proceed (noise-dominated estimate)."""


def _phi(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT2PI


@dataclass(frozen=True)
class ProductGaussianCdf:
    """F(x, y) = Phi(x / sx) Phi(y / sy)."""

    sx: float
    sy: float

    def __post_init__(self):
        if not (self.sx > 0 and self.sy > 0):
            raise ValueError("test CDF scales must be positive")

    def __call__(self, x, y):
        return ndtr(np.asarray(x) / self.sx) * ndtr(np.asarray(y) / self.sy)

    def scaled(self, A: float, p: float) -> "ProductGaussianCdf":
        """The test CDF evaluated at (x / A, y / A**p)."""
        return ProductGaussianCdf(self.sx * A, self.sy * A**p)

    def d_y(self, x, y):
        return ndtr(x / self.sx) * _phi(y / self.sy) / self.sy

    def d_xx(self, x, y):
        return -x / self.sx**3 * _phi(x / self.sx) * ndtr(y / self.sy)

    def d_yy(self, x, y):
        return -y / self.sy**3 * _phi(y / self.sy) * ndtr(x / self.sx)


def exact_operator(F: ProductGaussianCdf, x: float, y: float, sde: SdeParams) -> float:
    """Closed-form coarse operator on a product-Gaussian CDF.

    Shear advection contributes (sx/sy) phi(x/sx) phi(y/sy); diffusion adds
    D**2/2 times the second derivative along each noisy axis.
    """
    D2 = 0.5 * sde.D**2
    val = F.sx / F.sy * _phi(x / F.sx) * _phi(y / F.sy) + D2 * F.d_xx(x, y)
    if sde.model is Model.DIFFUSIVE_XY:
        val += D2 * F.d_yy(x, y)
    return float(val)


def quadrature_operator(F: ProductGaussianCdf, x: float, y: float, sde: SdeParams) -> float:
    """Coarse operator with the advection term integrated numerically.

    dF/dt = -x F_y + int_{-inf}^{x} F_y(s, y) ds + D**2/2 F_xx (+ D**2/2 F_yy).
    """
    integral, _ = quad(lambda s: F.d_y(s, y), -np.inf, x, epsabs=1e-13, epsrel=1e-12, limit=200)
    D2 = 0.5 * sde.D**2
    val = -x * F.d_y(x, y) + integral + D2 * F.d_xx(x, y)
    if sde.model is Model.DIFFUSIVE_XY:
        val += D2 * F.d_yy(x, y)
    return float(val)


@dataclass(frozen=True)
class ProbeConfig:
    sigma: float = 4.0
    A: float = 2.0
    point1: tuple = (-2.0, -2.0)
    point2: tuple = (3.0, 3.0)
    sde: SdeParams = field(default_factory=SdeParams)
    burst_steps: int = 5
    particles: int = 9000
    replicas: int = 500
    # replicas evolved together; also the batch size for standard errors
    chunk: int = 50
    p0: float = 5.0
    max_iter: int = 12
    h_p: float = 0.05
    tol: float = 1e-10
    burn_in: int = 3
    residual: str = "ratio"          # "ratio" or "difference"
    # pair every burst with its sign-flipped twin on the same lifted ensemble
    antithetic: bool = True
    estimator: str = "particles"     # "particles", "quadrature" or "exact"

    def __post_init__(self):
        if not self.A > 0 or self.A == 1:
            raise ValueError("A must be positive and different from 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if tuple(self.point1) == tuple(self.point2):
            raise ValueError("probe points must be distinct")
        if self.burst_steps < 1:
            raise ValueError("burst must last at least one micro step")
        if self.particles < 1 or self.replicas < 1 or self.chunk < 1:
            raise ValueError("particles, replicas and chunk must be >= 1")
        if self.residual not in ("ratio", "difference"):
            raise ValueError(f"unknown residual form {self.residual!r}")
        if self.estimator not in ("particles", "quadrature", "exact"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if not self.h_p > 0 or self.max_iter < 0 or self.burn_in < 0:
            raise ValueError("need h_p > 0, max_iter >= 0 and burn_in >= 0")

    @property
    def delta(self) -> float:
        """Burst duration in s."""
        return self.burst_steps * self.sde.dt

    @property
    def test_cdf(self) -> ProductGaussianCdf:
        return ProductGaussianCdf(self.sigma, self.sigma)

    def with_(self, **changes) -> "ProbeConfig":
        return replace(self, **changes)


# the two parameter sets used for both particle systems
PROBE_SET1 = ProbeConfig(sigma=4.0, A=2.0, point1=(-2.0, -2.0), point2=(3.0, 3.0))
PROBE_SET2 = ProbeConfig(sigma=5.0, A=2.5, point1=(-3.0, -3.0), point2=(4.0, 4.0))


def _check_counts(F: ProductGaussianCdf, pts, N: int) -> None:
    for px, py in pts:
        expected = N * float(F(px, py))
        if expected < 10:
            warnings.warn(f"probe point ({px:.3g}, {py:.3g}) expects only {expected:.1f} "
                          f"particles below it; operator estimate will be noisy", RuntimeWarning,
                          stacklevel=3)


def burst_estimates(cdfs: Sequence[ProductGaussianCdf], points, cfg: ProbeConfig,
                    rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Particle-burst estimates of the operator for several test CDFs at once.

    ``points[v]`` holds the probe points of variant ``v``.  All variants are
    driven by the same standard normals (common random numbers), so their
    differences are far less noisy than their values.  For each replica the
    x coordinates are the deterministic quantiles sx * Phi^-1((i - 0.5)/N)
    and y = sy * Z.  The baseline is the empirical CDF of the same lifted
    ensemble.

    Returns (mean, batch means) with shapes (V, P) and (B, V, P).
    """
    pts = np.asarray(points, dtype=float)
    V, P = pts.shape[:2]
    if len(cdfs) != V:
        raise ValueError("one point set per test CDF is required")
    N = cfg.particles
    for F, pv in zip(cdfs, pts):
        _check_counts(F, pv, N)
    sx = np.array([F.sx for F in cdfs])[:, None, None]
    sy = np.array([F.sy for F in cdfs])[:, None, None]
    xq = ndtri((np.arange(N) + 0.5) / N)
    px = pts[:, :, 0][:, None, :, None]
    py = pts[:, :, 1][:, None, :, None]
    batches = []
    for lo in range(0, cfg.replicas, cfg.chunk):
        rngs = rng.replicas(min(cfg.chunk, cfg.replicas - lo))
        z = np.stack([r.normal(N) for r in rngs])
        noise = draw_noise(rngs, cfg.burst_steps, cfg.sde.model, N)
        x = sx * xq
        x = np.broadcast_to(x, (V, len(rngs), N)).copy()
        y = sy * z
        # (V, c, P): fraction of particles below each probe point
        f0 = np.mean((x[:, :, None, :] <= px) & (y[:, :, None, :] <= py), axis=-1)
        if cfg.antithetic:
            xa, ya = x.copy(), y.copy()
            advance(xa, ya, cfg.sde, -noise)
            fa = np.mean((xa[:, :, None, :] <= px) & (ya[:, :, None, :] <= py), axis=-1)
        advance(x, y, cfg.sde, noise)
        f1 = np.mean((x[:, :, None, :] <= px) & (y[:, :, None, :] <= py), axis=-1)
        if cfg.antithetic:
            f1 = 0.5 * (f1 + fa)
        batches.append(((f1 - f0) / cfg.delta).mean(axis=1))
    batches = np.array(batches)
    weights = np.array([min(cfg.chunk, cfg.replicas - lo) for lo in range(0, cfg.replicas, cfg.chunk)], float)
    mean = np.tensordot(weights / weights.sum(), batches, axes=1)
    return mean, batches


def _deterministic(cdfs, points, cfg: ProbeConfig) -> np.ndarray:
    op = quadrature_operator if cfg.estimator == "quadrature" else exact_operator
    return np.array([[op(F, px, py, cfg.sde) for px, py in pv] for F, pv in zip(cdfs, points)])


def evaluate_variants(cdfs, points, cfg: ProbeConfig, rng: RngStream):
    """Operator values (V, P) and batch means (B, V, P) (one exact batch for oracles)."""
    if cfg.estimator == "particles":
        return burst_estimates(cdfs, points, cfg, rng)
    vals = _deterministic(cdfs, points, cfg)
    return vals, vals[None]


def estimate_operator(F: ProductGaussianCdf, point, cfg: ProbeConfig, rng: RngStream) -> tuple[float, float]:
    """Replica-averaged burst estimate at one point and its standard error."""
    mean, batches = evaluate_variants([F], [[point]], cfg, rng)
    B = batches.shape[0]
    se = float(batches[:, 0, 0].std(ddof=1) / math.sqrt(B)) if B > 1 else 0.0
    return float(mean[0, 0]), se


def _probe_points(cfg: ProbeConfig, p: float) -> np.ndarray:
    A = cfg.A
    return np.array([[cfg.point1[0] * A, cfg.point1[1] * A**p],
                     [cfg.point2[0] * A, cfg.point2[1] * A**p]])


def _residual(Dp: np.ndarray, Duv: np.ndarray, form: str) -> np.ndarray:
    """Residual over the last axis (point 1, point 2); broadcasts over batches."""
    if form == "ratio":
        return Dp[..., 1] / Dp[..., 0] - Duv[..., 1] / Duv[..., 0]
    return Dp[..., 1] - Dp[..., 0] / Duv[..., 0] * Duv[..., 1]


def a_from_ratio(ratio: float, A: float) -> float:
    if not ratio > 0:
        raise ProbeError(f"operator ratio {ratio:.4g} is not positive; estimate is noise-dominated")
    return math.log(ratio) / math.log(A)


def alpha_from_a(a: float) -> float:
    """Similarity exponent from alpha * a = -1."""
    if a == 0:
        raise ValueError("a = 0 gives no similarity exponent")
    return -1.0 / a


def compute_a(p: float, cfg: ProbeConfig, rng: RngStream) -> float:
    """a = log_A [D(F_{A,p})(A u1, A**p v1) / D(F)(u1, v1)]."""
    if not np.isfinite(p):
        raise ValueError("p must be finite")
    F = cfg.test_cdf
    cdfs = [F, F.scaled(cfg.A, p)]
    pts = [np.array([cfg.point1, cfg.point2], float), _probe_points(cfg, p)]
    mean, _ = evaluate_variants(cdfs, pts, cfg, rng)
    return a_from_ratio(mean[1, 0] / mean[0, 0], cfg.A)


@dataclass
class ScaleProbeReport:
    rows: list = field(default_factory=list)   # (iteration, p, a)
    p: float = float("nan")
    a: float = float("nan")
    converged: bool = False                    # tolerance met (deterministic estimators)

    @property
    def alpha(self) -> float:
        return alpha_from_a(self.a)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "p", "a"])
            for k, p, a in self.rows:
                w.writerow([k, f"{p:.17g}", f"{a:.17g}"])


def newton_solve_p(cfg: ProbeConfig, rng: RngStream) -> ScaleProbeReport:
    """Newton iteration for p from ``cfg.p0``; reports a at every iterate.

    Each iteration draws fresh bursts shared by the reference CDF and the
    scaled CDFs at p and p +/- h_p.  The summary is the median over the
    iterates after ``burn_in``, or the last iterate once the step falls
    below ``tol``.
    """
    F = cfg.test_cdf
    uv_points = np.array([cfg.point1, cfg.point2], float)
    report = ScaleProbeReport()
    p = float(cfg.p0)
    h = cfg.h_p
    for k in range(cfg.max_iter + 1):
        last = k == cfg.max_iter
        offsets = (0.0,) if last else (0.0, h, -h)
        cdfs = [F] + [F.scaled(cfg.A, p + d) for d in offsets]
        pts = [uv_points] + [_probe_points(cfg, p + d) for d in offsets]
        mean, batches = evaluate_variants(cdfs, pts, cfg, rng)
        a = a_from_ratio(mean[1, 0] / mean[0, 0], cfg.A)
        report.rows.append((k, p, a))
        log.info("probe iter %d: p=%.5f a=%.5f", k, p, a)
        if last:
            break
        R = _residual(mean[1], mean[0], cfg.residual)
        slope = (_residual(mean[2], mean[0], cfg.residual)
                 - _residual(mean[3], mean[0], cfg.residual)) / (2 * h)
        B = batches.shape[0]
        if B > 1:
            per_batch = (_residual(batches[:, 2], batches[:, 0], cfg.residual)
                         - _residual(batches[:, 3], batches[:, 0], cfg.residual)) / (2 * h)
            se = float(per_batch.std(ddof=1) / math.sqrt(B))
        else:
            se = 0.0
        if not abs(slope) > 2 * se or slope == 0:
            raise ProbeError(f"iteration {k}: residual slope {slope:.3g} is within noise "
                             f"(2 SE = {2 * se:.3g}); increase replicas or burst length")
        step = R / slope
        p = p - step
        if not np.isfinite(p):
            raise ProbeError(f"iteration {k}: Newton step produced non-finite p")
        if abs(step) < cfg.tol:
            report.rows.append((k + 1, p, a_from_ratio(*_ratio_at(cfg, p, rng))))
            report.converged = True
            break
    if report.converged or len(report.rows) <= cfg.burn_in:
        _, report.p, report.a = report.rows[-1]
    else:
        tail = np.array([(p_, a_) for _, p_, a_ in report.rows[cfg.burn_in:]])
        report.p, report.a = (float(v) for v in np.median(tail, axis=0))
    return report


def _ratio_at(cfg: ProbeConfig, p: float, rng: RngStream) -> tuple[float, float]:
    F = cfg.test_cdf
    mean, _ = evaluate_variants([F, F.scaled(cfg.A, p)],
                                [np.array([cfg.point1, cfg.point2], float), _probe_points(cfg, p)],
                                cfg, rng)
    return mean[1, 0] / mean[0, 0], cfg.A
