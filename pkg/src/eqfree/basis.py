"""Orthonormal shifted-Legendre representation of inverse CDFs."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np
from numpy.polynomial import legendre
from scipy.optimize import isotonic_regression

from .observables import MARGINAL_Y, Axis, IcdfSamples, Orientation


def monotone_repair(values) -> np.ndarray:
    """Closest non-decreasing sequence in least squares (pool adjacent violators)."""
    values = np.asarray(values, dtype=float)
    if values.size < 2 or np.all(np.diff(values) >= 0):
        return values.copy()
    return isotonic_regression(values, increasing=True).x


@dataclass(frozen=True)
class LegendreBasis:
    """theta_q(f) = sqrt(2q + 1) P_q(2f - 1), q = 0..P, orthonormal on [0, 1]."""

    P: int = 5
    n_quad: int = 64

    def __post_init__(self):
        if self.P < 0:
            raise ValueError("basis order P must be >= 0")

    @cached_property
    def _rule(self):
        xi, w = legendre.leggauss(self.n_quad)
        return 0.5 * (xi + 1.0), 0.5 * w

    @property
    def nodes(self) -> np.ndarray:
        return self._rule[0]

    @property
    def weights(self) -> np.ndarray:
        return self._rule[1]

    def theta(self, f) -> np.ndarray:
        """Basis values, shape (len(f), P + 1)."""
        f = np.asarray(f, dtype=float)
        scale = np.sqrt(2 * np.arange(self.P + 1) + 1.0)
        return legendre.legvander(2 * f - 1, self.P) * scale

    @cached_property
    def _node_theta(self) -> np.ndarray:
        return self.theta(self.nodes)

    def gram(self) -> np.ndarray:
        T = self._node_theta
        return T.T @ (self.weights[:, None] * T)

    def project_values(self, node_values: np.ndarray) -> np.ndarray:
        """Coefficients from ICDF values at the quadrature nodes (last axis)."""
        return (node_values * self.weights) @ self._node_theta


IcdfLike = Union[IcdfSamples, Callable[[np.ndarray], np.ndarray]]


def project(icdf: IcdfLike, basis: LegendreBasis) -> np.ndarray:
    """beta_q = integral_0^1 IF(f) theta_q(f) df by Gauss-Legendre quadrature.

    Sampled ICDFs are read through their piecewise-linear interpolant; a
    callable is evaluated at the nodes directly.
    """
    if isinstance(icdf, IcdfSamples):
        if len(icdf) < 2:
            raise ValueError("need at least two ICDF samples to project")
        vals = icdf(basis.nodes)
    else:
        vals = np.asarray(icdf(basis.nodes), dtype=float)
    return basis.project_values(vals)


def evaluate(coefficients, basis: LegendreBasis, ranks) -> np.ndarray:
    """Raw truncated expansion sum_q beta_q theta_q(f), no repair."""
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape[-1] != basis.P + 1:
        raise ValueError(f"expected {basis.P + 1} coefficients, got {coefficients.shape[-1]}")
    return basis.theta(ranks) @ coefficients.T


def reconstruct(coefficients, basis: LegendreBasis, ranks, repair: bool = True) -> IcdfSamples:
    raw = evaluate(coefficients, basis, ranks)
    return IcdfSamples(ranks, monotone_repair(raw) if repair else raw)


def repair_magnitude(coefficients, basis: LegendreBasis, ranks) -> float:
    """Largest pointwise change monotone repair makes to the expansion."""
    raw = evaluate(coefficients, basis, ranks)
    return float(np.max(np.abs(monotone_repair(raw) - raw))) if raw.size else 0.0


@dataclass
class CoarseState:
    """Coefficients of the marginal ICDF (row 0) and M conditional ICDFs."""

    beta: np.ndarray
    orientation: Orientation = MARGINAL_Y

    def __post_init__(self):
        self.beta = np.array(self.beta, dtype=float)
        if self.beta.ndim != 2 or self.beta.shape[0] < 2:
            raise ValueError("beta must be an (M+1, P+1) matrix with M >= 1")
        if not np.all(np.isfinite(self.beta)):
            raise ValueError("coefficients must be finite")

    @property
    def M(self) -> int:
        return self.beta.shape[0] - 1

    @property
    def P(self) -> int:
        return self.beta.shape[1] - 1

    @property
    def marginal(self) -> np.ndarray:
        return self.beta[0]

    @property
    def conditionals(self) -> np.ndarray:
        return self.beta[1:]

    def copy(self) -> "CoarseState":
        return CoarseState(self.beta.copy(), self.orientation)

    def with_beta(self, beta) -> "CoarseState":
        return CoarseState(beta, self.orientation)

    def vector(self) -> np.ndarray:
        """Flattened (beta_{1,0}, ..., beta_{1,P}, beta_{2,0}, ...)."""
        return self.beta.ravel().copy()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["icdf"] + [f"q{q}" for q in range(self.P + 1)])
            for i, row in enumerate(self.beta):
                w.writerow([i] + [f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path, orientation: Orientation = MARGINAL_Y) -> "CoarseState":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        return cls(np.array([r[1:] for r in rows[1:]], dtype=float), orientation)


def even_mode_mask(M: int, P: int, suppress=(2, 4)) -> np.ndarray:
    """Boolean (M+1, P+1) mask of the coefficients that are kept/extrapolated."""
    mask = np.ones((M + 1, P + 1), dtype=bool)
    for q in suppress:
        if q <= P:
            mask[:, q] = False
    return mask


def linear_state(M: int, P: int, half_width: float, orientation: Orientation = MARGINAL_Y) -> CoarseState:
    """Coarse state of the uniform distribution on (-half_width, half_width)^2."""
    if P < 1:
        raise ValueError("a linear ICDF needs P >= 1")
    beta = np.zeros((M + 1, P + 1))
    # IF(f) = w (2f - 1) = (w / sqrt(3)) theta_1(f)
    beta[:, 1] = half_width / np.sqrt(3.0)
    return CoarseState(beta, orientation)
