"""Restriction and lifting between particle ensembles and ICDF observables.

A 2D particle cloud is summarised by the inverse CDF of one coordinate (the
marginal axis) plus M conditional inverse CDFs of the other coordinate, one
per equal-count rank band of the marginal axis.  Lifting inverts this: the
marginal coordinate of particle i is IF((i - 0.5)/N) and its partner
coordinate is drawn from the conditional ICDF of the band holding rank i.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .sde import ParticleEnsemble, RngStream


class Axis(str, enum.Enum):
    X = "x"
    Y = "y"

    @property
    def other(self) -> "Axis":
        return Axis.Y if self is Axis.X else Axis.X


@dataclass(frozen=True)
class Orientation:
    marginal_axis: Axis = Axis.Y

    def __post_init__(self):
        object.__setattr__(self, "marginal_axis", Axis(self.marginal_axis))

    @property
    def conditional_axis(self) -> Axis:
        return self.marginal_axis.other

    def split(self, ensemble: ParticleEnsemble) -> tuple[np.ndarray, np.ndarray]:
        """(marginal coordinates, conditional coordinates)."""
        if self.marginal_axis is Axis.X:
            return ensemble.x, ensemble.y
        return ensemble.y, ensemble.x

    def join(self, marginal: np.ndarray, conditional: np.ndarray) -> ParticleEnsemble:
        if self.marginal_axis is Axis.X:
            return ParticleEnsemble(marginal, conditional)
        return ParticleEnsemble(conditional, marginal)


MARGINAL_Y = Orientation(Axis.Y)
MARGINAL_X = Orientation(Axis.X)


def midpoint_ranks(n: int) -> np.ndarray:
    """Plotting positions (i - 0.5)/n, i = 1..n."""
    return (np.arange(n) + 0.5) / n


@dataclass
class IcdfSamples:
    """Inverse CDF sampled at increasing ranks in (0, 1)."""

    ranks: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.ranks = np.asarray(self.ranks, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.ranks.shape != self.values.shape or self.ranks.ndim != 1:
            raise ValueError("ranks and values must be 1D arrays of equal length")
        if self.ranks.size and (self.ranks[0] <= 0 or self.ranks[-1] >= 1):
            raise ValueError("ranks must lie strictly inside (0, 1)")
        if np.any(np.diff(self.ranks) <= 0):
            raise ValueError("ranks must be strictly increasing")

    def __len__(self):
        return self.ranks.size

    @property
    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) >= 0))

    def __call__(self, f) -> np.ndarray:
        """Piecewise-linear interpolant, held constant beyond the end samples."""
        return np.interp(f, self.ranks, self.values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "value_cm"])
            for f, v in zip(self.ranks, self.values):
                w.writerow([f"{f:.17g}", f"{v:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "IcdfSamples":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["rank", "value_cm"]:
            raise ValueError(f"{path}: expected header rank,value_cm")
        data = np.array(rows[1:], dtype=float).reshape(-1, 2)
        return cls(data[:, 0], data[:, 1])


@dataclass
class ConditionalFamily:
    """Conditional ICDFs of the conditional axis, one per marginal rank band."""

    levels: np.ndarray
    bands: list
    orientation: Orientation = MARGINAL_Y

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        if len(self.bands) < 1:
            raise ValueError("a conditional family needs at least one band")
        if self.levels.size != len(self.bands):
            raise ValueError("one conditioning level per band is required")
        if np.any(np.diff(self.levels) < 0):
            raise ValueError("conditioning levels must be non-decreasing")

    @property
    def M(self) -> int:
        return len(self.bands)


@dataclass
class CdfGrid:
    """Empirical joint CDF; ``values[m, j]`` is F(grid_x[j], grid_y[m])."""

    grid_x: np.ndarray
    grid_y: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.grid_x = np.asarray(self.grid_x, dtype=float)
        self.grid_y = np.asarray(self.grid_y, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid_y.size, self.grid_x.size):
            raise ValueError("values must have shape (len(grid_y), len(grid_x))")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y_cm\\x_cm"] + [f"{v:.17g}" for v in self.grid_x])
            for gy, row in zip(self.grid_y, self.values):
                w.writerow([f"{gy:.17g}"] + [f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path) -> "CdfGrid":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        grid_x = np.array(rows[0][1:], dtype=float)
        body = np.array([r for r in rows[1:]], dtype=float)
        return cls(grid_x, body[:, 0], body[:, 1:])


def default_mesh(ensemble: ParticleEnsemble, n: int = 41) -> tuple[np.ndarray, np.ndarray]:
    """Uniform n-by-n reporting mesh over the ensemble bounding box."""
    return (np.linspace(ensemble.x.min(), ensemble.x.max(), n),
            np.linspace(ensemble.y.min(), ensemble.y.max(), n))


def count_below(x: np.ndarray, y: np.ndarray, grid_x: np.ndarray, grid_y: np.ndarray) -> np.ndarray:
    """counts[m, j] = #{i : x_i <= grid_x[j] and y_i <= grid_y[m]} for sorted grids."""
    # first grid index at or above each coordinate
    ix = np.searchsorted(grid_x, x, side="left")
    iy = np.searchsorted(grid_y, y, side="left")
    keep = (ix < grid_x.size) & (iy < grid_y.size)
    hist = np.zeros((grid_y.size, grid_x.size), dtype=np.int64)
    np.add.at(hist, (iy[keep], ix[keep]), 1)
    return hist.cumsum(axis=0).cumsum(axis=1)


def restrict_cdf(ensemble: ParticleEnsemble, grid_x=None, grid_y=None) -> CdfGrid:
    """Joint CDF on a mesh, evaluated as (N_f - 0.5)/N and floored at 0."""
    if grid_x is None or grid_y is None:
        gx, gy = default_mesh(ensemble)
        grid_x = gx if grid_x is None else grid_x
        grid_y = gy if grid_y is None else grid_y
    grid_x = np.asarray(grid_x, dtype=float)
    grid_y = np.asarray(grid_y, dtype=float)
    if grid_x.size == 0 or grid_y.size == 0:
        raise ValueError("grids must be non-empty")
    if np.any(np.diff(grid_x) < 0) or np.any(np.diff(grid_y) < 0):
        raise ValueError("grids must be sorted")
    counts = count_below(ensemble.x, ensemble.y, grid_x, grid_y)
    values = np.maximum(counts - 0.5, 0.0) / ensemble.N
    return CdfGrid(grid_x, grid_y, values)


def marginal_icdf(ensemble: ParticleEnsemble, orientation: Orientation = MARGINAL_Y) -> IcdfSamples:
    if ensemble.N < 2:
        raise ValueError("need at least two particles")
    marg, _ = orientation.split(ensemble)
    return IcdfSamples(midpoint_ranks(ensemble.N), np.sort(marg))


def dkw_epsilon(n: int, confidence: float = 0.99) -> float:
    """Half-width of the Dvoretzky-Kiefer-Wolfowitz band for an n-sample empirical CDF."""
    if n < 1 or not 0 < confidence < 1:
        raise ValueError("need n >= 1 and confidence in (0, 1)")
    return float(np.sqrt(np.log(2.0 / (1.0 - confidence)) / (2.0 * n)))


def band_starts(n: int, m: int) -> np.ndarray:
    """Start offsets of the m rank bands (length m + 1, last entry = n).

    Every band holds int(n/m) ranks; the remainder joins the last band.
    """
    width = n // m
    starts = np.arange(m + 1) * width
    starts[-1] = n
    return starts


def conditional_icdfs(ensemble: ParticleEnsemble, M: int, orientation: Orientation = MARGINAL_Y) -> ConditionalFamily:
    N = ensemble.N
    if M < 1:
        raise ValueError("M must be >= 1")
    if 2 * M > N:
        raise ValueError(f"M={M} exceeds N/2 for N={N}; bands would be too small")
    marg, cond = orientation.split(ensemble)
    order = np.argsort(marg, kind="stable")
    marg_sorted = marg[order]
    cond_by_rank = cond[order]
    starts = band_starts(N, M)
    bands = []
    for k in range(M):
        chunk = np.sort(cond_by_rank[starts[k]:starts[k + 1]])
        bands.append(IcdfSamples(midpoint_ranks(chunk.size), chunk))
    # y^c_k = y^s at 1-based index (k-1) int(N/M) + int(N/(2M))
    idx = np.arange(M) * (N // M) + N // (2 * M) - 1
    levels = marg_sorted[np.clip(idx, 0, N - 1)]
    return ConditionalFamily(levels, bands, orientation)


def band_of_rank(N: int, M: int) -> np.ndarray:
    """0-based band index for each 0-based rank position."""
    return np.minimum(np.arange(N) // (N // M), M - 1)


def lift(marginal: IcdfSamples, family: ConditionalFamily, N: int, rng: RngStream,
         interp: str = "nearest") -> ParticleEnsemble:
    """Generate N particles consistent with the given ICDFs.

    ``interp`` is ``"nearest"`` (each particle uses the band holding its
    marginal rank) or ``"linear"`` (quantile interpolation between the two
    bands whose centre ranks bracket the particle).  Consumes N uniforms.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if not marginal.is_monotone or not all(b.is_monotone for b in family.bands):
        raise ValueError("input ICDFs must be non-decreasing; apply monotone_repair first")
    M = family.M
    if M > N:
        raise ValueError("more bands than particles")
    marg = marginal(midpoint_ranks(N))
    u = rng.uniform(N)
    if interp == "nearest":
        band = band_of_rank(N, M)
        cond = np.empty(N)
        for k in range(M):
            sel = band == k
            cond[sel] = family.bands[k](u[sel])
    elif interp == "linear":
        starts = band_starts(N, M)
        centres = 0.5 * (starts[:-1] + starts[1:])
        pos = np.arange(N) + 0.5
        hi = np.clip(np.searchsorted(centres, pos, side="right"), 1, max(M - 1, 1))
        lo = hi - 1
        if M == 1:
            w = np.zeros(N)
            hi = lo = np.zeros(N, dtype=int)
        else:
            w = np.clip((pos - centres[lo]) / (centres[hi] - centres[lo]), 0.0, 1.0)
        vals = np.stack([b(u) for b in family.bands])
        cols = np.arange(N)
        cond = (1 - w) * vals[lo, cols] + w * vals[hi, cols]
    else:
        raise ValueError(f"unknown interpolation mode {interp!r}")
    return family.orientation.join(marg, cond)
