"""Discrete-time Brownian particle simulators in a Couette shear flow.

Two models share one Euler-Maruyama kernel:

* ``DIFFUSIVE_X``:  x += D sqrt(dt) eta_x ;  y += x dt
* ``DIFFUSIVE_XY``: as above plus y += D sqrt(dt) eta_y

The y update always uses the pre-step x.  Both updates are exact
discretisations of linear dynamics, so no higher-order scheme is used.

Random numbers come from counter-based Philox streams keyed by
``(base_seed, stream_id)``; normal variates are inverse-CDF transforms of
uniforms, so every step consumes a fixed number of draws.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import ndtri

_U64 = (1 << 64) - 1
# smallest uniform handed to ndtri; random() can return exactly 0.0
_U_FLOOR = 2.0 ** -54
# steps drawn per block inside the kernel (bounds memory for big ensembles)
_BLOCK = 16


class Model(str, enum.Enum):
    DIFFUSIVE_X = "diffusive-x"
    DIFFUSIVE_XY = "diffusive-xy"

    @property
    def noise_dims(self) -> int:
        return 1 if self is Model.DIFFUSIVE_X else 2


class SimulationFault(FloatingPointError):
    """A non-finite particle position appeared during time stepping."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite particle position at micro step {step}")


@dataclass(frozen=True)
class SdeParams:
    D: float = 5.0
    dt: float = 0.01
    model: Model = Model.DIFFUSIVE_X
    # free named parameters of the micro model; unused by both built-ins
    extra: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if not self.D >= 0:
            raise ValueError(f"diffusion D must be >= 0, got {self.D}")
        if not self.dt > 0:
            raise ValueError(f"time step dt must be > 0, got {self.dt}")


@dataclass
class ParticleEnsemble:
    """Particle positions in cm."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float).ravel()
        self.y = np.array(self.y, dtype=float).ravel()
        if self.x.shape != self.y.shape:
            raise ValueError(f"x and y lengths differ: {self.x.size} vs {self.y.size}")
        if self.x.size < 1:
            raise ValueError("ensemble must contain at least one particle")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("ensemble positions must be finite")

    @property
    def N(self) -> int:
        return self.x.size

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(self.x.copy(), self.y.copy())

    def coordinate(self, axis: str) -> np.ndarray:
        return self.x if axis == "x" else self.y

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x_cm", "y_cm"])
            for xi, yi in zip(self.x, self.y):
                w.writerow([f"{xi:.17g}", f"{yi:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "ParticleEnsemble":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["x_cm", "y_cm"]:
            raise ValueError(f"{path}: expected header x_cm,y_cm")
        data = np.array(rows[1:], dtype=float).reshape(-1, 2)
        return cls(data[:, 0], data[:, 1])

    @classmethod
    def concat(cls, parts: Sequence["ParticleEnsemble"]) -> "ParticleEnsemble":
        return cls(np.concatenate([p.x for p in parts]), np.concatenate([p.y for p in parts]))


class RngStream:
    """Reproducible Philox stream identified by ``(base_seed, stream_id)``.

    The stream is stateful: successive draws continue the same counter
    sequence, so splitting a run into several calls reproduces a single
    contiguous call exactly.
    """

    def __init__(self, base_seed: int, stream_id: int = 0):
        self.base_seed = int(base_seed) & _U64
        self.stream_id = int(stream_id) & _U64
        key = np.array([self.base_seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RngStream(base_seed={self.base_seed}, stream_id={self.stream_id})"

    def uniform(self, shape) -> np.ndarray:
        u = self._gen.random(shape)
        np.maximum(u, _U_FLOOR, out=u)
        return u

    def normal(self, shape) -> np.ndarray:
        return ndtri(self.uniform(shape))

    def integer_seed(self) -> int:
        """Draw a 63-bit integer, e.g. to key a family of child streams."""
        return int(self._gen.integers(0, 2**63 - 1))

    def replicas(self, count: int) -> list["RngStream"]:
        """Child streams for ``count`` replicas: one shared key, stream_id = replica index."""
        key = self.integer_seed()
        return [RngStream(key, r) for r in range(count)]


def draw_noise(rngs: Sequence[RngStream], n_steps: int, model: Model, n_particles: int) -> np.ndarray:
    """Standard normals of shape (n_steps, noise_dims, R, N), one stream per replica.

    Per replica and step the draw order is: all x kicks, then all y kicks.
    """
    k = Model(model).noise_dims
    out = np.empty((n_steps, k, len(rngs), n_particles))
    for r, rng in enumerate(rngs):
        out[:, :, r, :] = rng.normal((n_steps, k, n_particles))
    return out


def advance(x: np.ndarray, y: np.ndarray, params: SdeParams, noise: np.ndarray,
            step_offset: int = 0) -> None:
    """Advance positions in place using pre-drawn noise of shape (n_steps, k, ...).

    ``x``/``y`` may carry extra leading axes as long as they broadcast with
    ``noise[s, j]``.
    """
    amp = params.D * np.sqrt(params.dt)
    xy = params.model is Model.DIFFUSIVE_XY
    # overflow is reported as a SimulationFault, not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(noise.shape[0]):
            y += x * params.dt
            x += amp * noise[s, 0]
            if xy:
                y += amp * noise[s, 1]
            # a sum is non-finite iff some entry is (barring overflow near 1e308)
            if not np.isfinite(x.sum() + y.sum()):
                raise SimulationFault(step_offset + s + 1)


def evolve(x: np.ndarray, y: np.ndarray, params: SdeParams, rngs: Sequence[RngStream],
           n_steps: int) -> None:
    """Advance (R, N) position arrays in place, replica r driven by ``rngs[r]``."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    done = 0
    while done < n_steps:
        nb = min(_BLOCK, n_steps - done)
        noise = draw_noise(rngs, nb, params.model, x.shape[-1])
        advance(x, y, params, noise, step_offset=done)
        done += nb


def step(ensemble: ParticleEnsemble, params: SdeParams, rng: RngStream, n_steps: int) -> ParticleEnsemble:
    """Return ``ensemble`` advanced by ``n_steps`` micro steps.

    Consumes exactly ``N * n_steps`` normal draws (``2 N n_steps`` for the
    DIFFUSIVE_XY model) from ``rng``.
    """
    x = ensemble.x.copy()[None, :]
    y = ensemble.y.copy()[None, :]
    evolve(x, y, params, [rng], n_steps)
    return ParticleEnsemble(x[0], y[0])


class MomentSummary(NamedTuple):
    mean_x: float
    mean_y: float
    std_x: float
    std_y: float
    corr_xy: Optional[float]  # None when either axis has zero variance


def moment_summary(ensemble: ParticleEnsemble) -> MomentSummary:
    if ensemble.N < 2:
        raise ValueError("moment summary needs at least two particles")
    x, y = ensemble.x, ensemble.y
    sx = float(np.std(x, ddof=1))
    sy = float(np.std(y, ddof=1))
    if sx == 0.0 or sy == 0.0:
        corr = None
    else:
        cov = float(np.sum((x - x.mean()) * (y - y.mean())) / (x.size - 1))
        corr = float(np.clip(cov / (sx * sy), -1.0, 1.0))
    return MomentSummary(float(x.mean()), float(y.mean()), sx, sy, corr)


def point_source(n: int) -> ParticleEnsemble:
    return ParticleEnsemble(np.zeros(n), np.zeros(n))


def uniform_square(n: int, half_width: float, rng: RngStream) -> ParticleEnsemble:
    """Independent uniform particles on (-half_width, half_width)^2."""
    u = rng.uniform((2, n))
    return ParticleEnsemble(half_width * (2 * u[0] - 1), half_width * (2 * u[1] - 1))
