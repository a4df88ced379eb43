"""Coarse time-stepper: lift -> micro evolution -> restrict -> project."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from .basis import CoarseState, LegendreBasis, evaluate, reconstruct
from .observables import (MARGINAL_Y, ConditionalFamily, IcdfSamples, Orientation,
                          band_starts, lift, midpoint_ranks)
from .sde import ParticleEnsemble, RngStream, SdeParams, evolve


@dataclass(frozen=True)
class StepperConfig:
    sde: SdeParams = field(default_factory=SdeParams)
    N: int = 2000
    M: int = 20
    P: int = 5
    micro_steps: int = 0
    replicas: int = 1
    interp: str = "nearest"
    orientation: Orientation = MARGINAL_Y
    # ranks at which conditional ICDFs are tabulated before lifting
    conditional_resolution: int = 1024
    n_quad: int = 64

    def __post_init__(self):
        if self.M < 1 or self.N < 2 * self.M:
            raise ValueError(f"need N >= 2M with M >= 1 (N={self.N}, M={self.M})")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.micro_steps < 0:
            raise ValueError("micro_steps must be >= 0")
        if self.interp not in ("nearest", "linear"):
            raise ValueError(f"unknown interpolation mode {self.interp!r}")

    @property
    def basis(self) -> LegendreBasis:
        return _basis(self.P, self.n_quad)

    def with_(self, **changes) -> "StepperConfig":
        return replace(self, **changes)


@lru_cache(maxsize=None)
def _basis(P: int, n_quad: int) -> LegendreBasis:
    return LegendreBasis(P, n_quad)


@lru_cache(maxsize=64)
def _projector(n: int, P: int, n_quad: int) -> np.ndarray:
    """Matrix C with project(IcdfSamples(midpoint_ranks(n), v)) == v @ C."""
    basis = _basis(P, n_quad)
    ranks = midpoint_ranks(n)
    nodes = basis.nodes
    j = np.clip(np.searchsorted(ranks, nodes, side="right") - 1, 0, n - 2) if n > 1 else np.zeros(nodes.size, int)
    W = np.zeros((nodes.size, n))
    if n == 1:
        W[:, 0] = 1.0
    else:
        t = np.clip((nodes - ranks[j]) / (ranks[j + 1] - ranks[j]), 0.0, 1.0)
        rows = np.arange(nodes.size)
        W[rows, j] += 1.0 - t
        W[rows, j + 1] += t
    return W.T @ (basis.weights[:, None] * basis.theta(nodes))


def state_icdfs(state: CoarseState, cfg: StepperConfig) -> tuple[IcdfSamples, ConditionalFamily]:
    """Reconstruct the (repaired) marginal at the N lifting ranks and the conditional family."""
    basis = cfg.basis
    if state.P != cfg.P or state.M != cfg.M:
        raise ValueError(f"state shape (M={state.M}, P={state.P}) does not match config")
    marginal = reconstruct(state.marginal, basis, midpoint_ranks(cfg.N))
    grid = midpoint_ranks(cfg.conditional_resolution)
    bands = [reconstruct(row, basis, grid) for row in state.conditionals]
    starts = band_starts(cfg.N, cfg.M)
    centre = 0.5 * (starts[:-1] + starts[1:]) / cfg.N
    levels = np.maximum.accumulate(marginal(centre))
    return marginal, ConditionalFamily(levels, bands, state.orientation)


def lift_replicas(state: CoarseState, cfg: StepperConfig, rngs) -> tuple[np.ndarray, np.ndarray]:
    """(R, N) position arrays, replica r lifted with ``rngs[r]``."""
    marginal, family = state_icdfs(state, cfg)
    x = np.empty((len(rngs), cfg.N))
    y = np.empty_like(x)
    for r, rng in enumerate(rngs):
        ens = lift(marginal, family, cfg.N, rng, cfg.interp)
        x[r], y[r] = ens.x, ens.y
    return x, y


def lift_state(state: CoarseState, cfg: StepperConfig, rng: RngStream) -> ParticleEnsemble:
    marginal, family = state_icdfs(state, cfg)
    return lift(marginal, family, cfg.N, rng, cfg.interp)


def restrict_replicas(x: np.ndarray, y: np.ndarray, M: int, P: int,
                      orientation: Orientation = MARGINAL_Y, n_quad: int = 64) -> np.ndarray:
    """Projected marginal + conditional ICDF coefficients, shape (R, M+1, P+1)."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    R, N = x.shape
    marg, cond = (x, y) if orientation.marginal_axis.value == "x" else (y, x)
    order = np.argsort(marg, axis=1, kind="stable")
    marg_sorted = np.take_along_axis(marg, order, axis=1)
    cond_by_rank = np.take_along_axis(cond, order, axis=1)
    out = np.empty((R, M + 1, P + 1))
    out[:, 0] = marg_sorted @ _projector(N, P, n_quad)
    starts = band_starts(N, M)
    width = N // M
    regular = M if starts[-1] - starts[-2] == width else M - 1
    if regular:
        blocks = np.sort(cond_by_rank[:, :regular * width].reshape(R, regular, width), axis=2)
        out[:, 1:regular + 1] = blocks @ _projector(width, P, n_quad)
    if regular < M:
        tail = np.sort(cond_by_rank[:, starts[-2]:], axis=1)
        out[:, M] = tail @ _projector(tail.shape[1], P, n_quad)
    return out


def restrict_state(ensemble: ParticleEnsemble, cfg: StepperConfig, orientation: Optional[Orientation] = None) -> CoarseState:
    orientation = orientation or cfg.orientation
    beta = restrict_replicas(ensemble.x[None], ensemble.y[None], cfg.M, cfg.P, orientation, cfg.n_quad)[0]
    return CoarseState(beta, orientation)


def coarse_step_replicas(state: CoarseState, cfg: StepperConfig, rng: RngStream,
                         n_steps: Optional[int] = None) -> np.ndarray:
    """Per-replica coefficients after lift, ``n_steps`` micro steps and restriction."""
    n_steps = cfg.micro_steps if n_steps is None else n_steps
    rngs = rng.replicas(cfg.replicas)
    x, y = lift_replicas(state, cfg, rngs)
    evolve(x, y, cfg.sde, rngs, n_steps)
    return restrict_replicas(x, y, cfg.M, cfg.P, state.orientation, cfg.n_quad)


def coarse_step(state: CoarseState, cfg: StepperConfig, rng: RngStream,
                n_steps: Optional[int] = None) -> CoarseState:
    """Replica-averaged coarse time step (averaging in coefficient space)."""
    betas = coarse_step_replicas(state, cfg, rng, n_steps)
    return state.with_beta(betas.mean(axis=0))


def icdf_table(state: CoarseState, basis: LegendreBasis, ranks) -> np.ndarray:
    """Repaired reconstructions of every ICDF, shape (M+1, len(ranks))."""
    return np.stack([reconstruct(row, basis, ranks).values for row in state.beta])


def roundtrip_error(state: CoarseState, cfg: StepperConfig, rng: RngStream,
                    n_ranks: int = 1000) -> float:
    """Max over ICDFs of the sup-norm gap between input and project(restrict(lift(state)))."""
    out = coarse_step(state, cfg, rng, n_steps=0)
    ranks = midpoint_ranks(n_ranks)
    return float(np.max(np.abs(icdf_table(state, cfg.basis, ranks) - icdf_table(out, cfg.basis, ranks))))
