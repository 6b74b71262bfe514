"""Rank-aggregated E-optimal sampling design without an initial estimate.

Instead of linearizing at one guessed parameter vector, the design problem
is solved for many uniform draws from the parameter box; each draw ranks
the candidate times by its optimal weights, and the times with the best
average rank are selected. One selection serves every dataset afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .design import e_optimal_weights, rank_times, select_top_n, RankVector
from .errors import NonFiniteState, TooManyFailures
from .integrate import full_state_record, integrate_with_sensitivities
from .models import DynamicalModel, ParameterSpace, TimeGrid

__all__ = ["EorConfig", "EorResult", "eor_design"]


@dataclass(frozen=True)
class EorConfig:
    """Settings for the rank-aggregated design run."""

    n_draws: int = 1000  # parameter draws (K)
    n_points: int = 5  # sampling times to select
    tol: float = 1e-6
    max_iter: int = 50_000
    rng_seed: int = 0
    substeps: int = 10
    aggregate: str = "mean"  # or "median"
    keep_thetas: bool = True

    def __post_init__(self):
        if self.n_draws < 1:
            raise ValueError("n_draws must be >= 1")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.aggregate not in ("mean", "median"):
            raise ValueError("aggregate must be 'mean' or 'median'")


@dataclass(frozen=True)
class EorResult:
    selected_times: np.ndarray
    average_ranks: np.ndarray
    per_draw_theta: list = field(repr=False)
    failed_draws: int = 0


def _draw_rng(seed: int, attempt: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(attempt,))
    return np.random.Generator(np.random.PCG64(ss))


def eor_design(
    model: DynamicalModel,
    space: ParameterSpace,
    grid: TimeGrid,
    cfg: EorConfig,
) -> EorResult:
    """Average per-draw design ranks over uniform parameter draws.

    For each of ``cfg.n_draws`` draws the model is integrated with forward
    sensitivities, the minimum-eigenvalue design is solved on the full-state
    information atoms, and candidate times receive mid-ranks by weight.
    Draws whose integration blows up are discarded and redrawn (counted in
    ``failed_draws``); more than ten failed attempts per requested draw
    aborts the run. The selection takes the ``n_points`` times with the
    smallest aggregate rank, earliest first on ties.
    """
    if space.dim != model.dim_param:
        raise ValueError("parameter space dimension must match the model")
    if cfg.n_points > grid.count:
        raise ValueError("cannot select more points than the grid has")

    K = cfg.n_draws
    rank_rows = np.empty((K, grid.count))
    thetas = []
    attempts = 0
    failures = 0
    budget = 10 * K
    for j in range(K):
        while True:
            if attempts >= budget:
                raise TooManyFailures(
                    f"{failures} blow-ups in {attempts} attempts; parameter box "
                    f"looks incompatible with {model.name!r} on this grid"
                )
            rng = _draw_rng(cfg.rng_seed, attempts)
            attempts += 1
            theta = space.sample(rng)
            try:
                aug = integrate_with_sensitivities(model, theta, grid, cfg.substeps)
            except NonFiniteState:
                failures += 1
                continue
            break
        record = full_state_record(aug)
        weights = e_optimal_weights(record, tol=cfg.tol, max_iter=cfg.max_iter)
        rank_rows[j] = rank_times(weights).ranks
        if cfg.keep_thetas:
            thetas.append(theta)

    if cfg.aggregate == "mean":
        average = rank_rows.mean(axis=0)
    else:
        average = np.median(rank_rows, axis=0)
    selected = select_top_n(RankVector(ranks=average), grid, cfg.n_points)
    return EorResult(
        selected_times=selected,
        average_ranks=average,
        per_draw_theta=thetas,
        failed_draws=failures,
    )
