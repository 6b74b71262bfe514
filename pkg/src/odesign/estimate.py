"""Bounded least-squares parameter estimation from sampled observations.

The objective integrates the candidate parameters on the same fixed-step
grid the data came from (refined to the grid step, never interpolated) and
sums squared residuals at the sampled times. Minimization is multi-start
Nelder-Mead with simplex vertices projected onto the parameter box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import AllStartsFailed
from .models import DynamicalModel, ParameterSpace, TimeGrid

__all__ = [
    "Dataset",
    "EstimationResult",
    "sse_objective",
    "least_squares_estimate",
    "estimation_error",
]

#: Cap on the multi-start budget. Start k always uses row k of one fixed
#: 256-point Latin hypercube, so adding starts never perturbs earlier ones.
MAX_STARTS = 256

NM_MAX_ITER = 2000
NM_DIAM_TOL = 1e-8


@dataclass(frozen=True)
class Dataset:
    """Noisy observations at selected times, with the generating truth.

    ``times`` must lie on the uniform grid ``t_start + i*base_step``; the
    objective refines integration to that step so sampled times are hit
    exactly.
    """

    times: np.ndarray
    observations: np.ndarray  # (len(times), q)
    truth: np.ndarray | None
    model_name: str
    noise_sigma: float
    t_start: float
    base_step: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        obs = np.asarray(self.observations, dtype=float)
        if obs.ndim == 1:
            obs = obs[:, None]
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "observations", obs)
        if self.truth is not None:
            object.__setattr__(self, "truth", np.asarray(self.truth, dtype=float))
        if t.ndim != 1 or t.size == 0:
            raise ValueError("times must be a non-empty vector")
        if (np.diff(t) <= 0).any():
            raise ValueError("times must be strictly increasing")
        if obs.shape[0] != t.size:
            raise ValueError("one observation row per time")
        if self.base_step <= 0:
            raise ValueError("base_step must be positive")
        idx = self.grid_indices()
        if (idx < 0).any():
            raise ValueError("times must not precede t_start")

    def grid_indices(self) -> np.ndarray:
        """Indices of the sample times on the refinement grid."""
        rel = (self.times - self.t_start) / self.base_step
        idx = np.round(rel).astype(np.int64)
        if np.abs(rel - idx).max() > 1e-6:
            raise ValueError("times do not align with t_start + i*base_step")
        return idx

    @classmethod
    def from_grid(
        cls,
        grid: TimeGrid,
        indices,
        observations,
        truth=None,
        model_name: str = "",
        noise_sigma: float = 0.0,
    ) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return cls(
            times=grid.points[idx],
            observations=np.asarray(observations, dtype=float),
            truth=truth,
            model_name=model_name,
            noise_sigma=noise_sigma,
            t_start=grid.t_start,
            base_step=grid.step,
        )


@dataclass(frozen=True)
class EstimationResult:
    theta_hat: np.ndarray
    sse: float
    starts_used: int
    converged: bool


def _sse_py(model, theta, dataset, substeps):
    idx = dataset.grid_indices()
    last = int(idx[-1])
    obs_idx = list(model.observe_indices)
    h = dataset.base_step / substeps
    x = model.initial_state.copy()
    f = model.vector_field
    sse = 0.0
    ptr = 0
    for gi in range(last + 1):
        if gi > 0:
            t = dataset.t_start + (gi - 1) * dataset.base_step
            for s in range(substeps):
                ts = t + s * h
                k1 = f(x, theta, ts)
                k2 = f(x + 0.5 * h * k1, theta, ts + 0.5 * h)
                k3 = f(x + 0.5 * h * k2, theta, ts + 0.5 * h)
                k4 = f(x + h * k3, theta, ts + h)
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.isfinite(x).all():
                return np.inf
        while ptr < idx.size and idx[ptr] == gi:
            for q, j in enumerate(obs_idx):
                d = dataset.observations[ptr, q] - x[j]
                sse += d * d
            ptr += 1
    return sse if np.isfinite(sse) else np.inf


def sse_objective(model: DynamicalModel, theta, dataset: Dataset, substeps: int = 10) -> float:
    """Sum of squared observation residuals at the dataset times.

    Integration blow-ups map to +inf so optimizers can route around bad
    parameter regions instead of crashing.
    """
    th = np.asarray(theta, dtype=float)
    if th.shape != (model.dim_param,):
        raise ValueError("theta length must match the model")
    if not np.isfinite(th).all():
        return np.inf
    if len(model.observe_indices) != dataset.observations.shape[1]:
        raise ValueError("dataset output count must match the model observation")
    if model.kernel_id:
        return float(
            _kernels.sse_eval(
                model.kernel_id,
                th,
                model.initial_state,
                dataset.base_step,
                substeps,
                dataset.grid_indices(),
                np.asarray(model.observe_indices, dtype=np.int64),
                dataset.observations,
            )
        )
    return float(_sse_py(model, th, dataset, substeps))


def _nelder_mead(func, lower, upper, start, max_iter=NM_MAX_ITER, diam_tol=NM_DIAM_TOL):
    """Nelder-Mead with simplex vertices clipped to the box.

    Stops when the simplex diameter relative to the box widths drops below
    ``diam_tol`` or after ``max_iter`` iterations. Returns (x, f, converged).
    """
    m = lower.size
    width = upper - lower

    def clip(x):
        return np.minimum(np.maximum(x, lower), upper)

    simplex = np.empty((m + 1, m))
    simplex[0] = start
    for j in range(m):
        v = start.copy()
        step = 0.05 * width[j]
        v[j] = v[j] + step if v[j] + step <= upper[j] else v[j] - step
        simplex[j + 1] = clip(v)
    fvals = np.array([func(v) for v in simplex])

    converged = False
    for _ in range(max_iter):
        order = np.argsort(fvals, kind="stable")
        simplex = simplex[order]
        fvals = fvals[order]
        diam = np.max(np.abs(simplex[1:] - simplex[0]) / width)
        if diam < diam_tol:
            converged = True
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = clip(centroid + (centroid - worst))
        fr = func(xr)
        if fr < fvals[0]:
            xe = clip(centroid + 2.0 * (centroid - worst))
            fe = func(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = clip(centroid + 0.5 * (xr - centroid))
                fc = func(xc)
                if fc <= fr:
                    simplex[-1], fvals[-1] = xc, fc
                else:
                    for j in range(1, m + 1):
                        simplex[j] = clip(simplex[0] + 0.5 * (simplex[j] - simplex[0]))
                        fvals[j] = func(simplex[j])
            else:
                xc = clip(centroid - 0.5 * (centroid - worst))
                fc = func(xc)
                if fc < fvals[-1]:
                    simplex[-1], fvals[-1] = xc, fc
                else:
                    for j in range(1, m + 1):
                        simplex[j] = clip(simplex[0] + 0.5 * (simplex[j] - simplex[0]))
                        fvals[j] = func(simplex[j])

    best = int(np.argmin(fvals))
    return simplex[best].copy(), float(fvals[best]), converged


def latin_hypercube(space: ParameterSpace, rng_seed: int, count: int = MAX_STARTS) -> np.ndarray:
    """Seeded Latin hypercube over the box; row k is stable in k."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(rng_seed)))
    pts = np.empty((count, space.dim))
    for j in range(space.dim):
        perm = rng.permutation(count)
        u = rng.random(count)
        pts[:, j] = space.lower[j] + space.width[j] * (perm + u) / count
    return pts


def least_squares_estimate(
    model: DynamicalModel,
    space: ParameterSpace,
    dataset: Dataset,
    starts: int = 20,
    rng_seed: int = 0,
    substeps: int = 10,
) -> EstimationResult:
    """Multi-start bounded Nelder-Mead minimization of the fit objective.

    Start k of any run with the same seed begins at the same point, so the
    best objective value can only improve as ``starts`` grows. Raises
    AllStartsFailed when every start ends at a non-finite objective.
    """
    if starts < 1:
        raise ValueError("starts must be >= 1")
    if starts > MAX_STARTS:
        raise ValueError(f"starts must be <= {MAX_STARTS}")
    if space.dim != model.dim_param:
        raise ValueError("parameter space dimension must match the model")

    points = latin_hypercube(space, rng_seed)

    def func(theta):
        return sse_objective(model, theta, dataset, substeps)

    best_x = None
    best_f = np.inf
    best_conv = False
    for k in range(starts):
        x, fx, conv = _nelder_mead(func, space.lower, space.upper, points[k])
        if fx < best_f or best_x is None:
            best_x, best_f, best_conv = x, fx, conv
    if not np.isfinite(best_f):
        raise AllStartsFailed(f"all {starts} starts diverged for {model.name!r}")
    return EstimationResult(
        theta_hat=space.clip(best_x),
        sse=best_f,
        starts_used=starts,
        converged=best_conv,
    )


def estimation_error(theta_hat, truth, relative: bool = False) -> float:
    """Euclidean distance between estimate and truth.

    With ``relative=True`` each coordinate difference is divided by
    max(|truth_j|, 1e-12) first.
    """
    a = np.asarray(theta_hat, dtype=float)
    b = np.asarray(truth, dtype=float)
    if a.shape != b.shape:
        raise ValueError("estimate and truth must have equal length")
    d = a - b
    if relative:
        d = d / np.maximum(np.abs(b), 1e-12)
    return float(np.linalg.norm(d))
