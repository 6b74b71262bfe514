"""Fixed-step integration of states and forward sensitivities.

The classical fourth-order Runge-Kutta scheme advances each grid interval
in ``substeps`` equal steps. Built-in models run through compiled kernels;
user-registered models take an equivalent numpy path. Both are pure
functions of their inputs, so results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .design import SensitivityRecord
from .errors import NonFiniteState
from .models import DynamicalModel, TimeGrid

__all__ = [
    "Trajectory",
    "AugmentedTrajectory",
    "ObservationSeries",
    "integrate",
    "integrate_with_sensitivities",
    "observe",
    "full_state_record",
    "add_noise",
    "finite_difference_sensitivity",
]


@dataclass(frozen=True)
class Trajectory:
    """States on a time grid, one row per grid point."""

    grid: TimeGrid
    states: np.ndarray


@dataclass(frozen=True)
class AugmentedTrajectory:
    """Trajectory plus per-point sensitivity matrices dX/dtheta."""

    trajectory: Trajectory
    sensitivities: np.ndarray  # (N, n, m)

    @property
    def grid(self) -> TimeGrid:
        return self.trajectory.grid

    @property
    def states(self) -> np.ndarray:
        return self.trajectory.states


@dataclass(frozen=True)
class ObservationSeries:
    """Observed outputs y(t_i) on a grid, possibly noisy."""

    grid: TimeGrid
    values: np.ndarray  # (N, q)
    noise_sigma: float


def _check_inputs(model: DynamicalModel, theta, substeps: int) -> np.ndarray:
    th = np.asarray(theta, dtype=float)
    if th.shape != (model.dim_param,):
        raise ValueError(
            f"theta has length {th.size}, model {model.name!r} expects {model.dim_param}"
        )
    if not np.isfinite(th).all():
        raise ValueError("theta must be finite")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    return th


def _rk4_states_py(model, theta, grid, substeps):
    n = model.dim_state
    X = np.empty((grid.count, n))
    x = model.initial_state.copy()
    X[0] = x
    h = grid.step / substeps
    f = model.vector_field
    t = grid.t_start
    for i in range(grid.count - 1):
        for s in range(substeps):
            ts = t + s * h
            k1 = f(x, theta, ts)
            k2 = f(x + 0.5 * h * k1, theta, ts + 0.5 * h)
            k3 = f(x + 0.5 * h * k2, theta, ts + 0.5 * h)
            k4 = f(x + h * k3, theta, ts + h)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(x).all():
            return None
        X[i + 1] = x
        t = grid.t_start + (i + 1) * grid.step
    return X


def _rk4_aug_py(model, theta, grid, substeps):
    n, m = model.dim_state, model.dim_param
    X = np.empty((grid.count, n))
    S = np.empty((grid.count, n, m))
    x = model.initial_state.copy()
    s = np.zeros((n, m))
    X[0] = x
    S[0] = s
    h = grid.step / substeps
    f, jx, jp = model.vector_field, model.jac_state, model.jac_param

    def rhs(xv, sv, tv):
        return f(xv, theta, tv), jx(xv, theta, tv) @ sv + jp(xv, theta, tv)

    t = grid.t_start
    for i in range(grid.count - 1):
        for k in range(substeps):
            ts = t + k * h
            k1x, k1s = rhs(x, s, ts)
            k2x, k2s = rhs(x + 0.5 * h * k1x, s + 0.5 * h * k1s, ts + 0.5 * h)
            k3x, k3s = rhs(x + 0.5 * h * k2x, s + 0.5 * h * k2s, ts + 0.5 * h)
            k4x, k4s = rhs(x + h * k3x, s + h * k3s, ts + h)
            x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            s = s + (h / 6.0) * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
        if not (np.isfinite(x).all() and np.isfinite(s).all()):
            return None, None
        X[i + 1] = x
        S[i + 1] = s
        t = grid.t_start + (i + 1) * grid.step
    return X, S


def integrate(model: DynamicalModel, theta, grid: TimeGrid, substeps: int = 10) -> Trajectory:
    """Integrate the model on the grid with RK4; raises NonFiniteState on blow-up."""
    th = _check_inputs(model, theta, substeps)
    if model.kernel_id:
        ok, X = _kernels.rk4_states(
            model.kernel_id, th, model.initial_state, grid.step, substeps, grid.count
        )
        if not ok:
            raise NonFiniteState(f"{model.name} blew up at theta={th.tolist()}")
    else:
        X = _rk4_states_py(model, th, grid, substeps)
        if X is None:
            raise NonFiniteState(f"{model.name} blew up at theta={th.tolist()}")
    return Trajectory(grid=grid, states=X)


def integrate_with_sensitivities(
    model: DynamicalModel, theta, grid: TimeGrid, substeps: int = 10
) -> AugmentedTrajectory:
    """Jointly integrate states and dX/dtheta (dS/dt = J S + P, S(t0) = 0)."""
    th = _check_inputs(model, theta, substeps)
    if model.kernel_id:
        ok, X, S = _kernels.rk4_augmented(
            model.kernel_id,
            th,
            model.initial_state,
            grid.step,
            substeps,
            grid.count,
            model.dim_param,
        )
        if not ok:
            raise NonFiniteState(f"{model.name} blew up at theta={th.tolist()}")
    else:
        X, S = _rk4_aug_py(model, th, grid, substeps)
        if X is None:
            raise NonFiniteState(f"{model.name} blew up at theta={th.tolist()}")
    return AugmentedTrajectory(trajectory=Trajectory(grid=grid, states=X), sensitivities=S)


def observe(aug: AugmentedTrajectory, model: DynamicalModel):
    """Restrict states and sensitivities to the model's observed components.

    Returns a noiseless ObservationSeries and the matching SensitivityRecord
    whose rows feed the information-matrix construction.
    """
    idx = list(model.observe_indices)
    values = aug.states[:, idx].copy()
    rows = aug.sensitivities[:, idx, :].copy()
    series = ObservationSeries(grid=aug.grid, values=values, noise_sigma=0.0)
    record = SensitivityRecord(grid=aug.grid, rows=rows)
    return series, record


def full_state_record(aug: AugmentedTrajectory) -> SensitivityRecord:
    """Sensitivity record over every state component (q = n).

    The ranking-based design pipeline scores time points by how the whole
    state vector responds to the parameters, so its information atoms come
    from this record rather than the observed-output restriction.
    """
    return SensitivityRecord(grid=aug.grid, rows=aug.sensitivities.copy())


def add_noise(series: ObservationSeries, sigma: float, rng_seed: int) -> ObservationSeries:
    """Add i.i.d. zero-mean Gaussian noise; deterministic for a fixed seed."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return ObservationSeries(grid=series.grid, values=series.values.copy(), noise_sigma=0.0)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(rng_seed)))
    noisy = series.values + rng.normal(0.0, sigma, size=series.values.shape)
    return ObservationSeries(grid=series.grid, values=noisy, noise_sigma=sigma)


def finite_difference_sensitivity(
    model: DynamicalModel, theta, grid: TimeGrid, substeps: int = 10, h_rel: float = 1e-6
) -> np.ndarray:
    """Central-difference estimate of dX/dtheta along the trajectory.

    Serves as the independent oracle for the forward-sensitivity
    integration; the step for coordinate j is ``h_rel * max(|theta_j|, 1)``.
    """
    if h_rel <= 0:
        raise ValueError("h_rel must be positive")
    th = _check_inputs(model, theta, substeps)
    n, m = model.dim_state, model.dim_param
    out = np.empty((grid.count, n, m))
    for j in range(m):
        h = h_rel * max(abs(th[j]), 1.0)
        tp = th.copy()
        tp[j] += h
        tm = th.copy()
        tm[j] -= h
        Xp = integrate(model, tp, grid, substeps).states
        Xm = integrate(model, tm, grid, substeps).states
        out[:, :, j] = (Xp - Xm) / (2.0 * h)
    return out
