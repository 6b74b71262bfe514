"""Dynamical models, parameter boxes, and time grids.

A model is a first-order ODE system ``dX/dt = f(X, theta, t)`` with a fixed
initial state, analytic Jacobians with respect to state and parameters, and a
list of observed state indices. Two classic systems ship built in: the
Lotka-Volterra predator-prey model and a linear three-compartment
pharmacokinetic model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "TimeGrid",
    "ParameterSpace",
    "DynamicalModel",
    "builtin_lotka_volterra",
    "builtin_three_compartment",
    "get_model",
    "register_model",
    "LOTKA_VOLTERRA_SPACE",
    "THREE_COMPARTMENT_SPACE",
]


@dataclass(frozen=True)
class TimeGrid:
    """Equally spaced candidate sampling times ``t_start + i*step``."""

    t_start: float
    t_end: float
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("TimeGrid needs at least 2 points")
        if not self.t_start < self.t_end:
            raise ValueError("TimeGrid requires t_start < t_end")

    @property
    def step(self) -> float:
        return (self.t_end - self.t_start) / (self.count - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.count)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Grid index of time ``t``; raises if ``t`` is off-grid."""
        i = int(round((t - self.t_start) / self.step))
        if i < 0 or i >= self.count or abs(self.points[i] - t) > tol:
            raise ValueError(f"time {t!r} is not a grid point")
        return i


@dataclass(frozen=True)
class ParameterSpace:
    """Axis-aligned bounded box of admissible parameter vectors."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("lower/upper must be 1-d vectors of equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("parameter bounds must be finite")
        if not (lo < hi).all():
            raise ValueError("parameter box is degenerate (lower >= upper)")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, theta, tol: float = 0.0) -> bool:
        th = np.asarray(theta, dtype=float)
        return bool(
            (th >= self.lower - tol).all() and (th <= self.upper + tol).all()
        )

    def clip(self, theta) -> np.ndarray:
        return np.clip(np.asarray(theta, dtype=float), self.lower, self.upper)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One uniform draw with independent coordinates."""
        return self.lower + self.width * rng.random(self.dim)


@dataclass(frozen=True)
class DynamicalModel:
    """ODE system with analytic Jacobians and an observation selector.

    ``vector_field(x, theta, t)`` returns dX/dt, ``jac_state`` its n-by-n
    state Jacobian and ``jac_param`` its n-by-m parameter Jacobian.
    ``observe_indices`` lists the state components that are measured.
    ``kernel_id`` routes built-in models through compiled integrators; user
    models leave it at None and run on the generic numpy path.
    """

    name: str
    dim_state: int
    dim_param: int
    vector_field: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    jac_state: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    jac_param: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    observe_indices: tuple
    initial_state: np.ndarray
    kernel_id: int = 0

    def __post_init__(self):
        x0 = np.asarray(self.initial_state, dtype=float)
        object.__setattr__(self, "initial_state", x0)
        object.__setattr__(self, "observe_indices", tuple(self.observe_indices))
        if x0.shape != (self.dim_state,):
            raise ValueError("initial_state length must equal dim_state")
        obs = self.observe_indices
        if len(obs) == 0:
            raise ValueError("observe_indices must be non-empty")
        if len(set(obs)) != len(obs):
            raise ValueError("observe_indices must not repeat")
        if any(i < 0 or i >= self.dim_state for i in obs):
            raise ValueError("observe_indices out of range")

    @property
    def dim_obs(self) -> int:
        return len(self.observe_indices)


def _lv_field(x, theta, t):
    r, w = x
    alpha, beta, gamma, delta = theta
    return np.array([alpha * r - beta * r * w, -gamma * w + delta * r * w])


def _lv_jac_state(x, theta, t):
    r, w = x
    alpha, beta, gamma, delta = theta
    return np.array([[alpha - beta * w, -beta * r], [delta * w, -gamma + delta * r]])


def _lv_jac_param(x, theta, t):
    r, w = x
    return np.array([[r, -r * w, 0.0, 0.0], [0.0, 0.0, -w, r * w]])


def builtin_lotka_volterra() -> DynamicalModel:
    """Predator-prey system dr/dt = a*r - b*r*w, dw/dt = -g*w + d*r*w.

    Parameters are ordered (a, b, g, d); both populations start at 50 and the
    predator count w (state index 1) is the observed output.
    """
    return DynamicalModel(
        name="lotka-volterra",
        dim_state=2,
        dim_param=4,
        vector_field=_lv_field,
        jac_state=_lv_jac_state,
        jac_param=_lv_jac_param,
        observe_indices=(1,),
        initial_state=np.array([50.0, 50.0]),
        kernel_id=1,
    )


def _c3_field(x, theta, t):
    k10, k12, k13, k21, k31 = theta
    x1, x2, x3 = x
    return np.array(
        [
            -(k10 + k12 + k13) * x1 + k21 * x2 + k31 * x3,
            k12 * x1 - k21 * x2,
            k13 * x1 - k31 * x3,
        ]
    )


def _c3_jac_state(x, theta, t):
    k10, k12, k13, k21, k31 = theta
    return np.array(
        [
            [-(k10 + k12 + k13), k21, k31],
            [k12, -k21, 0.0],
            [k13, 0.0, -k31],
        ]
    )


def _c3_jac_param(x, theta, t):
    x1, x2, x3 = x
    return np.array(
        [
            [-x1, -x1, -x1, x2, x3],
            [0.0, x1, 0.0, -x2, 0.0],
            [0.0, 0.0, x1, 0.0, -x3],
        ]
    )


def builtin_three_compartment() -> DynamicalModel:
    """Linear three-compartment drug-exchange model.

    Rates are ordered (k10, k12, k13, k21, k31): elimination from the central
    compartment, central-to-peripheral transfer (k12, k13) and the return
    flows (k21, k31). The return flow into the central compartment is
    k21*x2; an occasionally seen rendering "k21*x21" is not a well-formed
    compartmental term and is read as the x2 flow here. A 100-unit dose
    starts in the central compartment, which is also the observed output.
    """
    return DynamicalModel(
        name="three-compartment",
        dim_state=3,
        dim_param=5,
        vector_field=_c3_field,
        jac_state=_c3_jac_state,
        jac_param=_c3_jac_param,
        observe_indices=(0,),
        initial_state=np.array([100.0, 0.0, 0.0]),
        kernel_id=2,
    )


#: Case-study parameter boxes used throughout the examples and benchmarks.
LOTKA_VOLTERRA_SPACE = ParameterSpace(
    lower=np.array([0.5, 0.01, 0.5, 0.01]),
    upper=np.array([1.5, 0.1, 1.5, 0.1]),
)
THREE_COMPARTMENT_SPACE = ParameterSpace(
    lower=np.array([0.09, 0.5, 0.5, 0.2, 0.5]),
    upper=np.array([2.40, 1.0, 2.0, 0.6, 0.7]),
)

_REGISTRY: dict = {
    "lotka-volterra": builtin_lotka_volterra,
    "three-compartment": builtin_three_compartment,
}

_DEFAULT_SPACES = {
    "lotka-volterra": LOTKA_VOLTERRA_SPACE,
    "three-compartment": THREE_COMPARTMENT_SPACE,
}


def register_model(name: str, factory: Callable[[], DynamicalModel]) -> None:
    """Register a user model factory for lookup by name."""
    if not callable(factory):
        raise TypeError("factory must be callable")
    _REGISTRY[name] = factory


def get_model(name: str) -> DynamicalModel:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise KeyError(f"unknown model {name!r} (known: {known})") from None
    return factory()


def default_space(name: str) -> ParameterSpace:
    """Case-study parameter box for a built-in model name."""
    try:
        return _DEFAULT_SPACES[name]
    except KeyError:
        raise KeyError(f"no default parameter space for model {name!r}") from None
