"""Information matrices and minimum-eigenvalue optimal design weights.

Each candidate time point contributes a rank-deficient information atom
(the outer product of its observed-output sensitivity rows). The design
problem picks a probability vector over candidates maximizing the smallest
eigenvalue of the weighted atom sum; a Frank-Wolfe iteration solves it with
a computable optimality gap, and the resulting weights are turned into time
point rankings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import _kernels
from .errors import DidNotConverge
from .models import TimeGrid

__all__ = [
    "SensitivityRecord",
    "FisherInformation",
    "DesignWeights",
    "RankVector",
    "atomic_information",
    "fim_from_weights",
    "min_eigenpair",
    "e_optimal_weights",
    "rank_times",
    "select_top_n",
]

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 50_000

#: Weight floor mixed into returned designs: every candidate keeps a tiny
#: weight proportional to the inverse of its optimality slack, mirroring the
#: interior solutions of barrier methods. Rankings then order off-support
#: candidates by how close they are to being informative instead of lumping
#: them into one tie. Set to 0.0 to get the bare sparse solution.
DEFAULT_TAIL_EPS = 1e-9


@dataclass(frozen=True)
class SensitivityRecord:
    """Observed-output sensitivity blocks, one (q, m) block per grid point."""

    grid: TimeGrid
    rows: np.ndarray  # (N, q, m)

    def __post_init__(self):
        r = np.asarray(self.rows, dtype=float)
        if r.ndim == 2:  # allow (N, m) shorthand for single-output models
            r = r[:, None, :]
        object.__setattr__(self, "rows", r)
        if r.shape[0] != self.grid.count:
            raise ValueError("row count must equal grid.count")
        if not np.isfinite(r).all():
            raise ValueError("sensitivity rows must be finite")

    @property
    def n_outputs(self) -> int:
        return self.rows.shape[1]

    @property
    def n_params(self) -> int:
        return self.rows.shape[2]


@dataclass(frozen=True)
class FisherInformation:
    """Symmetric positive-semidefinite information matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", a)
        scale = max(np.abs(a).max(), 1.0)
        if np.abs(a - a.T).max() > 1e-12 * scale:
            raise ValueError("information matrix must be symmetric")
        w = np.linalg.eigvalsh(0.5 * (a + a.T))
        if w.min() < -1e-10 * max(np.linalg.norm(a), 1.0):
            raise ValueError("information matrix must be positive semidefinite")

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix).min())


@dataclass(frozen=True)
class DesignWeights:
    """Simplex weights over candidate time points with solver diagnostics.

    ``gap`` is the final Frank-Wolfe gap measured on the rescaled problem
    (atoms divided by the smallest eigenvalue of the full-grid information
    matrix), where the optimum lies in (0, 1].
    """

    lam: np.ndarray
    t_value: float
    gap: float
    iterations: int
    converged: bool
    rank_deficient: bool
    checkpoint_gaps: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        object.__setattr__(self, "lam", lam)
        if (lam < 0).any():
            raise ValueError("design weights must be nonnegative")
        if abs(lam.sum() - 1.0) > 1e-9:
            raise ValueError("design weights must sum to one")

    def diagnostics_text(self) -> str:
        lines = [
            f"t_value = {self.t_value:.17g}",
            f"gap = {self.gap:.17g}",
            f"iterations = {self.iterations}",
            f"converged = {str(self.converged).lower()}",
            f"rank_deficient = {str(self.rank_deficient).lower()}",
        ]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RankVector:
    """Mid-rank positions, 1 = most informative time point."""

    ranks: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ranks", np.asarray(self.ranks, dtype=float))


def atomic_information(record: SensitivityRecord, i: int) -> np.ndarray:
    """Information atom of time point i: B_i^T B_i for its (q, m) block."""
    if not 0 <= i < record.grid.count:
        raise IndexError("time index out of range")
    B = record.rows[i]
    return B.T @ B


def fim_from_weights(record: SensitivityRecord, weights: DesignWeights) -> FisherInformation:
    """Weighted information matrix sum(lam_i * M_i)."""
    M = np.einsum("i,iqa,iqb->ab", weights.lam, record.rows, record.rows)
    return FisherInformation(matrix=0.5 * (M + M.T))


def min_eigenpair(A: np.ndarray, max_sweeps: int = 60):
    """Smallest eigenvalue and unit eigenvector via cyclic Jacobi rotations.

    The input is symmetrized internally; the eigenpair residual satisfies
    ||A v - mu v|| <= 1e-10 * max(||A||_F, 1).
    """
    A = np.ascontiguousarray(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    mu, v, ok = _kernels.min_eigpair(A, max_sweeps)
    if not ok:
        raise DidNotConverge("Jacobi sweeps exhausted; matrix may be pathological")
    return float(mu), v


def e_optimal_weights(
    record: SensitivityRecord,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    polish: bool = True,
    tail_eps: float = DEFAULT_TAIL_EPS,
) -> DesignWeights:
    """Solve the minimum-eigenvalue design problem over the simplex.

    Runs Frank-Wolfe (2/(k+2) steps toward the best vertex) on atoms
    rescaled by the smallest eigenvalue of the full-grid information matrix
    and stops once the Frank-Wolfe gap on that scale drops to ``tol`` (or
    after ``max_iter`` iterations). ``polish`` enables the active-set Newton
    refinement that finishes the sublinear Frank-Wolfe tail in a few outer
    cycles; the reported gap is always measured at the returned point. The
    returned weights satisfy the simplex constraints exactly; ``t_value``
    is the attained smallest eigenvalue in original units. A singular
    full-grid information matrix is flagged ``rank_deficient`` and the
    design is still returned.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    rows = record.rows
    atoms = np.ascontiguousarray(np.einsum("iqa,iqb->iab", rows, rows))
    lam, t_value, gap, iters, converged, rank_def, checks = _kernels.fw_atoms(
        atoms, tol, max_iter, polish, tail_eps
    )
    lam = np.maximum(lam, 0.0)
    lam /= lam.sum()
    return DesignWeights(
        lam=lam,
        t_value=float(t_value),
        gap=float(gap),
        iterations=int(iters),
        converged=bool(converged),
        rank_deficient=bool(rank_def),
        checkpoint_gaps=np.asarray(checks, dtype=float),
    )


def rank_times(weights: DesignWeights) -> RankVector:
    """Descending-weight mid-ranks: rank 1 is the largest weight, ties share
    the average of the positions they span."""
    return RankVector(ranks=rankdata(-weights.lam, method="average"))


def select_top_n(ranks: RankVector, grid: TimeGrid, n: int) -> np.ndarray:
    """The n grid times with the smallest rank numbers, ascending in time.

    Rank ties at the selection boundary resolve toward earlier times, so the
    selection is deterministic.
    """
    r = ranks.ranks
    if n < 1 or n > r.size:
        raise ValueError("n must be in 1..N")
    if r.size != grid.count:
        raise ValueError("rank vector length must equal grid.count")
    order = np.argsort(r, kind="stable")  # stable: earlier index wins ties
    chosen = np.sort(order[:n])
    return grid.points[chosen]
