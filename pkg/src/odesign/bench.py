"""Head-to-head comparison of sampling-point selection methods.

For each synthetic dataset (a uniform parameter draw plus noisy full-grid
observations), every method picks its sampling times, the parameters are
re-estimated from those samples alone, and the estimation errors are
compared across methods with summary statistics and all-pairs studentized
range tests. Randomness is derived per (dataset, method) from the master
seed, so results do not depend on worker count or method order.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .design import e_optimal_weights, rank_times, select_top_n
from .eor import EorResult
from .errors import AllStartsFailed
from .estimate import Dataset, estimation_error, least_squares_estimate
from .integrate import add_noise, full_state_record, integrate_with_sensitivities, observe
from .models import DynamicalModel, ParameterSpace, TimeGrid, get_model
from .stats import DF_INFINITE_CUTOFF, srange_cdf, srange_quantile

__all__ = [
    "MethodSpec",
    "BenchConfig",
    "SummaryStats",
    "TukeyRecord",
    "BenchReport",
    "run_benchmark",
    "summarize",
    "tukey_hsd",
    "emit_report",
    "DegenerateVarianceWarning",
]

KIND_RANDOM = "random"
KIND_E_OPTIMAL = "e-optimal"
KIND_EOR = "eor"
KIND_EXTERNAL = "external"

_KIND_CODES = {KIND_RANDOM: 1, KIND_E_OPTIMAL: 2, KIND_EOR: 3, KIND_EXTERNAL: 4}


class DegenerateVarianceWarning(UserWarning):
    """All within-group variance vanished while group means differ."""


@dataclass(frozen=True)
class MethodSpec:
    """One sampling-point selection method entering the comparison.

    ``random`` draws fresh points per dataset; ``e-optimal`` solves the
    design problem at each dataset's true parameters (an oracle baseline);
    ``eor`` and ``external`` use one fixed point set for every dataset,
    supplied via ``eor_result`` or ``points``.
    """

    kind: str
    label: str = ""
    points: np.ndarray | None = None
    eor_result: EorResult | None = None

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown method kind {self.kind!r}")
        if not self.label:
            object.__setattr__(self, "label", self.kind)
        if self.kind == KIND_EXTERNAL:
            if self.points is None:
                raise ValueError("external method needs explicit points")
            object.__setattr__(
                self, "points", np.sort(np.asarray(self.points, dtype=float))
            )
        if self.kind == KIND_EOR and self.eor_result is None and self.points is None:
            raise ValueError("eor method needs a precomputed design")

    def fixed_points(self) -> np.ndarray | None:
        if self.kind == KIND_EXTERNAL:
            return self.points
        if self.kind == KIND_EOR:
            if self.points is not None:
                return np.sort(np.asarray(self.points, dtype=float))
            return np.sort(np.asarray(self.eor_result.selected_times, dtype=float))
        return None


@dataclass(frozen=True)
class BenchConfig:
    model_name: str
    space: ParameterSpace
    grid: TimeGrid
    n_points: int = 5
    n_datasets: int = 1000
    noise_sigma: float = 1.0
    rng_seed: int = 0
    substeps: int = 10
    estimator_starts: int = 20
    design_tol: float = 1e-6
    design_max_iter: int = 50_000
    threads: int = 1
    max_missing_frac: float = 0.01

    def __post_init__(self):
        if self.n_datasets < 2:
            raise ValueError("n_datasets must be >= 2 for the statistics")
        if self.n_points < 1 or self.n_points > self.grid.count:
            raise ValueError("n_points must be in 1..grid.count")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


@dataclass(frozen=True)
class SummaryStats:
    """Per-method seven-number summary of the error sample."""

    labels: list
    mean: np.ndarray
    std: np.ndarray
    min: np.ndarray
    q25: np.ndarray
    median: np.ndarray
    q75: np.ndarray
    max: np.ndarray

    ROWS = ("mean", "std", "min", "q25", "median", "q75", "max")


@dataclass(frozen=True)
class TukeyRecord:
    group1: str
    group2: str
    meandiff: float
    p_adj: float
    lower: float
    upper: float
    reject: bool


@dataclass(frozen=True)
class BenchReport:
    config: BenchConfig
    labels: list
    errors: dict  # label -> (n_datasets,) error vector with NaN for missing
    selected_points: dict  # label -> (n_datasets, n_points)
    summary: SummaryStats
    tukey: list
    missing: dict = field(default_factory=dict)


def _stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.PCG64(ss))


def _truth_for(cfg: BenchConfig, d: int) -> np.ndarray:
    return cfg.space.sample(_stream(cfg.rng_seed, 0, d))


def _noise_seed(cfg: BenchConfig, d: int) -> int:
    return int(_stream(cfg.rng_seed, 1, d).integers(0, 2**63 - 1))


def _method_points(cfg, model, method, truth, aug, d):
    fixed = method.fixed_points()
    if fixed is not None:
        return fixed
    if method.kind == KIND_RANDOM:
        rng = _stream(cfg.rng_seed, 2, d, _KIND_CODES[method.kind])
        idx = np.sort(rng.choice(cfg.grid.count, size=cfg.n_points, replace=False))
        return cfg.grid.points[idx]
    # e-optimal oracle at the dataset's true parameters
    record = full_state_record(aug)
    weights = e_optimal_weights(
        record, tol=cfg.design_tol, max_iter=cfg.design_max_iter
    )
    return select_top_n(rank_times(weights), cfg.grid, cfg.n_points)


def _run_cell(cfg, model, method, truth, noisy_values, aug, d):
    points = _method_points(cfg, model, method, truth, aug, d)
    idx = np.array([cfg.grid.index_of(t) for t in points], dtype=np.int64)
    dataset = Dataset.from_grid(
        cfg.grid,
        idx,
        noisy_values[idx],
        truth=truth,
        model_name=cfg.model_name,
        noise_sigma=cfg.noise_sigma,
    )
    est_seed = int(
        _stream(cfg.rng_seed, 3, d, _KIND_CODES[method.kind]).integers(0, 2**63 - 1)
    )
    try:
        result = least_squares_estimate(
            model,
            cfg.space,
            dataset,
            starts=cfg.estimator_starts,
            rng_seed=est_seed,
            substeps=cfg.substeps,
        )
    except AllStartsFailed:
        return points, np.nan
    return points, estimation_error(result.theta_hat, truth)


def _run_dataset(args):
    cfg, methods, d = args
    model = get_model(cfg.model_name)
    truth = _truth_for(cfg, d)
    aug = integrate_with_sensitivities(model, truth, cfg.grid, cfg.substeps)
    series, _ = observe(aug, model)
    noisy = add_noise(series, cfg.noise_sigma, _noise_seed(cfg, d))
    out = []
    for method in methods:
        out.append(_run_cell(cfg, model, method, truth, noisy.values, aug, d))
    return d, out


def run_benchmark(cfg: BenchConfig, methods: list) -> BenchReport:
    """Fig-style comparison: simulate datasets, apply methods, estimate, score.

    Methods with per-dataset randomness get streams keyed by (dataset,
    method kind), so adding or removing a method never perturbs the others,
    and identical method specifications produce identical error vectors.
    Missing cells (every estimator start diverged) are excluded from the
    statistics; more than ``max_missing_frac`` missing aborts.
    """
    if not methods:
        raise ValueError("at least one method required")
    labels = [m.label for m in methods]
    if len(set(labels)) != len(labels):
        raise ValueError("method labels must be unique")
    model = get_model(cfg.model_name)
    for m in methods:
        fixed = m.fixed_points()
        if fixed is not None:
            if len(fixed) != cfg.n_points:
                raise ValueError(
                    f"method {m.label!r} supplies {len(fixed)} points, "
                    f"config wants {cfg.n_points}"
                )
            for t in fixed:
                cfg.grid.index_of(t)  # raises off-grid

    errors = {lab: np.full(cfg.n_datasets, np.nan) for lab in labels}
    selected = {
        lab: np.full((cfg.n_datasets, cfg.n_points), np.nan) for lab in labels
    }
    tasks = [(cfg, methods, d) for d in range(cfg.n_datasets)]
    if cfg.threads == 1:
        results = map(_run_dataset, tasks)
    else:
        workers = cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_run_dataset, tasks, chunksize=8)
    for d, per_method in results:
        for method, (points, err) in zip(methods, per_method):
            errors[method.label][d] = err
            selected[method.label][d] = points
    if cfg.threads != 1:
        pool.shutdown()

    missing = {lab: int(np.isnan(errors[lab]).sum()) for lab in labels}
    total_missing = sum(missing.values())
    if total_missing > cfg.max_missing_frac * cfg.n_datasets * len(methods):
        raise RuntimeError(
            f"{total_missing} missing cells exceed the "
            f"{cfg.max_missing_frac:.0%} budget"
        )
    clean = {lab: errors[lab][~np.isnan(errors[lab])] for lab in labels}
    summary = summarize(clean)
    tukey = tukey_hsd(clean, alpha=0.05) if len(labels) >= 2 else []
    return BenchReport(
        config=cfg,
        labels=labels,
        errors=errors,
        selected_points=selected,
        summary=summary,
        tukey=tukey,
        missing=missing,
    )


def summarize(errors: dict) -> SummaryStats:
    """Seven-number summary per method; quartiles use inclusive linear
    interpolation and std uses the n-1 denominator."""
    labels = list(errors)
    cols = {name: [] for name in SummaryStats.ROWS}
    for lab in labels:
        x = np.asarray(errors[lab], dtype=float)
        if x.size < 2:
            raise ValueError("need at least 2 values per method")
        cols["mean"].append(x.mean())
        cols["std"].append(x.std(ddof=1))
        cols["min"].append(x.min())
        cols["q25"].append(np.quantile(x, 0.25))
        cols["median"].append(np.quantile(x, 0.50))
        cols["q75"].append(np.quantile(x, 0.75))
        cols["max"].append(x.max())
    return SummaryStats(
        labels=labels, **{k: np.array(v) for k, v in cols.items()}
    )


def tukey_hsd(errors: dict, alpha: float = 0.05) -> list:
    """All unordered pairwise mean comparisons via the studentized range.

    Pooled within-group variance feeds half-widths q * sqrt(MSW/2 *
    (1/n_i + 1/n_j)) (the unequal-size generalization; equal sizes reduce
    to the familiar sqrt(MSW/n) form). Each record satisfies
    reject == (0 outside the interval) == (p_adj < alpha).
    """
    labels = list(errors)
    k = len(labels)
    if k < 2:
        raise ValueError("need at least two groups")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    groups = [np.asarray(errors[lab], dtype=float) for lab in labels]
    sizes = np.array([g.size for g in groups])
    if (sizes < 2).any():
        raise ValueError("each group needs at least 2 values")
    means = np.array([g.mean() for g in groups])
    df = int(sizes.sum() - k)
    ssw = sum(((g - g.mean()) ** 2).sum() for g in groups)
    msw = ssw / df

    records = []
    if msw <= 0.0:
        if np.ptp(means) > 0:
            warnings.warn(
                "zero within-group variance with unequal means",
                DegenerateVarianceWarning,
            )
        for i in range(k):
            for j in range(i + 1, k):
                md = means[i] - means[j]
                if md == 0.0:
                    records.append(TukeyRecord(labels[i], labels[j], 0.0, 1.0, 0.0, 0.0, False))
                else:
                    records.append(
                        TukeyRecord(labels[i], labels[j], md, 0.0, md, md, True)
                    )
        return records

    use_df = np.inf if df > DF_INFINITE_CUTOFF else df
    qcrit = srange_quantile(alpha, k, use_df)
    for i in range(k):
        for j in range(i + 1, k):
            md = means[i] - means[j]
            se = np.sqrt(msw / 2.0 * (1.0 / sizes[i] + 1.0 / sizes[j]))
            half = qcrit * se
            stat = abs(md) / se
            p = 1.0 - srange_cdf(stat, k, use_df)
            p = min(max(p, 0.0), 1.0)
            reject = bool(p < alpha)
            records.append(
                TukeyRecord(
                    group1=labels[i],
                    group2=labels[j],
                    meandiff=md,
                    p_adj=p,
                    lower=md - half,
                    upper=md + half,
                    reject=reject,
                )
            )
    return records


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def emit_report(report: BenchReport, out_dir: str) -> dict:
    """Write summary.csv, tukey.csv, errors_long.csv, and manifest.txt.

    Floats carry 17 significant digits so files round-trip bit-exactly.
    Returns the mapping of logical name to written path.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    path = os.path.join(out_dir, "summary.csv")
    with open(path, "w") as f:
        f.write("stat," + ",".join(report.labels) + "\n")
        s = report.summary
        for row in SummaryStats.ROWS:
            vals = getattr(s, row)
            f.write(row + "," + ",".join(_fmt(v) for v in vals) + "\n")
    paths["summary"] = path

    path = os.path.join(out_dir, "tukey.csv")
    with open(path, "w") as f:
        f.write("group1,group2,meandiff,p_adj,lower,upper,reject\n")
        for r in report.tukey:
            f.write(
                f"{r.group1},{r.group2},{_fmt(r.meandiff)},{_fmt(r.p_adj)},"
                f"{_fmt(r.lower)},{_fmt(r.upper)},{'true' if r.reject else 'false'}\n"
            )
    paths["tukey"] = path

    path = os.path.join(out_dir, "errors_long.csv")
    with open(path, "w") as f:
        f.write("method,dataset,error\n")
        for lab in report.labels:
            vec = report.errors[lab]
            for d in range(vec.size):
                if np.isnan(vec[d]):
                    continue
                f.write(f"{lab},{d},{_fmt(vec[d])}\n")
    paths["errors_long"] = path

    path = os.path.join(out_dir, "manifest.txt")
    cfg = report.config
    with open(path, "w") as f:
        f.write(f"model = {cfg.model_name}\n")
        f.write(f"grid = {_fmt(cfg.grid.t_start)} {_fmt(cfg.grid.t_end)} {cfg.grid.count}\n")
        f.write(f"space_lower = {' '.join(_fmt(v) for v in cfg.space.lower)}\n")
        f.write(f"space_upper = {' '.join(_fmt(v) for v in cfg.space.upper)}\n")
        f.write(f"n_points = {cfg.n_points}\n")
        f.write(f"n_datasets = {cfg.n_datasets}\n")
        f.write(f"noise_sigma = {_fmt(cfg.noise_sigma)}\n")
        f.write(f"rng_seed = {cfg.rng_seed}\n")
        f.write(f"substeps = {cfg.substeps}\n")
        f.write(f"estimator_starts = {cfg.estimator_starts}\n")
        f.write(f"methods = {','.join(report.labels)}\n")
        for lab in report.labels:
            f.write(f"missing_{lab} = {report.missing.get(lab, 0)}\n")
    paths["manifest"] = path
    return paths
