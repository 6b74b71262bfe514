"""Command-line entry point.

Subcommands: simulate, design, estimate, bench, export-train-data,
import-attention. Every command takes an INI-style config file, validates
it completely before doing any work, and records a manifest sufficient to
reproduce the run. Exit codes: 0 success, 2 config error, 3 numeric
failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import io as oio
from .bench import BenchConfig, MethodSpec, emit_report, run_benchmark
from .design import e_optimal_weights, rank_times, select_top_n
from .eor import EorConfig, eor_design
from .errors import (
    AllStartsFailed,
    ConfigError,
    DidNotConverge,
    GridMismatch,
    NonFiniteState,
    OdesignError,
    TooManyFailures,
)
from .estimate import least_squares_estimate
from .integrate import add_noise, full_state_record, integrate_with_sensitivities, observe
from .models import DynamicalModel, ParameterSpace, TimeGrid, default_space, get_model

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_KNOWN_KEYS = {
    "model": {"name"},
    "grid": {"t_start", "t_end", "count"},
    "space": {"lower", "upper"},
    "noise": {"sigma"},
    "design": {"n_points", "n_draws", "tol", "max_iter"},
    "estimator": {"starts", "substeps"},
    "bench": {"n_datasets", "methods"},
    "run": {"seed", "threads"},
    "output": {"dir"},
}


@dataclass(frozen=True)
class RunConfig:
    model_name: str
    grid: TimeGrid
    space: ParameterSpace
    sigma: float
    n_points: int
    n_draws: int
    tol: float
    max_iter: int
    starts: int
    substeps: int
    n_datasets: int
    methods: list
    seed: int
    threads: int
    out_dir: str

    def model(self) -> DynamicalModel:
        return get_model(self.model_name)


def _get(parser, section, key, cast, default=None, required=False):
    try:
        raw = parser.get(section, key)
    except (configparser.NoSectionError, configparser.NoOptionError):
        if required:
            raise ConfigError(f"missing required key [{section}] {key}")
        return default
    try:
        return cast(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r} ({exc})") from None


def _vector(raw: str) -> np.ndarray:
    return np.array([float(v) for v in raw.replace(",", " ").split()])


def load_config(path: str) -> RunConfig:
    """Parse and fully validate a run configuration.

    Unknown sections or keys are rejected, and every downstream invariant
    (grid shape, box bounds, counts) is checked here so commands fail fast
    before any computation starts.
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser.options(section):
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown key [{section}] {key}")

    name = _get(parser, "model", "name", str, required=True)
    try:
        model = get_model(name)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None

    t_start = _get(parser, "grid", "t_start", float, required=True)
    t_end = _get(parser, "grid", "t_end", float, required=True)
    count = _get(parser, "grid", "count", int, required=True)
    try:
        grid = TimeGrid(t_start, t_end, count)
    except ValueError as exc:
        raise ConfigError(f"bad [grid]: {exc}") from None

    lower = _get(parser, "space", "lower", _vector)
    upper = _get(parser, "space", "upper", _vector)
    if (lower is None) != (upper is None):
        raise ConfigError("[space] needs both lower and upper (or neither)")
    if lower is None:
        try:
            space = default_space(name)
        except KeyError:
            raise ConfigError(
                f"model {name!r} has no default parameter space; set [space]"
            ) from None
    else:
        try:
            space = ParameterSpace(lower=lower, upper=upper)
        except ValueError as exc:
            raise ConfigError(f"bad [space]: {exc}") from None
    if space.dim != model.dim_param:
        raise ConfigError(
            f"[space] has {space.dim} coordinates, model {name!r} expects {model.dim_param}"
        )

    sigma = _get(parser, "noise", "sigma", float, default=1.0)
    if sigma < 0:
        raise ConfigError("[noise] sigma must be nonnegative")

    n_points = _get(parser, "design", "n_points", int, default=5)
    if not 1 <= n_points <= grid.count:
        raise ConfigError("[design] n_points must be in 1..grid count")
    n_draws = _get(parser, "design", "n_draws", int, default=1000)
    if n_draws < 1:
        raise ConfigError("[design] n_draws must be positive")
    tol = _get(parser, "design", "tol", float, default=1e-6)
    if tol <= 0:
        raise ConfigError("[design] tol must be positive")
    max_iter = _get(parser, "design", "max_iter", int, default=50_000)
    if max_iter < 1:
        raise ConfigError("[design] max_iter must be positive")

    starts = _get(parser, "estimator", "starts", int, default=20)
    if starts < 1:
        raise ConfigError("[estimator] starts must be positive")
    substeps = _get(parser, "estimator", "substeps", int, default=10)
    if substeps < 1:
        raise ConfigError("[estimator] substeps must be positive")

    n_datasets = _get(parser, "bench", "n_datasets", int, default=1000)
    if n_datasets < 2:
        raise ConfigError("[bench] n_datasets must be >= 2")
    methods = _get(parser, "bench", "methods", str, default="random,e-optimal,eor")
    method_tokens = [tok.strip() for tok in methods.split(",") if tok.strip()]
    if not method_tokens:
        raise ConfigError("[bench] methods must not be empty")
    for tok in method_tokens:
        if tok in ("random", "e-optimal", "eor"):
            continue
        if tok.startswith("external:"):
            body = tok[len("external:"):]
            if "=" not in body:
                raise ConfigError(
                    f"[bench] external method must be external:LABEL=FILE, got {tok!r}"
                )
            continue
        raise ConfigError(f"[bench] unknown method {tok!r}")

    seed = _get(parser, "run", "seed", int, default=0)
    threads = _get(parser, "run", "threads", int, default=1)
    if threads < 0:
        raise ConfigError("[run] threads must be >= 0 (0 = auto)")
    out_dir = _get(parser, "output", "dir", str, default="out")

    return RunConfig(
        model_name=name,
        grid=grid,
        space=space,
        sigma=sigma,
        n_points=n_points,
        n_draws=n_draws,
        tol=tol,
        max_iter=max_iter,
        starts=starts,
        substeps=substeps,
        n_datasets=n_datasets,
        methods=method_tokens,
        seed=seed,
        threads=threads,
        out_dir=out_dir,
    )


def _config_manifest(cfg: RunConfig, command: str, extra: dict | None = None) -> dict:
    pairs = {
        "command": command,
        "model": cfg.model_name,
        "grid": f"{oio.fmt(cfg.grid.t_start)} {oio.fmt(cfg.grid.t_end)} {cfg.grid.count}",
        "space_lower": " ".join(oio.fmt(v) for v in cfg.space.lower),
        "space_upper": " ".join(oio.fmt(v) for v in cfg.space.upper),
        "sigma": oio.fmt(cfg.sigma),
        "n_points": cfg.n_points,
        "n_draws": cfg.n_draws,
        "tol": oio.fmt(cfg.tol),
        "max_iter": cfg.max_iter,
        "starts": cfg.starts,
        "substeps": cfg.substeps,
        "seed": cfg.seed,
    }
    if extra:
        pairs.update(extra)
    return pairs


def _parse_theta(cfg: RunConfig, raw: str) -> np.ndarray:
    if raw == "sample":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
        return cfg.space.sample(rng)
    theta = _vector(raw)
    if theta.size != cfg.model().dim_param:
        raise ConfigError(
            f"theta needs {cfg.model().dim_param} values, got {theta.size}"
        )
    return theta


def cmd_simulate(cfg: RunConfig, theta_raw: str) -> None:
    model = cfg.model()
    theta = _parse_theta(cfg, theta_raw)
    aug = integrate_with_sensitivities(model, theta, cfg.grid, cfg.substeps)
    series, _ = observe(aug, model)
    noisy = add_noise(series, cfg.sigma, cfg.seed)
    os.makedirs(cfg.out_dir, exist_ok=True)
    oio.write_trajectory_csv(os.path.join(cfg.out_dir, "trajectory.csv"), cfg.grid, aug.states)
    oio.write_observations_csv(
        os.path.join(cfg.out_dir, "observations.csv"), cfg.grid, noisy.values
    )
    oio.write_kv(
        os.path.join(cfg.out_dir, "manifest.txt"),
        _config_manifest(cfg, "simulate", {"theta": " ".join(oio.fmt(v) for v in theta)}),
    )


def cmd_design(cfg: RunConfig, method: str, theta_raw: str | None) -> None:
    model = cfg.model()
    os.makedirs(cfg.out_dir, exist_ok=True)
    extra = {"method": method}
    if method == "eor":
        result = eor_design(
            model,
            cfg.space,
            cfg.grid,
            EorConfig(
                n_draws=cfg.n_draws,
                n_points=cfg.n_points,
                tol=cfg.tol,
                max_iter=cfg.max_iter,
                rng_seed=cfg.seed,
                substeps=cfg.substeps,
            ),
        )
        points = result.selected_times
        oio.write_eor_csv(
            os.path.join(cfg.out_dir, "average_ranks.csv"),
            cfg.grid,
            result.average_ranks,
            points,
        )
        extra["failed_draws"] = result.failed_draws
    elif method == "e-optimal-at":
        if theta_raw is None:
            raise ConfigError("e-optimal-at needs --theta")
        theta = _parse_theta(cfg, theta_raw)
        aug = integrate_with_sensitivities(model, theta, cfg.grid, cfg.substeps)
        weights = e_optimal_weights(
            full_state_record(aug), tol=cfg.tol, max_iter=cfg.max_iter
        )
        ranks = rank_times(weights)
        points = select_top_n(ranks, cfg.grid, cfg.n_points)
        oio.write_design_csv(
            os.path.join(cfg.out_dir, "design_weights.csv"),
            cfg.grid,
            weights.lam,
            ranks.ranks,
        )
        with open(os.path.join(cfg.out_dir, "design_diagnostics.txt"), "w") as f:
            f.write(weights.diagnostics_text())
        extra["theta"] = " ".join(oio.fmt(v) for v in theta)
    elif method == "random":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
        idx = np.sort(rng.choice(cfg.grid.count, size=cfg.n_points, replace=False))
        points = cfg.grid.points[idx]
    else:
        raise ConfigError(f"unknown design method {method!r}")
    oio.write_points_csv(os.path.join(cfg.out_dir, "selected_points.csv"), points)
    oio.write_kv(
        os.path.join(cfg.out_dir, "manifest.txt"), _config_manifest(cfg, "design", extra)
    )


def cmd_estimate(cfg: RunConfig, data_csv: str, data_manifest: str) -> None:
    dataset = oio.read_dataset(data_csv, data_manifest)
    model = get_model(dataset.model_name or cfg.model_name)
    result = least_squares_estimate(
        model,
        cfg.space,
        dataset,
        starts=cfg.starts,
        rng_seed=cfg.seed,
        substeps=cfg.substeps,
    )
    os.makedirs(cfg.out_dir, exist_ok=True)
    pairs = {
        "theta_hat": " ".join(oio.fmt(v) for v in result.theta_hat),
        "sse": oio.fmt(result.sse),
        "starts_used": result.starts_used,
        "converged": str(result.converged).lower(),
    }
    if dataset.truth is not None:
        from .estimate import estimation_error

        pairs["error"] = oio.fmt(estimation_error(result.theta_hat, dataset.truth))
        pairs["truth"] = " ".join(oio.fmt(v) for v in dataset.truth)
    oio.write_kv(os.path.join(cfg.out_dir, "estimate.txt"), pairs)
    oio.write_kv(
        os.path.join(cfg.out_dir, "manifest.txt"),
        _config_manifest(cfg, "estimate", {"data": data_csv}),
    )


def _build_methods(cfg: RunConfig) -> list:
    methods = []
    for tok in cfg.methods:
        if tok == "random":
            methods.append(MethodSpec(kind="random", label="Random"))
        elif tok == "e-optimal":
            methods.append(MethodSpec(kind="e-optimal", label="E-optimal"))
        elif tok == "eor":
            result = eor_design(
                cfg.model(),
                cfg.space,
                cfg.grid,
                EorConfig(
                    n_draws=cfg.n_draws,
                    n_points=cfg.n_points,
                    tol=cfg.tol,
                    max_iter=cfg.max_iter,
                    rng_seed=cfg.seed,
                    substeps=cfg.substeps,
                ),
            )
            methods.append(MethodSpec(kind="eor", label="EOR", eor_result=result))
        else:
            body = tok[len("external:"):]
            label, _, path = body.partition("=")
            if not os.path.exists(path):
                raise ConfigError(f"external points file not found: {path}")
            points = oio.read_points_csv(path)
            methods.append(MethodSpec(kind="external", label=label, points=points))
    return methods


def cmd_bench(cfg: RunConfig) -> None:
    methods = _build_methods(cfg)
    bench_cfg = BenchConfig(
        model_name=cfg.model_name,
        space=cfg.space,
        grid=cfg.grid,
        n_points=cfg.n_points,
        n_datasets=cfg.n_datasets,
        noise_sigma=cfg.sigma,
        rng_seed=cfg.seed,
        substeps=cfg.substeps,
        estimator_starts=cfg.starts,
        design_tol=cfg.tol,
        design_max_iter=cfg.max_iter,
        threads=cfg.threads,
    )
    report = run_benchmark(bench_cfg, methods)
    emit_report(report, cfg.out_dir)


def cmd_export_train_data(cfg: RunConfig, count: int) -> None:
    model = cfg.model()
    grid = cfg.grid
    q = model.dim_obs
    X = np.empty((count, grid.count * q))
    Y = np.empty((count, model.dim_param))
    made = 0
    attempt = 0
    while made < count:
        if attempt >= 10 * count:
            raise TooManyFailures("too many integration blow-ups during export")
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0, attempt)))
        )
        theta = cfg.space.sample(rng)
        attempt += 1
        try:
            aug = integrate_with_sensitivities(model, theta, grid, cfg.substeps)
        except NonFiniteState:
            continue
        series, _ = observe(aug, model)
        if cfg.sigma > 0:
            noise_seed = int(
                np.random.Generator(
                    np.random.PCG64(
                        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1, made))
                    )
                ).integers(0, 2**63 - 1)
            )
            series = add_noise(series, cfg.sigma, noise_seed)
        X[made] = series.values.reshape(-1)
        Y[made] = theta
        made += 1
    os.makedirs(cfg.out_dir, exist_ok=True)
    oio.write_xy_archive(
        os.path.join(cfg.out_dir, "X.csv"), os.path.join(cfg.out_dir, "Y.csv"), X, Y
    )
    oio.write_kv(
        os.path.join(cfg.out_dir, "manifest.txt"),
        _config_manifest(
            cfg,
            "export-train-data",
            {"count": count, "n_outputs": q, "columns": grid.count * q},
        ),
    )


def cmd_import_attention(cfg: RunConfig, weights_file: str) -> None:
    times, weights = oio.read_attention_csv(weights_file, cfg.grid)
    order = np.argsort(-weights, kind="stable")  # ties resolve earliest-first
    chosen = np.sort(order[: cfg.n_points])
    points = cfg.grid.points[chosen]
    os.makedirs(cfg.out_dir, exist_ok=True)
    oio.write_points_csv(os.path.join(cfg.out_dir, "selected_points.csv"), points)
    oio.write_kv(
        os.path.join(cfg.out_dir, "manifest.txt"),
        _config_manifest(cfg, "import-attention", {"weights_file": weights_file}),
    )


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odesign",
        description="Optimal sampling-time design for ODE parameter estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--seed", type=int, default=None, help="override [run] seed")
        p.add_argument("--out", default=None, help="override [output] dir")

    p = sub.add_parser("simulate", help="integrate a model and write noisy observations")
    common(p)
    p.add_argument("--theta", default="sample", help="'sample' or explicit values")

    p = sub.add_parser("design", help="select sampling time points")
    common(p)
    p.add_argument("--method", required=True, choices=["eor", "e-optimal-at", "random"])
    p.add_argument("--theta", default=None, help="parameters for e-optimal-at")

    p = sub.add_parser("estimate", help="least-squares fit from a dataset CSV")
    common(p)
    p.add_argument("--data", required=True, help="dataset CSV (t,y1..)")
    p.add_argument("--data-manifest", required=True, help="dataset manifest")

    p = sub.add_parser("bench", help="run the method-comparison benchmark")
    common(p)
    p.add_argument("--threads", type=int, default=None, help="override [run] threads")

    p = sub.add_parser("export-train-data", help="write X.csv/Y.csv training archive")
    common(p)
    p.add_argument("--count", type=int, required=True, help="number of simulated rows")

    p = sub.add_parser("import-attention", help="turn attention weights into points")
    common(p)
    p.add_argument("--weights", required=True, help="attention CSV (t,weight)")

    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = RunConfig(**{**cfg.__dict__, "seed": args.seed})
        if args.out is not None:
            cfg = RunConfig(**{**cfg.__dict__, "out_dir": args.out})
        if getattr(args, "threads", None) is not None:
            cfg = RunConfig(**{**cfg.__dict__, "threads": args.threads})

        if args.command == "simulate":
            cmd_simulate(cfg, args.theta)
        elif args.command == "design":
            cmd_design(cfg, args.method, args.theta)
        elif args.command == "estimate":
            cmd_estimate(cfg, args.data, args.data_manifest)
        elif args.command == "bench":
            cmd_bench(cfg)
        elif args.command == "export-train-data":
            cmd_export_train_data(cfg, args.count)
        elif args.command == "import-attention":
            cmd_import_attention(cfg, args.weights)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteState, TooManyFailures, DidNotConverge, AllStartsFailed, GridMismatch) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RuntimeError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except OdesignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
