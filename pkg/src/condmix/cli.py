"""Command-line interface: run, evaluate, export, forward-solve, sweep, list-examples."""

from __future__ import annotations

import argparse
import itertools
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import forward_fd, metrics
from .config import ConfigError, RunConfig, bundled_config_names, resolve_config, serialize_config
from .network import load_params, mlp_forward_batch, project_admissible, save_params
from .optimize import NonFiniteLossError, TrainResult, reconstruction_callable, train
from .problems import EXAMPLE_IDS, fd_solve_fields, make_example

TRACE_HEADER = "epoch,lr,total,data,divergence,boundary,seminorm,tv,rel_error"


def _write_trace(path, trace) -> None:
    with open(path, "w") as fh:
        fh.write(TRACE_HEADER + "\n")
        for row in trace:
            fh.write(
                f"{row.epoch},{row.lr!r},{row.total!r},{row.data!r},{row.divergence!r},"
                f"{row.boundary!r},{row.seminorm!r},{row.tv!r},{row.rel_error!r}\n"
            )


def _save_checkpoint(path, result: TrainResult) -> None:
    from .network import flatten_params

    payload = {
        "example": result.problem_id,
        "variant": result.config.variant,
        "q": {
            "input_dim": result.q_spec.input_dim,
            "layer_widths": list(result.q_spec.layer_widths),
            "output_dim": result.q_spec.output_dim,
            "theta": flatten_params(result.q_params).tolist(),
        },
        "sigma": {
            "input_dim": result.sigma_spec.input_dim,
            "layer_widths": list(result.sigma_spec.layer_widths),
            "output_dim": result.sigma_spec.output_dim,
            "theta": flatten_params(result.sigma_params).tolist(),
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    from .network import MlpSpec, unflatten_params

    with open(path) as fh:
        payload = json.load(fh)

    def restore(block):
        spec = MlpSpec(block["input_dim"], tuple(block["layer_widths"]), block["output_dim"])
        return spec, unflatten_params(spec, np.asarray(block["theta"], dtype=np.float64))

    q_spec, q_params = restore(payload["q"])
    sigma_spec, sigma_params = restore(payload["sigma"])
    return payload["example"], (q_spec, q_params), (sigma_spec, sigma_params)


def _default_slice(problem) -> dict[int, float]:
    if problem.dim <= 2:
        return {}
    return {axis: 0.5 for axis in range(2, problem.dim)}


def _export_fields(problem, q_hat, out_dir: Path, resolution: int) -> None:
    slice_spec = _default_slice(problem)

    def q_err(pts):
        return np.abs(q_hat(pts) - problem.q_true(pts))

    metrics.export_grid(problem.q_true, problem.domain, resolution, out_dir / "qtrue.csv", slice_spec)
    metrics.export_grid(q_hat, problem.domain, resolution, out_dir / "qhat.csv", slice_spec)
    metrics.export_grid(q_err, problem.domain, resolution, out_dir / "qerr.csv", slice_spec)


def _error_report(problem, q_spec, q_params) -> dict:
    q_raw = reconstruction_callable(q_spec, q_params)
    mode, resolution = metrics.default_error_settings(problem.dim)
    report = {
        "e_final": metrics.relative_l2_error(
            q_raw, problem.q_true, problem.domain, bounds=problem.bounds,
            mode=mode, resolution=resolution, apply_projection=True,
        ),
        "e_final_unprojected": metrics.relative_l2_error(
            q_raw, problem.q_true, problem.domain, bounds=problem.bounds,
            mode=mode, resolution=resolution, apply_projection=False,
        ),
        "error_mode": mode,
        "error_resolution": resolution,
    }
    if problem.dim > 2:
        report["e_slice"] = metrics.relative_l2_error_slice(
            q_raw, problem.q_true, problem.domain, _default_slice(problem),
            resolution=128, bounds=problem.bounds, apply_projection=True,
        )
    return report


def run_from_config(cfg: RunConfig, out_dir: Path) -> dict:
    """Train per config, write the run directory, return the metrics dict."""
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = cfg.to_problem()
    train_config = cfg.to_train_config()
    (out_dir / "run_meta.json").write_text(
        json.dumps({"config": serialize_config(cfg), "example": cfg.example}, indent=2)
    )
    start = time.perf_counter()
    try:
        result = train(problem, train_config)
    except NonFiniteLossError as exc:
        diag = {
            "example": cfg.example,
            "failed_epoch": exc.epoch,
            "error": "non-finite loss",
        }
        (out_dir / "metrics.json").write_text(json.dumps(diag, indent=2))
        raise
    wall = time.perf_counter() - start
    _write_trace(out_dir / "trace.csv", result.trace)
    _save_checkpoint(out_dir / "checkpoint.json", result)
    report = _error_report(problem, result.q_spec, result.q_params)
    report.update(
        {"example": cfg.example, "delta": cfg.delta, "wall_time_s": wall, "seed": cfg.seed}
    )
    (out_dir / "metrics.json").write_text(json.dumps(report, indent=2))

    q_raw = reconstruction_callable(result.q_spec, result.q_params)

    def q_hat(pts):
        clamped, _ = project_admissible(q_raw(pts), problem.bounds)
        return clamped

    resolution = cfg.export_resolution or (128 if problem.dim == 2 else 64)
    _export_fields(problem, q_hat, out_dir, resolution)
    return report


def _cmd_run(args) -> int:
    cfg = resolve_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.delta is not None:
        cfg.delta = args.delta
    if args.trace_interval is not None:
        cfg.trace_interval = args.trace_interval
    cfg.validate()
    out_dir = Path(args.out) if args.out else Path(cfg.out_dir or f"runs/{args.config}")
    report = run_from_config(cfg, out_dir)
    print(json.dumps(report, indent=2))
    return 0


def _cmd_evaluate(args) -> int:
    example, (q_spec, q_params), _ = load_checkpoint(args.checkpoint)
    problem = make_example(example)
    report = _error_report(problem, q_spec, q_params)
    report["example"] = example
    print(json.dumps(report, indent=2))
    return 0


def _cmd_export(args) -> int:
    example, (q_spec, q_params), _ = load_checkpoint(args.checkpoint)
    problem = make_example(example)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    q_raw = reconstruction_callable(q_spec, q_params)

    def q_hat(pts):
        clamped, _ = project_admissible(q_raw(pts), problem.bounds)
        return clamped

    _export_fields(problem, q_hat, out_dir, args.resolution)
    print(f"wrote qtrue.csv, qhat.csv, qerr.csv to {out_dir}")
    return 0


def _cmd_forward_solve(args) -> int:
    problem = make_example(args.example)
    u_grid, gx, gy = fd_solve_fields(problem, n_cells=args.nx)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    forward_fd.save_grid_csv(out_dir / "u.csv", u_grid)
    forward_fd.save_grid_csv(out_dir / "gradx.csv", gx)
    forward_fd.save_grid_csv(out_dir / "grady.csv", gy)
    print(f"wrote u.csv, gradx.csv, grady.csv to {out_dir}")
    return 0


def _parse_sweep_sets(specs: list[str]) -> list[tuple[str, list[str]]]:
    out = []
    for spec in specs:
        if "=" not in spec:
            raise ConfigError(f"--set expects key=v1,v2,... got {spec!r}")
        key, _, values = spec.partition("=")
        items = [v.strip() for v in values.split(",") if v.strip()]
        if not items:
            raise ConfigError(f"--set {key}: no values given")
        out.append((key.strip(), items))
    return out


def _cmd_sweep(args) -> int:
    base = resolve_config(args.config)
    sets = _parse_sweep_sets(args.set or [])
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    keys = [k for k, _ in sets]
    combos = list(itertools.product(*[v for _, v in sets])) or [()]

    def configure(combo):
        text = serialize_config(base)
        cfg = resolve_config_from_text(text)
        for key, raw in zip(keys, combo):
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown sweep key {key!r}")
            current = getattr(cfg, key)
            if isinstance(current, int) and not isinstance(current, bool):
                value = int(float(raw))
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = raw
            setattr(cfg, key, value)
        return cfg.validate()

    rows = []
    jobs = []
    for combo in combos:
        label = "base" if not combo else "_".join(
            f"{k}={v}" for k, v in zip(keys, combo)
        ).replace("/", "-")
        jobs.append((label, combo))

    def run_one(job):
        label, combo = job
        cfg = configure(combo)
        report = run_from_config(cfg, out_root / label)
        return label, combo, report

    if args.jobs > 1:
        import multiprocessing

        with multiprocessing.get_context("spawn").Pool(args.jobs) as pool:
            results = pool.map(run_one, jobs)
    else:
        results = [run_one(job) for job in jobs]

    summary = out_root / "summary.csv"
    with open(summary, "w") as fh:
        fh.write(",".join(keys + ["e_final", "wall_time_s", "run_dir"]) + "\n")
        for label, combo, report in results:
            fh.write(
                ",".join(list(combo) + [f"{report['e_final']!r}", f"{report['wall_time_s']:.1f}", label])
                + "\n"
            )
            rows.append((label, report["e_final"]))
    print(f"wrote {summary}")
    for label, err in rows:
        print(f"  {label}: e_final={err:.4e}")
    return 0


def resolve_config_from_text(text: str) -> RunConfig:
    from .config import parse_config_text

    return parse_config_text(text, source="<sweep>")


def _cmd_list_examples(args) -> int:
    for example_id in EXAMPLE_IDS:
        inst = make_example(example_id)
        partial = ", partial data" if inst.is_partial else ""
        grid = ", grid-backed" if inst.grid_backed else ""
        print(f"{example_id}: {inst.bc_kind}, d={inst.dim}{partial}{grid}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condmix",
        description="Conductivity reconstruction from one internal gradient measurement.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train a reconstruction and write a run directory")
    p_run.add_argument("--config", required=True, help="config file path or bundled preset name")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--delta", type=float, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--trace-interval", type=int, default=None, dest="trace_interval")
    p_run.set_defaults(func=_cmd_run)

    p_eval = sub.add_parser("evaluate", help="recompute the relative error from a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.set_defaults(func=_cmd_evaluate)

    p_export = sub.add_parser("export", help="write qtrue/qhat/qerr grids from a checkpoint")
    p_export.add_argument("--checkpoint", required=True)
    p_export.add_argument("--out", required=True)
    p_export.add_argument("--resolution", type=int, default=128)
    p_export.set_defaults(func=_cmd_export)

    p_fwd = sub.add_parser("forward-solve", help="finite-volume solve of a 2D Neumann example")
    p_fwd.add_argument("--example", required=True, choices=[i for i in EXAMPLE_IDS])
    p_fwd.add_argument("--nx", type=int, default=256)
    p_fwd.add_argument("--out", required=True)
    p_fwd.set_defaults(func=_cmd_forward_solve)

    p_sweep = sub.add_parser("sweep", help="cartesian sweep over config keys")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--set", action="append", help="key=v1,v2,... (repeatable)")
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_list = sub.add_parser("list-examples", help="print the example catalog")
    p_list.set_defaults(func=_cmd_list_examples)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())
