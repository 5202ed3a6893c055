"""Command-line entry point.

Subcommands: toy-fig1, invert-kl, l2-sweep, sgd-bound, direct-opt,
oracle-variance. Each experiment family reads a JSON config (overridable with
--set key=value), writes fixed-schema CSVs plus a manifest into the output
directory, and prints a one-line summary. Exit codes: 0 ok, 1 config error,
2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from pbcert import bounds, toy
from pbcert.data import IdxError
from pbcert.nn import TrainingDivergedError
from pbcert.pipeline import ExperimentConfig, build_dataset
from pbcert.results import write_manifest, write_table

OUTPUT_ROOT_ENV = "PBCERT_OUTPUT_ROOT"

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _out_dir(args, command: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if not root:
            raise ConfigError(f"--out not given and {OUTPUT_ROOT_ENV} not set")
        out = Path(root) / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_overrides(cfg_dict: dict, pairs: list[str]) -> dict:
    out = json.loads(json.dumps(cfg_dict))
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = value
    return out


def _load_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    raw = _apply_overrides(raw, args.set or [])
    try:
        return ExperimentConfig.from_dict(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def _print_accounting(cfg: ExperimentConfig) -> None:
    acct = cfg.delta_accounting()
    print(
        f"grids: alpha={list(cfg.alpha_grid)} sigma_p={list(cfg.sigma_p_grid)} "
        f"t_multipliers={list(cfg.t_multipliers)} seeds={list(cfg.seeds)}"
    )
    print(
        f"delta accounting: delta={acct['delta']} delta_mc={acct['delta_mc']} "
        f"grid_size={acct['grid_size']} delta_pb_per_cell={acct['delta_pb_per_cell']:.3e}"
    )


def _single_cell_cfg(cfg: ExperimentConfig, alpha: float, seed: int) -> ExperimentConfig:
    d = cfg.to_dict()
    d["alpha_grid"] = [alpha]
    d["seeds"] = [seed]
    return ExperimentConfig.from_dict(d)


def _cell_worker(payload):
    family, cfg_dict, alpha, seed = payload
    cfg = ExperimentConfig.from_dict(cfg_dict)
    cfg1 = _single_cell_cfg(cfg, alpha, seed)
    return family, alpha, seed, _run_family(family, cfg1)


def _run_family(family: str, cfg: ExperimentConfig):
    from pbcert import pipeline

    ds = build_dataset(cfg.dataset).truncate_to_multiple(cfg.batch)
    test_ds = build_dataset(cfg.test_dataset) if cfg.test_dataset else None
    ghost_ds = build_dataset(cfg.ghost_dataset) if cfg.ghost_dataset else None
    if family == "sgd-bound":
        return pipeline.get_bound(ds, cfg, test_ds=test_ds, ghost_ds=ghost_ds,
                                  use_ghost=ghost_ds is not None)
    if family == "direct-opt":
        return pipeline.bound_opt(ds, cfg, test_ds=test_ds)
    if family == "oracle-variance":
        return pipeline.oracle_variance_study(ds, cfg, test_ds=test_ds)
    if family == "l2-sweep":
        if ghost_ds is None:
            raise ConfigError("l2-sweep requires a ghost_dataset in the config")
        return pipeline.l2_sweep(ds, ghost_ds, cfg)
    raise ConfigError(f"unknown family {family}")


def _run_cells(family: str, cfg: ExperimentConfig, jobs: int):
    """Fan out over (alpha, seed); results are independent of the job count."""
    if jobs <= 1:
        return _run_family(family, cfg)
    pairs = [(a, s) for a in cfg.alpha_grid for s in cfg.seeds]
    payloads = [(family, cfg.to_dict(), a, s) for a, s in pairs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        chunks = list(pool.map(_cell_worker, payloads))
    chunks.sort(key=lambda c: (cfg.alpha_grid.index(c[1]), cfg.seeds.index(c[2])))
    if family == "sgd-bound":
        from pbcert.pipeline import BoundExperimentResult

        by_alpha: dict[float, list] = {a: [] for a in cfg.alpha_grid}
        for _, a, _, res in chunks:
            by_alpha[a].extend(res[0].cells)
        acct = cfg.delta_accounting()
        return [
            BoundExperimentResult(alpha=a, cells=by_alpha[a], delta_accounting=acct)
            for a in cfg.alpha_grid
        ]
    merged = []
    for _, _, _, res in chunks:
        merged.extend(res)
    return merged


def cmd_invert_kl(args) -> int:
    val = bounds.kl_inverse(args.q, args.b)
    print(f"{val:.12g}")
    return EXIT_OK


def cmd_toy_fig1(args) -> int:
    if args.preset not in toy.PRESETS:
        raise ConfigError(f"unknown preset {args.preset!r} (know {sorted(toy.PRESETS)})")
    cfg = toy.PRESETS[args.preset]()
    out = _out_dir(args, "toy-fig1")
    alphas = [round(0.01 * i, 2) for i in range(100)]
    rows = toy.sweep_alpha(cfg, alphas)
    mc_by_m = {}
    if args.mc_trials:
        rng = np.random.Generator(np.random.PCG64(args.mc_seed))
        for a in args.mc_alphas or []:
            m = int(math.floor(cfg.n * a))
            res = toy.mc_simulate(cfg, toy.PrefixSet.initial(m), args.mc_trials, rng)
            mc_by_m[m] = (res.mean_kl, res.kl_stderr)
    table = []
    for r in rows:
        mc_kl, mc_se = mc_by_m.get(r.m, (math.nan, math.nan))
        table.append((r.alpha, r.m, r.c_of_j, r.r_bar, r.lower, r.upper, mc_kl, mc_se))
    write_table(out / "toy_fig1.csv", "toy_fig1", table)
    config_echo = {
        "preset": args.preset, "alphas": alphas, "mc_trials": args.mc_trials,
        "mc_alphas": args.mc_alphas, "n": cfg.n, "d_dim": cfg.d_dim,
        "sigma": cfg.sigma, "sigma_kind": cfg.sigma_kind,
        "kappa": cfg.kappa, "kappa_kind": cfg.kappa_kind,
        "tau": cfg.tau, "delta": cfg.delta,
    }
    write_manifest(
        out / "manifest.json", config_echo,
        grids={"alpha": alphas}, delta_accounting={"delta": cfg.delta},
        seeds=[args.mc_seed] if args.mc_trials else [],
    )
    best = toy.argmin_upper(rows)
    at0 = rows[0]
    print(
        f"preset={args.preset} lower(alpha=0)={at0.lower:.4f} "
        f"argmin upper: m={best.m} alpha={best.alpha:.2f} upper={best.upper:.4f}"
    )
    return EXIT_OK


def cmd_experiment(args, family: str, schema: str) -> int:
    cfg = _load_config(args)
    if args.dry_run:
        _print_accounting(cfg)
        print("dry run: config ok, no training performed")
        return EXIT_OK
    out = _out_dir(args, family)
    res = _run_cells(family, cfg, args.jobs)
    rows, summary = _rows_for(family, cfg, res)
    write_table(out / f"{schema}.csv", schema, rows)
    if family == "l2-sweep":
        # one base-vs-prefix weight scatter per alpha rides along (always
        # computed serially: it uses the first seed only)
        from pbcert.pipeline import param_scatter

        ds = build_dataset(cfg.dataset).truncate_to_multiple(cfg.batch)
        scatter = param_scatter(ds, cfg)
        write_table(
            out / "param_scatter.csv", "param_scatter",
            [(c.alpha, c.seed, c.coord, c.w_base, c.w_prior) for c in scatter],
        )
    write_manifest(
        out / "manifest.json", cfg.to_dict(),
        grids={
            "alpha": list(cfg.alpha_grid),
            "sigma_p": list(cfg.sigma_p_grid),
            "t_multipliers": list(cfg.t_multipliers),
        },
        delta_accounting=cfg.delta_accounting(),
        seeds=cfg.seeds,
    )
    print(summary)
    return EXIT_OK


def _rows_for(family: str, cfg: ExperimentConfig, res):
    if family == "sgd-bound":
        rows = [
            (c.alpha, c.seed, c.epsilon, c.sigma_p, c.t, c.kl, c.gibbs_risk, c.bound, c.test_error)
            for r in res
            for c in r.cells
        ]
        best = min(res, key=lambda r: r.bound_mean)
        summary = (
            f"best alpha={best.alpha} mean bound={best.bound_mean:.4f} "
            f"(mean test error {best.test_error_mean:.4f})"
        )
        return rows, summary
    if family == "direct-opt":
        rows = []
        for c in res:
            for step, val in c.trace:
                rows.append((c.alpha, c.seed, step, val, math.nan, math.nan))
            rows.append((c.alpha, c.seed, c.trace[-1][0] if c.trace else 0,
                         c.trace[-1][1] if c.trace else math.nan, c.bound, c.test_error))
        by_alpha = {}
        for c in res:
            by_alpha.setdefault(c.alpha, []).append(c.bound)
        best_a = min(by_alpha, key=lambda a: np.mean(by_alpha[a]))
        summary = f"best alpha={best_a} mean bound={np.mean(by_alpha[best_a]):.4f}"
        return rows, summary
    if family == "oracle-variance":
        rows = [(c.alpha, c.seed, c.sigma_p, c.iso_bound, c.oracle_bound) for c in res]
        gaps = {}
        for c in res:
            gaps.setdefault(c.alpha, []).append(c.iso_bound - c.oracle_bound)
        parts = ", ".join(f"alpha={a}: {np.mean(g):.4f}" for a, g in sorted(gaps.items()))
        return rows, f"mean iso-oracle gap by alpha: {parts}"
    if family == "l2-sweep":
        rows = [(c.alpha, c.seed, c.d_prefix, c.d_ghost) for c in res]
        gaps = {}
        for c in res:
            gaps.setdefault(c.alpha, []).append(abs(c.d_prefix - c.d_ghost))
        parts = ", ".join(f"alpha={a}: {np.mean(g):.3e}" for a, g in sorted(gaps.items()))
        return rows, f"mean |d_prefix - d_ghost| by alpha: {parts}"
    raise ConfigError(f"unknown family {family}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pbcert", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("invert-kl", help="print kl_inverse(q, b)")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--b", type=float, required=True)

    p = sub.add_parser("toy-fig1", help="analytic bound curves of the toy model")
    p.add_argument("--preset", default="calibrated", help="calibrated or paper-literal")
    p.add_argument("--out", default=None)
    p.add_argument("--mc-trials", type=int, default=0, help="Monte-Carlo trials per alpha (0 = off)")
    p.add_argument("--mc-alphas", type=float, nargs="*", default=None)
    p.add_argument("--mc-seed", type=int, default=0)

    for name in ("sgd-bound", "direct-opt", "oracle-variance", "l2-sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=False)
        p.add_argument("--out", default=None)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--dry-run", action="store_true")
        p.add_argument("--jobs", type=int, default=1)
    return ap


_SCHEMA_FOR = {
    "sgd-bound": "bound_sweep",
    "direct-opt": "direct_opt",
    "oracle-variance": "oracle_variance",
    "l2-sweep": "l2_sweep",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "invert-kl":
            return cmd_invert_kl(args)
        if args.command == "toy-fig1":
            return cmd_toy_fig1(args)
        return cmd_experiment(args, args.command, _SCHEMA_FOR[args.command])
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (IdxError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergedError, FloatingPointError, bounds.InfiniteDivergenceError) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
