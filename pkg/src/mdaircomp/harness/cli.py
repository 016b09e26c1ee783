"""Command line entry point: ``mdaircomp <experiment> [flags]``.

Exit codes: 0 success, 2 bad usage or config, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from .. import analysis, pipeline
from ..airlink import gaussian_sensing_matrix
from ..config import ConfigError, ScenarioConfig, load_config
from ..detect import PowerIterationError
from . import io
from .experiments import EXPERIMENTS, preset_config

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

log = logging.getLogger("mdaircomp")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset by the subparser default
    g = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g.add_argument("--config", help="JSON scenario file (default: the experiment's preset)")
    g.add_argument("--seed", type=int, help="master seed (non-negative)")
    g.add_argument("--trials", type=int, help="Monte Carlo trials per cell")
    g.add_argument("--out", help=f"output directory (default ${io.OUT_DIR_ENV} or ./{io.DEFAULT_OUT_DIR})")
    g.add_argument("--format", choices=("csv", "json"), help="table format (default csv)")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return g


def build_parser() -> argparse.ArgumentParser:
    flags = _global_flags()
    parser = _Parser(prog="mdaircomp", parents=[flags],
                     description="Monte Carlo experiments for blind digital over-the-air averaging.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="command")
    help_text = {
        "hardening": "channel-hardening metric versus antenna count",
        "convergence": "per-iteration MSE of ISTA, LISTA and their rounded versions",
        "mse-vs-q": "empirical MSE and bound versus quantization levels",
        "optq-vs-l": "optimal quantization levels versus preamble length and SNR",
        "sparsity": "occupied bins versus quantization levels",
        "mse-vs-m": "MSE versus antenna count with the pure-AWGN baseline",
        "vq": "scalar versus vector quantization over SNR",
    }
    for name, text in help_text.items():
        sub.add_parser(name, parents=[flags], help=text)
    sub.add_parser("train-lista", parents=[flags], help="train and cache LISTA parameters")
    plan = sub.add_parser("plan-q", parents=[flags], help="optimal quantization levels from the error bound")
    plan.add_argument("--l", type=int, required=True, help="preamble length")
    plan.add_argument("--k", type=int, required=True, help="number of devices")
    plan.add_argument("--snr", type=float, required=True, help="SNR in dB")
    plan.add_argument("--r", type=float, default=None, help="source half-range (default from config lo/hi)")
    plan.add_argument("--c0", type=float, default=None, help="detection-term constant (default from config)")
    plan.add_argument("--m", type=int, default=None, help="antenna count (default from config)")
    return parser


def _load(args, name) -> ScenarioConfig:
    path = getattr(args, "config", None)
    cfg = load_config(path) if path else preset_config(name)
    changes = {}
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        changes["master_seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    return cfg.replace(**changes) if changes else cfg


def _summary(name, cfg, wall, headline, table_path) -> dict:
    return {"experiment": name, "config_hash": cfg.digest(), "master_seed": cfg.master_seed,
            "wall_time_s": round(wall, 3), "headline": headline, "table": str(table_path),
            "config": cfg.to_dict()}


def _run_experiment(name, args) -> int:
    cfg = _load(args, name)
    out = io.out_dir(getattr(args, "out", None))
    kwargs = {}
    if name in ("convergence", "mse-vs-q", "optq-vs-l", "mse-vs-m"):
        kwargs["cache_dir"] = out / "lista_cache"
    t0 = time.perf_counter()
    res = EXPERIMENTS[name](cfg, **kwargs)
    wall = time.perf_counter() - t0
    table = io.write_table(out / name, res.header, res.rows, getattr(args, "format", "csv"))
    io.write_json(out / f"{name}_summary.json", _summary(name, cfg, wall, res.summary, table))
    print(f"{name}: {len(res.rows)} rows -> {table} ({wall:.1f} s)")
    print(json.dumps(io.to_jsonable(res.summary), sort_keys=True))
    return EXIT_OK


def _train_lista(args) -> int:
    cfg = _load(args, "train-lista")
    out = io.out_dir(getattr(args, "out", None))
    p = gaussian_sensing_matrix(cfg.l, cfg.q, cfg.codebook_seed)
    t0 = time.perf_counter()
    params, curve = pipeline.train_lista(p, pipeline.scalar_codebook(cfg), cfg)
    wall = time.perf_counter() - t0
    path = out / "lista_cache" / pipeline.lista_cache_name(p, cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    params.save(path)
    table = io.write_table(out / "train-lista", ("epoch", "loss"), list(enumerate(map(float, curve))),
                           getattr(args, "format", "csv"))
    io.write_json(out / "train-lista_summary.json",
                  _summary("train-lista", cfg, wall, {"final_loss": float(curve[-1]), "params": str(path)}, table))
    print(f"trained {params.layers}-layer LISTA in {wall:.1f} s, final loss {curve[-1]:.4g} -> {path}")
    return EXIT_OK


def _plan_q(args) -> int:
    cfg = load_config(args.config) if getattr(args, "config", None) else ScenarioConfig()
    changes = {"l": args.l, "k": args.k, "snr_db": args.snr}
    if args.r is not None:
        if args.r <= 0:
            raise ConfigError("--r must be positive")
        changes["hi"] = cfg.lo + 2.0 * args.r
    if args.c0 is not None:
        changes["c0"] = args.c0
    if args.m is not None:
        changes["m"] = args.m
    cfg = cfg.replace(**changes)
    bp = analysis.bound_params_for(cfg)
    grid = sorted(set(cfg.q_grid))
    q_star = analysis.optimal_q_bound(bp, grid)
    if not analysis.detection_valid(bp, q_star):
        print(f"warning: L={cfg.l} is short of K ln(q/K) at q={q_star}", file=sys.stderr)
    if getattr(args, "format", "csv") == "json":
        bounds = {str(q): analysis.total_bound(bp, q, warn=False) for q in grid}
        print(json.dumps({"q_star": q_star, "bound": bounds}, sort_keys=True))
    else:
        print(q_star)
    return EXIT_OK


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "plan-q":
            return _plan_q(args)
        if args.command == "train-lista":
            return _train_lista(args)
        return _run_experiment(args.command, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError, PowerIterationError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
