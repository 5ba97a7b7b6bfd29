"""Command-line entry point: ``memory-bias <command> [--config F] [--seed N] [--out DIR]``.

Every command writes its CSV outputs, ``summary.json`` and the effective
``config.toml`` under the output directory, then prints a one-line JSON
summary. Failures print a JSON error object to stderr.

Environment overrides: ``MEMORY_BIAS_OUT`` (default output directory) and
``MEMORY_BIAS_THREADS`` (BLAS/OpenMP thread count, applied before numpy loads).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4
EXIT_DOMAIN = 5
EXIT_IO = 6

COMMANDS = ("bias-curve", "bias-oracle", "train-synthetic", "train-copy", "extract-memory", "sensitivity")
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="memory-bias", description="Memory-bias experiments for temporally weighted losses.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML experiment config (defaults when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (env MEMORY_BIAS_OUT, else ./out)")
        if name == "extract-memory":
            p.add_argument("--checkpoint", help="model checkpoint (else the config's checkpoint)")
    return parser


def _apply_thread_env():
    threads = os.environ.get("MEMORY_BIAS_THREADS")
    if threads:
        for var in THREAD_VARS:
            os.environ[var] = threads


def _out_dir(args):
    return Path(args.out or os.environ.get("MEMORY_BIAS_OUT") or "out")


def _bias_curve(config, out):
    from .losses import analytic_bias, power_scheme
    from .training import write_csv

    curves = [analytic_bias(power_scheme(p, config.seq_len, config.dt, "bias_integral"))
              for p in config.bias_curve.p_values]
    labels = [f"b_{power_scheme(p, 1, 1.0).label}" for p in config.bias_curve.p_values]
    s = curves[0].s
    write_csv(out / "bias_curve.csv", ["s", *labels],
              ([float(s[k]), *(float(c.values[k]) for c in curves)] for k in range(config.seq_len)))
    return {f"integral_{label}": c.integral() for label, c in zip(labels, curves)}


def _bias_oracle(config, out):
    from .bias_oracle import bias_ratio_test
    from .losses import power_scheme
    from .training import target_kernel, write_csv

    bo = config.bias_oracle
    kernel = target_kernel(config)
    lags = bo.lag_list(config.seq_len)
    pairs = [(k, lags[0]) for k in lags[1:]]
    rows, worst, passed = [], 0.0, True
    for p in bo.p_values:
        scheme = power_scheme(p, config.seq_len, config.dt, "bias_integral")
        report = bias_ratio_test(kernel, scheme, pairs, bo.n_samples, config.seed, bo.tolerance, bo.magnitude)
        passed = passed and report.passed
        for r in report.rows:
            worst = max(worst, r.ratio_error)
            rows.append([scheme.label, r.lag, r.reference_lag, r.empirical, r.analytic, r.ratio_error])
    write_csv(out / "bias_oracle.csv", ["scheme", "lag", "reference_lag", "empirical", "analytic", "ratio_error"], rows)
    return {"max_ratio_error": worst, "passed": passed}


def _train(config, out):
    from .models import save_checkpoint
    from .training import train, write_csv

    report, model = train(config)
    report.write_csv(out / "train.csv")
    ckpt = out / "model.json"
    save_checkpoint(model, ckpt)
    if report.final_memory is not None:
        write_csv(out / "memory.csv", ["s", "rho_target", "rho_model", "abs_diff"], report.final_memory.rows())
    return report.summary()


def _extract_memory(config, out, checkpoint):
    from .memory_probe import memory_report
    from .models import load_checkpoint
    from .training import target_kernel, write_csv

    path = checkpoint or config.checkpoint
    if not path:
        raise UsageError("extract-memory needs --checkpoint or a checkpoint entry in the config")
    model = load_checkpoint(path)
    report = memory_report(target_kernel(config), model, config.seq_len, config.dt)
    write_csv(out / "memory.csv", ["s", "rho_target", "rho_model", "abs_diff"], report.rows())
    return {"memory_difference": report.memory_difference}


def _sensitivity(config, out):
    from .training import sensitivity_scan, write_sensitivity_csv

    rows = sensitivity_scan(config)
    write_sensitivity_csv(out / "sensitivity.csv", rows)
    first = min(config.sensitivity.n_steps)
    by_p = {r.p: r.loss_decrease for r in rows if r.n_steps == first}
    best = max(by_p, key=by_p.get)
    return {"rows": len(rows), "best_p": best, "n_steps": first}


def _run(args):
    from .config import load_config

    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.command == "train-synthetic":
        config.task = "synthetic"
    elif args.command == "train-copy":
        config.task = "copying"
    config.validate()

    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(config.to_toml())

    start = time.perf_counter()
    if args.command == "bias-curve":
        metrics = _bias_curve(config, out)
    elif args.command == "bias-oracle":
        metrics = _bias_oracle(config, out)
    elif args.command in ("train-synthetic", "train-copy"):
        metrics = _train(config, out)
    elif args.command == "extract-memory":
        metrics = _extract_memory(config, out, args.checkpoint)
    else:
        metrics = _sensitivity(config, out)
    wall = time.perf_counter() - start

    summary = {"command": args.command, "config_hash": config.hash(), "seed": config.seed, "key_metrics": metrics}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    print(json.dumps({**summary, "wall_time_s": wall}, default=_json_default))


def _json_default(obj):
    return obj.item() if hasattr(obj, "item") else str(obj)


def _fail(code, category, message, problems=None):
    payload = {"error": category, "message": message}
    if problems:
        payload["problems"] = problems
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    _apply_thread_env()
    from .errors import ConfigError, DomainError, NumericalError, ShapeError, UnsupportedOperation

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        _run(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc), exc.problems)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, "numerical", str(exc))
    except (DomainError, ShapeError, UnsupportedOperation) as exc:
        return _fail(EXIT_DOMAIN, "domain", str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, "io", str(exc))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
