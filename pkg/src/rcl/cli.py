"""Command-line entry point: ``rcl run | sweep | report``.

Every config key is also a flag (``search_space`` -> ``--search-space``);
flags override values from ``--config``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Any

import yaml

from .datasets import DataMissingError, IdxFormatError
from .harness import ConfigError, ExperimentConfig, load_summary, parse_config, report_summary, run, sweep

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat YAML key-value file")
    for name, fld in ExperimentConfig.model_fields.items():
        # values go through YAML so lists ("[10, 10]") and numbers parse naturally
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=yaml.safe_load,
                       metavar=name.upper(), help=fld.description)


def _overrides(ns: argparse.Namespace) -> dict[str, Any]:
    return {k: getattr(ns, k) for k in ExperimentConfig.model_fields if getattr(ns, k, None) is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rcl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    _add_config_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="repeat an experiment over alpha or seed values")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--param", choices=["alpha", "seed"], required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated values")

    p_rep = sub.add_parser("report", help="compare finished runs")
    p_rep.add_argument("runs", nargs="+", help="run directories containing summary.json")
    p_rep.add_argument("--out", help="directory for comparison.csv / comparison.json")
    return parser


def _print_rows(rows) -> None:
    print(f"{'method':<18}{'avg_acc':>10}{'params':>12}{'seconds':>10}  run")
    for r in rows:
        print(f"{r['method']:<18}{r['average_accuracy']:>10.4f}{r['final_params']:>12d}"
              f"{r['total_seconds']:>10.1f}  {r['run']}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = parse_config(args.config, _overrides(args))
            rep = run(cfg)
            print(f"{cfg.method}: average accuracy {rep.average_accuracy:.4f}, "
                  f"{rep.final_params} parameters -> {cfg.output_dir}")
        elif args.command == "sweep":
            cfg = parse_config(args.config, _overrides(args))
            cast = float if args.param == "alpha" else int
            try:
                values = [cast(v) for v in args.values.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError(f"--values: {exc}") from None
            for v, rep in zip(values, sweep(cfg, args.param, values)):
                print(f"{args.param}={v}: average accuracy {rep.average_accuracy:.4f}, "
                      f"{rep.final_params} parameters")
        else:
            _print_rows(report_summary([load_summary(r) for r in args.runs], args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataMissingError, IdxFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure category
        logging.getLogger("rcl").debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
