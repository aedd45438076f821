"""Command line entry point.

Exit status: 0 on success, 1 for configuration or usage errors, 2 when a
run fails.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import bench
from .config import METHODS, ConfigError, dump_config, load_config
from .scenario_io import load_allocation, load_scenario, save_scenario

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}\n{self.format_usage()}")


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="experiment YAML file")
    common.add_argument("--seed", type=_u64, default=argparse.SUPPRESS, help="global seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    p = _Parser(prog="satprov", description="Controller provisioning experiments for LEO/MEO networks.", parents=[common])
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    sub.add_parser("generate", parents=[common], help="write scenario files for the configured seeds")
    sub.add_parser("train", parents=[common], help="train a policy; write metrics and a checkpoint")

    e = sub.add_parser("eval", parents=[common], help="score one allocation on a scenario file")
    e.add_argument("--scenario", required=True, help="scenario JSON written by `generate`")
    e.add_argument("--allocation", help="allocation JSON; defaults to the scenario's initial allocation")

    c = sub.add_parser("compare", parents=[common], help="run several methods on the same scenarios")
    c.add_argument("--methods", type=_csv_list(str), help=f"comma list from {','.join(METHODS)}")

    a = sub.add_parser("sweep-alpha", parents=[common], help="overhead/delay terms across alpha")
    a.add_argument("--alphas", type=_csv_list(float))
    a.add_argument("--solver", choices=METHODS)

    s = sub.add_parser("sweep-scale", parents=[common], help="quality and time across LEO counts")
    s.add_argument("--leo-counts", type=_csv_list(int))
    s.add_argument("--solver", choices=METHODS)
    return p


def _emit(doc) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


def _run(args, cfg, out: Path) -> None:
    cmd = args.command
    if cmd == "generate":
        written = []
        for seed in cfg.scenario_seeds():
            sc = bench.make_scenario_for(cfg, seed)
            written.append(str(save_scenario(sc, cfg.constellation.shells(), out / "scenarios" / f"scenario_{seed}.json")))
        _emit({"scenarios": written})
    elif cmd == "train":
        _, log = bench.run_training(cfg, out)
        last = log[-1] if log else {}
        _emit({"episodes": len(log), "final_score": last.get("final_score"), "out": str(out)})
    elif cmd == "eval":
        scenario = load_scenario(args.scenario)
        alloc = load_allocation(args.allocation, scenario) if args.allocation else scenario.initial_allocation
        doc = scenario.evaluate(alloc).to_dict()
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        _emit(doc)
    elif cmd == "compare":
        rows, _ = bench.compare_algorithms(cfg, args.methods, out)
        _emit([{**r.data(), **r.timing()} for r in rows])
    elif cmd == "sweep-alpha":
        _emit(bench.sweep_alpha(cfg, args.alphas, out, args.solver))
    elif cmd == "sweep-scale":
        rows, timing, slope = bench.sweep_scale(cfg, args.leo_counts, out, args.solver)
        _emit({"rows": rows, "timing": timing, "slope": slope})


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise ConfigError(f"satprov: a command is required\n{parser.format_usage()}")
        cfg = load_config(getattr(args, "config", None), getattr(args, "seed", None))
        out = Path(getattr(args, "out", None) or cfg.output_dir)
        if args.command in ("compare", "sweep-alpha", "sweep-scale"):
            for name in (args.methods or []) if args.command == "compare" else []:
                if name not in METHODS:
                    raise ConfigError(f"unknown method {name!r}; choose from {METHODS}")
        cfg = replace(cfg, output_dir=str(out))
    except ConfigError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_CONFIG
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command not in ("eval",):
            dump_config(cfg, out / "config_used.yaml")
        _run(args, cfg, out)
    except Exception as exc:
        print(f"satprov {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
