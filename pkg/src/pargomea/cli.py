"""Command-line front end: ``run``, ``generate``, ``color-stats`` and ``oracle``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Any, TextIO


from pargomea.engine import GomeaConfig, ModelSpec, Termination, TraceRecord
from pargomea.graybox import build_vig
from pargomea.ims import ImsSettings
from pargomea.linkage import format_fos, parse_fos, validate_fos
from pargomea.maxcut import (
    BRUTE_FORCE_LIMIT,
    InstanceParseError,
    MaxCutInstance,
    as_graybox,
    brute_force_optimum,
    dump_edge_list,
    generate_complete,
    generate_random,
    generate_torus,
    load_edge_list,
    parse_weight_scheme,
)
from pargomea.parallel import run_parallel
from pargomea.scheduling import color_linkage, format_groups, group_stats
from pargomea.serial import run_serial

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_TARGET_UNREACHED = 3

TRACE_FIELDS = ("seconds", "evaluations", "generation", "population", "fitness")

# key -> default; flat keys, with "ims." prefix for the multi-start settings
RUN_DEFAULTS: dict[str, Any] = {
    "instance": None,
    "generate": None,
    "engine": "serial",
    "model": "flt",
    "seed": None,
    "population_size": None,
    "max_evaluations": None,
    "max_seconds": None,
    "max_generations": None,
    "target_fitness": None,
    "stop_on_optimum": None,
    "ims.n_base": 16,
    "ims.c": 4,
    "ims.max_populations": None,
    "workers": 1,
    "trace": None,
    "heartbeat": 0.5,
    "forced_improvement": True,
    "gom_order": "random",
    "donor_pool": "offspring",
}


class BadInput(Exception):
    pass


def parse_generator(spec: str, seed: int | None = None) -> MaxCutInstance:
    """``complete:N``, ``torus:WxH`` or ``random:N:M``, optionally ``@<weights>``."""
    spec, _, weights_text = spec.partition("@")
    weights = parse_weight_scheme(weights_text) if weights_text else "unit"
    kind, _, rest = spec.partition(":")
    try:
        if kind == "complete":
            return generate_complete(int(rest), weights, seed)
        if kind == "torus":
            w, _, h = rest.partition("x")
            return generate_torus(int(w), int(h or w), weights, seed)
        if kind == "random":
            n, _, m = rest.partition(":")
            return generate_random(int(n), int(m), weights, seed)
    except ValueError as exc:
        raise BadInput(f"bad generator spec {spec!r}: {exc}") from None
    raise BadInput(f"unknown generator kind {kind!r}")


def load_instance(path: str | None, generate: str | None, seed: int | None) -> MaxCutInstance:
    if (path is None) == (generate is None):
        raise BadInput("give exactly one of --instance or --generate")
    if generate is not None:
        return parse_generator(generate, seed)
    try:
        with open(path, encoding="utf-8") as fh:
            return load_edge_list(fh)
    except OSError as exc:
        raise BadInput(f"cannot read {path}: {exc.strerror}") from None
    except InstanceParseError as exc:
        raise BadInput(f"{path}: {exc}") from None


def read_trace(stream: TextIO) -> list[TraceRecord]:
    reader = csv.DictReader(stream)
    if tuple(reader.fieldnames or ()) != TRACE_FIELDS:
        raise ValueError(f"unexpected trace header {reader.fieldnames}")
    return [
        TraceRecord(float(r["seconds"]), float(r["evaluations"]), int(r["generation"]), int(r["population"]), float(r["fitness"]))
        for r in reader
    ]


def format_trace_row(rec: TraceRecord) -> str:
    return f"{rec.seconds!r},{rec.evaluations!r},{rec.generation},{rec.population},{rec.fitness!r}\n"


def _flatten(config: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in config.items():
        key = f"{prefix}{k}".replace("-", "_")
        if isinstance(v, dict):
            out.update(_flatten(v, f"{key}."))
        else:
            out[key] = v
    return out


def resolve_run_settings(flags: dict, config_path: str | None) -> dict:
    """Merge defaults, then the config file, then explicit flags."""
    settings = dict(RUN_DEFAULTS)
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise BadInput(f"cannot load config {config_path}: {exc}") from None
        data = _flatten(data)
        unknown = set(data) - set(RUN_DEFAULTS)
        if unknown:
            raise BadInput(f"unknown config keys: {sorted(unknown)}")
        settings.update(data)
    settings.update({k: v for k, v in flags.items() if v is not None})
    return settings


def build_config(settings: dict, instance: MaxCutInstance) -> GomeaConfig:
    target = settings["target_fitness"]
    optimum = settings["stop_on_optimum"]
    if target is not None and optimum is not None:
        raise BadInput("--target-fitness and --stop-on-optimum are mutually exclusive")
    if optimum == "auto":
        if instance.num_vertices > BRUTE_FORCE_LIMIT:
            raise BadInput("--stop-on-optimum auto needs an instance small enough for the oracle")
        target = brute_force_optimum(instance)[0]
    elif optimum is not None:
        target = float(optimum)
    try:
        return GomeaConfig(
            population_size=settings["population_size"],
            model=ModelSpec.parse(settings["model"]),
            seed=settings["seed"],
            termination=Termination(
                max_evaluations=settings["max_evaluations"],
                max_seconds=settings["max_seconds"],
                target_fitness=target,
                max_generations=settings["max_generations"],
            ),
            ims=ImsSettings(settings["ims.n_base"], settings["ims.c"], settings["ims.max_populations"]),
            forced_improvement=bool(settings["forced_improvement"]),
            gom_order=settings["gom_order"],
            workers=int(settings["workers"]),
            donor_pool=settings["donor_pool"],
            heartbeat=float(settings["heartbeat"]),
        )
    except (TypeError, ValueError) as exc:
        raise BadInput(str(exc)) from None


def cmd_run(args: argparse.Namespace, out: TextIO) -> int:
    flags = {
        "instance": args.instance,
        "generate": args.generate,
        "engine": args.engine,
        "model": args.model,
        "seed": args.seed,
        "population_size": args.population_size,
        "max_evaluations": args.max_evaluations,
        "max_seconds": args.max_seconds,
        "max_generations": args.max_generations,
        "target_fitness": args.target_fitness,
        "stop_on_optimum": args.stop_on_optimum,
        "ims.n_base": args.ims_n_base,
        "ims.c": args.ims_c,
        "ims.max_populations": args.ims_max_populations,
        "workers": args.workers,
        "trace": args.trace,
        "heartbeat": args.heartbeat,
        "forced_improvement": False if args.no_forced_improvement else None,
        "gom_order": args.gom_order,
        "donor_pool": args.donor_pool,
    }
    settings = resolve_run_settings(flags, args.config)
    if settings["engine"] not in ("serial", "parallel"):
        raise BadInput(f"unknown engine {settings['engine']!r}")
    instance = load_instance(settings["instance"], settings["generate"], settings["seed"])
    config = build_config(settings, instance)
    problem = as_graybox(instance)

    trace_fh = None
    if settings["trace"]:
        try:
            trace_fh = open(settings["trace"], "w", encoding="utf-8", newline="")
        except OSError as exc:
            raise BadInput(f"cannot write trace {settings['trace']}: {exc.strerror}") from None
        trace_fh.write(",".join(TRACE_FIELDS) + "\n")

        def on_record(rec: TraceRecord) -> None:
            trace_fh.write(format_trace_row(rec))
            trace_fh.flush()

        config.on_record = on_record
    try:
        engine = run_parallel if settings["engine"] == "parallel" else run_serial
        try:
            result = engine(problem, config)
        except ValueError as exc:
            raise BadInput(str(exc)) from None
    finally:
        if trace_fh is not None:
            trace_fh.close()

    out.write(f"best fitness: {result.best.fitness!r}\n")
    out.write(f"evaluations: {result.evaluations!r}\n")
    out.write(f"generations: {result.generations}\n")
    out.write(f"seconds: {result.seconds:.3f}\n")
    out.write(f"stopped by: {result.reason}\n")
    out.write("genotype: " + "".join(str(int(x)) for x in result.best.genotype) + "\n")
    if config.termination.target_fitness is not None and not result.target_reached:
        out.write("target unreached\n")
        return EXIT_TARGET_UNREACHED
    return EXIT_OK


def cmd_generate(args: argparse.Namespace, out: TextIO) -> int:
    weights = parse_weight_scheme(args.weights)
    try:
        if args.kind == "complete":
            inst = generate_complete(args.n, weights, args.seed)
        elif args.kind == "torus":
            inst = generate_torus(args.width, args.height or args.width, weights, args.seed)
        else:
            inst = generate_random(args.n, args.edges, weights, args.seed)
    except (TypeError, ValueError) as exc:
        raise BadInput(str(exc)) from None
    if args.output:
        Path(args.output).write_text(dump_edge_list(inst), encoding="utf-8")
    else:
        dump_edge_list(inst, out)
    return EXIT_OK


def cmd_color_stats(args: argparse.Namespace, out: TextIO) -> int:
    from pargomea.engine import fixed_model

    instance = load_instance(args.instance, args.generate, args.seed)
    problem = as_graybox(instance)
    if args.fos:
        try:
            fos = parse_fos(Path(args.fos).read_text(encoding="utf-8"), instance.num_vertices)
        except (OSError, ValueError) as exc:
            raise BadInput(f"cannot load FOS {args.fos}: {exc}") from None
        problems = validate_fos(fos, instance.num_vertices)
        if problems:
            raise BadInput("invalid FOS: " + "; ".join(problems))
    else:
        try:
            fos = fixed_model(problem, ModelSpec.parse(args.model))
        except ValueError as exc:
            raise BadInput(str(exc)) from None
    groups = color_linkage(fos, build_vig(problem))
    out.write(group_stats(groups).report())
    if args.groups:
        out.write(format_groups(groups))
    if args.show_fos:
        out.write(format_fos(fos))
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace, out: TextIO) -> int:
    instance = load_instance(args.instance, args.generate, args.seed)
    try:
        value, genotype = brute_force_optimum(instance)
    except ValueError as exc:
        raise BadInput(str(exc)) from None
    out.write(f"optimum: {value!r}\n")
    out.write("genotype: " + "".join(str(int(x)) for x in genotype) + "\n")
    return EXIT_OK


def _add_instance_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", help="edge-list file (1-based vertices)")
    p.add_argument("--generate", help="generator spec: complete:N, torus:WxH, random:N:M, optional @weights")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pargomea", description=__doc__)
    parser.add_argument("--seed", type=int, default=None, help="seed for every random choice")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="optimize a Max-Cut instance")
    run.add_argument("--config", help="JSON config file; flags take precedence")
    _add_instance_args(run)
    run.add_argument("--engine", choices=("serial", "parallel"))
    run.add_argument("--model", help="flt, learned-lt, univariate or bflt:<bound>")
    run.add_argument("--population-size", type=int, help="fixed population size (default: IMS)")
    run.add_argument("--ims-n-base", type=int)
    run.add_argument("--ims-c", type=int)
    run.add_argument("--ims-max-populations", type=int)
    run.add_argument("--max-evaluations", type=float)
    run.add_argument("--max-seconds", type=float)
    run.add_argument("--max-generations", type=int)
    run.add_argument("--target-fitness", type=float)
    run.add_argument("--stop-on-optimum", help="known optimum value, or 'auto' to compute it")
    run.add_argument("--workers", type=int)
    run.add_argument("--trace", help="CSV trace output path")
    run.add_argument("--heartbeat", type=float, help="seconds between heartbeat rows; 0 disables")
    run.add_argument("--no-forced-improvement", action="store_true")
    run.add_argument("--gom-order", choices=("random", "groups"))
    run.add_argument("--donor-pool", choices=("offspring", "population"))
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("generate", help="write a Max-Cut instance")
    gen.add_argument("kind", choices=("complete", "torus", "random"))
    gen.add_argument("--n", type=int)
    gen.add_argument("--width", type=int)
    gen.add_argument("--height", type=int)
    gen.add_argument("--edges", type=int)
    gen.add_argument("--weights", default="unit", help="unit or uniform_int(lo,hi)")
    gen.add_argument("-o", "--output")
    gen.set_defaults(func=cmd_generate)

    cs = sub.add_parser("color-stats", help="color the linkage model and report group sizes")
    _add_instance_args(cs)
    cs.add_argument("--model", default="flt")
    cs.add_argument("--fos", help="linkage model file: one set per line, 0-based indices")
    cs.add_argument("--groups", action="store_true", help="also print one line per group")
    cs.add_argument("--show-fos", action="store_true")
    cs.set_defaults(func=cmd_color_stats)

    orc = sub.add_parser("oracle", help=f"exact optimum by enumeration (<= {BRUTE_FORCE_LIMIT} vertices)")
    _add_instance_args(orc)
    orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None, out: TextIO | None = None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except BadInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
