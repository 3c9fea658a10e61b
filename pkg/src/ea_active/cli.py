"""Command-line experiment runner.

Experiments are described by one YAML file; ``--set section.key=value`` flags
override file values. Example::

    dataset:
      synthetic: {n_core: 300, n_exclusive_left: 75, n_exclusive_right: 75}
    split: {seed: 0, train_fraction: 0.7, val_fraction: 0.2}
    model: {optimizer: adam, learning_rate: 0.01, max_epochs: 300}
    simulation: {budget: 20, exclusive_removal: true}
    heuristics: [rnd, deg, betw]      # or a mapping label -> params
    seeds: [0, 1, 2, 3, 4]
    output: runs/desk

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from .analysis import aggregate, format_table, write_aggregate_csv, write_curves_csv
from .graph_metrics import STATIC_RANKINGS, compute_rankings
from .heuristics import SelectionError, make_selector, needs_rankings
from .kg import DatasetError, SyntheticParams, export_dataset, generate_synthetic_pair, load_dataset, split_alignments
from .model import ModelConfig
from .simulator import Dataset, SimulationConfig, read_metrics, run_simulation, write_run_artifacts

logger = logging.getLogger("ea_active")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
WORKERS_ENV = "EA_ACTIVE_WORKERS"
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
SIM_KEYS = ("budget", "total_queries", "exclusive_removal")


class ConfigError(ValueError):
    """Invalid experiment specification."""


class UsageError(ValueError):
    pass


# -- experiment spec -------------------------------------------------------------------


@dataclass(frozen=True)
class HeuristicEntry:
    label: str
    name: str
    params: dict
    model: dict  # per-heuristic model overrides, e.g. dropout for bald


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: dict
    split: dict
    model: dict
    simulation: dict
    heuristics: tuple[HeuristicEntry, ...]
    seeds: tuple[int, ...]
    output: Path

    def cells(self) -> list[tuple[HeuristicEntry, int]]:
        return [(h, s) for h in self.heuristics for s in self.seeds]

    def simulation_config(self, entry: HeuristicEntry, seed: int) -> SimulationConfig:
        return SimulationConfig(
            heuristic=entry.name,
            heuristic_params=dict(entry.params),
            model=ModelConfig(**{**self.model, **entry.model}),
            seed=seed,
            **self.simulation,
        )

    def echo(self, entry: HeuristicEntry, seed: int) -> dict:
        """A one-cell experiment config that replays this cell exactly when run again."""
        model = asdict(ModelConfig(**{**self.model, **entry.model}))
        del model["seed"]  # runs use the cell seed
        sim = self.simulation_config(entry, seed)
        return {
            "dataset": self.dataset,
            "split": self.split,
            "model": model,
            "simulation": {k: getattr(sim, k) for k in SIM_KEYS},
            "heuristics": {entry.label: {"heuristic": entry.name, **entry.params}},
            "seeds": [seed],
        }


def _parse_value(text: str) -> Any:
    return yaml.safe_load(text) if text else ""


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    """Apply ``a.b.c=value`` strings; values are parsed as YAML scalars or lists."""
    raw = dict(raw)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        parts = key.split(".")
        node = raw
        for p in parts[:-1]:
            child = node.get(p)
            if child is None:
                child = {}
            elif not isinstance(child, dict):
                raise ConfigError(f"override {item!r}: {p!r} is not a section")
            node[p] = child = dict(child)
            node = child
        node[parts[-1]] = _parse_value(value)
    return raw


def _check_keys(section: str, d: Mapping, allowed: Sequence[str]) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{section}: unknown key(s) {', '.join(sorted(map(str, unknown)))}")


def _heuristic_entries(raw: Any) -> tuple[HeuristicEntry, ...]:
    if isinstance(raw, str):
        raw = [h.strip() for h in raw.split(",") if h.strip()]
    if isinstance(raw, list):
        raw = {str(h): {} for h in raw}
    if not isinstance(raw, dict) or not raw:
        raise ConfigError("heuristics must be a non-empty list or mapping")
    entries = []
    for label, body in raw.items():
        body = dict(body or {})
        name = str(body.pop("heuristic", label))
        model = dict(body.pop("model", {}) or {})
        try:
            make_selector(name, body)
        except SelectionError as exc:
            raise ConfigError(f"heuristics.{label}: {exc}") from None
        entries.append(HeuristicEntry(str(label), name, body, model))
    return tuple(entries)


def parse_spec(raw: Mapping, output: str | Path | None = None) -> ExperimentSpec:
    """Validate a raw config mapping; every error is raised before any work starts."""
    if not isinstance(raw, Mapping):
        raise ConfigError("config must be a mapping")
    _check_keys("config", raw, ("dataset", "split", "model", "simulation", "heuristics", "seeds", "output"))
    dataset = dict(raw.get("dataset") or {"synthetic": {}})
    _check_keys("dataset", dataset, ("synthetic", "path", "name"))
    if ("synthetic" in dataset) == ("path" in dataset):
        raise ConfigError("dataset needs exactly one of 'synthetic' or 'path'")
    if "synthetic" in dataset:
        syn = dict(dataset["synthetic"] or {})
        _check_keys("dataset.synthetic", syn, [f.name for f in fields(SyntheticParams)])
        try:
            SyntheticParams(**syn)
        except (DatasetError, TypeError) as exc:
            raise ConfigError(f"dataset.synthetic: {exc}") from None
        dataset["synthetic"] = syn
    elif not Path(dataset["path"]).is_dir():
        raise ConfigError(f"dataset.path: {dataset['path']} is not a directory")

    split = {"seed": 0, "train_fraction": 0.7, "val_fraction": 0.2, **(raw.get("split") or {})}
    _check_keys("split", split, ("seed", "train_fraction", "val_fraction"))

    model = dict(raw.get("model") or {})
    _check_keys("model", model, [f.name for f in fields(ModelConfig) if f.name != "seed"])
    simulation = dict(raw.get("simulation") or {})
    _check_keys("simulation", simulation, SIM_KEYS)

    heuristics = _heuristic_entries(raw.get("heuristics", ["rnd"]))
    labels = [h.label for h in heuristics]
    if len(set(labels)) != len(labels):
        raise ConfigError("heuristic labels must be unique")

    seeds = raw.get("seeds", list(DEFAULT_SEEDS))
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    try:
        seeds = tuple(int(s) for s in seeds)
    except (TypeError, ValueError):
        raise ConfigError("seeds must be a list of integers or a count") from None
    if not seeds or len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be non-empty and distinct")

    out = output if output is not None else raw.get("output")
    if not out:
        raise ConfigError("no output directory given")
    spec = ExperimentSpec(dataset, split, model, simulation, heuristics, seeds, Path(out))
    for entry in heuristics:  # model and simulation values are checked by their constructors
        try:
            spec.simulation_config(entry, seeds[0])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{entry.label}: {exc}") from None
    return spec


def load_spec(path: str | Path | None, overrides: Sequence[str] = (), output: str | Path | None = None) -> ExperimentSpec:
    raw: dict = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return parse_spec(apply_overrides(raw, overrides), output)


def build_dataset(dataset: Mapping, split: Mapping) -> Dataset:
    if "synthetic" in dataset:
        params = SyntheticParams(**dataset["synthetic"])
        pair, truth = generate_synthetic_pair(params)
        alignments = split_alignments(truth, split["train_fraction"], split["val_fraction"], split["seed"])
        name = dataset.get("name", "synthetic")
    else:
        pair, alignments = load_dataset(dataset["path"], split["val_fraction"], split["train_fraction"], split["seed"])
        name = dataset.get("name", Path(dataset["path"]).name)
    return Dataset(pair, alignments, name)


# -- running ---------------------------------------------------------------------------


def run_dir_name(label: str, seed: int) -> str:
    return f"{label}-seed{seed}"


def _run_cell(dataset: Dataset, rankings: dict, config: SimulationConfig, echo: dict, out: Path) -> float:
    result = run_simulation(dataset, config, rankings)
    write_run_artifacts(result, out, echo)
    return result.auc()


def _worker_count(requested: int | None) -> int:
    if requested is not None:
        n = requested
    else:
        env = os.environ.get(WORKERS_ENV, "1")
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from None
    if n < 1:
        raise ConfigError("worker count must be >= 1")
    return n


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> int:
    """Run every (heuristic, seed) cell, then write the aggregate; returns an exit code."""
    try:
        spec.output.mkdir(parents=True, exist_ok=True)
        probe = spec.output / ".write-test"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {exc}") from None
    try:
        dataset = build_dataset(spec.dataset, spec.split)
    except (DatasetError, OSError) as exc:
        raise ConfigError(f"dataset: {exc}") from None
    needed = set()
    for h in spec.heuristics:
        needed |= needs_rankings(h.name, h.params)
    rankings = compute_rankings(dataset.pair, sorted(needed))

    cells = spec.cells()
    jobs = []
    for entry, seed in cells:
        out = spec.output / run_dir_name(entry.label, seed)
        jobs.append((dataset, rankings, spec.simulation_config(entry, seed), spec.echo(entry, seed), out))

    failures: dict[str, str] = {}

    def record(out, result):
        try:
            value = result()
        except Exception as exc:  # noqa: BLE001 - reported per cell
            msg = "".join(traceback.format_exception(type(exc), exc, exc.__traceback__))
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.txt").write_text(msg, encoding="utf-8")
            failures[out.name] = f"{type(exc).__name__}: {exc}"
            logger.error("%s failed: %s", out.name, failures[out.name])
            return
        logger.info("%s done: auc=%.4f", out.name, value)

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, *job) for job in jobs]
            for job, fut in zip(jobs, futures):
                record(job[-1], fut.result)
    else:
        for job in jobs:
            record(job[-1], lambda job=job: _run_cell(*job))

    run_dirs = [job[-1] for job in jobs if job[-1].name not in failures]
    if run_dirs:
        write_report(run_dirs, spec.output)
    if failures:
        lines = [f"{name}: {msg}" for name, msg in sorted(failures.items())]
        (spec.output / "errors.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"{len(failures)} of {len(jobs)} runs failed:", file=sys.stderr)
        for line in lines:
            print("  " + line, file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


# -- reporting -------------------------------------------------------------------------


def _expand_run_dirs(paths: Sequence[str | Path]) -> list[Path]:
    """Run directories among ``paths``; an experiment directory contributes its children."""
    found = []
    for p in map(Path, paths):
        if not p.is_dir():
            raise FileNotFoundError(f"{p}: no such directory")
        if (p / "metrics.csv").exists():
            found.append(p)
            continue
        children = sorted(c for c in p.iterdir() if c.is_dir() and (c / "metrics.csv").exists())
        if not children:
            raise FileNotFoundError(f"{p}: not a run directory and contains none")
        found.extend(children)
    return found


def write_report(run_dirs: Sequence[Path], output: Path) -> str:
    curves = []
    aucs: dict[str, list[float]] = {}
    for d in run_dirs:
        summary, curve = read_metrics(d)
        label = d.name.rsplit("-seed", 1)[0] if "-seed" in d.name else summary["heuristic"]
        curves.append(curve)
        aucs.setdefault(label, []).append(float(summary["auc_test_h1"]))
    rows = aggregate(aucs)
    table = format_table(rows)
    output.mkdir(parents=True, exist_ok=True)
    write_aggregate_csv(rows, output / "aggregate.csv")
    (output / "aggregate.txt").write_text(table, encoding="utf-8")
    write_curves_csv(curves, output / "curves.csv")
    return table


# -- argument parsing --------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are validation errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="ea-active", description="Active learning experiments for entity alignment.", formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment (heuristics x seeds)", formatter_class=fmt)
    run.add_argument("config", nargs="?", help="YAML experiment file (optional)")
    run.add_argument("-o", "--output", help="output directory (overrides 'output')")
    run.add_argument("--heuristics", help="comma-separated heuristic names (overrides 'heuristics')")
    run.add_argument("--seeds", type=_int_list, help="comma-separated seeds (overrides 'seeds')")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config value, e.g. model.dropout=0.2")
    run.add_argument("-j", "--workers", type=int, default=None, help=f"parallel runs (default: ${WORKERS_ENV} or 1)")

    rep = sub.add_parser("report", help="aggregate existing run directories", formatter_class=fmt)
    rep.add_argument("dirs", nargs="*", help="run directories or experiment directories")
    rep.add_argument("-o", "--output", default=".", help="where aggregate.csv, aggregate.txt and curves.csv go")

    gen = sub.add_parser("gen-data", help="write a synthetic dataset as TSV files", formatter_class=fmt)
    gen.add_argument("output", help="dataset directory")
    defaults = SyntheticParams()
    gen.add_argument("--n-core", type=int, default=defaults.n_core, help="entities present in both graphs")
    gen.add_argument("--n-exclusive", type=int, default=defaults.n_exclusive_left, help="exclusive entities per side")
    gen.add_argument("--n-relations", type=int, default=defaults.n_relations)
    gen.add_argument("--edge-factor", type=float, default=defaults.edge_factor, help="mean core degree")
    gen.add_argument("--perturbation", type=float, default=defaults.perturbation, help="per-side triple drop probability")
    gen.add_argument("--degree-skew", type=float, default=defaults.degree_skew, help="Pareto shape of attachment weights; 0 for uniform")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--train-fraction", type=float, default=0.7)
    gen.add_argument("--val-fraction", type=float, default=0.2)
    gen.add_argument("--unsplit", action="store_true", help="write one alignments.tsv instead of train/validation/test files")

    rk = sub.add_parser("rankings", help="export static node rankings as CSV", formatter_class=fmt)
    rk.add_argument("dataset", help="dataset directory")
    rk.add_argument("-o", "--output", default=".", help="directory for <name>.csv files")
    rk.add_argument("--names", default=",".join(STATIC_RANKINGS), help="comma-separated ranking names")
    return parser


def cmd_run(args) -> int:
    overrides = list(args.overrides)
    if args.heuristics:
        overrides.append(f"heuristics=[{args.heuristics}]")
    if args.seeds:
        overrides.append(f"seeds={args.seeds}")
    spec = load_spec(args.config, overrides, args.output)
    return run_experiment(spec, _worker_count(args.workers))


def cmd_report(args) -> int:
    if not args.dirs:
        raise UsageError("report needs at least one run directory")
    try:
        run_dirs = _expand_run_dirs(args.dirs)
        table = write_report(run_dirs, Path(args.output))
    except (FileNotFoundError, ValueError, KeyError) as exc:
        raise ConfigError(f"malformed run directory: {exc}") from None
    sys.stdout.write(table)
    return EXIT_OK


def cmd_gen_data(args) -> int:
    skew = args.degree_skew if args.degree_skew and args.degree_skew > 0 else None
    try:
        params = SyntheticParams(
            n_core=args.n_core,
            n_exclusive_left=args.n_exclusive,
            n_exclusive_right=args.n_exclusive,
            n_relations=args.n_relations,
            edge_factor=args.edge_factor,
            perturbation=args.perturbation,
            seed=args.seed,
            degree_skew=skew,
        )
        pair, truth = generate_synthetic_pair(params)
        alignments = truth if args.unsplit else split_alignments(truth, args.train_fraction, args.val_fraction, args.seed)
    except DatasetError as exc:
        raise ConfigError(str(exc)) from None
    export_dataset(pair, alignments, args.output)
    (Path(args.output) / "params.yaml").write_text(yaml.safe_dump(asdict(params), sort_keys=True), encoding="utf-8")
    n_left, n_right = pair.sizes
    print(f"wrote {args.output}: {n_left} left / {n_right} right entities, {len(truth)} alignments")
    return EXIT_OK


def cmd_rankings(args) -> int:
    names = [n.strip() for n in args.names.split(",") if n.strip()]
    unknown = [n for n in names if n not in STATIC_RANKINGS]
    if unknown or not names:
        raise ConfigError(f"unknown ranking(s) {unknown}; choose from {', '.join(STATIC_RANKINGS)}")
    try:
        pair, _ = load_dataset(args.dataset)
    except (DatasetError, OSError) as exc:
        raise ConfigError(f"dataset: {exc}") from None
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for name, ranking in compute_rankings(pair, names).items():
        ranking.to_csv(out / f"{name}.csv")
        print(f"wrote {out / (name + '.csv')}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "report": cmd_report, "gen-data": cmd_gen_data, "rankings": cmd_rankings}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ea-active: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as exc:
        print(f"ea-active: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        logger.debug("unhandled error", exc_info=True)
        print(f"ea-active: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
