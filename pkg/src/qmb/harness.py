"""Experiment configuration, orchestration, and CSV/JSON output."""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .model import Instance, InstanceConfig, generate_instance
from .policies import PolicyKind, PolicyParams
from .simulator import RunMetrics, run

CSV_HEADER = "t,total_queue,cum_regret,est_error"
SUMMARY_FILE = "summary.json"
INSTANCE_FILE = "instance.json"
RUN_STATS = (
    "avg_queue", "final_regret", "q_max", "first_decile", "middle_decile", "last_decile", "regret_slope",
)


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class PolicySpec:
    kind: PolicyKind
    params: PolicyParams = field(default_factory=PolicyParams)
    label: str = ""

    @property
    def name(self) -> str:
        return self.label or self.kind.value


@dataclass
class ExperimentConfig:
    instance: Union[InstanceConfig, str]
    T: int
    seeds: list
    policies: list = field(
        default_factory=lambda: [PolicySpec(k) for k in PolicyKind]
    )
    output_dir: str = "results"
    thin: int = 1


_INSTANCE_KEYS = {f.name for f in fields(InstanceConfig)}
_POLICY_KEYS = {f.name for f in fields(PolicyParams)} | {"kind", "label"}
_TOP_KEYS = {"instance", "T", "seeds", "policies", "output_dir", "thin"}


def _int(key, value, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(key, f"must be at least {minimum}, got {value}")
    return value


def _parse_policy(i: int, doc) -> PolicySpec:
    key = f"policies[{i}]"
    if isinstance(doc, str):
        doc = {"kind": doc}
    if not isinstance(doc, dict):
        raise ConfigError(key, "expected a policy kind or an object")
    for k in doc:
        if k not in _POLICY_KEYS:
            raise ConfigError(f"{key}.{k}", "unknown key")
    if "kind" not in doc:
        raise ConfigError(f"{key}.kind", "missing")
    try:
        kind = PolicyKind(doc["kind"])
    except ValueError:
        raise ConfigError(f"{key}.kind", f"unknown policy {doc['kind']!r}") from None
    params = {k: v for k, v in doc.items() if k not in ("kind", "label")}
    try:
        return PolicySpec(kind, PolicyParams(**params), str(doc.get("label", "")))
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, str(exc)) from None


def parse_config(text: str, base_dir: Optional[str] = None) -> ExperimentConfig:
    """Parse a JSON experiment document; unknown keys are rejected.

    A string ``instance`` is a path to a serialized instance, resolved
    against ``base_dir`` when relative.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("<document>", "expected an object")
    for k in doc:
        if k not in _TOP_KEYS:
            raise ConfigError(k, "unknown key")
    for k in ("instance", "T", "seeds"):
        if k not in doc:
            raise ConfigError(k, "missing")

    inst = doc["instance"]
    if isinstance(inst, str):
        path = Path(inst)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        instance: Union[InstanceConfig, str] = str(path)
    elif isinstance(inst, dict):
        for k in inst:
            if k not in _INSTANCE_KEYS:
                raise ConfigError(f"instance.{k}", "unknown key")
        try:
            instance = InstanceConfig(**inst)
        except (TypeError, ValueError) as exc:
            raise ConfigError("instance", str(exc)) from None
    else:
        raise ConfigError("instance", "expected an object or a path")

    T = _int("T", doc["T"], 1)
    seeds = doc["seeds"]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "expected a nonempty list")
    for j, s in enumerate(seeds):
        _int(f"seeds[{j}]", s, 0)
        if s >= 2**64:
            raise ConfigError(f"seeds[{j}]", "exceeds 64 bits")
    if "policies" in doc:
        if not isinstance(doc["policies"], list) or not doc["policies"]:
            raise ConfigError("policies", "expected a nonempty list")
        policies = [_parse_policy(i, p) for i, p in enumerate(doc["policies"])]
    else:
        policies = [PolicySpec(k) for k in PolicyKind]
    names = [p.name for p in policies]
    if len(set(names)) != len(names):
        raise ConfigError("policies", f"duplicate policy names {names}; set distinct labels")
    output_dir = doc.get("output_dir", "results")
    if not isinstance(output_dir, str):
        raise ConfigError("output_dir", "expected a path string")
    thin = _int("thin", doc.get("thin", 1), 1)
    return ExperimentConfig(instance, T, list(seeds), policies, output_dir, thin)


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical JSON form; ``parse_config(dump_config(c)) == c``."""
    doc = {
        "instance": cfg.instance if isinstance(cfg.instance, str) else asdict(cfg.instance),
        "T": cfg.T,
        "seeds": list(cfg.seeds),
        "policies": [
            {"kind": p.kind.value, "label": p.label, **asdict(p.params)} for p in cfg.policies
        ],
        "output_dir": cfg.output_dir,
        "thin": cfg.thin,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_instance(cfg: ExperimentConfig) -> Instance:
    if isinstance(cfg.instance, InstanceConfig):
        return generate_instance(cfg.instance)
    return Instance.loads(Path(cfg.instance).read_text())


# -- time series ---------------------------------------------------------

def _fmt(x: float) -> str:
    return "" if math.isnan(x) else format(float(x), ".17g")


def emitted_rows(T: int, thin: int) -> list[int]:
    """1-based rounds written for a horizon ``T`` at stride ``thin``."""
    rows = list(range(1, T + 1, thin))
    if rows[-1] != T:
        rows.append(T)
    return rows


def write_timeseries(metrics: RunMetrics, path, thin: int = 1) -> None:
    if thin < 1:
        raise ValueError(f"thin must be at least 1, got {thin}")
    lines = [CSV_HEADER]
    for t in emitted_rows(metrics.T, thin):
        i = t - 1
        lines.append(
            f"{t},{_fmt(metrics.total_queue[i])},{_fmt(metrics.cum_regret[i])},{_fmt(metrics.est_error[i])}"
        )
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_timeseries(path) -> dict:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        cols: dict = {"t": [], "total_queue": [], "cum_regret": [], "est_error": []}
        for line in fh:
            t, tq, cr, ee = line.rstrip("\n").split(",")
            cols["t"].append(int(t))
            cols["total_queue"].append(float(tq))
            cols["cum_regret"].append(float(cr))
            cols["est_error"].append(float(ee) if ee else math.nan)
    return {k: np.asarray(v) for k, v in cols.items()}


# -- summaries -------------------------------------------------------------

def regret_slope(t: np.ndarray, cum_regret: np.ndarray, T: int) -> float:
    """Least-squares slope of log(R + 1) against log t over T/4 <= t <= T."""
    mask = t >= T / 4
    if mask.sum() < 2:
        return math.nan
    x = np.log(t[mask].astype(float))
    y = np.log(cum_regret[mask] + 1.0)
    x = x - x.mean()
    return float(x @ (y - y.mean()) / (x @ x))


def _window_mean(t, values, lo, hi) -> float:
    mask = (t > lo) & (t <= hi)
    return float(values[mask].mean()) if mask.any() else math.nan


def run_stats(t, total_queue, cum_regret, T: int, q_max: int) -> dict:
    """Per-run summary computed only from emitted rows (plus ``q_max``)."""
    return {
        "avg_queue": float(np.mean(total_queue)),
        "final_regret": float(cum_regret[-1]),
        "q_max": int(q_max),
        "first_decile": _window_mean(t, total_queue, 0, 0.1 * T),
        "middle_decile": _window_mean(t, total_queue, 0.45 * T, 0.55 * T),
        "last_decile": _window_mean(t, total_queue, 0.9 * T, T),
        "regret_slope": regret_slope(t, cum_regret, T),
    }


@dataclass
class Summary:
    runs: list  # dicts with policy, seed, T and RUN_STATS
    policies: dict  # name -> stat -> {"mean", "std"}

    @classmethod
    def from_runs(cls, runs: list) -> "Summary":
        by_policy: dict = {}
        for r in runs:
            by_policy.setdefault(r["policy"], []).append(r)
        aggregates = {}
        for name, rows in by_policy.items():
            aggregates[name] = {}
            for stat in RUN_STATS:
                vals = np.array([r[stat] for r in rows], dtype=float)
                std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
                aggregates[name][stat] = {"mean": float(np.mean(vals)), "std": std}
        return cls(runs, aggregates)

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, float) and math.isnan(x):
                return None
            if isinstance(x, dict):
                return {k: clean(v) for k, v in x.items()}
            if isinstance(x, list):
                return [clean(v) for v in x]
            return x

        return clean({"runs": self.runs, "policies": self.policies})

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def run_file_stem(policy: str, seed: int) -> str:
    return f"{policy}__seed{seed}"


def _run_task(args):
    inst, spec, T, seed = args
    return run(inst, spec.kind, T, seed, spec.params)


def run_experiment(cfg: ExperimentConfig, parallel: int = 1) -> Summary:
    """Run every (policy, seed) pair, write time series and a summary.

    Results are merged in (policy, seed) order, so output does not depend on
    ``parallel``.
    """
    inst = load_instance(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / INSTANCE_FILE).write_text(inst.dumps())
    tasks = [(spec, seed) for spec in cfg.policies for seed in cfg.seeds]
    payload = [(inst, spec, cfg.T, seed) for spec, seed in tasks]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_task, payload))
    else:
        results = [_run_task(p) for p in payload]

    runs = []
    rows = np.asarray(emitted_rows(cfg.T, cfg.thin))
    for (spec, seed), metrics in zip(tasks, results):
        stem = run_file_stem(spec.name, seed)
        write_timeseries(metrics, out / f"{stem}.csv", cfg.thin)
        meta = {"policy": spec.name, "kind": spec.kind.value, "seed": seed, "T": cfg.T,
                "thin": cfg.thin, "q_max": metrics.q_max}
        (out / f"{stem}.run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        # round-tripped floats are exact, so these match what summarize recomputes
        stats = run_stats(rows, metrics.total_queue[rows - 1], metrics.cum_regret[rows - 1], cfg.T, metrics.q_max)
        runs.append({"policy": spec.name, "seed": seed, "T": cfg.T, **stats})
    summary = Summary.from_runs(runs)
    (out / SUMMARY_FILE).write_text(summary.dumps())
    return summary


def summarize(out_dir) -> Summary:
    """Recompute the summary from emitted CSVs and their ``.run.json`` sidecars."""
    out = Path(out_dir)
    metas = [json.loads(p.read_text()) for p in sorted(out.glob("*.run.json"))]
    if not metas:
        raise FileNotFoundError(f"no run files in {out}")
    # reproduce (policy, seed) order from the run summary when present
    order = None
    if (out / SUMMARY_FILE).exists():
        prior = json.loads((out / SUMMARY_FILE).read_text())
        order = [(r["policy"], r["seed"]) for r in prior["runs"]]
    if order is not None and sorted(order) == sorted((m["policy"], m["seed"]) for m in metas):
        index = {(m["policy"], m["seed"]): m for m in metas}
        metas = [index[key] for key in order]
    runs = []
    for m in metas:
        cols = read_timeseries(out / f"{run_file_stem(m['policy'], m['seed'])}.csv")
        stats = run_stats(cols["t"], cols["total_queue"], cols["cum_regret"], m["T"], m["q_max"])
        runs.append({"policy": m["policy"], "seed": m["seed"], "T": m["T"], **stats})
    return Summary.from_runs(runs)


# -- command line ----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError("<arguments>", message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qmb", description="Queueing matching bandit experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    gen = sub.add_parser("gen", help="write a serialized instance from an instance config")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", help="directory for instance.json (stdout if omitted)")
    gen.add_argument("--seed", type=int)
    runp = sub.add_parser("run", help="run an experiment config")
    runp.add_argument("--config", required=True)
    runp.add_argument("--out", help="override output_dir")
    runp.add_argument("--seed", type=int, help="run this single seed instead of the config's")
    runp.add_argument("--parallel", type=int, default=1)
    summ = sub.add_parser("summarize", help="recompute the summary from emitted files")
    summ.add_argument("--out", required=True, help="experiment output directory")
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        if args.command == "gen":
            doc = json.loads(Path(args.config).read_text())
            if not isinstance(doc, dict):
                raise ConfigError("<document>", "expected an object")
            if args.seed is not None:
                doc["seed"] = args.seed
            unknown = set(doc) - _INSTANCE_KEYS
            if unknown:
                raise ConfigError(sorted(unknown)[0], "unknown key")
            try:
                inst = generate_instance(InstanceConfig(**doc))
            except ValueError as exc:
                raise ConfigError("instance", str(exc)) from None
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / INSTANCE_FILE).write_text(inst.dumps())
            else:
                sys.stdout.write(inst.dumps())
            return 0
        if args.command == "run":
            path = Path(args.config)
            cfg = parse_config(path.read_text(), base_dir=str(path.parent))
            if args.out:
                cfg.output_dir = args.out
            if args.seed is not None:
                if not 0 <= args.seed < 2**64:
                    raise ConfigError("--seed", "must be an unsigned 64-bit integer")
                cfg.seeds = [args.seed]
            if args.parallel < 1:
                raise ConfigError("--parallel", "must be at least 1")
            summary = run_experiment(cfg, parallel=args.parallel)
            sys.stdout.write(json.dumps(summary.to_dict()["policies"], indent=2) + "\n")
            return 0
        summary = summarize(args.out)
        sys.stdout.write(summary.dumps())
        return 0
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
