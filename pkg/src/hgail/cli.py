"""``hgail`` command line: train, ablate, eval, report."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import beta

from . import checkpoint as ckpt
from . import config as cfglib
from .config import ConfigError
from .metrics import read_curve
from .trainer import TrainConfig, evaluate, policy_from_checkpoint, run

log = logging.getLogger("hgail")

OUT_ENV = "HGAIL_OUT"
DEFAULT_OUT = "runs"
DEFAULT_SEEDS = (1, 2, 3, 4, 5)
REPORT_COLUMNS = ("variant", "runs", "success_mean", "success_std", "distance_mean", "distance_std")

SUITES = {
    "curriculum": [("curriculum", {"curriculum": True}), ("no_curriculum", {"curriculum": False})],
    "strategy": [("future", {"strategy": "future"}), ("final", {"strategy": "final"})],
    "pht": [(f"p_ht_{p}", {"p_ht": p}) for p in (0.2, 0.4, 0.6, 0.8, 1.0)],
    "reward": [(k, {"reward_formation": k}) for k in ("r1", "r2", "r3", "r4")],
    "baselines": [(a, {"algorithm": a}) for a in ("hgail", "gail_demo", "ppo_sparse", "gasil", "hgail_no")],
}


@dataclass
class ExperimentSpec:
    name: str
    base: TrainConfig
    overrides: dict = field(default_factory=dict)
    seeds: tuple = DEFAULT_SEEDS
    out_dir: Path = Path(DEFAULT_OUT)

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"seeds must be distinct, got {list(self.seeds)}")
        unknown = [k for k in self.overrides if k not in cfglib.SCHEMA]
        if unknown:
            raise ConfigError(f"unknown override keys {unknown}")

    def config_for(self, seed: int) -> TrainConfig:
        return cfglib.config_from_mapping({**self.overrides, "seed": seed}, self.base)

    def run_dir(self, seed: int) -> Path:
        return self.out_dir / self.name / f"seed_{seed}"


def output_root(cli_value: str | None) -> Path:
    return Path(cli_value or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _read_config_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror or err}") from err


def write_run_metadata(run_dir: Path, config: TrainConfig, source: bytes) -> None:
    """Snapshot of the config file, the resolved config, its seed and content hash."""
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.toml").write_bytes(source)
    (run_dir / "resolved.toml").write_text(cfglib.dumps(config))
    (run_dir / "seed").write_text(f"{config.seed}\n")
    (run_dir / "config.sha1").write_text(cfglib.blob_hash(source) + "\n")


def is_complete(run_dir: Path, config: TrainConfig) -> bool:
    """A finished run of exactly ``config`` already sits in ``run_dir``."""
    resolved = run_dir / "resolved.toml"
    if not (run_dir / "final.bin").exists() or not (run_dir / "curve.csv").exists() or not resolved.exists():
        return False
    return resolved.read_text() == cfglib.dumps(config)


def _train_one(config: TrainConfig, run_dir: Path, source: bytes, resume: bool = False):
    if resume and is_complete(run_dir, config):
        log.info("reusing finished run %s", run_dir)
        return read_curve(run_dir / "curve.csv")[-1]
    write_run_metadata(run_dir, config, source)
    result = run(config, run_dir)
    return result.curve[-1]


def cmd_train(config_path, seed: int | None, out_dir, iterations: int | None = None,
              algorithm: str | None = None) -> int:
    """Run one training job into ``out_dir``. Returns a process exit status."""
    try:
        source = _read_config_bytes(config_path)
        overrides = {}
        if seed is not None:
            overrides["seed"] = seed
        if iterations is not None:
            overrides["iterations"] = iterations
        if algorithm is not None:
            overrides["algorithm"] = algorithm
        config = cfglib.config_from_mapping({**cfglib.parse(source.decode("utf-8")), **overrides})
    except ConfigError as err:
        print(f"error: {config_path}: {err}", file=sys.stderr)
        return 2
    try:
        last = _train_one(config, Path(out_dir), source)
    except OSError as err:
        print(f"error: cannot write to {out_dir}: {err}", file=sys.stderr)
        return 1
    print(f"final success {last.success_rate:.3f}  distance {last.distance_error_mean:.4f}")
    return 0


def suite_specs(suite: str, base: TrainConfig, seeds, out_dir: Path) -> list[ExperimentSpec]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {sorted(SUITES)}")
    return [ExperimentSpec(name, base, dict(ov), tuple(seeds), Path(out_dir)) for name, ov in SUITES[suite]]


def cmd_ablate(suite: str, config_path, seeds, out_dir, iterations: int | None = None, jobs: int = 1,
               resume: bool = False) -> int:
    try:
        source = _read_config_bytes(config_path)
        values = cfglib.parse(source.decode("utf-8"))
        if iterations is not None:
            values["iterations"] = iterations
        base = cfglib.config_from_mapping(values)
        specs = suite_specs(suite, base, seeds, Path(out_dir))
    except (ConfigError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    jobs_list = [(spec.config_for(s), spec.run_dir(s)) for spec in specs for s in spec.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_train_one, c, d, source, resume) for c, d in jobs_list]
            for f in futures:
                f.result()
    else:
        for c, d in jobs_list:
            _train_one(c, d, source, resume)
    rows = aggregate(Path(out_dir), [s.name for s in specs])
    write_report(Path(out_dir) / "report.csv", rows)
    print(format_report(rows))
    return 0


def final_records(variant_dir: Path) -> list:
    records = []
    for seed_dir in sorted(variant_dir.glob("seed_*")):
        curve = seed_dir / "curve.csv"
        if curve.exists():
            rows = read_curve(curve)
            if rows:
                records.append(rows[-1])
    return records


def aggregate(out_dir: Path, variants=None) -> list[dict]:
    """Mean and std of final success and distance per variant, from the curve files."""
    out_dir = Path(out_dir)
    if variants is None:
        variants = sorted(p.name for p in out_dir.iterdir() if p.is_dir() and any(p.glob("seed_*")))
    rows = []
    for name in variants:
        recs = final_records(out_dir / name)
        if not recs:
            continue
        succ = np.array([r.success_rate for r in recs])
        dist = np.array([r.distance_error_mean for r in recs])
        rows.append({
            "variant": name, "runs": len(recs),
            "success_mean": float(succ.mean()), "success_std": float(succ.std()),
            "distance_mean": float(dist.mean()), "distance_std": float(dist.std()),
        })
    return rows


def write_report(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in REPORT_COLUMNS])


def read_report(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["runs"] = int(row["runs"])
        for c in REPORT_COLUMNS[2:]:
            row[c] = float(row[c])
    return rows


def format_report(rows: list[dict]) -> str:
    lines = [f"{'variant':<16}{'runs':>5}  {'success':>15}  {'distance (L1)':>17}"]
    for r in rows:
        lines.append(f"{r['variant']:<16}{r['runs']:>5}  {r['success_mean']:.3f} ± {r['success_std']:.3f}"
                     f"  {r['distance_mean']:.4f} ± {r['distance_std']:.4f}")
    return "\n".join(lines)


def cmd_report(out_dir) -> int:
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        print(f"error: no such directory {out_dir}", file=sys.stderr)
        return 2
    rows = aggregate(out_dir)
    if not rows:
        print(f"error: no runs under {out_dir}", file=sys.stderr)
        return 1
    write_report(out_dir / "report.csv", rows)
    print(format_report(rows))
    return 0


def binomial_interval(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson interval for a binomial proportion."""
    if n < 1:
        raise ValueError("need at least one trial")
    alpha = 1.0 - level
    lo = 0.0 if successes == 0 else float(beta.ppf(alpha / 2, successes, n - successes + 1))
    hi = 1.0 if successes == n else float(beta.ppf(1 - alpha / 2, successes + 1, n - successes))
    return lo, hi


def evaluate_checkpoint(checkpoint_path, config: TrainConfig, episodes: int) -> dict:
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    policy = policy_from_checkpoint(ckpt.load(checkpoint_path), config.env)
    success, dist_mean, dist_std = evaluate(policy, config, episodes)
    k = int(round(success * episodes))
    lo, hi = binomial_interval(k, episodes)
    return {"episodes": episodes, "success_rate": success, "ci_low": lo, "ci_high": hi,
            "distance_mean": dist_mean, "distance_std": dist_std}


def cmd_eval(checkpoint_path, config_path, episodes: int) -> int:
    if episodes < 1:
        print("error: --episodes must be >= 1", file=sys.stderr)
        return 2
    try:
        config = cfglib.load(config_path) if config_path else TrainConfig()
        report = evaluate_checkpoint(checkpoint_path, config, episodes)
    except (ConfigError, ckpt.CheckpointError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"success {report['success_rate']:.3f}  95% CI [{report['ci_low']:.3f}, {report['ci_high']:.3f}]"
          f"  over {episodes} episodes")
    print(f"distance (L1) {report['distance_mean']:.4f} ± {report['distance_std']:.4f}")
    return 0


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hgail", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one policy")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help=f"run directory (default ${OUT_ENV}/train or ./{DEFAULT_OUT}/train)")
    t.add_argument("--iterations", type=int)
    t.add_argument("--algorithm")

    a = sub.add_parser("ablate", help="run an ablation suite over several seeds")
    a.add_argument("--suite", required=True, choices=sorted(SUITES))
    a.add_argument("--config", required=True)
    a.add_argument("--seeds", type=_seeds, default=list(DEFAULT_SEEDS))
    a.add_argument("--out")
    a.add_argument("--iterations", type=int)
    a.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    a.add_argument("--resume", action="store_true", help="skip runs already finished with the same config")

    e = sub.add_parser("eval", help="evaluate a checkpoint with mean actions")
    e.add_argument("checkpoint")
    e.add_argument("--config")
    e.add_argument("--episodes", type=int, default=100)

    r = sub.add_parser("report", help="aggregate final metrics of finished runs")
    r.add_argument("--out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "train":
        out = Path(args.out) if args.out else output_root(None) / "train"
        return cmd_train(args.config, args.seed, out, args.iterations, args.algorithm)
    if args.command == "ablate":
        out = Path(args.out) if args.out else output_root(None) / args.suite
        return cmd_ablate(args.suite, args.config, args.seeds, out, args.iterations, args.jobs, args.resume)
    if args.command == "eval":
        return cmd_eval(args.checkpoint, args.config, args.episodes)
    return cmd_report(output_root(args.out))


if __name__ == "__main__":
    sys.exit(main())
