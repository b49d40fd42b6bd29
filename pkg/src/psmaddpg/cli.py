"""Command-line entry point: ``psmaddpg --config run.cfg --out results/``.

Config files are ``key = value`` lines; ``#`` starts a comment.  Every
``TrainConfig`` field is a key, plus the run-level keys in ``RUN_DEFAULTS``.
Sequences such as ``actor_hidden`` are comma-separated.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import trainers
from .envs import ENVIRONMENTS, make_env, write_trajectory
from .errors import ConfigError, InvalidSpecError, PSMADDPGError
from .evaluation import evaluate, format_structural, moving_average, structural_report
from .trainers import VARIANTS, TrainConfig, TrainResult

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
METRICS_HEADER = ("episode", "agent", "return", "total", "ma100", "epsilon", "phase")
MA_WINDOW = 100

RUN_DEFAULTS = {
    "env": "coop_spread",
    "n_agents": 2,
    "output_dir": "",
    "eval_every": 50,
    "eval_episodes": 10,
    "obs_noise": 0.0,
    "dump_trajectory": False,
    "timing_steps": 1000,
}


@dataclass
class RunSpec:
    train: TrainConfig = field(default_factory=TrainConfig)
    env: str = RUN_DEFAULTS["env"]
    n_agents: int = RUN_DEFAULTS["n_agents"]
    output_dir: str = RUN_DEFAULTS["output_dir"]
    eval_every: int = RUN_DEFAULTS["eval_every"]
    eval_episodes: int = RUN_DEFAULTS["eval_episodes"]
    obs_noise: float = RUN_DEFAULTS["obs_noise"]
    dump_trajectory: bool = RUN_DEFAULTS["dump_trajectory"]
    timing_steps: int = RUN_DEFAULTS["timing_steps"]

    def make_env(self):
        return make_env(self.env, self.n_agents, self.train.max_episode_length, self.obs_noise)

    def items(self):
        """Every key with its resolved value, training keys first."""
        yield from asdict(self.train).items()
        for k in RUN_DEFAULTS:
            yield k, getattr(self, k)


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_sizes(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(" ", "").split(",") if t)


def _converter(default):
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, tuple):
        return _parse_sizes
    return str


_TRAIN_DEFAULTS = {f.name: getattr(TrainConfig(), f.name) for f in fields(TrainConfig)}


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _check_run_value(key: str, value) -> None:
    if key == "env" and value not in ENVIRONMENTS:
        raise ValueError(f"unknown environment {value!r}; choose from {sorted(ENVIRONMENTS)}")
    if key == "n_agents" and value < 1:
        raise ValueError("n_agents must be positive")
    if key in ("eval_every", "eval_episodes", "timing_steps") and value < 0:
        raise ValueError(f"{key} must be non-negative")
    if key == "obs_noise" and value < 0:
        raise ValueError("obs_noise must be non-negative")


def parse_config(text: str) -> RunSpec:
    """Parse ``key = value`` lines; unknown keys and bad values fail with the line number."""
    train_kw: dict = {}
    run_kw: dict = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in lines:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", lineno)
        if key in _TRAIN_DEFAULTS:
            target, default = train_kw, _TRAIN_DEFAULTS[key]
        elif key in RUN_DEFAULTS:
            target, default = run_kw, RUN_DEFAULTS[key]
        else:
            raise ConfigError(f"unknown key {key!r}", lineno)
        try:
            parsed = _converter(default)(value)
            if key in RUN_DEFAULTS:
                _check_run_value(key, parsed)
            target[key] = parsed
            lines[key] = lineno
            # validate incrementally so the error points at the offending line
            TrainConfig(**train_kw)
        except (ValueError, InvalidSpecError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno) from None
    spec = RunSpec(train=TrainConfig(**train_kw), **run_kw)
    env_spec = spec.make_env().spec
    if spec.train.variant != "maddpg" and not env_spec.uniform:
        raise ConfigError(f"variant {spec.train.variant} needs uniform agent shapes, "
                          f"which {spec.env} does not have", lines.get("variant", lines.get("env")))
    return spec


def dump_config(spec: RunSpec) -> str:
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in spec.items())


# ---------------------------------------------------------------------------
# metrics


def metrics_rows(train_records, eval_points) -> list[tuple]:
    """CSV rows ordered by (phase, episode, agent).

    ``eval_points`` is a list of ``(train_episode, mean_returns)`` pairs.
    """
    rows = []
    if train_records:
        rets = np.array([r.returns for r in train_records])
        ma = np.column_stack([moving_average(rets[:, i], MA_WINDOW) for i in range(rets.shape[1])])
        for k, rec in enumerate(train_records):
            for i, ret in enumerate(rec.returns):
                rows.append((rec.episode, i, float(ret), rec.total, float(ma[k, i]),
                             float(rec.epsilon), "train"))
    if eval_points:
        rets = np.array([r for _, r in eval_points])
        ma = np.column_stack([moving_average(rets[:, i], MA_WINDOW) for i in range(rets.shape[1])])
        for k, (episode, mean_ret) in enumerate(eval_points):
            total = float(np.sum(mean_ret))
            for i, ret in enumerate(mean_ret):
                rows.append((episode, i, float(ret), total, float(ma[k, i]), 0.0, "eval"))
    rows.sort(key=lambda r: (r[6], r[0], r[1]))
    return rows


def format_metrics(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for ep, agent, ret, total, ma, eps, phase in rows:
        w.writerow([ep, agent, repr(ret), repr(total), repr(ma), repr(eps), phase])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# running


def _check_output_dir(path: str) -> None:
    if not path:
        raise ConfigError("no output directory given (use --out or output_dir)")
    if not os.path.isdir(path):
        raise ConfigError(f"output directory {path!r} does not exist")
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path!r} is not writable")


def _train_outputs(spec: RunSpec) -> tuple[dict[str, str], trainers.Ensemble]:
    env = spec.make_env()
    eval_env = spec.make_env()
    # evaluation draws from its own stream so the cadence never perturbs training
    eval_rng = np.random.default_rng([spec.train.seed, 1])
    eval_points: list[tuple[int, np.ndarray]] = []

    def sweep(ens, n_done: int, trajectory=None):
        recs = evaluate(ens, eval_env, spec.eval_episodes, eval_rng, trajectory)
        eval_points.append((n_done, np.mean([r.returns for r in recs], axis=0)))

    def on_episode(res: TrainResult):
        n_done = len(res.episodes)
        if spec.eval_every and spec.eval_episodes and n_done % spec.eval_every == 0:
            sweep(res.ensemble, n_done)

    result = trainers.train(env, spec.train, on_episode)
    trajectory = [] if spec.dump_trajectory else None
    n_done = len(result.episodes)
    if spec.eval_episodes:
        if not eval_points or eval_points[-1][0] != n_done:
            sweep(result.ensemble, n_done, trajectory)
        elif trajectory is not None:
            evaluate(result.ensemble, eval_env, spec.eval_episodes,
                     np.random.default_rng([spec.train.seed, 2]), trajectory)

    files = {"metrics.csv": format_metrics(metrics_rows(result.episodes, eval_points))}
    if trajectory is not None:
        buf = io.StringIO()
        write_trajectory(buf, trajectory)
        files["trajectory.csv"] = buf.getvalue()
    if result.warnings:
        files["warnings.txt"] = "".join(w + "\n" for w in result.warnings)
    return files, result.ensemble


def _compare_outputs(spec: RunSpec) -> dict[str, str]:
    env = spec.make_env()
    cfgs = [replace(spec.train, variant=v) for v in VARIANTS]
    rows = structural_report(cfgs, env, spec.timing_steps)
    return {"structural.txt": format_structural(rows, spec.n_agents)}


def run(spec: RunSpec, mode: str = "train") -> int:
    """Execute one run and write its artifacts; returns the process exit status."""
    try:
        _check_output_dir(spec.output_dir)
        if mode == "train":
            files, ensemble = _train_outputs(spec)
        elif mode == "compare":
            files, ensemble = _compare_outputs(spec), None
        else:
            raise ConfigError(f"unknown mode {mode!r}")
    except ConfigError as exc:
        print(f"psmaddpg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PSMADDPGError, ArithmeticError, FloatingPointError) as exc:
        print(f"psmaddpg: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    # outputs are written only after the run succeeded
    try:
        for name, content in files.items():
            with open(os.path.join(spec.output_dir, name), "w") as fh:
                fh.write(content)
        with open(os.path.join(spec.output_dir, "config.echo"), "w") as fh:
            fh.write(dump_config(spec))
        if ensemble is not None:
            net_dir = os.path.join(spec.output_dir, "nets")
            os.makedirs(net_dir, exist_ok=True)
            trainers.save_ensemble(ensemble, net_dir)
    except OSError as exc:
        print(f"psmaddpg: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _run_seed(args) -> int:
    spec, mode = args
    return run(spec, mode)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(
        prog="psmaddpg", description="Train or compare MADDPG and its parameter-sharing variants.")
    ap.add_argument("--config", help="key = value config file (defaults if omitted)")
    ap.add_argument("--mode", choices=("train", "compare"), default="train")
    ap.add_argument("--seeds", help="comma-separated seeds; each run writes to <out>/seed_<s>")
    ap.add_argument("--out", help="existing output directory (overrides output_dir)")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        text = ""
        if args.config:
            with open(args.config) as fh:
                text = fh.read()
        spec = parse_config(text)
        if args.out is not None:
            spec = replace(spec, output_dir=args.out)
        seeds = None
        if args.seeds:
            try:
                seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
            except ValueError:
                raise ConfigError(f"--seeds expects comma-separated integers, got {args.seeds!r}")
    except ConfigError as exc:
        print(f"psmaddpg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"psmaddpg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if not seeds:
        return run(spec, args.mode)

    try:
        _check_output_dir(spec.output_dir)
    except ConfigError as exc:
        print(f"psmaddpg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    jobs = []
    for s in seeds:
        sub = os.path.join(spec.output_dir, f"seed_{s}")
        os.makedirs(sub, exist_ok=True)
        jobs.append((replace(spec, output_dir=sub, train=replace(spec.train, seed=s)), args.mode))
    workers = min(len(jobs), os.cpu_count() or 1)
    if workers == 1:
        codes = [_run_seed(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            codes = list(pool.map(_run_seed, jobs))
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
