"""Experiment protocol: seeded trials, greedy test episodes, summaries, outputs.

A trial trains one agent for ``episodes`` episodes and then runs
``test_episodes`` greedy episodes with learning frozen.  Trial ``i`` is
seeded from ``seed + i`` alone, so trials can run in any order or in
parallel (``ACTGRAD_THREADS`` caps the worker count) and still produce the
same records.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import agents as ag
from .critic import TrainingDiverged
from .envs import make_env
from .features import Encoder, encode
from .plot import curves_svg

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "SummaryStats",
    "run_episode",
    "run_trial",
    "run_experiment",
    "aggregate",
    "emit_outputs",
    "write_records",
    "read_records",
    "worker_count",
]

log = logging.getLogger(__name__)

ENV_DEFAULTS = {
    "cartpole": {"episodes": 1500, "train_cap": 250},
    "lander": {"episodes": 700, "train_cap": 500},
}
CSV_HEADER = ["trial", "episode", "phase", "return", "steps", "solved", "diverged"]


@dataclass
class ExperimentConfig:
    env: str = "cartpole"
    agents: list = field(default_factory=lambda: [ag.AgentConfig()])
    episodes: Optional[int] = None
    train_cap: Optional[int] = None
    test_cap: Optional[int] = None
    trials: int = 10
    test_episodes: int = 100
    seed: int = 0
    out: Optional[str] = None
    encoder: Optional[dict] = None
    smoothing_window: int = 50

    def __post_init__(self):
        defaults = ENV_DEFAULTS.get(self.env, {})
        if self.episodes is None:
            self.episodes = defaults.get("episodes", 100)
        if self.train_cap is None:
            self.train_cap = defaults.get("train_cap", 250)
        if self.test_cap is None:
            self.test_cap = self.train_cap
        self.agents = [a if isinstance(a, ag.AgentConfig) else ag.AgentConfig.from_dict(a) for a in self.agents]

    def validate(self) -> "ExperimentConfig":
        if self.env not in ENV_DEFAULTS:
            raise ag.ConfigError(f"env: unknown environment {self.env!r}")
        for name in ("episodes", "test_episodes"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ag.ConfigError(f"{name}: must be a non-negative integer, got {v!r}")
        for name in ("train_cap", "test_cap", "trials", "smoothing_window"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ag.ConfigError(f"{name}: must be a positive integer, got {v!r}")
        if not isinstance(self.seed, int):
            raise ag.ConfigError(f"seed: must be an integer, got {self.seed!r}")
        if not self.agents:
            raise ag.ConfigError("agents: at least one agent is required")
        kinds = [a.kind for a in self.agents]
        if len(set(kinds)) != len(kinds):
            raise ag.ConfigError("agents: each agent kind may appear only once")
        for a in self.agents:
            a.validate()
        if self.encoder is not None:
            try:
                Encoder.from_dict(self.encoder)
            except (KeyError, TypeError, ValueError) as exc:
                raise ag.ConfigError(f"encoder: {exc}") from None
        return self

    def make_encoder(self, env) -> Encoder:
        if self.encoder is None:
            return env.default_encoder()
        return Encoder.from_dict(self.encoder)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["agents"] = [a.to_dict() for a in self.agents]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ag.ConfigError(f"{sorted(unknown)[0]}: unknown config field")
        return cls(**d)


@dataclass(frozen=True)
class RunRecord:
    trial: int
    episode: int
    phase: str
    episode_return: float
    steps: int
    solved: bool
    diverged: bool = False

    def __post_init__(self):
        # stored at CSV precision so records round-trip exactly
        object.__setattr__(self, "episode_return", round(float(self.episode_return), 6))

    def sort_key(self):
        return (self.trial, 0 if self.phase == "train" else 1, self.episode)


def worker_count() -> int:
    env = os.environ.get("ACTGRAD_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ag.ConfigError(f"ACTGRAD_THREADS: not an integer: {env!r}") from None
        return max(1, n)
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def run_episode(env, encoder, agent, config, rng, cap: int, learn: bool):
    """Run one episode; returns ``(return, steps, solved)``.

    With ``learn`` the agent acts through its behavior policy and updates
    after every step; otherwise it acts greedily and nothing changes.
    """
    obs = env.reset(rng)
    x = encode(encoder, obs)
    if learn:
        ag.start_episode(agent)
    mode = "train" if learn else "test"
    total = 0.0
    terminal = False
    steps = 0
    while steps < cap:
        a, _, b_prob = ag.act(agent, config, x, mode, rng)
        out = env.step(a)
        steps += 1
        total += out.reward
        terminal = out.terminal
        x_next = encode(encoder, out.observation)
        if learn:
            ag.agent_step(agent, config, ag.Transition(x, a, out.reward, x_next, terminal, b_prob))
        if terminal:
            break
        x = x_next
    truncated = not terminal
    return total, steps, env.solved(terminal, truncated)


def _trial_rngs(seed: int):
    # separate streams so the test episodes do not depend on training length
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(2)]


def run_trial(config: ExperimentConfig, agent_config: ag.AgentConfig, trial_index: int) -> list:
    env = make_env(config.env)
    encoder = config.make_encoder(env)
    agent = ag.make_agent(agent_config, encoder.output_dim, env.num_actions)
    train_rng, test_rng = _trial_rngs(config.seed + trial_index)
    records = []
    diverged_at = None
    for ep in range(config.episodes):
        try:
            ret, steps, solved = run_episode(env, encoder, agent, agent_config, train_rng, config.train_cap, True)
        except TrainingDiverged:
            diverged_at = ep
            log.warning("trial %d of %s diverged in episode %d", trial_index, agent_config.kind, ep)
            break
        records.append(RunRecord(trial_index, ep, "train", ret, steps, solved))
    if diverged_at is not None:
        records += [RunRecord(trial_index, ep, "train", math.nan, 0, False, True)
                    for ep in range(diverged_at, config.episodes)]
        records += [RunRecord(trial_index, ep, "test", math.nan, 0, False, True)
                    for ep in range(config.test_episodes)]
        return records
    for ep in range(config.test_episodes):
        ret, steps, solved = run_episode(env, encoder, agent, agent_config, test_rng, config.test_cap, False)
        records.append(RunRecord(trial_index, ep, "test", ret, steps, solved))
    return records


def _run_trial_job(args):
    config, agent_config, trial = args
    return agent_config.kind, trial, run_trial(config, agent_config, trial)


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> dict:
    """Run every (agent, trial) pair; returns ``{agent kind: sorted records}``."""
    config.validate()
    jobs = [(config, a, t) for a in config.agents for t in range(config.trials)]
    workers = worker_count() if workers is None else workers
    results: dict = {a.kind: [] for a in config.agents}
    if workers <= 1 or len(jobs) == 1:
        done = map(_run_trial_job, jobs)
        for kind, _, recs in done:
            results[kind].extend(recs)
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            for kind, _, recs in pool.map(_run_trial_job, jobs):
                results[kind].extend(recs)
    for kind in results:
        results[kind].sort(key=RunRecord.sort_key)
    return results


@dataclass
class SummaryStats:
    test_mean: Optional[float]
    test_stderr: Optional[float]
    solved_pct: Optional[float]
    test_count: int
    trial_means: list
    curve: np.ndarray
    diverged_trials: int

    @property
    def has_test(self) -> bool:
        return self.test_count > 0

    @property
    def trial_variance(self) -> Optional[float]:
        if len(self.trial_means) < 2:
            return None
        return float(np.var(self.trial_means, ddof=1))

    def to_dict(self) -> dict:
        # test statistics are omitted entirely when there were no test episodes
        d = {"diverged_trials": self.diverged_trials, "train_curve": [
            None if math.isnan(v) else round(float(v), 6) for v in self.curve
        ]}
        if self.has_test:
            d.update(
                mean=self.test_mean,
                stderr=self.test_stderr,
                solved_pct=self.solved_pct,
                test_episodes=self.test_count,
                trial_means=self.trial_means,
                trial_variance=self.trial_variance,
            )
        return d


def aggregate(records: Sequence[RunRecord]) -> SummaryStats:
    """Pool test episodes across trials; average training returns per episode.

    The standard error is the sample standard deviation of the pooled test
    returns divided by sqrt(n).  Diverged episodes are excluded from means
    and count as unsolved.
    """
    if not records:
        raise ValueError("cannot aggregate an empty record list")
    test = [r for r in records if r.phase == "test"]
    train = [r for r in records if r.phase == "train"]
    diverged_trials = len({r.trial for r in records if r.diverged})

    mean = stderr = solved = None
    trial_means = []
    if test:
        rets = np.array(sorted(r.episode_return for r in test if not r.diverged))
        solved = 100.0 * sum(r.solved for r in test) / len(test)
        if rets.size:
            mean = float(rets.mean())
            stderr = float(rets.std(ddof=1) / math.sqrt(rets.size)) if rets.size > 1 else 0.0
        by_trial: dict = {}
        for r in test:
            if not r.diverged:
                by_trial.setdefault(r.trial, []).append(r.episode_return)
        trial_means = [float(np.mean(sorted(by_trial[t]))) for t in sorted(by_trial)]

    curve = np.zeros(0)
    if train:
        n_ep = max(r.episode for r in train) + 1
        sums = np.zeros(n_ep)
        counts = np.zeros(n_ep)
        for r in sorted(train, key=RunRecord.sort_key):
            if not r.diverged:
                sums[r.episode] += r.episode_return
                counts[r.episode] += 1
        with np.errstate(invalid="ignore"):
            curve = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return SummaryStats(mean, stderr, solved, len(test), trial_means, curve, diverged_trials)


def _fmt_return(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.6f}"


def write_records(records: Sequence[RunRecord], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.trial, r.episode, r.phase, _fmt_return(r.episode_return), r.steps,
                    int(r.solved), int(r.diverged)])
    _write_text(path, buf.getvalue())


def read_records(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0] if rows else None}")
    return [
        RunRecord(int(t), int(e), p, float(ret), int(st), bool(int(so)), bool(int(dv)))
        for t, e, p, ret, st, so, dv in rows[1:]
    ]


def _write_text(path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_outputs(stats: dict, records: dict, out_dir, config: Optional[ExperimentConfig] = None) -> list:
    """Write records CSV(s), ``summary.json`` and ``curves.svg``; returns the paths.

    A single-agent run writes ``records.csv`` into ``out_dir``; with several
    agents each gets ``<out_dir>/<kind>/records.csv``.
    """
    out = Path(out_dir)
    written = []
    for kind, recs in records.items():
        p = out / "records.csv" if len(records) == 1 else out / kind / "records.csv"
        write_records(recs, p)
        written.append(p)
    summary = {"agents": {k: s.to_dict() for k, s in stats.items()}}
    if config is not None:
        summary["config"] = config.to_dict()
    p = out / "summary.json"
    _write_text(p, json.dumps(summary, indent=2, allow_nan=False, default=_json_default) + "\n")
    written.append(p)
    window = config.smoothing_window if config is not None else 50
    title = f"Average training return ({config.env})" if config is not None else "Average training return"
    p = out / "curves.svg"
    _write_text(p, curves_svg({k: s.curve for k, s in stats.items()}, window=window, title=title))
    written.append(p)
    return written


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
