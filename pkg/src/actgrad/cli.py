"""Command line entry point: ``actgrad train | verify | bench``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from . import agents as ag
from . import harness
from .envs import make_env
from .features import encode

log = logging.getLogger("actgrad")

AGENT_FLAGS = {
    "alpha_theta": float,
    "alpha_v": float,
    "alpha_w": float,
    "gamma": float,
    "lam": float,
    "epsilon_behavior": float,
}


def _agent_list(value: str) -> list:
    return [k.strip() for k in value.split(",") if k.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="actgrad", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run a multi-trial experiment")
    t.add_argument("--config", help="JSON experiment config; flags override its fields")
    t.add_argument("--env", choices=sorted(harness.ENV_DEFAULTS))
    t.add_argument("--agent", action="append", type=_agent_list,
                   help="agent kind(s): actgrad, offpac, qlambda; repeat or comma-separate")
    t.add_argument("--trials", type=int)
    t.add_argument("--episodes", type=int)
    t.add_argument("--train-cap", type=int)
    t.add_argument("--test-cap", type=int)
    t.add_argument("--test-episodes", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.add_argument("--window", type=int, dest="smoothing_window", help="moving-average window for curves.svg")
    t.add_argument("--alpha-theta", type=float)
    t.add_argument("--alpha-v", type=float)
    t.add_argument("--alpha-w", type=float)
    t.add_argument("--gamma", type=float)
    t.add_argument("--lambda", type=float, dest="lam")
    t.add_argument("--epsilon", type=float, dest="epsilon_behavior")
    t.add_argument("--workers", type=int, help="worker processes (default: ACTGRAD_THREADS or CPU count)")

    v = sub.add_parser("verify", help="check the exact gradient identities on tabular MDPs")
    v.add_argument("--seeds", type=int, default=100, help="number of random MDPs")

    b = sub.add_parser("bench", help="agent + environment steps per second")
    b.add_argument("--env", choices=sorted(harness.ENV_DEFAULTS), default="cartpole")
    b.add_argument("--agent", default="actgrad", choices=ag.AGENT_KINDS)
    b.add_argument("--steps", type=int, default=20000)
    b.add_argument("--seed", type=int, default=0)
    return p


def config_from_args(args) -> harness.ExperimentConfig:
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ag.ConfigError(f"config: cannot read {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ag.ConfigError(f"config: invalid JSON in {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ag.ConfigError("config: top level must be a JSON object")
    for name in ("env", "trials", "episodes", "train_cap", "test_cap", "test_episodes", "seed",
                 "out", "smoothing_window"):
        value = getattr(args, name)
        if value is not None:
            data[name] = value
    agents = [ag.AgentConfig.from_dict(a) if isinstance(a, dict) else a for a in data.pop("agents", [])]
    if args.agent:
        kinds = [k for group in args.agent for k in group]
        by_kind = {a.kind: a for a in agents}
        template = agents[0] if agents else ag.AgentConfig()
        agents = []
        for k in kinds:
            base = by_kind.get(k, template)
            agents.append(ag.AgentConfig(**{**base.__dict__, "kind": k}))
    if not agents:
        agents = [ag.AgentConfig()]
    for name in AGENT_FLAGS:
        value = getattr(args, name)
        if value is not None:
            for a in agents:
                setattr(a, name, value)
    cfg = harness.ExperimentConfig.from_dict({**data, "agents": agents})
    return cfg.validate()


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    if cfg.out is None:
        raise ag.ConfigError("out: an output directory is required (--out or config 'out')")
    t0 = time.perf_counter()
    records = harness.run_experiment(cfg, workers=args.workers)
    stats = {k: harness.aggregate(r) for k, r in records.items()}
    paths = harness.emit_outputs(stats, records, cfg.out, cfg)
    for kind, s in stats.items():
        if s.has_test:
            print(f"{kind:8s} test return {s.test_mean:.2f} +- {s.test_stderr:.2f}  "
                  f"solved {s.solved_pct:.1f}%  diverged trials {s.diverged_trials}")
        else:
            print(f"{kind:8s} (no test episodes)  diverged trials {s.diverged_trials}")
    print(f"wrote {', '.join(str(p) for p in paths)} in {time.perf_counter() - t0:.1f}s")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_suite

    checks = run_suite(seeds=args.seeds)
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    print("all identities hold" if ok else "identity check FAILED")
    return 0 if ok else 1


def cmd_bench(args) -> int:
    env = make_env(args.env)
    enc = env.default_encoder()
    cfg = ag.AgentConfig(kind=args.agent)
    agent = ag.make_agent(cfg, enc.output_dim, env.num_actions)
    rng = np.random.default_rng(args.seed)
    done = 0
    t0 = time.perf_counter()
    while done < args.steps:
        ag.start_episode(agent)
        x = encode(enc, env.reset(rng))
        while done < args.steps:
            a, _, bp = ag.act(agent, cfg, x, "train", rng)
            out = env.step(a)
            x2 = encode(enc, out.observation)
            ag.agent_step(agent, cfg, ag.Transition(x, a, out.reward, x2, out.terminal, bp))
            done += 1
            if out.terminal:
                break
            x = x2
    dt = time.perf_counter() - t0
    print(f"{args.agent} on {args.env}: {done / dt:,.0f} steps/s ({1e6 * dt / done:.1f} us/step)")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"train": cmd_train, "verify": cmd_verify, "bench": cmd_bench}[args.command]
    try:
        return handler(args)
    except ag.ConfigError as exc:
        print(f"actgrad: error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"actgrad: error: {exc}", file=sys.stderr)
        return 1


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
