"""Command-line entry point: ``sizeinline <subcommand> ...``.

Every flag can also come from a JSON ``--config`` file (keys are the flag
names with dashes replaced by underscores).  Precedence, lowest first:
built-in defaults, config file, ``SIZEINLINE_<KEY>`` environment variables
(path settings only), command-line flags.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.  Failures print
a single JSON line to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import corpusgen, irmodel
from . import policy as policy_io
from ._io import atomic_write_text
from .environment import ARGMAX, MODES, read_log, run_episode, write_log
from .errors import NumericError, SizeInlineError
from .heuristic import HeuristicParams, heuristic_policy
from .oracle import DEFAULT_MAX_DECISIONS, brute_force_optimal
from .trainers import TrainerConfig, evaluate_policy, train_bc, train_es, train_pg

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
PATH_KEYS = ("corpus", "out", "policy", "warmstart", "metrics", "log_dir", "checkpoint_dir", "module", "log")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "exit": code, "message": message}), file=sys.stderr)
    return code


def _trainer_flags(p):
    p.add_argument("--iterations", type=int)
    p.add_argument("--episodes-per-iteration", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--es-sigma", type=float)
    p.add_argument("--es-population", type=int)
    p.add_argument("--es-batch-size", type=int)
    p.add_argument("--entropy-bonus", type=float)
    p.add_argument("--ppo-clip", type=float)
    p.add_argument("--epochs-per-batch", type=int)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--hidden", type=int, nargs="+")
    p.add_argument("--no-centering", dest="fitness_centering", action="store_false")
    p.add_argument("--holdout-fraction", type=float)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--checkpoint-every", type=int)


def _common_flags(p, heuristic=True):
    p.add_argument("--config", help="JSON file with defaults for any flag")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", dest="worker_count", type=int)
    p.add_argument("--cap-factor", help="growth cap as a rational, e.g. 3/2")
    if heuristic:
        p.add_argument("--base-threshold", type=int)
        p.add_argument("--single-block-bonus", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sizeinline", description=__doc__.splitlines()[0], argument_default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-corpus", help="write a seeded synthetic corpus", argument_default=argparse.SUPPRESS)
    g.add_argument("--config")
    g.add_argument("--out", help="corpus directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--count", dest="module_count", type=int)
    g.add_argument("--functions", dest="functions_per_module", type=int, nargs=2)
    g.add_argument("--size", type=int, nargs=2)
    g.add_argument("--params", dest="param_count", type=int, nargs=2)
    g.add_argument("--calls", dest="calls_per_function", type=int, nargs=2)
    g.add_argument("--const-arg-probability", type=float)
    g.add_argument("--internal-linkage-probability", type=float)
    g.add_argument("--back-edge-probability", type=float)
    g.add_argument("--savings-fraction", type=float, nargs=2)

    t = sub.add_parser("train", help="train a policy (bc, pg or es)", argument_default=argparse.SUPPRESS)
    t.add_argument("--algo", choices=("bc", "pg", "es"))
    t.add_argument("--corpus")
    t.add_argument("--eval-corpus")
    t.add_argument("--out", help="policy file to write")
    t.add_argument("--warmstart", help="initial policy file (pg/es)")
    t.add_argument("--metrics", help="per-iteration CSV output")
    t.add_argument("--checkpoint-dir")
    t.add_argument("--log-dir", help="trajectory logs written at checkpoints (pg)")
    t.add_argument("--no-timing", dest="timing", action="store_false", help="zero the wall_seconds column")
    _common_flags(t)
    _trainer_flags(t)

    e = sub.add_parser("evaluate", help="size reduction vs the heuristic", argument_default=argparse.SUPPRESS)
    e.add_argument("--corpus")
    e.add_argument("--policy")
    e.add_argument("--heuristic", action="store_true")
    e.add_argument("--out", help="write the per-module table here")
    _common_flags(e)

    o = sub.add_parser("oracle", help="exhaustive optimal inlining for small modules", argument_default=argparse.SUPPRESS)
    o.add_argument("--module")
    o.add_argument("--corpus")
    o.add_argument("--max-decisions", type=int)
    o.add_argument("--out")
    o.add_argument("--config")
    o.add_argument("--cap-factor")

    c = sub.add_parser("collect", help="run episodes and write a trajectory log", argument_default=argparse.SUPPRESS)
    c.add_argument("--corpus")
    c.add_argument("--policy", help="policy file; heuristic when omitted")
    c.add_argument("--mode", choices=MODES)
    c.add_argument("--out")
    _common_flags(c)

    i = sub.add_parser("inspect-log", help="validate and summarize a trajectory log", argument_default=argparse.SUPPRESS)
    i.add_argument("log")
    i.add_argument("--config")

    pol = sub.add_parser("policy", help="policy file utilities", argument_default=argparse.SUPPRESS)
    pol_sub = pol.add_subparsers(dest="policy_command", parser_class=_Parser)
    d = pol_sub.add_parser("describe", argument_default=argparse.SUPPRESS)
    d.add_argument("policy")
    d.add_argument("--config")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge config file, environment (paths only) and flags."""
    flags = vars(args)
    settings = {}
    if flags.get("config"):
        try:
            loaded = json.loads(Path(flags["config"]).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise SizeInlineError(f"cannot read config {flags['config']}: {e}") from None
        if not isinstance(loaded, dict):
            raise SizeInlineError("config file must hold a JSON object")
        settings.update(loaded)
    for key in PATH_KEYS:
        env = os.environ.get(f"SIZEINLINE_{key.upper()}")
        if env:
            settings[key] = env
    settings.update({k: v for k, v in flags.items() if k != "config"})
    return settings


def _require(s, *keys):
    missing = [k for k in keys if not s.get(k)]
    if missing:
        raise UsageError(f"missing required setting(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _heuristic(s) -> HeuristicParams:
    d = HeuristicParams()
    return HeuristicParams(s.get("base_threshold", d.base_threshold), s.get("single_block_bonus", d.single_block_bonus))


def _existing(path, what):
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} {path} does not exist")
    return path


def cmd_gen_corpus(s) -> int:
    _require(s, "out")
    fields = {k: s[k] for k in corpusgen.CorpusParams.__dataclass_fields__ if k in s}
    params = corpusgen.CorpusParams.from_dict(fields)
    modules = corpusgen.gen_corpus(params)
    corpusgen.write_corpus(modules, s["out"], params)
    print(f"wrote {len(modules)} modules to {s['out']}")
    return EXIT_OK


def _trainer_config(s) -> TrainerConfig:
    names = set(TrainerConfig.__dataclass_fields__) - {"algo", "heuristic"}
    kw = {k: s[k] for k in names if k in s}
    if "hidden" in kw:
        kw["hidden"] = tuple(kw["hidden"])
    if "cap_factor" in kw:
        kw["cap_factor"] = str(kw["cap_factor"])
    return TrainerConfig.for_algo(s.get("algo", "pg"), heuristic=_heuristic(s), **kw).check()


def cmd_train(s) -> int:
    _require(s, "corpus", "out")
    cfg = _trainer_config(s)
    corpus = corpusgen.read_corpus(_existing(s["corpus"], "corpus"))
    eval_corpus = corpusgen.read_corpus(_existing(s["eval_corpus"], "corpus")) if s.get("eval_corpus") else None
    warm = policy_io.load(_existing(s["warmstart"], "policy")) if s.get("warmstart") else None
    if cfg.algo == "bc":
        policy, report = train_bc(corpus, cfg)
        print(
            f"bc: decision_points={report.extras['decision_points']} "
            f"train_accuracy={report.extras['train_accuracy']:.4f} "
            f"heldout_accuracy={report.extras['heldout_accuracy']:.4f}"
        )
    else:
        if warm is None:
            print(f"notice: no --warmstart given; {cfg.algo} starts from the uniform initial policy", file=sys.stderr)
        ckpt = s.get("checkpoint_dir")
        if cfg.algo == "pg":
            policy, report = train_pg(corpus, warm, cfg, eval_corpus=eval_corpus, checkpoint_dir=ckpt, log_dir=s.get("log_dir"))
        else:
            policy, report = train_es(corpus, warm, cfg, eval_corpus=eval_corpus, checkpoint_dir=ckpt)
        last = [r for r in report.records if r.eval_reduction_pct is not None]
        if last:
            print(f"{cfg.algo}: episodes={last[-1].episodes} eval_reduction_pct={last[-1].eval_reduction_pct:.4f}")
    policy_io.save(policy, s["out"])
    if s.get("metrics"):
        atomic_write_text(s["metrics"], report.metrics_csv(timing=s.get("timing", True)))
    return EXIT_OK


def cmd_evaluate(s) -> int:
    _require(s, "corpus")
    if not s.get("policy") and not s.get("heuristic"):
        raise UsageError("give --policy, --heuristic, or both")
    corpus = corpusgen.read_corpus(_existing(s["corpus"], "corpus"))
    policy = policy_io.load(_existing(s["policy"], "policy")) if s.get("policy") else None
    report = evaluate_policy(
        corpus, policy, cap=s.get("cap_factor"), heuristic=_heuristic(s), workers=s.get("worker_count", 1)
    )
    table = report.table()
    print(table, end="")
    print(report.summary())
    if s.get("out"):
        atomic_write_text(s["out"], table)
    return EXIT_OK


def cmd_oracle(s) -> int:
    if not s.get("module") and not s.get("corpus"):
        raise UsageError("give --module or --corpus")
    if s.get("module"):
        modules = [irmodel.load(_existing(s["module"], "module"))]
    else:
        modules = corpusgen.read_corpus(_existing(s["corpus"], "corpus"))
    blocks = []
    for m in modules:
        r = brute_force_optimal(m, s.get("max_decisions", DEFAULT_MAX_DECISIONS), s.get("cap_factor"))
        blocks.append(f"module {m.name}\n" + r.to_text())
    text = "".join(blocks)
    print(text, end="")
    if s.get("out"):
        atomic_write_text(s["out"], text)
    return EXIT_OK


def cmd_collect(s) -> int:
    _require(s, "corpus", "out")
    corpus = corpusgen.read_corpus(_existing(s["corpus"], "corpus"))
    mode = s.get("mode", ARGMAX)
    decide = policy_io.load(_existing(s["policy"], "policy")) if s.get("policy") else heuristic_policy(_heuristic(s))
    seed = s.get("seed", 0)
    episodes = [
        run_episode(m, decide, mode, s.get("cap_factor"), seed=seed + k if mode == "sample" else None)
        for k, m in enumerate(corpus)
    ]
    write_log(episodes, s["out"])
    print(f"wrote {len(episodes)} episodes to {s['out']}")
    return EXIT_OK


def cmd_inspect_log(s) -> int:
    _require(s, "log")
    episodes = read_log(_existing(s["log"], "log"))
    steps = [st for ep in episodes for st in ep.steps]
    decisions = [st for st in steps if not st.forced]
    n = len(episodes)
    print(f"episodes {n}")
    print(f"steps {len(steps)}")
    print(f"forced_steps {len(steps) - len(decisions)}")
    print(f"inline_rate {(sum(st.action for st in decisions) / len(decisions)) if decisions else 0.0:.4f}")
    print(f"total_reward {sum(ep.total_reward for ep in episodes)}")
    print(f"mean_reward {(sum(ep.total_reward for ep in episodes) / n) if n else 0.0:.4f}")
    print(f"initial_size {sum(ep.initial_size for ep in episodes)}")
    print(f"final_size {sum(ep.final_size for ep in episodes)}")
    print("conservation ok")
    return EXIT_OK


def cmd_policy_describe(s) -> int:
    print(policy_io.describe(policy_io.load(_existing(s["policy"], "policy"))), end="")
    return EXIT_OK


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "oracle": cmd_oracle,
    "collect": cmd_collect,
    "inspect-log": cmd_inspect_log,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("no subcommand given")
        if args.command == "policy":
            if getattr(args, "policy_command", None) != "describe":
                raise UsageError("usage: sizeinline policy describe FILE")
            handler = cmd_policy_describe
        else:
            handler = COMMANDS[args.command]
        return handler(resolve(args))
    except UsageError as e:
        return _fail(EXIT_USAGE, "usage", str(e))
    except NumericError as e:
        return _fail(EXIT_NUMERIC, "numeric", str(e))
    except (SizeInlineError, OSError, ValueError, TypeError, KeyError) as e:
        return _fail(EXIT_DATA, type(e).__name__, str(e))


if __name__ == "__main__":
    sys.exit(main())
