"""``cdcrl`` command line.

Exit codes: 0 success, 1 a verification check failed, 2 bad arguments or
config, 3 I/O or file-format failure, 4 numeric abort during training.
Machine-readable JSON goes to stdout, diagnostics to stderr. Every command
writes one JSON manifest (``ablate`` writes one per variant).
"""

import argparse
import csv
import glob
import hashlib
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .agent import load_checkpoint, save_checkpoint
from .cdc import (ABLATION_VARIANTS, CSV_HEADER, TrainRecord, ablation_configs, load_config,
                  train)
from .dataset import load, normalized_score, save, save_csv
from .envs import ENVS, TIERS, evaluate, generate_dataset, make_env, reference_scores
from .errors import (CdcError, ConfigError, FormatError, NumericError, ShapeError,
                     UndefinedCorrelationError)
from .numerics import tune_allocator
from .ope import OPE_KEYS, OPE_OPTIONAL, OpeConfig, ope_benchmark
from .verify import run_verification

MANIFEST_VERSION = 1
EXIT_OK, EXIT_CHECK, EXIT_ARGS, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4
_DATA = os.path.join(os.path.dirname(__file__), "data")
REFERENCE_FILE = os.path.join(_DATA, "reference_scores.json")


class UsageError(CdcError):
    pass


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path, command, config, seeds, inputs, outputs, started, status="ok", extra=None):
    manifest = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": {p: sha256_file(p) for p in inputs},
        "outputs": {p: sha256_file(p) for p in outputs if os.path.exists(p)},
        "duration_s": round(time.time() - started, 3),
        "format_version": MANIFEST_VERSION,
        "package_version": __version__,
        "status": status,
    }
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def load_reference(env_name):
    try:
        with open(REFERENCE_FILE) as fh:
            table = json.load(fh)
    except OSError:
        table = {}
    if env_name in table:
        return table[env_name]["random"], table[env_name]["expert"]
    env = make_env(env_name)
    return reference_scores(env, range(100))


def _env(name):
    if name not in ENVS:
        raise UsageError(f"unknown environment {name!r}; valid environments: {', '.join(sorted(ENVS))}")
    return make_env(name)


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    sys.stdout.flush()


# commands -------------------------------------------------------------------

def cmd_gen_data(args):
    started = time.time()
    env = _env(args.env)
    if args.tier not in TIERS:
        raise UsageError(f"unknown tier {args.tier!r}; valid tiers: {', '.join(TIERS)}")
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    ds = generate_dataset(env, args.tier, args.n, args.seed)
    save(ds, args.out)
    outputs = [args.out]
    if args.csv:
        save_csv(ds, args.csv)
        outputs.append(args.csv)
    manifest = write_manifest(args.manifest or args.out + ".manifest.json", "gen-data",
                              {"env": args.env, "tier": args.tier, "n": args.n},
                              {"seed": args.seed}, [], outputs, started)
    _emit(manifest)
    return EXIT_OK


def _train_into(cfg, ds, out_dir, env, command, inputs, cfg_path=None, started=None):
    """Train and write checkpoint, curve and manifest under ``out_dir``."""
    started = started or time.time()
    os.makedirs(out_dir, exist_ok=True)
    ckpt = os.path.join(out_dir, "checkpoint.cdca")
    curve = os.path.join(out_dir, "curve.csv")
    mpath = os.path.join(out_dir, "manifest.json")
    seeds = {"seed": cfg.seed}
    with open(curve, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        writer = csv.writer(fh, lineterminator="\n")

        def on_record(rec):
            writer.writerow(rec.csv_row())
            fh.flush()

        try:
            agent, records = train(cfg, ds, env, on_record=on_record)
        except NumericError as exc:
            fh.flush()
            write_manifest(mpath, command, cfg.to_dict(), seeds, inputs, [curve], started,
                           status="numeric_abort",
                           extra={"abort_step": exc.step, "error": str(exc)})
            raise
    save_checkpoint(agent, ckpt)
    final = records[-1] if records else None
    manifest = write_manifest(mpath, command, cfg.to_dict(), seeds, inputs, [ckpt, curve], started,
                              extra={"records": len(records),
                                     "final_eval_return": final.eval_return if final else None,
                                     "final_max_abs_q": final.max_abs_q if final else None})
    return agent, records, manifest


def _load_inputs(args):
    cfg = load_config(args.config)
    ds = load(args.data)
    env = _env(args.env) if args.env else None
    if env is not None and (env.spec.state_dim, env.spec.action_dim) != (ds.state_dim, ds.action_dim):
        raise UsageError("environment dimensions do not match the dataset")
    return cfg, ds, env


def cmd_train(args):
    started = time.time()
    cfg, ds, env = _load_inputs(args)
    _, records, manifest = _train_into(cfg, ds, args.out_dir, env, "train",
                                       [args.config, args.data], started=started)
    _emit(manifest)
    return EXIT_OK


def cmd_eval(args):
    started = time.time()
    env = _env(args.env)
    agent = load_checkpoint(args.checkpoint)
    if (agent.state_dim, agent.action_dim) != (env.spec.state_dim, env.spec.action_dim):
        raise UsageError(f"checkpoint dims ({agent.state_dim}, {agent.action_dim}) do not match "
                         f"{args.env} ({env.spec.state_dim}, {env.spec.action_dim})")
    if args.episodes < 1:
        raise UsageError("--episodes must be >= 1")
    rets = evaluate(env, agent.deployment(args.N), args.episodes, args.seed)
    lo, hi = load_reference(args.env)
    raw = float(np.mean(rets))
    out = {"raw_return": raw, "normalized_score": normalized_score(raw, lo, hi),
           "episodes": args.episodes, "seed": args.seed}
    if args.verbose:
        out["returns"] = [float(r) for r in rets]
    mpath = args.manifest or args.checkpoint + ".eval.manifest.json"
    write_manifest(mpath, "eval", {"env": args.env, "episodes": args.episodes, "N": args.N},
                   {"seed": args.seed}, [args.checkpoint], [], started, extra={"result": out})
    _emit(out)
    return EXIT_OK


def cmd_ablate(args):
    started = time.time()
    base, ds, env = _load_inputs(args)
    rows = []
    for name, cfg in zip(ABLATION_VARIANTS, ablation_configs(base)):
        sub = os.path.join(args.out_dir, name.replace(" & ", "_").replace("=", ""))
        _, records, manifest = _train_into(cfg, ds, sub, env, "ablate", [args.config, args.data])
        rows.append({"variant": name, "eta": cfg.eta, "lambda": cfg.lam, "dir": sub,
                     "final_return": manifest["final_eval_return"],
                     "final_max_abs_q": manifest["final_max_abs_q"],
                     "max_q_curve": [r.max_q for r in records]})
    report = {"command": "ablate", "duration_s": round(time.time() - started, 3), "rows": rows}
    with open(os.path.join(args.out_dir, "ablation_report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    _emit(report)
    return EXIT_OK


def cmd_ope(args):
    started = time.time()
    cfg = load_config(args.config, required=OPE_KEYS, optional=OPE_OPTIONAL, cls=OpeConfig)
    ds = load(args.data)
    env = _env(args.env)
    policies = [(os.path.basename(p), load_checkpoint(p)) for p in args.policies]
    for name, ag in policies:
        if (ag.state_dim, ag.action_dim) != (ds.state_dim, ds.action_dim):
            raise UsageError(f"policy {name} does not match the dataset dimensions")
    eta = cfg.eta if cfg.eta > 0 else 1.0
    reports = ope_benchmark(ds, env, policies, cfg, episodes=args.episodes,
                            all_states=args.all_states, etas=(0.0, eta), select_N=args.N)
    os.makedirs(args.out_dir, exist_ok=True)
    outputs = []
    for rep in reports:
        stem = os.path.join(args.out_dir, f"ope_eta{rep.eta:g}")
        with open(stem + ".json", "w") as fh:
            fh.write(rep.to_json())
        with open(stem + ".csv", "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rep.csv_rows())
        outputs += [stem + ".json", stem + ".csv"]
    summary = {"correlations": {f"{r.eta:g}": r.correlation for r in reports},
               "all_states": args.all_states}
    cfg_d = {k: getattr(cfg, k) for k in OPE_KEYS}
    write_manifest(os.path.join(args.out_dir, "manifest.json"), "ope", cfg_d, {"seed": cfg.seed},
                   [args.config, args.data, *args.policies], outputs, started, extra=summary)
    _emit(summary)
    return EXIT_OK


def cmd_verify(args):
    started = time.time()
    report = run_verification(args.seed, args.scale)
    outputs = []
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        outputs.append(args.out)
    mpath = args.manifest or (args.out + ".manifest.json" if args.out else "verify.manifest.json")
    write_manifest(mpath, "verify", {"scale": args.scale}, {"seed": args.seed}, [], outputs,
                   started, status="ok" if report["pass"] else "check_failed")
    _emit(report)
    return EXIT_OK if report["pass"] else EXIT_CHECK


def cmd_report(args):
    started = time.time()
    paths = sorted(set(glob.glob(os.path.join(args.root, "**", "*manifest*.json"), recursive=True)))
    rows = []
    for p in paths:
        try:
            with open(p) as fh:
                m = json.load(fh)
        except (OSError, ValueError):
            continue
        if not isinstance(m, dict) or "command" not in m or m.get("command") == "report":
            continue
        rows.append({"manifest": p, "command": m["command"], "status": m.get("status"),
                     "seeds": m.get("seeds"), "duration_s": m.get("duration_s"),
                     "final_eval_return": m.get("final_eval_return"),
                     "final_max_abs_q": m.get("final_max_abs_q")})
    report = {"manifests": len(rows), "rows": rows}
    outputs = []
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        outputs.append(args.out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["manifest", "command", "status", "duration_s", "final_eval_return",
                        "final_max_abs_q"])
            for r in rows:
                w.writerow([r["manifest"], r["command"], r["status"], r["duration_s"],
                            r["final_eval_return"], r["final_max_abs_q"]])
        outputs.append(args.csv)
    if args.manifest:
        write_manifest(args.manifest, "report", {"root": args.root}, {}, [], outputs, started)
    _emit(report)
    return EXIT_OK


# parser ---------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="cdcrl", description="Offline doubly constrained actor-critic.")
    p.add_argument("--version", action="version", version=f"cdcrl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate an offline dataset")
    g.add_argument("--env", required=True)
    g.add_argument("--tier", required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--csv", help="also export the dataset as CSV")
    g.add_argument("--manifest")
    g.set_defaults(func=cmd_gen_data)

    for name, func, hlp in (("train", cmd_train, "train one agent"),
                            ("ablate", cmd_ablate, "train the four penalty variants")):
        t = sub.add_parser(name, help=hlp)
        t.add_argument("--config", required=True)
        t.add_argument("--data", required=True)
        t.add_argument("--out-dir", required=True)
        t.add_argument("--env", help="environment for periodic evaluation")
        t.set_defaults(func=func)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--env", required=True)
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--N", type=int, default=15, help="candidates per deployment decision")
    e.add_argument("--verbose", action="store_true")
    e.add_argument("--manifest")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("ope", help="FQE vs FQE+penalty correlation benchmark")
    o.add_argument("--config", required=True)
    o.add_argument("--data", required=True)
    o.add_argument("--env", required=True)
    o.add_argument("--policies", nargs="+", required=True)
    o.add_argument("--out-dir", required=True)
    o.add_argument("--episodes", type=int, default=20)
    o.add_argument("--N", type=int, default=None, help="deployment candidates (default: config N)")
    o.add_argument("--all-states", action="store_true",
                   help="average over every dataset state instead of episode starts")
    o.set_defaults(func=cmd_ope)

    v = sub.add_parser("verify", help="run the theory verification suite")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--scale", type=float, default=1.0, help="trial-count multiplier")
    v.add_argument("--out")
    v.add_argument("--manifest")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="summarise run manifests")
    r.add_argument("--root", default=".")
    r.add_argument("--out")
    r.add_argument("--csv")
    r.add_argument("--manifest")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    tune_allocator()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, ShapeError, UndefinedCorrelationError) as exc:
        print(f"cdcrl {args.command}: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (OSError, FormatError) as exc:
        print(f"cdcrl {args.command}: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"cdcrl {args.command}: numeric abort at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
