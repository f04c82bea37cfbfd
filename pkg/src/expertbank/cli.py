"""Command-line front end.

Verbs: train (fit a full stream), extend (add tasks to a saved store),
eval (routed + oracle accuracy report), gen (regenerate samples from a
stored task), mem (signature memory arithmetic). Errors exit 1 with a
one-line message on stderr.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import harness, numerics, signature, store as store_mod, streams
from .config import load_config


def _cmd_train(args):
    cfg = load_config(args.config)
    result = harness.run_continual(cfg)
    print(f"trained {len(result.store.experts)} experts -> {result.store_dir}")
    print(f"timings: {os.path.join(cfg.out_dir, 'timing.txt')}")
    return 0


def _cmd_extend(args):
    cfg = load_config(args.config)
    model_store = store_mod.load_store(args.store)
    stream = streams.build_stream(cfg.stream, cfg.seed)
    known = len(model_store.experts)
    new_tasks = [t for t in stream if t.task_id > known]
    if not new_tasks:
        print(f"error: stream has no tasks beyond {known}", file=sys.stderr)
        return 1
    for task in new_tasks:
        harness.extend(model_store, task, cfg)
    out_dir = args.out or args.store
    store_mod.save_store(model_store, out_dir)
    print(f"extended to {len(model_store.experts)} experts -> {out_dir}")
    return 0


def _cmd_eval(args):
    cfg = load_config(args.config)
    model_store = store_mod.load_store(args.store)
    stream = streams.build_stream(cfg.stream, cfg.seed)
    report = harness.evaluate(model_store, stream, cfg)
    path = args.out or os.path.join(cfg.out_dir, "report.txt")
    harness.emit_report(report, path)
    print(f"ACC {report.acc:.4f} (oracle {report.oracle_acc:.4f}, "
          f"routing {report.routing_accuracy:.4f}) -> {path}")
    return 0


def _cmd_gen(args):
    model_store = store_mod.load_store(args.store)
    rng = numerics.make_rng(args.seed)
    gen = signature.generate(model_store.experts, args.task, args.n, rng)
    out = args.out or f"generated_task{args.task}.npz"
    np.savez(out, data=gen.data, latents=gen.latents, labels=gen.labels)
    print(f"wrote {gen.data.shape[0]} samples for task {args.task} -> {out}")
    return 0


def _cmd_mem(args):
    values, nbytes = harness.memory_estimate(args.d, args.k, args.nk)
    print(f"values {values}")
    print(f"bytes {nbytes}")
    print(f"megabytes {nbytes / 1e6:.6f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="expertbank",
        description="replay-free continual learning with frozen per-task experts")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train experts over a full task stream")
    p.add_argument("config", help="INI run configuration")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("extend", help="add the stream's remaining tasks to a store")
    p.add_argument("store", help="directory of a saved model store")
    p.add_argument("config", help="INI run configuration (describes the longer stream)")
    p.add_argument("--out", help="write the grown store here (default: in place)")
    p.set_defaults(func=_cmd_extend)

    p = sub.add_parser("eval", help="evaluate a saved store on its stream")
    p.add_argument("store")
    p.add_argument("config")
    p.add_argument("--out", help="report path (default: <out_dir>/report.txt)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gen", help="regenerate samples for one stored task")
    p.add_argument("store")
    p.add_argument("--task", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output .npz path")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("mem", help="signature memory for (d, tasks, clusters)")
    p.add_argument("--d", type=int, required=True, help="latent dimension")
    p.add_argument("--k", type=int, required=True, help="number of tasks")
    p.add_argument("--nk", type=int, required=True, help="clusters per task")
    p.set_defaults(func=_cmd_mem)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # CLI boundary: fail with a message, not a trace
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
