"""Command-line entry point.

Subcommands: gen-data, train, eval, ablate, project, knn-check,
grad-check.  Machine-readable output (JSON/JSONL/CSV) goes to stdout or
the requested file; human-readable summaries go to stderr.  Exit codes:
0 success, 1 verification failure, 2 usage error, 3 I/O or format error.
No environment variables are consulted; behavior is a function of flags,
files and seeds only.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import evalbench, sampler, synthdata, trainer
from .model import load_checkpoint
from .nn import grad_check_report
from .rng import stream
from .serial import FormatError
from .trainer import ConfigError, TrainConfig

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _info(message: str) -> None:
    print(message, file=sys.stderr)


def _cmd_gen_data(args) -> int:
    spec = _resolve_domain(args.domain)
    shard = synthdata.generate(args.seed, args.subjects, args.per_subject,
                               spec, path=args.out)
    _emit({"path": args.out, "samples": len(shard),
           "subjects": shard.manifest["n_subjects"],
           "domain_id": spec.domain_id})
    _info(f"wrote {len(shard)} samples ({args.subjects} subjects, "
          f"domain {spec.domain_id}) to {args.out}")
    return EXIT_OK


def _resolve_domain(name: str) -> synthdata.DomainSpec:
    if name in synthdata.PRESETS:
        return synthdata.PRESETS[name]
    with open(name) as f:
        raw = json.load(f)
    raw["tint"] = tuple(raw.get("tint", (0.0, 0.0, 0.0)))
    return synthdata.DomainSpec(**raw)


def _cmd_train(args) -> int:
    config = TrainConfig.from_json_file(args.config)
    result = trainer.train(config)
    last = result.records[-1] if result.records else None
    _emit({"checkpoint": result.checkpoint_path, "metrics": result.metrics_path,
           "steps": len(result.records),
           "final_l_total": None if last is None else last.l_total,
           "skipped_positives": result.skipped_positives})
    if result.skipped_positives:
        _info(f"warning: {result.skipped_positives} contrast lookups had no "
              "eligible positive and were skipped")
    _info(f"trained {len(result.records)} steps -> {result.checkpoint_path}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    net, _, _ = load_checkpoint(args.ckpt)
    shard = synthdata.load_shard(args.data)
    _, err = trainer.infer(net, shard)
    _emit({"mean_angular_error_deg": err, "samples": len(shard)})
    _info(f"mean angular error {err:.3f} deg over {len(shard)} samples")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    with open(args.config) as f:
        raw = json.load(f)
    tasks = raw.pop("tasks", None)
    if not tasks:
        raise ConfigError("ablation config needs a non-empty 'tasks' list of "
                          "[name, train_path, test_path] triples")
    config = TrainConfig.from_dict(raw)
    grid = evalbench.run_ablation([tuple(t) for t in tasks], config, args.seeds)
    text = grid.to_json()
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    print(text)
    _info(grid.format_table())
    return EXIT_OK


def _cmd_project(args) -> int:
    net, _, _ = load_checkpoint(args.ckpt)
    shard = synthdata.load_shard(args.data)
    scores = evalbench.export_projection(net, shard, args.out)
    corr = evalbench.yaw_correlation(scores, shard.labels)
    _emit({"path": args.out, "samples": len(shard), "yaw_correlation": corr})
    _info(f"projection of {len(shard)} samples -> {args.out} "
          f"(|corr| with yaw: {corr:.3f})")
    return EXIT_OK


def _cmd_knn_check(args) -> int:
    shard = synthdata.load_shard(args.data)
    n = len(shard)
    index = sampler.build_index(shard.labels, np.arange(n), shard.subject_ids)
    rng = stream(args.seed, "knncheck")
    ks = [int(k) for k in args.k.split(",")]
    mismatches = 0
    total_evals = 0
    checks = 0
    for _ in range(args.queries):
        row = int(rng.integers(n))
        anchor = shard.labels[row]
        subject = int(shard.subject_ids[row])
        for k in ks:
            tree_pos, evals = sampler.query_knn_counted(index, anchor, subject, k)
            brute = sampler.brute_force_knn(shard.labels, np.arange(n),
                                            shard.subject_ids, anchor, subject, k)
            total_evals += evals
            checks += 1
            if tree_pos.neighbors != brute.neighbors:
                mismatches += 1
    _emit({"points": n, "queries": args.queries, "k": ks,
           "mismatches": mismatches,
           "mean_distance_evals": total_evals / max(checks, 1)})
    _info(f"{checks} queries checked against brute force: {mismatches} mismatches; "
          f"mean {total_evals / max(checks, 1):.1f} of {n} distances evaluated")
    return EXIT_OK if mismatches == 0 else EXIT_VERIFY


def _cmd_grad_check(args) -> int:
    net, loss_fn = trainer.gradcheck_setup(args.seed, args.batch)
    report = grad_check_report(loss_fn, net.layers, h=args.h, tol=args.tol,
                               n_coords=args.coords,
                               rng=stream(args.seed, "gradcheck"))
    _emit(report)
    _info(f"max relative error {report['max_rel_err']:.3g} over "
          f"{report['checked']} coordinates ({report['skipped_kinks']} kink "
          f"crossings excluded); tolerance {args.tol}")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossgaze",
        description="Cross-domain gaze regression: data generation, training, "
                    "evaluation, ablation and self-verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a synthetic dataset shard")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--per-subject", type=int, required=True)
    p.add_argument("--domain", required=True,
                   help="preset name (bright-clean, dim-tinted-noisy) or JSON file")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("train", help="train from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="mean angular error of a checkpoint on a shard")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("ablate", help="run the 8-row loss-subset grid")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--out", default="")
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("project", help="export a 2-D PCA feature projection CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_project)

    p = sub.add_parser("knn-check",
                       help="verify tree KNN against brute force on a shard")
    p.add_argument("--data", required=True)
    p.add_argument("--queries", type=int, default=50)
    p.add_argument("--k", default="1,5,10")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_knn_check)

    p = sub.add_parser("grad-check",
                       help="check full-loss analytic gradients on a fresh net")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--coords", type=int, default=200)
    p.set_defaults(fn=_cmd_grad_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except ConfigError as e:
        _info(f"error: {e}")
        return EXIT_USAGE
    except (FormatError, FileNotFoundError, IsADirectoryError, PermissionError,
            json.JSONDecodeError) as e:
        _info(f"error: {e}")
        return EXIT_IO
    except ValueError as e:
        _info(f"error: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
