"""Command-line entry point.

Exit codes: 0 success, 2 configuration rejected, 1 any other failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, RejectedInput
from .harness.config import TASKS, load_config
from .harness.evaluate import eval_nn
from .harness.experiments import compare, load_run_config, valsize_sweep
from .harness.reports import (
    closed_form_overhead, cost_report, diagnose_groups, error_heatmap_csv, read_jsonl, selection_report, to_csv,
    REFERENCE_CONFIG,
)
from .harness.train import make_datasets, run_training
from .orderingnet import OrderingModel
from .permset import generate_set, load_set, save_set
from .toydata import load_dataset, save_dataset


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    print(f"# wrote {path}", file=sys.stderr)


def _config(args):
    overrides = (args.set or []) + getattr(args, "set_after", [])
    return load_config(args.config, overrides, seed=args.seed, out=args.out)


def _run_dir(args, cfg) -> Path:
    return Path(args.run) if getattr(args, "run", None) else Path(cfg.out)


def _emit(text: str):
    sys.stdout.write(text)
    if not text.endswith("\n"):
        sys.stdout.write("\n")


# --------------------------------------------------------------- commands

def cmd_gen_perms(args):
    cfg = _config(args)
    n = args.n if args.n is not None else cfg.n_parts("spatial")
    size = args.size if args.size is not None else cfg.perms.size
    pset = generate_set(n, size, cfg.sub_seed("perms", "cli") % 2**32 if args.perm_seed is None else args.perm_seed)
    save_set(pset, Path(cfg.out) / f"perms_n{n}_k{size}.json")
    _emit(to_csv(["n", "size", "seed", "min_pairwise_hamming"],
                 [[n, size, pset.seed, pset.min_pairwise_hamming]]))


def cmd_make_data(args):
    cfg = _config(args)
    rows = []
    for task, ds in make_datasets(cfg).items():
        path = Path(cfg.out) / f"{task}.data"
        path.parent.mkdir(parents=True, exist_ok=True)
        save_dataset(ds, path)
        rows.append([task, str(path), *ds.parts.shape])
    _emit(to_csv(["task", "path", "samples", "parts", "part_dim"], rows))


def cmd_train(args):
    cfg = _config(args)
    result = run_training(cfg)
    c = result.counters
    _emit(to_csv(["mode", "train_forward", "validation_forward", "forward_pass_total"],
                 [[c["mode"], c["train_forward"], c["validation_forward"], c["forward_pass_total"]]]))


def cmd_eval_nn(args):
    cfg = _config(args)
    run = _run_dir(args, cfg)
    ckpt = Path(args.checkpoint) if args.checkpoint else run / "model.ckpt"
    model = OrderingModel.from_checkpoint(ckpt, n_frames=cfg.data.u)
    rows, reports = [], {}
    for task in args.task or TASKS:
        ds = load_dataset(args.data) if args.data else make_datasets(cfg, (task,))[task]
        rep = eval_nn(model, ds)
        reports[task] = rep.to_json()
        rows += [[task, k, repr(v)] for k, v in rep.accuracy.items()]
    _write(Path(cfg.out) / "retrieval.json", json.dumps(reports, indent=2, sort_keys=True) + "\n")
    _emit(to_csv(["task", "k", "accuracy"], rows))


def cmd_compare(args):
    cfg = _config(args)
    table, summary = compare(cfg, Path(cfg.out) / "compare")
    _write(Path(cfg.out) / "compare.csv", table)
    _write(Path(cfg.out) / "compare_summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit(to_csv(["arm", "mean_relative", "std_relative", "n"],
                 [[a, repr(s["mean"]), repr(s["std"]), s["n"]] for a, s in summary.items()]))


def cmd_selection_report(args):
    cfg = _config(args)
    run = _run_dir(args, cfg)
    quart, ham = selection_report(run)
    _write(Path(cfg.out) / "selection_quartiles.csv", quart)
    _write(Path(cfg.out) / "selection_hamming.csv", ham)
    _emit(quart)


def cmd_error_heatmap(args):
    cfg = _config(args)
    run = _run_dir(args, cfg)
    metrics = read_jsonl(run / "metrics.jsonl")
    tasks = args.task or sorted({m["task"] for m in metrics})
    for task in tasks:
        text = error_heatmap_csv(metrics, task)
        _write(Path(cfg.out) / f"error_heatmap_{task}.csv", text)
        _emit(text)


def cmd_cost_report(args):
    cfg = _config(args)
    if args.reference:
        report = {"reference_configuration": {**REFERENCE_CONFIG, **closed_form_overhead(**REFERENCE_CONFIG)}}
    else:
        run = _run_dir(args, cfg)
        path = run / "counters.json"
        if not path.exists():
            raise RejectedInput(f"{path} missing: cost-report needs a completed run")
        report = cost_report(json.loads(path.read_text(encoding="utf-8")))
        _write(Path(cfg.out) / "cost.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    rows = []
    if "measured" in report:
        m = report["measured"]
        rows.append(["measured", m["validation_forward"], m["train_forward"], repr(m["overhead"])])
        rows.append(["predicted", "", "", repr(report["predicted"]["overhead"])])
    p = report["reference_configuration"]
    rows.append(["reference_configuration", repr(p["validation_total"]), repr(p["iterations"]), repr(p["overhead"])])
    _emit(to_csv(["source", "validation_cost", "training_cost", "overhead"], rows))


def cmd_valsize_sweep(args):
    cfg = _config(args)
    run = _run_dir(args, cfg)
    run_cfg = load_run_config(run)
    sizes = args.sizes or run_cfg.sweep.sizes
    text = valsize_sweep(run, sizes, args.repeats or run_cfg.sweep.repeats, args.task)
    _write(Path(cfg.out) / "valsize.csv", text)
    _emit(text)


def cmd_diagnose_groups(args):
    cfg = _config(args)
    run = _run_dir(args, cfg)
    run_cfg = load_run_config(run)
    ckpt = Path(args.checkpoint) if args.checkpoint else run / "model.ckpt"
    model = OrderingModel.from_checkpoint(ckpt, n_frames=run_cfg.data.u)
    tasks = args.task or list(run_cfg.tasks())
    datasets = make_datasets(run_cfg, tasks)
    rows = diagnose_groups(model, {t: datasets[t].split("val")[0] for t in tasks},
                           {t: load_set(run / f"perms_{t}.json") for t in tasks},
                           args.groups, seed=run_cfg.sub_seed("diagnose"), alpha=args.alpha)
    text = to_csv(["task", "n_groups", "verdict", "similar_pairs", "max_offdiag_p"],
                  [[r.task, r.n_groups, r.verdict, r.similar_pairs, repr(r.max_offdiag_p)] for r in rows])
    _write(Path(cfg.out) / "group_diagnostic.csv", text)
    _emit(text)


# ----------------------------------------------------------------- parser

def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _global_flags(default, set_dest: str = "set") -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default, help="JSON config file")
    common.add_argument("--seed", type=int, default=default, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", default=default, help="output directory")
    common.add_argument("--set", action="append", default=default, dest=set_dest, metavar="KEY=VALUE",
                        help="override a config field, e.g. --set curriculum.action_batches=10 (repeatable)")
    return common


def build_parser() -> argparse.ArgumentParser:
    # global flags work before or after the subcommand; SUPPRESS keeps the
    # subcommand's unset flags from clobbering values given up front, and
    # --set given on both sides accumulates in order
    parser = argparse.ArgumentParser(prog="permcurriculum", description=__doc__.splitlines()[0],
                                     parents=[_global_flags(None)])
    sub = parser.add_subparsers(dest="command", required=True)
    after = _global_flags(argparse.SUPPRESS, set_dest="set_after")

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_, parents=[after])
        p.set_defaults(fn=fn)
        return p

    p = add("gen-perms", cmd_gen_perms, "generate a max-min Hamming permutation set")
    p.add_argument("--n", type=int, help="elements per permutation (default: spatial parts)")
    p.add_argument("--size", type=int, help="set size (default: perms.size)")
    p.add_argument("--perm-seed", type=int, help="explicit seed instead of the master-seed derivation")

    add("make-data", cmd_make_data, "generate and save the toy datasets")
    add("train", cmd_train, "train in the configured mode")

    p = add("eval-nn", cmd_eval_nn, "cosine nearest-neighbour retrieval")
    p.add_argument("--checkpoint", help="model checkpoint (default: <run>/model.ckpt)")
    p.add_argument("--run", help="run directory")
    p.add_argument("--data", help="dataset file written by make-data")
    p.add_argument("--task", action="append", choices=TASKS)

    add("compare", cmd_compare, "policy / random / inverse after one epoch")

    for name, fn, help_ in (("selection-report", cmd_selection_report, "selection by error quartile and Hamming"),
                            ("error-heatmap", cmd_error_heatmap, "per-permutation error over validations")):
        p = add(name, fn, help_)
        p.add_argument("--run", help="run directory (default: --out)")
        if name == "error-heatmap":
            p.add_argument("--task", action="append", choices=TASKS)

    p = add("cost-report", cmd_cost_report, "validation overhead, measured and closed-form")
    p.add_argument("--run", help="run directory (default: --out)")
    p.add_argument("--reference", action="store_true", help="only the closed form at the reference configuration")

    p = add("valsize-sweep", cmd_valsize_sweep, "error spread versus validation-set size")
    p.add_argument("--run", help="run directory (default: --out)")
    p.add_argument("--sizes", type=_int_list)
    p.add_argument("--repeats", type=int)
    p.add_argument("--task", action="append", choices=TASKS)

    p = add("diagnose-groups", cmd_diagnose_groups, "KS test between permutation groups")
    p.add_argument("--run", help="run directory (default: --out)")
    p.add_argument("--checkpoint")
    p.add_argument("--groups", type=_int_list, default=[2, 4, 6, 10, 20])
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--task", action="append", choices=TASKS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure: report and exit non-zero
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
