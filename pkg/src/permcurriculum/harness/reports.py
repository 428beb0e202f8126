"""Plot-ready CSV/JSON reports computed from a run directory."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..curriculum.grouping import group_permutations
from ..curriculum.ks import group_count_diagnostic
from ..curriculum.reward import clamp01
from ..curriculum.state import validate
from ..errors import RejectedInput
from ..orderingnet import OrderingModel
from ..permset import load_set

QUARTILE_HEADER = ["episode", "task", "quartile", "frequency"]
HAMMING_HEADER = ["episode", "task", "hamming", "frequency"]
COST_KEYS = ("n_val", "batch_size", "n_perms", "tasks", "validation_forward", "train_forward")


def read_jsonl(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise RejectedInput(f"{path} does not exist")
    rows = []
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise RejectedInput(f"{path}:{i}: not valid JSON ({exc})") from exc
    return rows


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return repr(float(x))


# ------------------------------------------------------------ reward replay

def replay_rewards(metrics: list[dict]) -> list[dict]:
    """Recompute every reward from the logged errors.

    For the reward line of episode t, E_t is the error of the state line of
    the same episode and task, E_{t-1} the error of the validation before it.
    Returns one dict per reward line with the logged and replayed values.
    """
    out = []
    last_state, last_prev = {}, {}
    for rec in metrics:
        task = rec["task"]
        if rec["phase"] == "state":
            last_state[task] = rec
            continue
        e_now = last_state[task]["error"]
        e_prev = last_prev.get(task)
        baseline = e_now if e_prev is None else clamp01(2.0 * e_now - e_prev)
        out.append({
            "episode": rec["episode"], "task": task,
            "logged_baseline": rec["baseline"], "baseline": baseline,
            "logged_reward": rec["reward"], "reward": baseline - rec["error"],
            "logged_error_prev": rec["error_prev"], "error_prev": e_prev,
        })
        last_prev[task] = rec["error"]
    return out


# ------------------------------------------------------------- error curves

def error_curve(metrics: list[dict], tasks=None) -> tuple[np.ndarray, np.ndarray]:
    """Validation error (mean over tasks) against the cumulative forward-pass count.

    Consecutive lines of the same (episode, phase) form one validation event.
    """
    events: dict[tuple, dict] = {}
    order = []
    for rec in metrics:
        if tasks is not None and rec["task"] not in tasks:
            continue
        key = (rec["episode"], rec["phase"])
        if key not in events:
            events[key] = {"errors": [], "x": 0}
            order.append(key)
        events[key]["errors"].append(rec["error"])
        events[key]["x"] = max(events[key]["x"], rec["forward_pass_total"])
    x = np.array([events[k]["x"] for k in order], dtype=np.float64)
    y = np.array([np.mean(events[k]["errors"]) for k in order])
    return x, y


def error_auc(metrics: list[dict], tasks=None) -> float:
    x, y = error_curve(metrics, tasks)
    if len(x) < 2:
        return 0.0
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


# --------------------------------------------------------- selection report

def _perm_sets(run_dir: Path, tasks):
    out = {}
    for t in tasks:
        path = run_dir / f"perms_{t}.json"
        if not path.exists():
            raise RejectedInput(f"{path} missing; the Hamming report needs the run's permutation sets")
        out[t] = load_set(path)
    return out


def quartile_frequencies(perm_errors, perm_counts) -> np.ndarray:
    """Share of the episode's drawn samples per error quartile (index 3 = hardest)."""
    errors = np.asarray(perm_errors, dtype=np.float64)
    counts = np.asarray(perm_counts, dtype=np.float64)
    order = np.argsort(errors, kind="stable")
    total = counts.sum()
    bins = np.array_split(order, 4)
    return np.array([counts[b].sum() / total if total else 0.0 for b in bins])


def selection_report(run_dir) -> tuple[str, str]:
    """(quartile CSV, Hamming-to-identity CSV) for every recorded episode."""
    run_dir = Path(run_dir)
    episodes = read_jsonl(run_dir / "episodes.jsonl")
    if not episodes:
        raise RejectedInput(f"{run_dir / 'episodes.jsonl'} holds no episodes")
    perm_sets = _perm_sets(run_dir, sorted({e["task"] for e in episodes}))
    q_rows, h_rows = [], []
    for e in episodes:
        q = quartile_frequencies(e["perm_errors"], e["perm_counts"])
        for i, f in enumerate(q):
            q_rows.append([e["episode"], e["task"], i + 1, _fmt(f)])
        dist = perm_sets[e["task"]].hamming_to_identity()
        counts = np.asarray(e["perm_counts"], dtype=np.float64)
        total = counts.sum()
        for d in np.unique(dist):
            f = counts[dist == d].sum() / total if total else 0.0
            h_rows.append([e["episode"], e["task"], int(d), _fmt(f)])
    return to_csv(QUARTILE_HEADER, q_rows), to_csv(HAMMING_HEADER, h_rows)


# -------------------------------------------------------------- error map

def error_heatmap(metrics: list[dict], task: str) -> tuple[np.ndarray, np.ndarray]:
    """(permutation ids sorted by mean error, |perms| x validations matrix)."""
    cols = [np.asarray(m["perm_errors"], dtype=np.float64) for m in metrics if m["task"] == task]
    if not cols:
        raise RejectedInput(f"no validation events recorded for task {task!r}")
    mat = np.stack(cols, axis=1)
    order = np.argsort(mat.mean(axis=1), kind="stable")
    return order, mat[order]


def error_heatmap_csv(metrics: list[dict], task: str) -> str:
    order, mat = error_heatmap(metrics, task)
    header = ["perm"] + [f"v{j}" for j in range(mat.shape[1])]
    return to_csv(header, [[int(p)] + [_fmt(v) for v in row] for p, row in zip(order, mat)])


# ---------------------------------------------------------------- cost

def closed_form_overhead(n_val: int, n_perms: int, batch_size: int, episodes: int, iterations: int) -> dict:
    """Validation cost relative to training: two validations per episode,
    each costing ``n_val * n_perms / batch_size`` batch-equivalents."""
    v = n_val * n_perms / batch_size
    cc = episodes * 2 * v
    return {"per_validation": v, "validation_total": cc, "iterations": iterations, "overhead": cc / iterations if iterations else 0.0}


REFERENCE_CONFIG = {"n_val": 100, "n_perms": 1000, "batch_size": 128, "episodes": 90, "iterations": 350000}


def cost_report(counters: dict) -> dict:
    missing = [k for k in COST_KEYS if k not in counters]
    if missing:
        raise RejectedInput(f"counters lack {missing}")
    b, v = counters["batch_size"], counters["n_val"]
    cc = iters = 0.0
    per_task = {}
    for t, c in counters["tasks"].items():
        pred = closed_form_overhead(v, counters["n_perms"][t], b, c["episodes"], c["train_iterations"])
        per_task[t] = pred
        cc += pred["validation_total"]
        iters += pred["iterations"]
    measured = counters["validation_forward"] / counters["train_forward"] if counters["train_forward"] else 0.0
    return {
        "measured": {
            "validation_forward": counters["validation_forward"],
            "train_forward": counters["train_forward"],
            "episodes": {t: c["episodes"] for t, c in counters["tasks"].items()},
            "train_iterations": {t: c["train_iterations"] for t, c in counters["tasks"].items()},
            "overhead": measured,
        },
        "predicted": {"per_task": per_task, "overhead": cc / iters if iters else 0.0},
        "reference_configuration": {**REFERENCE_CONFIG, **closed_form_overhead(**REFERENCE_CONFIG)},
    }


# ------------------------------------------------------------ diagnostics

@dataclass
class GroupCountRow:
    task: str
    n_groups: int
    verdict: str
    similar_pairs: int
    max_offdiag_p: float


def diagnose_groups(model: OrderingModel, val_parts: dict, perm_sets: dict, group_counts, seed: int = 0,
                    alpha: float = 0.01) -> list[GroupCountRow]:
    rows = []
    for task, parts in val_parts.items():
        res = validate(model, task, parts, perm_sets[task])
        for k in group_counts:
            if k > len(perm_sets[task]):
                raise RejectedInput(f"{k} groups exceed the {len(perm_sets[task])} {task} permutations")
            grouping = group_permutations(res.state, k, seed=seed)
            diag = group_count_diagnostic(res.state, grouping, alpha)
            p = diag.pvalues.copy()
            np.fill_diagonal(p, -np.inf)
            rows.append(GroupCountRow(task, k, diag.verdict, len(diag.similar_pairs),
                                      float(p.max()) if k > 1 else float("nan")))
    return rows
