"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` to see the lines as
they happen; a summary block is also printed at the end of every session.
The slow criteria train the default desk configuration and take minutes.
"""

import itertools
import time

import numpy as np
import pytest

from conftest import TINY, tiny_config
from permcurriculum.cli import main
from permcurriculum.curriculum import CurriculumRunner, CurriculumSettings, PolicySettings, SyntheticLearner
from permcurriculum.curriculum.env import OrderingEnv
from permcurriculum.curriculum.grouping import kmeans
from permcurriculum.curriculum.ks import ks_statistic, ks_two_sample
from permcurriculum.curriculum.state import validate
from permcurriculum.harness.config import load_config
from permcurriculum.harness.experiments import compare
from permcurriculum.harness.reports import (
    REFERENCE_CONFIG, closed_form_overhead, error_auc, read_jsonl, replay_rewards,
)
from permcurriculum.harness.train import run_training
from permcurriculum.nncore import (
    LSTM, Dense, ParamStore, cross_entropy, grad_check, make_rng, relative_error, softmax,
)
from permcurriculum.permset import (
    Permutation, apply, compose, generate_set, hamming, invert, random_distinct_set,
)
from permcurriculum.policy import PolicyParams, objective_and_grads
from test_curriculum import OracleModel, signature_parts

RESULTS: list[str] = []


def report(capsys, criterion: str, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    RESULTS.append(line)
    with capsys.disabled():
        print(f"\n{line}")
    assert ok, line


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


# ------------------------------------------------------------------- 1 cost

def test_cost_arithmetic(capsys, tmp_path):
    with Timer() as t:
        c = closed_form_overhead(**REFERENCE_CONFIG)
        code = main(["--out", str(tmp_path), "cost-report", "--reference"])
    printed = 90 * 2 * 781.25 / 350000
    ok = (c["per_validation"] == 781.25 and abs(c["overhead"] - printed) <= 0.001 * printed and code == 0
          and t.seconds < 1.0)
    report(capsys, "cost arithmetic", ok,
           f"per_validation={c['per_validation']} overhead={c['overhead']:.4%} (closed form {printed:.4%}) in {t.seconds:.3f}s")


# ----------------------------------------------------------------- 2 reward

def test_reward_identities(capsys, tmp_path):
    run_training(tiny_config("curriculum.episodes=8", out=str(tmp_path)))
    with Timer() as t:
        replay = replay_rewards(read_jsonl(tmp_path / "metrics.jsonl"))
        bad = [r for r in replay if r["logged_reward"] != r["reward"] or r["logged_baseline"] != r["baseline"]
               or r["logged_error_prev"] != r["error_prev"]]
    ok = len(replay) == 16 and not bad and t.seconds < 1.0
    report(capsys, "reward/baseline identities", ok,
           f"{len(replay) - len(bad)}/{len(replay)} reward lines replay exactly in {t.seconds:.3f}s")


# ------------------------------------------------------------------ 3 state

def test_state_bounds(capsys, tmp_path, monkeypatch):
    seen = []
    original = OrderingEnv.validate

    def recording(self, task):
        res = original(self, task)
        seen.append(res.state.ratios.copy())
        return res

    monkeypatch.setattr(OrderingEnv, "validate", recording)
    run_training(tiny_config("curriculum.episodes=6", out=str(tmp_path)))
    entries = np.concatenate([s.reshape(-1) for s in seen])
    inside = np.mean((entries >= 0.5) & (entries <= 2.0))
    pset = generate_set(4, 24, 0)
    oracle = validate(OracleModel(pset), "spatial", signature_parts(10), pset)
    ok = inside == 1.0 and oracle.error == 0.0 and bool(np.all(oracle.state.ratios == 2.0))
    report(capsys, "state bounds", ok,
           f"{inside:.2%} of {entries.size} entries over {len(seen)} validations in [0.5, 2]; "
           f"oracle error {oracle.error}, entries all 2.0: {bool(np.all(oracle.state.ratios == 2.0))}")


# --------------------------------------------------------------- 4 gradients

def _dense_softmax_ce(activation, seed):
    rng = make_rng(seed)
    store = ParamStore()
    hidden = Dense(store, "h", 5, 7, rng, activation=activation)
    out = Dense(store, "o", 7, 4, rng, activation="linear")
    store["h.b"][...] = rng.uniform(-0.5, 0.5, size=7)
    x, y = rng.normal(size=(6, 5)), rng.integers(0, 4, size=6)

    def loss():
        return cross_entropy(softmax(out.forward(hidden.forward(x)[0])[0]), y)[0]

    store.zero_grad()
    a, c1 = hidden.forward(x)
    z, c2 = out.forward(a)
    _, dz = cross_entropy(softmax(z), y)
    hidden.backward(c1, out.backward(c2, dz))
    return grad_check(loss, store, {k: g.copy() for k, g in store.grads.items()}, tolerance=1e-6).worst


def _lstm(seed):
    rng = make_rng(seed)
    store = ParamStore()
    cell = LSTM(store, "lstm", 3, 8, rng)
    head = Dense(store, "o", 8, 5, rng, activation="linear")
    store["lstm.b"][...] = rng.uniform(-0.5, 0.5, size=store["lstm.b"].shape)
    xs, y = [rng.normal(size=(2, 3)) for _ in range(4)], np.array([1, 4])

    def loss():
        return cross_entropy(softmax(head.forward(cell.forward(xs)[0])[0]), y)[0]

    store.zero_grad()
    h, c1 = cell.forward(xs)
    z, c2 = head.forward(h)
    _, dz = cross_entropy(softmax(z), y)
    cell.backward(c1, head.backward(c2, dz))
    return grad_check(loss, store, {k: g.copy() for k, g in store.grads.items()}, tolerance=1e-4).worst


def _policy(advantage, beta, seed):
    params = PolicyParams(6, beta=beta, seed=seed)
    params.store["b1"][...] = make_rng(seed + 1).normal(size=params.store["b1"].shape) * 0.3
    rng = make_rng(seed + 2)
    x = np.column_stack([rng.dirichlet(np.ones(6)), np.sort(rng.uniform(0.5, 2.0, 6))]).reshape(-1)
    groups = list(rng.integers(0, 6, size=5))
    _, grads = objective_and_grads(params, x, groups, advantage)
    worst = 0.0
    for name, g in grads.items():
        w = params.store[name].reshape(-1)
        for c in range(w.size):
            old = w[c]
            w[c] = old + 1e-5
            up = objective_and_grads(params, x, groups, advantage)[0]
            w[c] = old - 1e-5
            down = objective_and_grads(params, x, groups, advantage)[0]
            w[c] = old
            num = (up - down) / 2e-5
            if abs(num) > 1e-8 or abs(g.reshape(-1)[c]) > 1e-8:
                worst = max(worst, float(relative_error(g.reshape(-1)[c], num)))
    return worst


def test_gradient_suite(capsys):
    with Timer() as t:
        dense = max(_dense_softmax_ce(act, s) for act in ("tanh", "relu", "linear") for s in range(3))
        lstm = max(_lstm(s) for s in range(3))
        policy = max(_policy(a, b, s) for (a, b), s in itertools.product([(0.7, 0.01), (-1.3, 0.5)], range(2)))
    ok = dense < 1e-6 and lstm < 1e-4 and policy < 1e-4 and t.seconds < 30
    report(capsys, "gradient suite", ok,
           f"worst rel. error dense/softmax/CE {dense:.1e}, LSTM {lstm:.1e}, policy {policy:.1e} "
           f"in {t.seconds:.1f}s")


# -------------------------------------------------------------- 5 permset

def test_permutation_set_quality(capsys):
    with Timer() as t:
        wins = sum(generate_set(6, 30, s).min_pairwise_hamming
                   >= random_distinct_set(6, 30, make_rng(1000 + s)).min_pairwise_hamming for s in range(20))
        full = generate_set(4, 24, 0)
        rows = full.perms
        parts = ["a", "b", "c", "d"]
        bijective = len(set(rows)) == 24 and all(sorted(apply(r, parts)) == parts for r in rows)
        inverses = all(apply(invert(r), apply(r, parts)) == parts and compose(r, invert(r)) == Permutation.identity(4)
                       for r in rows)
        metric = all(hamming(a, a) == 0 and hamming(a, b) == hamming(b, a) and hamming(a, b) != 1
                     and hamming(a, c) <= hamming(a, b) + hamming(b, c)
                     for a, b, c in itertools.product(rows, repeat=3))
    ok = wins >= 19 and bijective and inverses and metric and t.seconds < 10
    report(capsys, "permutation-set quality", ok,
           f"greedy >= random in {wins}/20 seeds; S4 bijection {bijective}, inverses {inverses}, "
           f"metric {metric} in {t.seconds:.1f}s")


# --------------------------------------------------------------- 6 k-means

def _inertia(X, labels):
    return sum(((X[labels == k] - X[labels == k].mean(axis=0)) ** 2).sum() for k in np.unique(labels))


def test_kmeans_oracle(capsys):
    with Timer() as t:
        gaps = []
        for seed in range(20):
            X = make_rng(seed).uniform(0.5, 2.0, size=(6, 3))
            best = min(_inertia(X, np.array(lab)) for lab in itertools.product([0, 1], repeat=6) if 0 < sum(lab) < 6)
            gaps.append(abs(kmeans(X, 2, seed=seed).inertia - best) / best)
    matched = sum(g < 1e-9 for g in gaps)
    ok = matched == 20 and t.seconds < 5
    report(capsys, "k-means oracle", ok, f"{matched}/20 instances at the brute-force optimum in {t.seconds:.2f}s")


# -------------------------------------------------------------------- 7 KS

def test_ks_oracle(capsys):
    with Timer() as t:
        gaps = []
        for seed in range(10):
            rng = make_rng(seed)
            a, b = rng.normal(size=20), rng.normal(0.3 * (seed % 3), 1.0, size=20)
            d, p = ks_two_sample(a, b)
            pooled = np.concatenate([a, b])
            hits = 0
            for _ in range(10_000):
                rng.shuffle(pooled)
                hits += ks_statistic(pooled[:20], pooled[20:]) >= d - 1e-12
            gaps.append(abs(hits / 10_000 - p))
    ok = max(gaps) < 0.02 and t.seconds < 30
    report(capsys, "KS oracle", ok,
           f"max |asymptotic - permutation| = {max(gaps):.4f} over 10 cases in {t.seconds:.1f}s")


# ------------------------------------------------------- 8 policy vs random

T40 = ["curriculum.episodes=40", "compare.episodes=40", "compare.checkpoints=[40]"]


@pytest.mark.slow
def test_policy_beats_random(capsys, tmp_path):
    with Timer() as t:
        lines, wins = [], 0
        for seed in range(5):
            auc = {}
            for mode in ("policy", "random"):
                out = tmp_path / f"{seed}_{mode}"
                run_training(load_config(overrides=T40 + [f"mode={mode}"], seed=seed, out=str(out)))
                auc[mode] = error_auc(read_jsonl(out / "metrics.jsonl"))
            wins += auc["policy"] < auc["random"]
            lines.append(f"{auc['policy'] / auc['random']:.3f}")
    ok = wins >= 4 and t.seconds < 1800
    report(capsys, "policy beats random", ok,
           f"policy AUC lower in {wins}/5 seeds (policy/random AUC ratios {', '.join(lines)}) in {t.seconds:.0f}s")


# ------------------------------------------------------------ 9 mode order

@pytest.mark.slow
def test_mode_ordering(capsys, tmp_path):
    cfg = load_config(seed=0, out=str(tmp_path))
    with Timer() as t:
        _, summary = compare(cfg, tmp_path / "compare")
    p, r, i = (summary[a]["mean"] for a in ("policy", "random", "inverse"))
    ok = len(cfg.compare.seeds) >= 5 and p > r > i and t.seconds < 1200
    report(capsys, "ordering of modes", ok,
           f"mean relative accuracy policy {p:.4f}, random {r:.4f}, inverse {i:.4f} over "
           f"{len(cfg.compare.seeds)} seeds in {t.seconds:.0f}s")


# --------------------------------------------------- 10 hard-perm preference

def hardest_quartile_share(runner) -> np.ndarray:
    """Per episode, the share of drawn samples whose permutation sat in the
    hardest quarter at the episode's state validation."""
    states = [m for m in runner.metrics if m["phase"] == "state"]
    shares = []
    for m, rec in zip(states, runner.records):
        errors, counts = np.asarray(m["perm_errors"]), np.asarray(rec.perm_counts)
        hardest = np.argsort(-errors, kind="stable")[: len(errors) // 4]
        shares.append(counts[hardest].sum() / counts.sum())
    return np.asarray(shares)


def test_hard_permutation_preference(capsys):
    pset = generate_set(4, 24, 0)
    with Timer() as t:
        wins, pairs = 0, []
        for seed in range(5):
            runner = CurriculumRunner(SyntheticLearner(pset, seed=seed),
                                      CurriculumSettings(n_groups=6, n_free=20, action_batches=20, episodes=60),
                                      PolicySettings(), seed=seed)
            runner.run()
            share = hardest_quartile_share(runner)
            third = len(share) // 3
            first, last = share[:third].mean(), share[-third:].mean()
            wins += last > first
            pairs.append(f"{first:.2f}->{last:.2f}")
    ok = wins >= 4 and t.seconds < 120
    report(capsys, "hard-permutation preference", ok,
           f"hardest-quartile share rose in {wins}/5 seeds ({', '.join(pairs)}) in {t.seconds:.0f}s")


# ---------------------------------------------------------- 11 learnability

@pytest.mark.slow
def test_learnability(capsys, tmp_path):
    with Timer() as t:
        run_training(load_config(overrides=["mode=spatial-only"], seed=0, out=str(tmp_path)))
    final = read_jsonl(tmp_path / "metrics.jsonl")[-1]
    acc = 1.0 - final["error"]
    ok = acc > 0.9 and t.seconds < 600
    report(capsys, "learnability witness", ok,
           f"spatial validation ordering accuracy {acc:.3f} after the default budget in {t.seconds:.0f}s")


# ----------------------------------------------------------- 12 determinism

def test_determinism(capsys, tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    codes = [main([*sum((["--set", o] for o in TINY), []), "--seed", "7", "--out", str(d), "train"]) for d in dirs]
    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
    compared = [f for f in files if f.suffix in (".jsonl", ".ckpt")]
    differ = [str(f) for f in compared if (dirs[0] / f).read_bytes() != (dirs[1] / f).read_bytes()]
    ok = codes == [0, 0] and any(f.suffix == ".ckpt" for f in compared) and not differ
    report(capsys, "determinism", ok,
           f"{len(compared) - len(differ)}/{len(compared)} metrics and checkpoint files byte-identical")
