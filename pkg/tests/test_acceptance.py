"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Numeric tolerances are stated inline; the model-lab criteria use the
pinned default pipeline (all seeds fixed), so every value here is
reproducible bit for bit.
"""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from cpm_audit import oracle, pipeline, scoring, threshold
from cpm_audit.cpm import (
    CpmTrainConfig,
    Polytope,
    cpm_advantage,
    cpm_objective,
    cpm_subgradient,
    k_ablation,
    logistic_loss,
    member_decision,
    pad_polytope,
    polytope_g,
    train_cpm,
)
from cpm_audit.data import feature_matrix, make_audit_dataset

from conftest import make_record
from test_cpm import separable_records

LN2 = math.log(2.0)


def _report(criterion: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[criterion {criterion}] {name}: {status}{suffix}")
    assert ok, f"criterion {criterion} {name}: {detail}"


@pytest.fixture(scope="module")
def default_audit():
    """The pinned model-lab pipeline: three targets, attacks, and CPM."""
    return pipeline.run_default_audit()


def test_criterion_1_unit_values():
    checks = []

    def close(tag, got, want, tol=1e-9):
        checks.append((tag, abs(got - want) <= tol, got, want))

    # scores
    close("msp(0.7,0.3)", scoring.msp_score([0.7, 0.3]), -0.7)
    close("msp(1,0,0)", scoring.msp_score([1.0, 0.0, 0.0]), -1.0)
    close("msp(uniform4)", scoring.msp_score([0.25] * 4), -0.25)
    close("ent(uniform2)", scoring.ent_score([0.5, 0.5]), LN2)
    close("ent(1,0)", scoring.ent_score([1.0, 0.0]), 0.0, tol=1e-10)
    close("ent(0.9,0.1)", scoring.ent_score([0.9, 0.1]), 0.32508297339144824)
    close("ce(p=1)", scoring.ce_score([1.0, 0.0], 0), 0.0)
    close("ce(p=0.5)", scoring.ce_score([0.5, 0.5], 0), LN2)
    close("ce(0.2)", scoring.ce_score([0.2, 0.8], 0), 1.6094379124341003)
    close("me(1,0)", scoring.me_score([1.0, 0.0], 0), 0.0)
    close("me(0.5,0.5)", scoring.me_score([0.5, 0.5], 0), LN2)
    close("me(0.9,0.1)", scoring.me_score([0.9, 0.1], 0), 0.021072103131565256)
    close("ce_cvx one-hot", scoring.ce_convexified([0.5, 0.5], [1, 0]), LN2)
    close("ce_cvx relaxed", scoring.ce_convexified([0.5, 0.5], [0.5, 0.5]), 0.0)
    close("me_cvx one-hot(1,0)", scoring.me_convexified([1.0, 0.0], [1, 0]), 0.0)
    close("me_cvx one-hot(.5,.5)", scoring.me_convexified([0.5, 0.5], [1, 0]), LN2)
    relax_cfg = scoring.RelaxLossScoreConfig(alpha=LN2, mu=0.3)
    close("relaxloss worked", scoring.relaxloss_score([0.5, 0.5], 0, relax_cfg), 2 * LN2)
    close(
        "relaxloss degenerate",
        scoring.relaxloss_score([1.0, 0.0], 0, scoring.RelaxLossScoreConfig(0.0, 1.0)),
        0.0,
    )
    uniform_model = lambda x: np.full(4, 0.25)
    mix_cfg = scoring.MixupScoreConfig(R=2, aux_ids=(0,), seed=1)
    close(
        "mixup uniform model",
        scoring.mixup_score(
            (np.zeros(2), 0), [(np.ones(2), 1)], uniform_model, mix_cfg, 4
        ),
        math.log(4.0),
        tol=1e-12,
    )

    def linear_model(x):
        x = np.atleast_2d(x)
        logits = x @ np.array([[1.0, -1.0], [0.5, 2.0]]) + np.array([0.1, -0.2])
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        probs = e / e.sum(axis=1, keepdims=True)
        return probs if probs.shape[0] > 1 else probs[0]

    ident_cfg = scoring.MixupScoreConfig(
        R=1, aux_ids=(0,), seed=0, lambda_low=1.0, lambda_high=1.0
    )
    x_query = np.array([1.0, 0.0])
    close(
        "mixup identity lambda",
        scoring.mixup_score(
            (x_query, 0), [(np.array([5.0, 5.0]), 1)], linear_model, ident_cfg, 2
        ),
        scoring.ce_score(linear_model(x_query), 0),
        tol=0.0,
    )
    half_cfg = scoring.MixupScoreConfig(
        R=1, aux_ids=(0,), seed=0, lambda_low=0.5, lambda_high=0.5
    )
    logit0 = 0.5 * 1.0 + 0.5 * 0.5 + 0.1
    logit1 = 0.5 * -1.0 + 0.5 * 2.0 - 0.2
    z = math.exp(logit0) + math.exp(logit1)
    close(
        "mixup hand-computed",
        scoring.mixup_score(
            (x_query, 0), [(np.array([0.0, 1.0]), 1)], linear_model, half_cfg, 2
        ),
        -(0.5 * math.log(math.exp(logit0) / z) + 0.5 * math.log(math.exp(logit1) / z)),
        tol=1e-12,
    )

    # threshold attack
    close("adv perfect", threshold.empirical_advantage([0.1, 0.2], [0.3, 0.4], 0.25), 1.0)
    close("adv identical", threshold.empirical_advantage([1.0, 2.0], [1.0, 2.0], 1.5), 0.0)
    close("adv enumerated", threshold.empirical_advantage([0.1, 0.4], [0.2, 0.3], 0.15), 0.5)
    tau, adv = threshold.best_threshold([0.1, 0.2], [0.3, 0.4])
    close("best tau perfect", tau, 0.25)
    close("best adv perfect", adv, 1.0)
    tau, adv = threshold.best_threshold([1.0, 3.0], [2.0, 4.0])
    close("best tau sweep", tau, 1.5)
    close("best adv sweep", adv, 0.5)
    tau, adv = threshold.best_threshold([1.0], [1.0])
    checks.append(("best tie -inf", tau == -math.inf and adv == 0.0, tau, -math.inf))
    separable = [make_record(0.95, 0, "member") for _ in range(4)] + [
        make_record(0.2, 0, "nonmember") for _ in range(6)
    ]
    res = threshold.run_threshold_attack(make_audit_dataset(separable, 0), "ce")
    close("attack separable", res.evaluation_advantage, 1.0)

    # cpm operations
    poly1 = Polytope(np.array([[1.0, 0.0, 0.0, 0.0]]), np.array([0.0]), 1)
    val, facet = polytope_g(poly1, np.array([0.7, 0.3, 1.0, 0.0]))
    close("g single facet", val, 0.7)
    checks.append(("g facet index", facet == 0, facet, 0))
    poly2 = Polytope(np.array([[-1.0], [3.0]]), np.array([0.0, 0.0]), 1)
    val, facet = polytope_g(poly2, np.array([1.0]))
    checks.append(("g max facet", (val, facet) == (3.0, 1), (val, facet), (3.0, 1)))
    poly3 = Polytope(np.array([[2.0], [2.0]]), np.array([0.0, 0.0]), 1)
    checks.append(("g tie-break", polytope_g(poly3, np.array([1.0]))[1] == 0, 0, 0))
    inside = Polytope(np.array([[1.0]]), np.array([-0.5]), 1)
    checks.append(
        ("decision inside", member_decision(inside, np.array([0.0])) == 1, 1, 1)
    )
    boundary = Polytope(np.array([[1.0]]), np.array([0.0]), 1)
    checks.append(
        ("decision boundary", member_decision(boundary, np.array([0.0])) == 0, 0, 0)
    )
    close("logistic ln2", logistic_loss(0.0, 1), LN2)
    checks.append(("logistic saturated", logistic_loss(100.0, 1) <= 1e-40, 0, 0))
    close("logistic ln(1+e)", logistic_loss(1.0, -1), 1.3132616875182228)
    close(
        "objective uninformative",
        cpm_objective(
            Polytope(np.zeros((1, 2)), np.zeros(1), 1), np.ones((3, 2)) * 0, np.zeros((2, 2))
        ),
        2 * LN2,
    )
    close(
        "objective worked",
        cpm_objective(
            Polytope(np.array([[1.0]]), np.array([0.0]), 1),
            np.array([[1.0]]),
            np.array([[1.0]]),
        ),
        1.6265233750364456,
    )
    adv_poly = Polytope(np.array([[1.0]]), np.array([0.0]), 1)
    close(
        "cpm_advantage counts",
        cpm_advantage(
            adv_poly,
            np.array([[-1.0], [-1.0], [-1.0], [1.0]]),
            np.array([[-1.0], [1.0], [1.0], [1.0]]),
        ),
        0.5,
    )

    # subgradient vs central finite differences, 1e-5 relative
    rng = np.random.default_rng(7)
    poly = Polytope(rng.normal(size=(3, 2)), rng.normal(size=3), 1)
    m = rng.normal(size=(5, 2))
    n = rng.normal(size=(6, 2))
    grad_w, grad_b = cpm_subgradient(poly, m, n)
    h = 1e-5
    fd_ok = True
    for i in range(3):
        for j in range(2):
            plus = np.array(poly.weights)
            minus = np.array(poly.weights)
            plus[i, j] += h
            minus[i, j] -= h
            fd = (
                cpm_objective(Polytope(plus, poly.biases, 1), m, n)
                - cpm_objective(Polytope(minus, poly.biases, 1), m, n)
            ) / (2 * h)
            fd_ok &= abs(grad_w[i, j] - fd) <= 1e-5 * max(1.0, abs(fd))
    checks.append(("subgradient fd", fd_ok, 0, 0))

    # Warm-start padding: duplicated facets leave the objective unchanged.
    ds = make_audit_dataset(separable_records(), split_seed=0)
    donor = train_cpm(ds, CpmTrainConfig(K=2, epochs=40, seed=1))
    padded = pad_polytope(donor.polytope, 8)
    mfeat = feature_matrix(ds.members, 2)
    sfeat = feature_matrix(ds.selection, 2)
    close("warm-start objective", cpm_objective(padded, mfeat, sfeat), donor.final_objective)

    # oracle values
    square = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    checks.append(
        ("hull center", oracle.hull_contains(square, np.array([0.5, 0.5])), 1, 1)
    )
    checks.append(
        ("hull outside", not oracle.hull_contains(square, np.array([1.5, 0.5])), 1, 1)
    )
    singleton = oracle.exact_convex_discrepancy(
        oracle.PointSet(np.array([[0.5, 0.5]]), square)
    )
    close("convex singleton", singleton.value, 1.0)
    same = np.array([[0.0], [1.0], [2.0]])
    close("convex identical", oracle.exact_convex_discrepancy(oracle.PointSet(same, same)).value, 0.0)
    collinear = oracle.exact_convex_discrepancy(
        oracle.PointSet(np.array([[0.0, 0.0], [2.0, 2.0]]), np.array([[1.0, 1.0], [3.0, 3.0]]))
    )
    close("convex collinear", collinear.value, 0.5)
    close(
        "halfspace separable",
        oracle.exact_halfspace_discrepancy(
            oracle.PointSet(np.array([[0.0], [1.0]]), np.array([[2.0], [3.0]]))
        ).value,
        1.0,
    )
    close(
        "halfspace interleaved",
        oracle.exact_halfspace_discrepancy(
            oracle.PointSet(np.array([[0.0], [2.0]]), np.array([[1.0], [3.0]]))
        ).value,
        0.5,
    )

    failures = [c for c in checks if not c[1]]
    detail = f"{len(checks)} examples checked"
    if failures:
        detail = "; ".join(f"{tag}: got {got!r}, want {want!r}" for tag, _, got, want in failures)
    _report(1, "score unit values", not failures, detail)


def test_criterion_2_theorem_desk_scale(tiny_audit_records):
    violations = []
    for i in range(20):
        records = tiny_audit_records(i)
        members = [r for r in records if r.is_member]
        nonmembers = [r for r in records if not r.is_member]
        bound = oracle.exact_convex_discrepancy(oracle.feature_point_set(2, records)).value
        for name in ("msp", "ent", "ce", "me"):
            m = [scoring.record_score(r, name) for r in members]
            n = [scoring.record_score(r, name) for r in nonmembers]
            _, adv = threshold.best_threshold(m, n)
            if adv > bound + 1e-12:
                violations.append((i, name, adv, bound))
    _report(
        2,
        "threshold advantage bounded by convex discrepancy",
        not violations,
        f"20 instances x 4 scores, {len(violations)} violations",
    )


def test_criterion_3_convexified_constructions():
    rng = np.random.default_rng(101)
    agree_bad = 0
    for _ in range(200):
        c = int(rng.integers(2, 5))
        probs = rng.dirichlet(np.ones(c))
        label = int(rng.integers(0, c))
        one_hot = np.eye(c)[label]
        if abs(scoring.ce_convexified(probs, one_hot) - scoring.ce_score(probs, label)) > 1e-12:
            agree_bad += 1
        if abs(scoring.me_convexified(probs, one_hot) - scoring.me_score(probs, label)) > 1e-12:
            agree_bad += 1

    midpoint_bad = 0
    for fn in (scoring.ce_convexified, scoring.me_convexified):
        rng = np.random.default_rng(29)
        for _ in range(1000):
            c = int(rng.integers(2, 5))
            p_u = rng.uniform(0.01, 1.0, c)
            p_v = rng.uniform(0.01, 1.0, c)
            y_u = rng.uniform(0.01, 0.99, c)
            y_v = rng.uniform(0.01, 0.99, c)
            mid = fn((p_u + p_v) / 2, (y_u + y_v) / 2)
            if mid > (fn(p_u, y_u) + fn(p_v, y_v)) / 2 + 1e-9:
                midpoint_bad += 1
    _report(
        3,
        "convexified surrogates agree and are midpoint convex",
        agree_bad == 0 and midpoint_bad == 0,
        f"one-hot mismatches {agree_bad}, midpoint violations {midpoint_bad}/2000",
    )


def test_criterion_4_cpm_soundness(tiny_audit_records):
    violations = []
    for i in range(20):
        records = tiny_audit_records(i)
        ds = make_audit_dataset(records, split_seed=i)
        pts = oracle.PointSet(
            feature_matrix(ds.members, 2), feature_matrix(ds.selection, 2)
        )
        bound = oracle.exact_convex_discrepancy(pts).value
        res = train_cpm(ds, CpmTrainConfig(K=4, epochs=150, seed=i))
        if res.selection_advantage > bound + 1e-9:
            violations.append((i, res.selection_advantage, bound))

    ds = make_audit_dataset(separable_records(), split_seed=1)
    pts = oracle.PointSet(feature_matrix(ds.members, 2), feature_matrix(ds.selection, 2))
    sep_bound = oracle.exact_convex_discrepancy(pts).value
    res = train_cpm(ds, CpmTrainConfig(K=4, epochs=200, seed=3))
    sep_ok = sep_bound == 1.0 and abs(res.evaluation_advantage - 1.0) <= 1e-6
    _report(
        4,
        "CPM bounded by oracle; separable instance reaches 1.0",
        not violations and sep_ok,
        f"{len(violations)} bound violations; separable eval {res.evaluation_advantage:.8f}",
    )


def test_criterion_5_figure1_ordering(default_audit):
    margins = {}
    for method, audit in default_audit.items():
        baseline = max(
            audit.attacks[name].evaluation_advantage for name in pipeline.BASELINE_SCORES
        )
        margins[method] = audit.cpm.evaluation_advantage - baseline
    ok = all(m >= -0.02 for m in margins.values())
    detail = ", ".join(f"{k}: {v:+.4f}" for k, v in margins.items())
    _report(5, "CPM >= max baseline - 0.02 on every target", ok, detail)


def test_criterion_6_table2_alignment(default_audit):
    audit = default_audit["relaxloss"]
    relax_adv = audit.attacks["relaxloss"].evaluation_advantage
    ce_adv = audit.attacks["ce"].evaluation_advantage
    _report(
        6,
        "aligned RelaxLoss score beats CE on the defense target",
        relax_adv >= ce_adv,
        f"relaxloss {relax_adv:.4f} vs ce {ce_adv:.4f}",
    )


def test_criterion_7_k_ablation_trend(default_audit):
    ds = default_audit["mixup"].dataset
    curve = k_ablation(ds, pipeline.default_cpm_config(), [1, 4, 16, 64])
    advs = [res.evaluation_advantage for _, res in curve]
    ok = all(b >= a - 0.01 for a, b in zip(advs, advs[1:]))
    _report(
        7,
        "warm-started K-ablation is non-decreasing within 0.01",
        ok,
        "advantages " + ", ".join(f"{a:.4f}" for a in advs),
    )


def test_criterion_8_cli_determinism(tmp_path):
    def run_pipeline(workdir):
        workdir.mkdir(exist_ok=True)
        data = workdir / "data.csv"
        model = workdir / "model.json"
        preds = workdir / "preds.csv"
        report = workdir / "report.json"
        poly = workdir / "poly.json"
        steps = [
            ["gen-data", "--classes", "3", "--dim", "4", "--members", "30",
             "--nonmembers", "60", "--separation", "2.0", "--seed", "9",
             "--out", str(data)],
            ["train", "--data", str(data), "--method", "mixup", "--epochs", "25",
             "--lr", "0.1", "--seed", "9", "--out-model", str(model),
             "--out-preds", str(preds)],
            ["audit", "--preds", str(preds), "--scores", "msp,ent,ce,me",
             "--split-seed", "2", "--out-report", str(report)],
            ["cpm", "--preds", str(preds), "--k", "4", "--epochs", "50",
             "--seed", "3", "--split-seed", "2", "--out-report", str(report),
             "--out-polytope", str(poly)],
        ]
        for step in steps:
            proc = subprocess.run(
                [sys.executable, "-m", "cpm_audit.cli"] + step,
                capture_output=True,
                text=True,
            )
            assert proc.returncode == 0, proc.stderr
        return [p.read_bytes() for p in (data, model, preds, report, poly)]

    first = run_pipeline(tmp_path / "one")
    second = run_pipeline(tmp_path / "two")
    ok = first == second
    _report(8, "CLI pipelines are byte-reproducible", ok)
