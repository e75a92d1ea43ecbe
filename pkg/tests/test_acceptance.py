"""Acceptance criteria, each at its stated tolerance.

Every test records one pass/fail line, printed in the ``acceptance
criteria`` section of the pytest terminal summary. Real MNIST files are
read from ``SEMISUP_MNIST_IMAGES`` and ``SEMISUP_MNIST_LABELS`` when set.
"""

import math
import os
import time

import numpy as np
import pytest
from scipy import stats

from _oracles import manifold_minimum, manifold_objective, random_laprls_instance
from _report import report
from test_binary import LABELED, MIX, PINNED_SHIFT
from test_mixture import geweke_z_scores
from test_relevance import oracle_d_separated, random_dag
from semisup import binary as bn
from semisup import data_io as io
from semisup import harness as hs
from semisup import kernel as kn
from semisup import mixture as mx
from semisup import relevance as rel
from semisup import stochastics as st

pytestmark = pytest.mark.acceptance


def within_se(sample, target, k=3.0):
    se = sample.std(ddof=1) / math.sqrt(len(sample))
    return abs(sample.mean() - target) <= k * se


# --------------------------------------------------------------------------
# 1. Mixture curves


def test_acceptance_1_mixture_dominance():
    cfg = hs.ExperimentConfig.resolve("mixture-fig1")
    ratios, worst = [], 0.0
    for r in range(10):
        t0 = time.perf_counter()
        res = hs.mixture_fig1(cfg, r)
        worst = max(worst, time.perf_counter() - t0)
        ratios.append(res["msd_semisupervised"] / res["msd_labeled_only"])
    wins = sum(q <= 0.5 for q in ratios)
    ok = wins >= 8 and worst <= 300
    report("Criterion 1 mixture dominance", ok,
           f"ratio <= 0.5 in {wins}/10, need 8; ratios {np.round(ratios, 3).tolist()}; max {worst:.0f}s/replicate")
    assert ok


# --------------------------------------------------------------------------
# 2. Digits


def test_acceptance_2_digits_mnist():
    img, lab = os.environ.get("SEMISUP_MNIST_IMAGES"), os.environ.get("SEMISUP_MNIST_LABELS")
    if not (img and lab and os.path.exists(img) and os.path.exists(lab)):
        report("Criterion 2 digits (MNIST)", True, "skipped: MNIST IDX files not supplied; fallback applies")
        pytest.skip("set SEMISUP_MNIST_IMAGES and SEMISUP_MNIST_LABELS to run on MNIST")
    x, labels = io.load_idx_pair(img, lab)
    cfg = hs.ExperimentConfig.resolve("digits-6v9")
    t0 = time.perf_counter()
    reps = hs.digits_replicates(cfg, x, labels)
    elapsed = time.perf_counter() - t0
    lo = float(np.mean([r["labeled_only_error"] for r in reps]))
    semi = float(np.mean([r["semisupervised_error"] for r in reps]))
    checks = {"labeled-only in 31.2+-6": abs(lo - 0.312) <= 0.06,
              "semisupervised in 9.5+-4": abs(semi - 0.095) <= 0.04,
              "semisupervised < labeled-only": semi < lo,
              "runtime <= 15 min": elapsed <= 900}
    ok = len(reps) >= 20 and all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    report("Criterion 2 digits (MNIST)", ok,
           f"{len(reps)} draws: labeled-only {100 * lo:.1f}%, semisupervised {100 * semi:.1f}%, "
           f"{elapsed:.0f}s" + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok


def test_acceptance_2_digits_synthetic_fallback():
    cfg = hs.ExperimentConfig.resolve("digits-6v9", {"replicates": 50})
    reps = hs.synthetic_digits_replicates(cfg)
    wins = sum(r["semisupervised_error"] <= r["labeled_only_error"] for r in reps)
    ok = len(reps) == 50 and wins >= 40
    report("Criterion 2 digits (synthetic fallback)", ok, f"semisupervised <= labeled-only in {wins}/50, need 40")
    assert ok


# --------------------------------------------------------------------------
# 3. Kernel dominance and field similarity


def test_acceptance_3_kernel_dominance_and_field():
    cfg = hs.ExperimentConfig.resolve("kernel-synthetic")
    data = hs.kernel_dataset(cfg)
    reps = hs.kernel_replicates(cfg, 4, data)
    lo = float(np.mean([r["labeled_only_error"] for r in reps]))
    semi = float(np.mean([r["semisupervised_error"] for r in reps]))
    gain = lo - semi
    grid, fields, _, _ = hs.kernel_fields(cfg, 8, 0, data)
    assert fields["full"].shape == (40, 40)
    corr = float(np.corrcoef(fields["semisupervised"].ravel(), fields["full"].ravel())[0, 1])
    ok_gain = len(reps) == 50 and gain >= 0.05
    ok_corr = corr >= 0.9
    report("Criterion 3 kernel dominance", ok_gain and ok_corr,
           f"4 labeled: {100 * lo:.1f}% -> {100 * semi:.1f}% (gain {100 * gain:.1f} points, need 5); "
           f"8 labeled field r = {corr:.3f}, need 0.9")
    assert ok_gain and ok_corr


# --------------------------------------------------------------------------
# 4. Relevance


def test_acceptance_4_relevance_table_and_oracle():
    t0 = time.perf_counter()
    wrong = [c.name for c in rel.reference_cases() if rel.unlabeled_relevant(c.spec).relevant is not c.relevant]
    rng = np.random.default_rng(44)
    disagreements = 0
    for _ in range(1000):
        nodes, edges = random_dag(rng, int(rng.integers(2, 9)))
        spec = rel.ModelSpecGraph(tuple(nodes), tuple(edges), frozenset(), frozenset(), nodes[0], nodes[1])
        a, b = rng.choice(nodes, size=2, replace=False)
        z = {v for v in nodes if v not in (a, b) and rng.random() < 0.35}
        disagreements += rel.d_separated(spec, a, b, z) != oracle_d_separated(nodes, edges, a, b, z)
    elapsed = time.perf_counter() - t0
    ok = len(rel.reference_cases()) == 9 and not wrong and disagreements == 0 and elapsed <= 10
    report("Criterion 4 relevance", ok,
           f"{9 - len(wrong)}/9 verdicts, {disagreements} oracle disagreements on 1000 DAGs, {elapsed:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 5. Binary cell


def test_acceptance_5_binary_cell():
    t0 = time.perf_counter()
    rng = np.random.default_rng(55)
    worst = 0.0
    for _ in range(200):
        lab = rng.integers(0, 30, size=(2, 2))
        data = bn.CountData(lab.tolist(), rng.integers(0, 50, size=2).tolist())
        x = int(rng.integers(2))
        pb = bn.ProductBeta(tuple(rng.uniform(0.1, 5, 2)), tuple(rng.uniform(0.1, 5, 2)), tuple(rng.uniform(0.1, 5, 2)))
        a, b = pb.phi1 if x else pb.phi0
        worst = max(worst, abs(bn.posterior_predictive(pb, data, x).p_star - (a + lab[x, 1]) / (a + b + lab[x].sum())))
        post = rng.uniform(0.1, 5, 4)
        prior = bn.Dirichlet(tuple(post))
        post = post + lab.ravel()
        worst = max(worst, abs(bn.posterior_predictive(prior, data, x).p_star - post[2 * x + 1] / (post[2 * x] + post[2 * x + 1])))
    same = bn.DirichletMixture(0.3, (2, 1, 3, 1), (2, 1, 3, 1))
    base = bn.posterior_predictive(same, bn.CountData(LABELED, (0, 0)), 1).p_star
    drift = max(abs(bn.posterior_predictive(same, bn.CountData(LABELED, u), 1).p_star - base)
                for u in [(1, 0), (30, 10), (64, 0), (300, 500)])
    shift = (bn.posterior_predictive(MIX, bn.CountData(LABELED, (30, 10)), 1).p_star
             - bn.posterior_predictive(MIX, bn.CountData(LABELED, (0, 0)), 1).p_star)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and drift <= 1e-12 and abs(shift - PINNED_SHIFT) <= 1e-12 and elapsed <= 30
    report("Criterion 5 binary cell", ok,
           f"closed-form max error {worst:.1e}, equal-component drift {drift:.1e}, "
           f"shift {shift:.12f} vs pinned {PINNED_SHIFT:.12f}, {elapsed:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 6. LapRLS


def test_acceptance_6_laprls_optimality():
    t0 = time.perf_counter()
    rng = np.random.default_rng(66)
    worst = 0.0
    for i in range(20):
        pts, n, y, h, ga, gi = random_laprls_instance(rng)
        fit = kn.laprls_fit(pts[:n], y, pts[n:], kn.RbfKernel(h), ga, gi)
        mine = manifold_objective(fit.weights, pts, y, h, h, ga, gi)
        _, best = manifold_minimum(pts, y, h, h, ga, gi, seed=i)
        worst = max(worst, abs(mine - best) / max(abs(best), 1e-300))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed <= 30
    report("Criterion 6 LapRLS optimality", ok, f"max relative objective gap {worst:.1e} over 20 instances, {elapsed:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 7. Sampler suite


def _moment_checks() -> dict[str, bool]:
    n = 100_000
    rng = st.make_rng(77)
    out = {}
    alpha = np.array([0.5, 2.0, 3.5])
    d = np.array([st.sample_dirichlet(alpha, rng) for _ in range(n)])
    out["Dirichlet"] = all(within_se(d[:, i], alpha[i] / alpha.sum()) for i in range(3))
    scale, dof = np.array([[2.0, 0.5], [0.5, 1.0]]), 8.0
    w = np.array([st.sample_inverse_wishart(dof, scale, rng) for _ in range(n)])
    mean = stats.invwishart(df=dof, scale=scale).mean()
    out["inverse-Wishart"] = all(within_se(w[:, i, j], mean[i, j]) for i, j in [(0, 0), (0, 1), (1, 1)])
    mu, sigma = np.array([1.0, -2.0]), np.array([[2.0, 0.6], [0.6, 1.0]])
    x = st.sample_mvn(mu, sigma, rng, size=n)
    out["MVN"] = (all(within_se(x[:, i], mu[i]) for i in range(2))
                  and all(within_se((x[:, i] - mu[i]) * (x[:, j] - mu[j]), sigma[i, j]) for i, j in [(0, 0), (0, 1), (1, 1)]))
    tn = True
    for m, s, pos in [(0.0, 1.0, True), (-3.0, 1.0, True), (2.0, 0.5, False)]:
        t = st.sample_truncated_normal(np.full(n, m), s, pos, rng)
        a, b = ((0 - m) / s, np.inf) if pos else (-np.inf, (0 - m) / s)
        tn &= bool(np.all(t > 0) if pos else np.all(t < 0)) and within_se(t, stats.truncnorm(a, b, loc=m, scale=s).mean())
    out["truncated normal"] = tn
    return out


def test_acceptance_7_sampler_suite():
    t0 = time.perf_counter()
    moments = _moment_checks()
    z = geweke_z_scores(seed=11)
    elapsed = time.perf_counter() - t0
    ok = all(moments.values()) and bool(np.all(np.abs(z) < 3.5)) and elapsed <= 300
    failed = [k for k, v in moments.items() if not v]
    report("Criterion 7 sampler suite", ok,
           f"moments {'all pass' if not failed else 'failed: ' + ', '.join(failed)}; "
           f"Geweke max |z| {np.max(np.abs(z)):.2f} (< 3.5); {elapsed:.0f}s")
    assert ok


# --------------------------------------------------------------------------
# 8. NIW prior independence


def test_acceptance_8_niw_independence():
    prior = mx.NIWMixturePrior.reference_default()
    results = [mx.niw_independence_check(prior, 10_000, st.child_rng(8, s)) for s in range(10)]
    kept = sum(not r.reject for r in results)
    ok = kept >= 9
    report("Criterion 8 NIW independence", ok,
           f"not rejected in {kept}/10, need 9; p-values {[round(r.p_value, 2) for r in results]}")
    assert ok
