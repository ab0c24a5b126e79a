"""Acceptance gate: one PASS/FAIL line per criterion, printed in the summary.

Run with ``pytest tests/test_acceptance.py -v``.  The benchmark-based
criteria (4 to 7) share one 100-replicate run at n = 1000.
"""

import time
from collections import defaultdict

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from mnarboost.adjusted_loss import adjusted_grad, adjusted_loss, build_context
from mnarboost.config import load_config
from mnarboost.data import LossSpec, MethodSpec, split_train_test
from mnarboost.errors import SolverDiverged
from mnarboost.losses import loss_value
from mnarboost.pipeline import (
    PipelineConfig,
    benchmark_tasks,
    estimate_working_models,
    fit_method,
    run_benchmark,
    stream_seed,
)
from mnarboost.propensity import (
    ClosedFormEstar,
    FractionalEstar,
    NormalRegressionDensity,
    PropensityParams,
    SolverConfig,
    fit_density_parametric,
    parse_terms,
    solve_gamma,
)
from mnarboost.simulator import (
    SIGMA,
    SimConfig,
    TruthOracle,
    gen_dataset,
    gen_responses,
    true_median,
    true_propensity,
)

RESULTS = {}
S1_TERMS = "1 + x1 + x2 + x1:x2"
L1, L2, H = LossSpec("l1"), LossSpec("l2"), LossSpec("huber")


def record(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print(line)
    return ok


# 1 -----------------------------------------------------------------------


def test_criterion_01_expectation_equality():
    t0 = time.perf_counter()
    details, ok = [], True
    for gamma_y in (-1.0, 0.0):
        ds = gen_dataset(SimConfig(1, gamma_y, 100_000, 101))
        oracle = TruthOracle(1, gamma_y)
        data = ds.without_truth()
        f = np.zeros(ds.n)
        for kind in ("ipw", "bj"):
            # exact propensity and missing-case law; the floor sits far below every true pi
            ctx = build_context(data, MethodSpec(kind), oracle.propensity_params(), oracle.density(),
                                pi_floor=1e-12, bj_seed=7)
            for spec in (L1, L2):
                diff = adjusted_loss(ctx, spec, f) - loss_value(spec, ds.full_y, f)
                z = diff.mean() / (diff.std(ddof=1) / np.sqrt(ds.n))
                ok &= abs(z) < 3
                details.append(f"{kind}/{spec.kind}/gy={gamma_y:g}: z={z:+.2f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30
    assert record(1, ok, f"|z| < 3 for adjusted minus full-data loss means; {'; '.join(details)}; {elapsed:.1f}s")


# 2 -----------------------------------------------------------------------


def test_criterion_02_gradients():
    t0 = time.perf_counter()
    ds = gen_dataset(SimConfig(1, -1.0, 1000, 202)).without_truth()
    oracle = TruthOracle(1, -1.0)
    rng = np.random.default_rng(2)
    f = rng.normal(size=ds.n)
    eta, h = 0.4, 1e-5
    worst, checked = 0.0, 0
    for kind in ("ipw", "bj"):
        ctx = build_context(ds, MethodSpec(kind), oracle.propensity_params(), oracle.density())
        targets = np.where(ctx.observed[:, None], ctx.y[:, None], ctx.draws if ctx.draws is not None else np.nan)
        gaps = np.abs(np.nan_to_num(targets, nan=np.inf) - f[:, None])
        away = np.all((gaps > 1e-3) & (np.abs(gaps - eta) > 1e-3), axis=1)
        for spec in (L1, L2, H):
            g = adjusted_grad(ctx, spec, f, eta)
            fd = (adjusted_loss(ctx, spec, f + h, eta) - adjusted_loss(ctx, spec, f - h, eta)) / (2 * h)
            rows = away & (np.abs(g) > 0)
            rel = np.abs(fd[rows] - g[rows]) / np.abs(g[rows])
            worst = max(worst, rel.max())
            checked += rows.sum()
            # rows with zero gradient (missing rows under IPW) must have zero slope as well
            assert np.all(np.abs(fd[away & (g == 0)]) < 1e-9)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 5
    assert record(2, ok, f"max relative error {worst:.2e} over {checked} row checks (< 1e-6); {elapsed:.1f}s")


# 3 -----------------------------------------------------------------------


def test_criterion_03_monotone_descent():
    t0 = time.perf_counter()
    cfg = PipelineConfig(density_terms=S1_TERMS)
    methods = ["R", "N", "IPW", "IPWN", "BJ"]
    bad_trace, bad_stop, runs, skipped = defaultdict(int), defaultdict(int), 0, 0
    worst_rise = defaultdict(float)
    for seed in range(20):
        full = gen_dataset(SimConfig(1, -1.0, 1000, 300 + seed))
        train, _ = split_train_test(full, seed=stream_seed(300 + seed, 1))
        for label in methods:
            method = MethodSpec.from_label(label)
            try:
                working = None if method.kind in ("r", "n") else estimate_working_models(train, method, cfg)
            except SolverDiverged:
                skipped += 3
                continue
            for spec in (L1, L2, H):
                out = fit_method(train, method, spec, cfg, working)
                runs += 1
                rise = np.max(np.diff(out.report.risk_trace), initial=0.0)
                if rise > 1e-10:
                    bad_trace[(label, spec.kind)] += 1
                    worst_rise[spec.kind] = max(worst_rise[spec.kind], rise)
                if out.report.stop_reason != "threshold" or out.report.iterations > 1000:
                    bad_stop[(label, spec.kind)] += 1
    elapsed = time.perf_counter() - t0
    ok = not bad_trace and not bad_stop and skipped == 0 and elapsed < 600
    detail = (f"{runs} fits, {skipped} skipped (solver); trace rises: "
              f"{dict(bad_trace) or 'none'} (largest {dict(worst_rise) or 0}); "
              f"non-threshold stops: {dict(bad_stop) or 'none'}; {elapsed:.0f}s")
    assert record(3, ok, detail)


# 4-7 shared benchmark -----------------------------------------------------


@pytest.fixture(scope="module")
def bench():
    t0 = time.perf_counter()
    mnar = load_config(overrides={"bench.settings": "1", "bench.scenarios": "mnar",
                                  "bench.methods": "R,N,IPW,BJ,IPW1,IPW2,IPW3,IPW4",
                                  "bench.losses": "l2", "bench.n": "1000", "bench.seed": "4000"})
    mar = load_config(overrides={"bench.settings": "1", "bench.scenarios": "mar",
                                 "bench.methods": "R,N,IPW,IPWN,BJ",
                                 "bench.losses": "l1,l2,huber", "bench.n": "1000", "bench.seed": "5000"})
    recs = run_benchmark(benchmark_tasks(mnar, 100)) + run_benchmark(benchmark_tasks(mar, 100))
    table = defaultdict(list)
    status = defaultdict(lambda: defaultdict(int))
    for rep, setting, scen, method, loss, metric, value, st in recs:
        table[(scen, method, loss, metric)].append(value)
        if metric == "avg_pred":
            status[(scen, method, loss)][st] += 1
    return table, status, time.perf_counter() - t0


def _mean(table, key):
    v = np.asarray(table[key], float)
    return np.nanmean(v), np.isfinite(v).sum()


def test_criterion_04_bias_separation(bench):
    table, status, elapsed = bench
    means = {m: _mean(table, ("mnar", m, "l2", "avg_pred")) for m in ("R", "N", "IPW", "BJ")}
    ok = all(abs(means[m][0]) < 0.03 for m in ("R", "IPW", "BJ")) and -0.15 <= means["N"][0] <= -0.05
    ok &= all(means[m][1] == 100 for m in means) and elapsed < 1800
    detail = ", ".join(f"{m}={v:+.4f} ({k} reps)" for m, (v, k) in means.items())
    assert record(4, ok, f"mean avg_pred {detail}; need |R|,|IPW|,|BJ| < 0.03 and N in [-0.15, -0.05]; "
                         f"benchmark {elapsed:.0f}s")


def test_criterion_05_metric_ordering(bench):
    table, _, _ = bench
    med = {m: np.nanmedian(table[("mnar", m, "l2", "s_rmse")]) for m in ("N", "IPW", "BJ")}
    ok = med["N"] > med["IPW"] and med["N"] > med["BJ"]
    assert record(5, ok, "median S-RMSE (L2) " + ", ".join(f"{m}={v:.4f}" for m, v in med.items()))


def test_criterion_06_mar_harmlessness(bench):
    table, _, _ = bench
    parts, ok = [], True
    for loss in ("l1", "l2", "huber"):
        ref = np.nanmedian(table[("mar", "R", loss, "s_rmse")])
        for m in ("N", "IPW", "IPWN", "BJ"):
            ratio = np.nanmedian(table[("mar", m, loss, "s_rmse")]) / ref
            ok &= abs(ratio - 1) <= 0.25
            parts.append(f"{m}/{loss}={ratio:.3f}")
    assert record(6, ok, "median S-RMSE / R within 25%: " + ", ".join(parts))


def test_criterion_07_misspecification(bench):
    table, _, _ = bench
    a = {m: _mean(table, ("mnar", m, "l2", "avg_pred"))[0] for m in ("N", "IPW1", "IPW2", "IPW3", "IPW4")}
    c1 = abs(a["IPW1"]) < abs(a["IPW3"])
    c2 = abs(a["IPW3"] - a["N"]) <= 0.03
    c3 = abs(a["IPW2"] - a["IPW1"]) < abs(a["IPW3"] - a["IPW1"])
    detail = ", ".join(f"{m}={v:+.4f}" for m, v in a.items())
    assert record(7, c1 and c2 and c3,
                  f"{detail}; |IPW1|<|IPW3|: {c1}, |IPW3-N|<=0.03: {c2}, gap(IPW2)<gap(IPW3): {c3}")


# 8 -----------------------------------------------------------------------


def test_criterion_08_consistency_trend():
    t0 = time.perf_counter()
    terms = parse_terms(S1_TERMS, 2)
    rmse, failures = {}, {}
    for n in (500, 2000):
        est, fails = [], 0
        for k in range(50):
            ds = gen_dataset(SimConfig(1, -1.0, n, 8000 + k)).without_truth()
            obs = ds.complete_cases()
            dens = fit_density_parametric(obs.x, obs.y, terms)
            rep = solve_gamma(ds, ClosedFormEstar(dens), (0, 1), True, SolverConfig(seed=k))
            if rep.converged:
                est.append(rep.gamma_hat.gamma_y)
            else:
                fails += 1
        rmse[n] = float(np.sqrt(np.mean((np.array(est) + 1.0) ** 2)))
        failures[n] = fails
    elapsed = time.perf_counter() - t0
    ok = rmse[2000] < rmse[500] and elapsed < 600
    assert record(8, ok, f"RMSE(gamma_y) n=500: {rmse[500]:.4f}, n=2000: {rmse[2000]:.4f}; "
                         f"diverged {failures}; {elapsed:.0f}s")


# 9 -----------------------------------------------------------------------


def _gauss_hermite(params, x, mu, s, deg=64):
    t, w = np.polynomial.hermite.hermgauss(deg)
    y = mu + np.sqrt(2.0) * s * t
    w = w / np.sqrt(np.pi)
    X = np.repeat(x[None, :], deg, 0)
    odds = np.exp(-params.linear_predictor(X, y))
    return -(w * odds) @ params.features(X, y) / (w @ (odds + odds * odds))


def test_criterion_09_closed_form_agreement():
    rng = np.random.default_rng(9)
    dens = NormalRegressionDensity(parse_terms(S1_TERMS, 2), np.array([0.0, 0.4, 0.4, 0.8]), SIGMA)
    worst = 0.0
    for _ in range(100):
        gamma = np.array([rng.uniform(-0.5, 1.0), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1.5, 1.5)])
        x = rng.uniform(-1.5, 1.5, size=2)
        params = PropensityParams(gamma, (0, 1), True)
        closed = ClosedFormEstar(dens)(params, x[None])[0]
        quad = _gauss_hermite(params, x, dens.mean(x[None])[0], SIGMA)
        worst = max(worst, np.max(np.abs(closed - quad) / np.maximum(np.abs(quad), 1e-300)))

    oracle = TruthOracle(1, -1.0)
    params = oracle.propensity_params()
    X_eval = np.random.default_rng(90).normal(scale=np.sqrt(0.5), size=(100, 2))
    medians = {}
    for n in (500, 2000, 8000):
        gaps = []
        for k in range(10):
            obs = gen_dataset(SimConfig(1, -1.0, n, 9000 + 31 * k + n)).complete_cases()
            fit = fit_density_parametric(obs.x, obs.y, parse_terms(S1_TERMS, 2))
            frac = FractionalEstar(fit, obs.x, obs.y)(params, X_eval)
            closed = ClosedFormEstar(fit)(params, X_eval)
            gaps.append(np.median(np.abs(frac - closed)))
        medians[n] = float(np.median(gaps))
    trend = medians[500] > medians[2000] > medians[8000]
    ok = worst < 1e-8 and trend
    assert record(9, ok, f"closed vs 64-point Gauss-Hermite max rel err {worst:.1e} (< 1e-8); "
                         f"fractional-closed median gap {', '.join(f'n={n}: {v:.4f}' for n, v in medians.items())}")


# 10 ----------------------------------------------------------------------


def test_criterion_10_truth_oracles():
    rng = np.random.default_rng(10)
    oracle = TruthOracle(1, -1.0)
    points = rng.normal(scale=np.sqrt(0.5), size=(10, 2))
    gen = np.random.Generator(np.random.PCG64(10))
    med_gap = 0.0
    for x in points:
        _, y = gen_responses(oracle, np.repeat(x[None], 1_000_000, 0), gen)
        med_gap = max(med_gap, abs(np.median(y) - true_median(oracle, x)))

    quad_gap = 0.0
    for setting, gamma_y in ((1, -1.0), (1, 0.0), (2, 1.0)):
        orc = TruthOracle(setting, gamma_y)
        for x in rng.normal(scale=0.7, size=(5, 2 if setting == 1 else 9)):
            mu, pt = orc.mu(x[None])[0], orc.pi_marginal(x[None])[0]

            def integrand(y):
                mix = pt * norm.pdf(y, mu, SIGMA) + (1 - pt) * norm.pdf(y, mu - gamma_y * SIGMA ** 2, SIGMA)
                return mix * true_propensity(orc, x, y)

            val = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13)[0]
            quad_gap = max(quad_gap, abs(val - pt))

    reference = {(1, 0.0): 40.4, (1, -1.0): 41.3, (2, 0.0): 43.6, (2, 1.0): 41.1}
    rates = {k: 100 * (1 - gen_dataset(SimConfig(k[0], k[1], 100_000, 1)).r.mean()) for k in reference}
    rate_ok = all(abs(rates[k] - reference[k]) <= 0.5 for k in reference)
    ok = med_gap < 0.005 and quad_gap < 1e-10 and rate_ok
    assert record(10, ok, f"median gap {med_gap:.4f} (< 0.005); marginal P(R=1|x) quadrature gap {quad_gap:.1e} "
                          f"(< 1e-10); missing % " + ", ".join(
                              f"S{k[0]}/gy={k[1]:g}: {rates[k]:.2f} vs {reference[k]}" for k in reference))
