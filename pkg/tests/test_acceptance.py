"""Acceptance suite.

Each test prints one ``criterion N: PASS|FAIL`` line with the measured
quantities and runtime, then asserts.  Run with ``pytest tests/test_acceptance.py``.
"""

import json
import time
from itertools import combinations
from pathlib import Path

import mpmath
import numpy as np
import pytest

from conftest import random_instance
from tobit_iht import model, special
from tobit_iht.cli import main as cli_main
from tobit_iht.datagen import GenSpec, generate
from tobit_iht.evaluation import compute_metrics, convergence_diagnostics
from tobit_iht.model import Theta
from tobit_iht.solver_dist import DistConfig, Shard, fit_distributed, recommended_rounds
from tobit_iht.solver_local import IhtConfig, fit
from tobit_iht.sparsify import hard_threshold

pytestmark = pytest.mark.slow

REPS = 50
D, S0 = 2000, 5
FAMILY_CONFIG = IhtConfig(s=S0, c_star=0.5, eta="auto", max_iters=500, tol=1e-8)


def family_spec(n, seed, shards=1):
    nonzero = [(j, 1.0 if j % 2 else -1.0) for j in range(1, S0 + 1)]
    return GenSpec(n=n, d=D, s0=S0, beta_nonzero=nonzero, beta0=0.0, sigma_star=1.0,
                   design="iid_gaussian", seed=seed, shards=shards)


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, elapsed, budget):
        ok = bool(ok) and elapsed < budget
        with capsys.disabled():
            status = "PASS" if ok else "FAIL"
            print(f"\ncriterion {number}: {status}  {detail}  [{elapsed:.1f}s, budget {budget:.0f}s]")
        return ok
    return emit


def fd_gradient(theta, data, eps=1e-6):
    v = theta.as_vector()
    out = np.empty_like(v)
    for k in range(v.size):
        up, dn = v.copy(), v.copy()
        up[k] += eps
        dn[k] -= eps
        out[k] = (model.nll(Theta.from_vector(up), data) - model.nll(Theta.from_vector(dn), data)) / (2 * eps)
    return out


def fd_hessian(theta, data, eps=1e-6):
    v = theta.as_vector()
    cols = []
    for k in range(v.size):
        up, dn = v.copy(), v.copy()
        up[k] += eps
        dn[k] -= eps
        diff = model.gradient(Theta.from_vector(up), data) - model.gradient(Theta.from_vector(dn), data)
        cols.append(diff / (2 * eps))
    return np.column_stack(cols)


def test_criterion_1_derivatives(report):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_g = worst_h = 0.0
    for _ in range(100):
        theta, data = random_instance(rng)
        g, fd = model.gradient(theta, data), fd_gradient(theta, data)
        worst_g = max(worst_g, float(np.max(np.abs(g - fd) / np.maximum(1e-6, 1e-6 * np.abs(fd)))))
        worst_h = max(worst_h, float(np.max(np.abs(model.hessian(theta, data) - fd_hessian(theta, data)))))
    elapsed = time.perf_counter() - start
    ok = report(1, worst_g <= 1 and worst_h <= 1e-5,
                f"grad err/tol max={worst_g:.3f}, hessian max abs err={worst_h:.2e}", elapsed, 10)
    assert ok


def test_criterion_2_convexity(report):
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    worst_gap, worst_eig, checks = -np.inf, np.inf, 0
    for _ in range(1000):
        t1, data = random_instance(rng, n_max=30, d_max=10)
        for _ in range(10):
            t2 = Theta(rng.standard_normal(t1.delta.size) * 1.5, float(rng.uniform(0.2, 5)))
            mid = Theta(0.5 * (t1.delta + t2.delta), 0.5 * (t1.gamma + t2.gamma))
            gap = model.nll(mid, data) - 0.5 * (model.nll(t1, data) + model.nll(t2, data))
            worst_gap = max(worst_gap, gap)
            k = int(rng.integers(1, t1.delta.size + 1))
            support = rng.choice(t1.delta.size, size=k, replace=False)
            worst_eig = min(worst_eig, float(np.linalg.eigvalsh(model.hessian(mid, data, support))[0]))
            checks += 1
    elapsed = time.perf_counter() - start
    ok = report(2, worst_gap <= 1e-10 and worst_eig >= -1e-8,
                f"{checks} midpoint checks, max gap={worst_gap:.2e}, min restricted eig={worst_eig:.2e}",
                elapsed, 30)
    assert ok


def test_criterion_3_anchor_identity(report):
    start = time.perf_counter()
    gaps = []
    for seed in range(3):
        shards, _ = generate(GenSpec(n=600, d=50, s0=3, beta0=0.0, seed=seed, shards=6))
        for init in ("cold", "local"):
            cfg = DistConfig(IhtConfig(s=3, c_star=0.5, max_iters=100), outer_rounds=3, init=init)
            gaps.extend(r.anchor_gap for r in fit_distributed(shards, cfg)[0].rounds)
    data, _ = generate(GenSpec(n=400, d=60, s0=3, seed=9))
    cfg = IhtConfig(s=3, max_iters=300)
    local = fit(data, cfg)
    dist = fit_distributed([Shard(0, data)], DistConfig(cfg, 1))[0]
    identical = dist.theta == local.theta and [r.nll for r in dist.trace] == [r.nll for r in local.trace]
    elapsed = time.perf_counter() - start
    ok = report(3, max(gaps) <= 1e-14 and identical,
                f"max anchor gap={max(gaps):.1e} over {len(gaps)} rounds, M=1 bit-identical={identical}",
                elapsed, 5)
    assert ok


@pytest.fixture(scope="module")
def family_fits():
    """Criterion 4 replications with iterates kept for criterion 6."""
    cfg = IhtConfig(**{**FAMILY_CONFIG.__dict__, "trace_thetas": True})
    start = time.perf_counter()
    out = []
    for seed in range(REPS):
        data, truth = generate(family_spec(500, seed))
        result = fit(data, cfg)
        out.append((result, truth))
    return out, time.perf_counter() - start


def test_criterion_4_support_recovery(report, family_fits):
    fits, elapsed = family_fits
    metrics = [compute_metrics(r.theta, truth) for r, truth in fits]
    exact = sum(m.support_f1 == 1.0 for m in metrics)
    med = float(np.median([m.l2_beta for m in metrics]))
    ok = report(4, exact >= 0.9 * REPS and med <= 0.25,
                f"exact support {exact}/{REPS}, median l2_beta={med:.4f}", elapsed, 120)
    assert ok


def test_criterion_5_rate_scaling(report, family_fits):
    fits, base_elapsed = family_fits
    start = time.perf_counter()
    medians = {500: float(np.median([compute_metrics(r.theta, t).l2_theta for r, t in fits]))}
    for n in (1000, 2000):
        errs = []
        for seed in range(REPS):
            data, truth = generate(family_spec(n, seed))
            errs.append(compute_metrics(fit(data, FAMILY_CONFIG).theta, truth).l2_theta)
        medians[n] = float(np.median(errs))
    elapsed = time.perf_counter() - start + base_elapsed
    ok = medians[2000] <= 0.85 * medians[1000] and medians[1000] <= 0.85 * medians[500]
    detail = ", ".join(f"n={n}: {m:.4f}" for n, m in medians.items())
    detail += f"; ratios {medians[1000] / medians[500]:.3f}, {medians[2000] / medians[1000]:.3f}"
    assert report(5, ok, detail, elapsed, 600)


def test_criterion_6_linear_convergence(report, family_fits):
    fits, elapsed = family_fits
    tol = FAMILY_CONFIG.tol
    good, worst = 0, []
    for result, _ in fits:
        ratios = [r for _, _, r in convergence_diagnostics(result, tol=tol) if r is not None]
        worst.append(max(ratios) if ratios else 0.0)
        good += all(r <= 0.95 for r in ratios)
    ok = report(6, good >= 45, f"{good}/{REPS} replications with all ratios <= 0.95, "
                f"median worst ratio={np.median(worst):.3f}", elapsed, 120)
    assert ok


def test_criterion_7_distributed_vs_pooled(report):
    machines, per = 10, 200
    q = recommended_rounds(per, machines * per)
    start = time.perf_counter()
    ratios, sent = [], set()
    for seed in range(REPS):
        shards, truth = generate(family_spec(machines * per, seed, shards=machines))
        pooled = model.CensoredDataset(
            x=np.vstack([s.data.x for s in shards]), y=np.concatenate([s.data.y for s in shards])
        )
        pooled_err = compute_metrics(fit(pooled, FAMILY_CONFIG).theta, truth).l2_theta
        result, log = fit_distributed(shards, DistConfig(FAMILY_CONFIG, q, init="local"))
        ratios.append(compute_metrics(result.theta, truth).l2_theta / pooled_err)
        sent.add(log.vectors_sent)
    elapsed = time.perf_counter() - start
    med = float(np.median(ratios))
    ok = report(7, q == 2 and med <= 1.2 and sent == {q * 2 * (machines - 1)},
                f"Q={q}, median ratio={med:.4f}, vectors sent={sorted(sent)}", elapsed, 600)
    assert ok


def test_criterion_8_projection_oracle(report):
    rng = np.random.default_rng(808)
    fixture = []
    for i in range(200):
        length = int(rng.integers(1, 9))
        v = rng.integers(-3, 4, size=length).astype(float) if i % 2 else rng.standard_normal(length)
        fixture.append(v)
    start = time.perf_counter()
    mismatches = 0
    for v in fixture:
        for s in range(0, min(4, v.size) + 1):
            best, best_err = None, np.inf
            for subset in combinations(range(v.size), s):
                w = np.zeros_like(v)
                w[list(subset)] = v[list(subset)]
                err = float(np.sum((v - w) ** 2))
                if err < best_err:
                    best, best_err = w, err
            mismatches += not np.array_equal(hard_threshold(v, s), best)
    elapsed = time.perf_counter() - start
    assert report(8, mismatches == 0, f"{mismatches} mismatches over 200 vectors, s<=4", elapsed, 1)


def test_criterion_9_special_accuracy(report):
    grid = np.linspace(-40.0, 40.0, 10001)
    with mpmath.workdps(40):
        g_ref = np.array([float(mpmath.npdf(a) / mpmath.ncdf(a)) for a in grid])
        lp_ref = np.array([float(mpmath.log(mpmath.ncdf(a))) for a in grid])
    start = time.perf_counter()
    g = special.mills_g(grid)
    lp = special.log_phi_cdf(grid)
    h = special.mills_h(grid)
    elapsed = time.perf_counter() - start
    normal = g_ref >= np.finfo(float).tiny
    g_rel = float(np.max(np.abs(g[normal] - g_ref[normal]) / g_ref[normal]))
    g_sub = float(np.max(np.abs(g[~normal] - g_ref[~normal]))) if (~normal).any() else 0.0
    lp_abs = float(np.max(np.abs(lp - lp_ref)))
    h_ok = bool(np.all((h > 0) & (h < 1)))
    ok = g_rel <= 1e-10 and g_sub <= np.finfo(float).tiny and lp_abs <= 1e-12 and h_ok
    detail = (f"g max rel err={g_rel:.1e} ({int(normal.sum())} normal-range points), "
              f"g abs err below double range={g_sub:.1e} ({int((~normal).sum())} points), "
              f"log Phi max abs err={lp_abs:.1e}, 0<h<1: {h_ok}")
    assert report(9, ok, detail, elapsed, 5)


def _outputs(directory: Path):
    out = {}
    for path in sorted(directory.iterdir()):
        if path.name == "manifest.json":
            meta = json.loads(path.read_text())
            meta.pop("wall_time", None)
            meta.pop("timestamp", None)
            out[path.name] = json.dumps(meta, sort_keys=True).encode()
        else:
            out[path.name] = path.read_bytes()
    return out


def test_criterion_10_reproducibility(report, tmp_path):
    start = time.perf_counter()
    sim = tmp_path / "sim"
    shards = tmp_path / "shards"
    runs = [
        ["simulate", "--n", "300", "--d", "40", "--seed", "5", "--out", str(sim)],
        ["simulate", "--n", "600", "--d", "40", "--shards", "3", "--beta0", "0", "--seed", "6",
         "--out", str(shards)],
        ["fit", "--data", str(sim / "data.csv"), "--truth", str(sim / "truth.json"), "--s", "4",
         "--iters", "100", "--cv", "2:4", "--folds", "3", "--out", str(tmp_path / "fit")],
        ["fit-dist", "--manifest", str(shards / "shards.json"), "--s", "3", "--iters", "100",
         "--init", "local", "--c-star", "0.5", "--out", str(tmp_path / "fitdist")],
        ["experiment", "rate", "--n", "100,200", "--reps", "2", "--d", "20", "--s0", "2", "--s", "2",
         "--iters", "30", "--out", str(tmp_path / "rate")],
    ]
    identical = []
    for argv in runs:
        assert cli_main(argv) == 0
        first_dir = Path(argv[argv.index("--out") + 1])
        first = _outputs(first_dir)
        again = tmp_path / (first_dir.name + "_again")
        assert cli_main([argv[0], *( [argv[1]] if argv[0] == "experiment" else []),
                         "--config", str(first_dir / "manifest.json"), "--out", str(again)]) == 0
        identical.append(first == _outputs(again))
    elapsed = time.perf_counter() - start
    assert report(10, all(identical), f"{sum(identical)}/{len(runs)} commands byte-identical on rerun "
                  "from their manifest", elapsed, 60)
