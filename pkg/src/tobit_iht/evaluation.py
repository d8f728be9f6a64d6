"""Metrics, sparsity cross-validation and replication experiments."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import model
from .datagen import GenSpec, censoring_rate, generate, make_rng
from .errors import DiagnosticsUnavailableError, FoldDegenerateError, InvalidArgumentError
from .model import CensoredDataset, ModelParams, Theta
from .solver_dist import DistConfig, fit_distributed, recommended_rounds
from .solver_local import FitResult, IhtConfig, fit

__all__ = [
    "Metrics",
    "RatePoint",
    "RateCurve",
    "compute_metrics",
    "cross_validate_s",
    "rate_experiment",
    "dist_vs_pooled",
    "convergence_diagnostics",
    "resolve_threads",
]


@dataclass(frozen=True)
class Metrics:
    l2_theta: float
    l2_beta: float
    support_tpr: float
    support_fpr: float
    support_f1: float
    predictive_nll: float | None = None
    censoring_rate: float | None = None

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class RatePoint:
    n: int
    median_l2: float
    iqr_l2: float
    replications: int


@dataclass(frozen=True)
class RateCurve:
    points: tuple

    def __post_init__(self):
        ns = [p.n for p in self.points]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise InvalidArgumentError("rate curve n values must be strictly increasing")


def shifted_truth(truth: ModelParams, c0: float) -> ModelParams:
    """Truth on the threshold-zero scale the solvers fit on."""
    if c0 == 0:
        return truth
    beta = truth.beta.copy()
    beta[0] -= c0
    return ModelParams(beta, truth.sigma)


def compute_metrics(theta_hat: Theta, truth: ModelParams, holdout=None, c0: float = 0.0) -> Metrics:
    """Estimation and support-recovery metrics against the generating parameters.

    Support metrics compare nonzeros of delta and beta excluding the intercept.
    ``c0`` is the censoring threshold of the data ``theta_hat`` was fit on.
    """
    truth = shifted_truth(truth, c0)
    if truth.beta.shape != theta_hat.delta.shape:
        raise InvalidArgumentError(
            f"estimate has {theta_hat.delta.size} coefficients, truth has {truth.beta.size}"
        )
    theta_star = model.params_to_theta(truth)
    l2_theta = float(np.linalg.norm(theta_hat.as_vector() - theta_star.as_vector()))
    beta_hat = model.theta_to_params(theta_hat).beta
    l2_beta = float(np.linalg.norm(beta_hat - truth.beta))

    est = theta_hat.delta[1:] != 0
    true = truth.beta[1:] != 0
    tp = int(np.count_nonzero(est & true))
    fp = int(np.count_nonzero(est & ~true))
    fn = int(np.count_nonzero(~est & true))
    negatives = int(np.count_nonzero(~true))
    tpr = tp / (tp + fn) if tp + fn else 1.0
    fpr = fp / negatives if negatives else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if (tp + fp + fn) else 1.0

    pred, rate = None, None
    if holdout is not None:
        pred = model.nll(theta_hat, holdout)
        rate = censoring_rate(holdout)
    return Metrics(l2_theta, l2_beta, tpr, fpr, f1, pred, rate)


def fold_assignment(n: int, folds: int, seed: int = 0):
    """Split ``range(n)`` into ``folds`` disjoint index arrays via a seeded permutation."""
    perm = make_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def cross_validate_s(dataset: CensoredDataset, s_grid, folds: int, base: IhtConfig, seed: int = 0):
    """K-fold CV of the sparsity level scored by held-out Tobit nll.

    Returns ``(best_s, table)`` with ``table`` rows ``(s, mean_cv_nll, se)``
    in grid order.  Ties in the mean go to the smaller ``s``.
    """
    s_grid = list(s_grid)
    if not s_grid:
        raise InvalidArgumentError("s_grid is empty")
    if folds < 2 or dataset.n < folds:
        raise InvalidArgumentError(f"need 2 <= folds <= n, got folds={folds}, n={dataset.n}")
    model.validate(dataset)
    parts = fold_assignment(dataset.n, folds, seed)
    splits = []
    for k, test_idx in enumerate(parts):
        train_idx = np.setdiff1d(np.arange(dataset.n), test_idx, assume_unique=True)
        train = dataset.subset(train_idx)
        if np.all(train.censored):
            raise FoldDegenerateError(k)
        splits.append((train, dataset.subset(test_idx)))

    table = []
    for s in s_grid:
        config = replace(base, s=int(s))
        scores = np.array([model.nll(fit(train, config).theta, test) for train, test in splits])
        se = float(np.std(scores, ddof=1) / np.sqrt(folds))
        table.append((int(s), float(np.mean(scores)), se))
    best_s, best_mean = None, np.inf
    for s, mean, _ in table:
        if mean < best_mean or (mean == best_mean and s < best_s):
            best_s, best_mean = s, mean
    return best_s, table


def resolve_threads(threads=None) -> int:
    if threads is None:
        threads = os.environ.get("TOBIT_IHT_THREADS", 1)
    threads = int(threads)
    if threads < 1:
        raise InvalidArgumentError("threads must be >= 1")
    return threads


def _map(fn, jobs, threads):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, jobs))
    return [fn(job) for job in jobs]


def _rate_job(job):
    spec, config, machines, rounds, dist_init = job
    data, truth = generate(spec)
    if machines == 1:
        theta = fit(data, config).theta
        c0 = data.c0
    else:
        theta = fit_distributed(data, DistConfig(config, rounds, dist_init))[0].theta
        c0 = data[0].data.c0
    return compute_metrics(theta, truth, c0=c0).l2_theta


def rate_experiment(
    base_spec: GenSpec,
    n_grid,
    reps: int,
    config: IhtConfig,
    machines: int = 1,
    rounds="auto",
    dist_init="local",
    threads=None,
) -> RateCurve:
    """Median and IQR of ``l2_theta`` over ``reps`` replications per sample size.

    Replication ``r`` uses seed ``base_spec.seed + r`` at every n.  With
    ``machines > 1`` each replication is split into equal contiguous shards
    and fit with the distributed solver (``n`` is then the total sample size).
    """
    n_grid = [int(n) for n in n_grid]
    if reps < 1:
        raise InvalidArgumentError("reps must be >= 1")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise InvalidArgumentError("n_grid must be strictly increasing")
    threads = resolve_threads(threads)
    points = []
    for n in n_grid:
        q = recommended_rounds(n // machines, n) if rounds == "auto" else int(rounds)
        jobs = [
            (replace(base_spec, n=n, seed=base_spec.seed + r, shards=machines, shard_sizes=None),
             config, machines, q, dist_init)
            for r in range(reps)
        ]
        errs = np.array(_map(_rate_job, jobs, threads))
        q25, q50, q75 = np.percentile(errs, [25, 50, 75])
        points.append(RatePoint(n, float(q50), float(q75 - q25), reps))
    return RateCurve(tuple(points))


def _paired_job(job):
    spec, config, rounds, dist_init = job
    shards, truth = generate(spec)
    pooled = CensoredDataset(
        x=np.vstack([s.data.x for s in shards]),
        y=np.concatenate([s.data.y for s in shards]),
        c0=spec.c0,
        censored=np.concatenate([s.data.censored for s in shards]),
    )
    pooled_err = compute_metrics(fit(pooled, config).theta, truth, c0=spec.c0).l2_theta
    result, log = fit_distributed(shards, DistConfig(config, rounds, dist_init))
    dist_err = compute_metrics(result.theta, truth, c0=spec.c0).l2_theta
    gap = max(r.anchor_gap for r in result.rounds)
    return spec.seed, pooled_err, dist_err, log.vectors_sent, gap


def dist_vs_pooled(
    base_spec: GenSpec, machines: int, reps: int, config: IhtConfig, rounds="auto", dist_init="local", threads=None
):
    """Paired replications: distributed fit on ``machines`` shards vs the pooled fit.

    Returns rows ``dict(seed, pooled_l2, dist_l2, ratio, vectors_sent, anchor_gap)``.
    """
    if machines < 1 or reps < 1:
        raise InvalidArgumentError("machines and reps must be >= 1")
    q = recommended_rounds(base_spec.n // machines, base_spec.n) if rounds == "auto" else int(rounds)
    jobs = [
        (replace(base_spec, seed=base_spec.seed + r, shards=machines, shard_sizes=None), config, q, dist_init)
        for r in range(reps)
    ]
    rows = []
    for seed, p, dd, sent, gap in _map(_paired_job, jobs, resolve_threads(threads)):
        rows.append(
            {"seed": seed, "rounds": q, "pooled_l2": p, "dist_l2": dd, "ratio": dd / p,
             "vectors_sent": sent, "anchor_gap": gap}
        )
    return rows


def convergence_diagnostics(result, theta_ref: Theta | None = None, tol: float = 1e-8):
    """Errors ``e_t = ||theta^t - theta_ref||`` and contraction ratios ``e_{t+1}/e_t``.

    ``result`` is a :class:`FitResult` (or its trace) fitted with
    ``trace_thetas=True``.  ``theta_ref`` defaults to the final iterate.  The
    ratio is ``None`` for the last iterate and wherever ``e_t < 10 * tol``.
    """
    trace = result.trace if isinstance(result, FitResult) else list(result)
    if not trace:
        raise DiagnosticsUnavailableError("empty trace")
    if any(rec.theta is None for rec in trace):
        raise DiagnosticsUnavailableError("trace has no iterates; refit with trace_thetas=True")
    if theta_ref is None:
        theta_ref = trace[-1].theta
    ref = theta_ref.as_vector()
    errors = [float(np.linalg.norm(rec.theta.as_vector() - ref)) for rec in trace]
    out = []
    for i, rec in enumerate(trace):
        ratio = None
        if i + 1 < len(errors) and errors[i] >= 10 * tol:
            ratio = errors[i + 1] / errors[i]
        out.append((rec.iter, errors[i], ratio))
    return out
