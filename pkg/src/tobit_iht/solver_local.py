"""Centralized iterative hard thresholding for the sparse Tobit model."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import model
from .errors import DivergenceError, InvalidArgumentError
from .model import CensoredDataset, Theta
from .sparsify import ProjectionSpec, project, top_indices

__all__ = [
    "IhtConfig",
    "TraceRecord",
    "FitResult",
    "cold_start",
    "iht_step",
    "auto_step_size",
    "fit",
]

MAX_HALVINGS = 30
DESCENT_SLACK = 1e-12


@dataclass(frozen=True)
class IhtConfig:
    """Solver settings.

    ``eta`` is a positive float or ``"auto"``; ``init`` is a :class:`Theta`
    or ``"cold"``.  ``tol=0`` runs exactly ``max_iters`` iterations unless the
    line search stalls.
    """

    s: int
    c_star: float = 1e-3
    eta: float | str = "auto"
    max_iters: int = 1000
    tol: float = 1e-8
    keep_intercept: bool = False
    backtracking: bool = True
    init: Theta | str = "cold"
    trace_thetas: bool = False

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 0:
            raise InvalidArgumentError(f"s must be a nonnegative integer, got {self.s}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 0:
            raise InvalidArgumentError(f"max_iters must be >= 0, got {self.max_iters}")
        if not self.tol >= 0:
            raise InvalidArgumentError(f"tol must be >= 0, got {self.tol}")
        if not (np.isfinite(self.c_star) and self.c_star > 0):
            raise InvalidArgumentError(f"c_star must be positive, got {self.c_star}")
        if isinstance(self.eta, str):
            if self.eta != "auto":
                raise InvalidArgumentError(f"eta must be a positive number or 'auto', got {self.eta!r}")
        elif not (np.isfinite(self.eta) and self.eta > 0):
            raise InvalidArgumentError(f"eta must be positive, got {self.eta}")
        if isinstance(self.init, str) and self.init != "cold":
            raise InvalidArgumentError(f"init must be a Theta or 'cold', got {self.init!r}")

    @property
    def projection(self) -> ProjectionSpec:
        return ProjectionSpec(self.s, self.c_star, self.keep_intercept)


@dataclass
class TraceRecord:
    iter: int
    nll: float
    step_norm: float
    support: tuple
    eta_used: float
    round: int | None = None
    theta: Theta | None = None
    halvings: int = 0


@dataclass
class FitResult:
    theta: Theta
    iterations_run: int
    converged: bool
    trace: list = field(default_factory=list)
    wall_time: float = 0.0
    stalled: bool = False


def cold_start(d: int, c_star: float) -> Theta:
    """The trivial feasible start (0, c_star) with delta of length d+1."""
    if d < 0 or not c_star > 0:
        raise InvalidArgumentError("need d >= 0 and c_star > 0")
    return Theta(np.zeros(d + 1), c_star)


def iht_step(theta: Theta, grad, eta: float, spec: ProjectionSpec) -> Theta:
    grad = np.asarray(grad, dtype=float)
    if grad.shape != (theta.delta.size + 1,):
        raise InvalidArgumentError(
            f"gradient has shape {grad.shape}, expected ({theta.delta.size + 1},)"
        )
    if not eta > 0:
        raise InvalidArgumentError(f"eta must be positive, got {eta}")
    return project(theta.delta - eta * grad[:-1], theta.gamma - eta * grad[-1], spec)


def _step_from_hessian(hess: np.ndarray) -> float:
    eig = np.linalg.eigvalsh(hess)
    lam_max = float(eig[-1])
    lam_min = max(float(eig[0]), 1e-6 * lam_max)
    return 2.0 / (lam_min + lam_max)


def _auto_support(theta: Theta, grad, s: int):
    top = top_indices(grad[:-1], 2 * s)
    return np.union1d(theta.support, top)


def auto_step_size(dataset: CensoredDataset, theta0: Theta, s: int, grad=None) -> float:
    """2 / (lambda_min + lambda_max) of the Hessian restricted to the working set.

    The working set is support(theta0), the 2s largest gradient coordinates
    and gamma.  ``lambda_min`` is floored at ``1e-6 * lambda_max``.
    """
    if grad is None:
        grad = model.gradient(theta0, dataset)
    support = _auto_support(theta0, grad, s)
    return _step_from_hessian(model.hessian(theta0, dataset, support))


def _check_init(theta: Theta, n_delta: int, config: IhtConfig):
    if theta.delta.size != n_delta:
        raise InvalidArgumentError(f"init has {theta.delta.size} delta entries, expected {n_delta}")
    if np.count_nonzero(theta.delta) > config.s:
        raise InvalidArgumentError("init violates the sparsity budget")
    if theta.gamma < config.c_star:
        raise InvalidArgumentError("init gamma is below c_star")


def resolve_init(config: IhtConfig, d: int) -> Theta:
    if isinstance(config.init, Theta):
        _check_init(config.init, d + 1, config)
        return config.init
    return cold_start(d, config.c_star)


def run_iht(
    theta: Theta,
    config: IhtConfig,
    objective: Callable[[Theta], float],
    grad_fn: Callable[[Theta], np.ndarray],
    hess_fn: Callable[[Theta, np.ndarray], np.ndarray],
    round_id: int | None = None,
):
    """Projected gradient loop shared by the local and distributed solvers.

    ``hess_fn(theta, support)`` returns the Hessian of ``objective`` restricted
    to ``support`` plus gamma; it is only used when ``config.eta == "auto"``.
    Returns ``(theta, trace, iterations_run, converged, stalled)``.
    """
    spec = config.projection
    f = objective(theta)
    if not np.isfinite(f):
        raise DivergenceError(_where("non-finite objective at the start", 0, round_id), 0, round_id)
    keep = config.trace_thetas
    trace = [TraceRecord(0, f, 0.0, tuple(theta.support.tolist()), 0.0, round_id, theta if keep else None)]
    converged = stalled = False
    t = 0
    for t in range(1, config.max_iters + 1):
        grad = grad_fn(theta)
        if config.eta == "auto":
            eta = _step_from_hessian(hess_fn(theta, _auto_support(theta, grad, config.s)))
        else:
            eta = float(config.eta)
        for halvings in range(MAX_HALVINGS + 1):
            cand = iht_step(theta, grad, eta, spec)
            f_cand = objective(cand)
            if not config.backtracking:
                if not np.isfinite(f_cand):
                    raise DivergenceError(
                        _where("non-finite objective", t, round_id), t, round_id
                    )
                break
            if f_cand <= f + DESCENT_SLACK:
                break
            eta *= 0.5
        else:
            cand, f_cand, stalled = theta, f, True
        step = float(np.linalg.norm(cand.as_vector() - theta.as_vector()))
        trace.append(
            TraceRecord(
                t, f_cand, step, tuple(cand.support.tolist()), eta, round_id,
                cand if keep else None, halvings,
            )
        )
        theta, f = cand, f_cand
        if stalled or step < config.tol:
            converged = True
            break
    return theta, trace, t, converged, stalled


def _where(msg, t, round_id):
    if round_id is None:
        return f"{msg} at iteration {t}"
    return f"{msg} at outer round {round_id}, inner iteration {t}"


def fit(dataset: CensoredDataset, config: IhtConfig) -> FitResult:
    """Run sparse Tobit IHT on one dataset.

    Each iteration takes a gradient step on (delta, gamma), keeps the ``s``
    largest entries of delta and clamps gamma at ``c_star``.  With
    backtracking the step is halved until the objective does not increase.
    """
    model.validate(dataset)
    start = time.perf_counter()
    theta0 = resolve_init(config, dataset.d)
    theta, trace, iters, converged, stalled = run_iht(
        theta0,
        config,
        objective=lambda th: model.nll(th, dataset),
        grad_fn=lambda th: model.gradient(th, dataset),
        hess_fn=lambda th, sup: model.hessian(th, dataset, sup),
    )
    return FitResult(theta, iters, converged, trace, time.perf_counter() - start, stalled)
