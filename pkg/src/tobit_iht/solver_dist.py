"""Communication-efficient distributed IHT over simulated machines.

Machine 0 is the central machine.  Each outer round it broadcasts the current
estimate ``theta_bar``, collects every machine's local gradient at that point
and then runs the IHT inner loop on the surrogate loss::

    L~(theta) = L_1(theta) - <theta, grad L_1(theta_bar) - grad L_N(theta_bar)>

using only its own rows.  Workers answer gradient requests and never hand raw
rows to the coordinator.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import model
from .errors import (
    DataError,
    IncompleteRoundError,
    InvalidArgumentError,
    ProtocolError,
)
from .model import CensoredDataset, Theta
from .solver_local import FitResult, IhtConfig, cold_start, resolve_init, run_iht

__all__ = [
    "Shard",
    "DistConfig",
    "CommLog",
    "GradientRequest",
    "GradientResponse",
    "Worker",
    "InProcessTransport",
    "local_gradient",
    "aggregate_gradients",
    "surrogate_gradient",
    "fit_distributed",
    "recommended_rounds",
]


@dataclass(frozen=True)
class Shard:
    machine_id: int
    data: CensoredDataset


@dataclass(frozen=True)
class DistConfig:
    """Outer-loop settings.

    ``init`` is a :class:`Theta`, ``"cold"``, or ``"local"``.  ``"local"``
    starts from a local IHT fit on the central machine's own rows (same inner
    settings, cold start), which costs no communication.  ``inner.init`` is
    ignored.
    """

    inner: IhtConfig
    outer_rounds: int = 1
    init: Theta | str = "cold"

    def __post_init__(self):
        if int(self.outer_rounds) != self.outer_rounds or self.outer_rounds < 1:
            raise InvalidArgumentError(f"outer_rounds must be >= 1, got {self.outer_rounds}")
        if isinstance(self.init, str) and self.init not in ("cold", "local"):
            raise InvalidArgumentError(f"init must be a Theta, 'cold' or 'local', got {self.init!r}")


@dataclass
class CommLog:
    d: int
    rounds: int = 0
    vectors_sent: int = 0

    @property
    def bytes_estimate(self) -> int:
        return self.vectors_sent * (self.d + 2) * 8

    def record_round(self, machines: int):
        self.rounds += 1
        # one broadcast to, and one gradient back from, each non-central machine
        self.vectors_sent += 2 * (machines - 1)

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "vectors_sent": self.vectors_sent,
            "bytes_estimate": self.bytes_estimate,
        }


@dataclass(frozen=True)
class GradientRequest:
    round: int
    theta_bar: Theta


@dataclass(frozen=True)
class GradientResponse:
    machine_id: int
    round: int
    gradient: np.ndarray
    n: int


def local_gradient(shard: Shard, theta_bar: Theta) -> np.ndarray:
    return model.gradient(theta_bar, shard.data)


class Worker:
    """One simulated machine; holds its shard privately and answers gradient requests."""

    def __init__(self, shard: Shard):
        self._shard = shard
        self.machine_id = shard.machine_id

    def handle(self, request: GradientRequest) -> GradientResponse:
        grad = local_gradient(self._shard, request.theta_bar)
        return GradientResponse(self.machine_id, request.round, grad, self._shard.data.n)


class InProcessTransport:
    """Synchronous broadcast/collect over in-process workers.

    Workers may run concurrently (``max_workers > 1``); the coordinator blocks
    until every response of the round is in.  Responses are returned in
    ascending machine_id order regardless of completion order.
    """

    def __init__(self, workers, max_workers=1):
        self.workers = sorted(workers, key=lambda w: w.machine_id)
        self.max_workers = max_workers

    def broadcast(self, request: GradientRequest):
        if self.max_workers > 1 and len(self.workers) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                responses = list(pool.map(lambda w: w.handle(request), self.workers))
        else:
            responses = [w.handle(request) for w in self.workers]
        return sorted(responses, key=lambda r: r.machine_id)


def aggregate_gradients(grads, machines=None) -> np.ndarray:
    """Size-weighted average of per-machine gradients.

    ``grads`` is a sequence of ``(machine_id, vector, n_m)``.  The sum runs in
    ascending machine_id order; for equal shard sizes this is the plain
    average.  ``machines`` is the expected number of machines (defaults to
    the number received); missing ids raise :class:`IncompleteRoundError`.
    """
    grads = sorted(grads, key=lambda item: item[0])
    if not grads:
        raise IncompleteRoundError("no gradients received")
    ids = [int(m) for m, _, _ in grads]
    expected = len(grads) if machines is None else machines
    if len(set(ids)) != len(ids):
        raise ProtocolError(f"duplicate machine ids in round: {ids}")
    missing = sorted(set(range(expected)) - set(ids))
    if missing or len(ids) != expected:
        raise IncompleteRoundError(f"missing gradients from machines {missing or ids}")
    length = np.asarray(grads[0][1]).shape
    total_n = sum(int(n_m) for _, _, n_m in grads)
    out = np.zeros(length)
    for m, vec, n_m in grads:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != length:
            raise ProtocolError(f"machine {m} sent a vector of shape {vec.shape}, expected {length}")
        out = out + (n_m / total_n) * vec
    return out


def surrogate_gradient(theta, theta_bar, central_shard, global_grad_at_bar, correction=None):
    """Gradient of the surrogate loss at ``theta``.

    ``correction`` is grad L_1(theta_bar) - grad L_N(theta_bar); pass it to
    reuse the per-round cached value, otherwise it is computed here.
    """
    global_grad_at_bar = np.asarray(global_grad_at_bar, dtype=float)
    if global_grad_at_bar.shape != (theta.delta.size + 1,) or theta_bar.delta.size != theta.delta.size:
        raise ProtocolError("dimension mismatch between theta, theta_bar and the global gradient")
    if correction is None:
        correction = local_gradient(central_shard, theta_bar) - global_grad_at_bar
    return local_gradient(central_shard, theta) - correction


def recommended_rounds(n: int, N: int) -> int:
    """Outer rounds of order log N / log n for local sample size n and total N."""
    if n < 1 or N < n:
        raise InvalidArgumentError(f"need 1 <= n <= N, got n={n}, N={N}")
    if n == N:
        return 1
    if n == 1:
        raise InvalidArgumentError("recommended rounds are undefined for single-row machines")
    ratio = math.log(N) / math.log(n)
    return max(1, math.ceil(ratio - 1e-9))


@dataclass
class RoundRecord:
    round: int
    anchor_gap: float
    inner_iterations: int


@dataclass
class DistFitResult(FitResult):
    rounds: list = field(default_factory=list)


def _validate_shards(shards):
    if not shards:
        raise InvalidArgumentError("need at least one shard")
    ids = sorted(s.machine_id for s in shards)
    if ids != list(range(len(shards))):
        raise InvalidArgumentError(f"machine ids must be 0..M-1, got {ids}")
    width = shards[0].data.x.shape[1]
    for shard in shards:
        try:
            model.validate(shard.data)
        except DataError as exc:
            raise type(exc)(f"shard {shard.machine_id}: {exc}") from exc
        if shard.data.x.shape[1] != width:
            raise InvalidArgumentError(f"shard {shard.machine_id} has a different number of columns")


def fit_distributed(shards, config: DistConfig, transport=None):
    """Run the distributed IHT; returns ``(DistFitResult, CommLog)``.

    Trace records carry the outer round in ``round`` and the inner iteration
    in ``iter``.  ``rounds`` on the result holds, per outer round, the
    sup-norm gap between the surrogate gradient and the aggregated global
    gradient at the anchor (zero up to rounding).
    """
    shards = sorted(shards, key=lambda s: s.machine_id)
    _validate_shards(shards)
    central = shards[0]
    d = central.data.d
    M = len(shards)
    inner = config.inner
    if transport is None:
        transport = InProcessTransport([Worker(s) for s in shards])
    start = time.perf_counter()

    if isinstance(config.init, str) and config.init == "local":
        theta = run_iht(
            cold_start(d, inner.c_star),
            inner,
            objective=lambda th: model.nll(th, central.data),
            grad_fn=lambda th: model.gradient(th, central.data),
            hess_fn=lambda th, sup: model.hessian(th, central.data, sup),
        )[0]
    else:
        theta = resolve_init(replace(inner, init=config.init), d)
    log = CommLog(d=d)
    trace, rounds = [], []
    total_iters, converged, stalled = 0, False, False
    data = central.data
    for q in range(config.outer_rounds):
        responses = transport.broadcast(GradientRequest(q, theta))
        for resp in responses:
            if resp.round != q:
                raise ProtocolError(f"machine {resp.machine_id} answered round {resp.round} during round {q}")
        global_grad = aggregate_gradients(
            [(r.machine_id, r.gradient, r.n) for r in responses], machines=M
        )
        log.record_round(M)
        local_at_bar = next(r.gradient for r in responses if r.machine_id == central.machine_id)
        correction = local_at_bar - global_grad
        anchor = model.gradient(theta, data) - correction
        rounds_gap = float(np.max(np.abs(anchor - global_grad)))

        def objective(th, correction=correction):
            return model.nll(th, data) - float(th.as_vector() @ correction)

        def grad_fn(th, correction=correction):
            return model.gradient(th, data) - correction

        theta, inner_trace, iters, converged, stalled = run_iht(
            theta,
            inner,
            objective=objective,
            grad_fn=grad_fn,
            hess_fn=lambda th, sup: model.hessian(th, data, sup),
            round_id=q,
        )
        trace.extend(inner_trace)
        total_iters += iters
        rounds.append(RoundRecord(q, rounds_gap, iters))

    result = DistFitResult(
        theta=theta,
        iterations_run=total_iters,
        converged=converged,
        trace=trace,
        wall_time=time.perf_counter() - start,
        stalled=stalled,
        rounds=rounds,
    )
    return result, log
