"""Seeded synthetic Tobit data.

Random numbers come from numpy's counter-based Philox generator keyed by the
GenSpec seed.  Draw order is fixed: the full design block first, then the noise
vector, so a given GenSpec always yields the same bits.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .model import CensoredDataset, ModelParams
from .solver_dist import Shard

__all__ = ["RNG_ALGORITHM", "GenSpec", "generate", "censoring_rate", "make_rng", "true_beta"]

RNG_ALGORITHM = "numpy.random.Philox(4x64, 10 rounds)"
DESIGNS = ("iid_gaussian", "ar1")


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class GenSpec:
    n: int = 500
    d: int = 100
    s0: int = 3
    beta_nonzero: list | str = "default"
    beta0: float = 0.5
    signal_strength: float = 2.0
    sigma_star: float = 0.5
    design: str = "iid_gaussian"
    rho: float = 0.3
    c0: float = 0.0
    seed: int = 0
    shards: int = 1
    shard_sizes: list | None = field(default=None)

    def __post_init__(self):
        if self.n < 1 or self.d < 0:
            raise InvalidArgumentError("need n >= 1 and d >= 0")
        if not 0 <= self.s0 <= self.d:
            raise InvalidArgumentError(f"s0 must be in [0, d], got {self.s0}")
        if not self.sigma_star > 0:
            raise InvalidArgumentError("sigma_star must be positive")
        if self.design not in DESIGNS:
            raise InvalidArgumentError(f"design must be one of {DESIGNS}, got {self.design!r}")
        if self.design == "ar1" and not abs(self.rho) < 1:
            raise InvalidArgumentError("ar1 design needs |rho| < 1")
        if not 0 <= self.seed < 2**64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
        if self.shards < 1:
            raise InvalidArgumentError("shards must be >= 1")
        if self.shard_sizes is not None:
            sizes = list(self.shard_sizes)
            if len(sizes) != self.shards or sum(sizes) != self.n or min(sizes) < 1:
                raise InvalidArgumentError("shard_sizes must be positive and sum to n")
        if isinstance(self.beta_nonzero, str):
            if self.beta_nonzero != "default":
                raise InvalidArgumentError("beta_nonzero must be a list of (index, value) or 'default'")
        else:
            for j, _ in self.beta_nonzero:
                if not 1 <= int(j) <= self.d:
                    raise InvalidArgumentError(f"beta_nonzero index {j} outside [1, d]")

    def to_dict(self) -> dict:
        out = asdict(self)
        if not isinstance(self.beta_nonzero, str):
            out["beta_nonzero"] = [[int(j), float(b)] for j, b in self.beta_nonzero]
        return out


def true_beta(spec: GenSpec) -> np.ndarray:
    """Length d+1 coefficient vector with the intercept at index 0."""
    beta = np.zeros(spec.d + 1)
    beta[0] = spec.beta0
    if isinstance(spec.beta_nonzero, str):
        for j in range(1, spec.s0 + 1):
            beta[j] = spec.signal_strength if j % 2 == 1 else -spec.signal_strength
    else:
        for j, b in spec.beta_nonzero:
            beta[int(j)] = float(b)
    return beta


def _design(spec: GenSpec, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((spec.n, spec.d))
    if spec.design == "iid_gaussian" or spec.d == 0:
        return z
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    scale = np.sqrt(1.0 - spec.rho**2)
    for j in range(1, spec.d):
        x[:, j] = spec.rho * x[:, j - 1] + scale * z[:, j]
    return x


def _shard_bounds(spec: GenSpec):
    if spec.shard_sizes is not None:
        sizes = list(spec.shard_sizes)
    else:
        base, extra = divmod(spec.n, spec.shards)
        sizes = [base + (1 if m < extra else 0) for m in range(spec.shards)]
    edges = np.concatenate([[0], np.cumsum(sizes)])
    return list(zip(edges[:-1], edges[1:]))


def generate(spec: GenSpec, return_latent=False):
    """Draw a dataset (or a list of shards when ``spec.shards > 1``) and the truth.

    Shards are contiguous row blocks of the pooled sample, so concatenating
    them in machine order rebuilds the pooled dataset.
    """
    rng = make_rng(spec.seed)
    features = _design(spec, rng)
    eps = spec.sigma_star * rng.standard_normal(spec.n)
    beta = true_beta(spec)
    latent = beta[0] + features @ beta[1:] + eps
    y = np.maximum(latent, spec.c0)
    truth = ModelParams(beta=beta, sigma=spec.sigma_star)
    if spec.shards == 1:
        data = CensoredDataset.from_features(features, y, c0=spec.c0)
    else:
        data = [
            Shard(m, CensoredDataset.from_features(features[lo:hi], y[lo:hi], c0=spec.c0))
            for m, (lo, hi) in enumerate(_shard_bounds(spec))
        ]
    if return_latent:
        return data, truth, latent
    return data, truth


def censoring_rate(dataset: CensoredDataset) -> float:
    return float(np.count_nonzero(dataset.censored)) / dataset.n
