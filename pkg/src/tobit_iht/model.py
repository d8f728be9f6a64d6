"""Tobit data model and the Olsen-reparameterized negative log-likelihood.

The working parameter is ``theta = (delta, gamma)`` with ``delta = beta / sigma``
and ``gamma = 1 / sigma``.  In these coordinates the per-row loss is::

    uncensored:  -log(gamma) + 0.5 * (gamma * y - x'delta)**2
    censored:    -log Phi(-x'delta)

which is jointly convex in ``theta``.  Responses are shifted by the censoring
threshold ``c0`` once, at construction, so every computation below works with
threshold zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import special
from .errors import (
    DataError,
    GammaUnidentifiableError,
    InvalidArgumentError,
    SchemaError,
)

__all__ = [
    "CensoredDataset",
    "Theta",
    "ModelParams",
    "validate",
    "nll",
    "gradient",
    "hessian",
    "theta_to_params",
    "params_to_theta",
    "predict",
]


def _readonly(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CensoredDataset:
    """Design matrix (intercept in column 0), observed responses and censoring flags.

    ``censored`` is derived from ``y <= c0`` when not given and is never
    recomputed afterwards.  Use :meth:`from_features` to build a dataset from a
    feature matrix without the intercept column.
    """

    x: np.ndarray
    y: np.ndarray
    c0: float = 0.0
    censored: np.ndarray | None = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float, copy=True)
        y = np.array(self.y, dtype=float, copy=True)
        if x.ndim != 2:
            raise SchemaError(f"x must be 2-dimensional, got shape {x.shape}")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise SchemaError(f"y must have length {x.shape[0]}, got shape {y.shape}")
        if x.shape[1] < 1:
            raise SchemaError("x needs at least the intercept column")
        c0 = float(self.c0)
        if self.censored is None:
            censored = y <= c0
        else:
            censored = np.array(self.censored, dtype=bool, copy=True)
            if censored.shape != y.shape:
                raise SchemaError(f"censored must have length {y.shape[0]}")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "censored", _readonly(censored))

    @classmethod
    def from_features(cls, features, y, c0=0.0, censored=None):
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        x = np.column_stack([np.ones(features.shape[0]), features])
        return cls(x=x, y=y, c0=c0, censored=censored)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        """Number of covariates, excluding the intercept."""
        return self.x.shape[1] - 1

    @property
    def features(self) -> np.ndarray:
        return self.x[:, 1:]

    def subset(self, rows) -> "CensoredDataset":
        rows = np.asarray(rows, dtype=np.intp)
        return CensoredDataset(
            x=self.x[rows], y=self.y[rows], c0=self.c0, censored=self.censored[rows]
        )

    @cached_property
    def _canonical(self):
        """Rows in a data-determined order, so reductions ignore input row order.

        Sorting key: a fixed pseudo-random projection of x, then the shifted
        response, then the censoring flag.  Exact ties between distinct rows
        fall back to a full lexicographic sort.
        """
        z = self.y - self.c0
        w = np.sin(np.arange(1, self.x.shape[1] + 1) * 12.9898)
        proj = np.sum(self.x * w, axis=1)
        order = np.lexsort((self.censored, z, proj))
        keys = np.column_stack([proj[order], z[order], self.censored[order]])
        if keys.shape[0] > 1 and np.any(np.all(keys[1:] == keys[:-1], axis=1)):
            # identical full rows may stay in any order; only distinct rows matter
            full = np.column_stack([self.censored, z, self.x])
            order = np.lexsort(full.T[::-1])
        return (
            _readonly(np.ascontiguousarray(self.x[order])),
            _readonly(z[order]),
            _readonly(self.censored[order].copy()),
        )


@dataclass(frozen=True, eq=False)
class Theta:
    """Working parameter: ``delta`` (length d+1) and scalar ``gamma > 0``."""

    delta: np.ndarray
    gamma: float

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float)
        if delta.ndim != 1:
            raise InvalidArgumentError("delta must be a vector")
        gamma = float(self.gamma)
        if not np.isfinite(gamma) or gamma <= 0:
            raise InvalidArgumentError(f"gamma must be positive and finite, got {gamma}")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def from_vector(cls, v) -> "Theta":
        v = np.asarray(v, dtype=float)
        return cls(v[:-1].copy(), v[-1])

    def as_vector(self) -> np.ndarray:
        return np.append(self.delta, self.gamma)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.delta)

    def __eq__(self, other):
        if not isinstance(other, Theta):
            return NotImplemented
        return self.gamma == other.gamma and np.array_equal(self.delta, other.delta)

    __hash__ = None


@dataclass(frozen=True)
class ModelParams:
    """Natural parameters of the latent model ``y* = x'beta + sigma * eps``."""

    beta: np.ndarray = field(compare=False)
    sigma: float

    def __post_init__(self):
        sigma = float(self.sigma)
        if not np.isfinite(sigma) or sigma <= 0:
            raise InvalidArgumentError(f"sigma must be positive and finite, got {sigma}")
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "sigma", sigma)


def validate(dataset: CensoredDataset) -> None:
    """Raise unless the dataset satisfies every model invariant."""
    x, y = dataset.x, dataset.y
    if x.shape[0] < 1:
        raise SchemaError("dataset has no rows")
    if not np.all(x[:, 0] == 1.0):
        raise SchemaError("column 0 of x must be the all-ones intercept column")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.isfinite(dataset.c0)):
        raise DataError("dataset contains non-finite entries")
    below = np.flatnonzero(y < dataset.c0)
    if below.size:
        raise DataError(
            f"y[{below[0]}] = {y[below[0]]!r} is below the threshold c0 = {dataset.c0!r}"
        )
    mismatch = np.flatnonzero(dataset.censored != (y <= dataset.c0))
    if mismatch.size:
        raise DataError(f"censoring flag of row {mismatch[0]} disagrees with y <= c0")
    if np.all(dataset.censored):
        raise GammaUnidentifiableError(
            "all rows are censored; gamma is not identifiable from the likelihood"
        )


def _check_theta(theta: Theta, dataset: CensoredDataset):
    if theta.delta.shape[0] != dataset.x.shape[1]:
        raise InvalidArgumentError(
            f"delta has length {theta.delta.shape[0]}, dataset needs {dataset.x.shape[1]}"
        )


def _index(theta: Theta, x: np.ndarray) -> np.ndarray:
    """x'delta over the nonzero support of delta; dense product when delta is dense."""
    support = np.flatnonzero(theta.delta)
    if support.size == 0:
        return np.zeros(x.shape[0])
    if 2 * support.size > theta.delta.size:
        return x @ theta.delta
    return x[:, support] @ theta.delta[support]


def nll(theta: Theta, dataset: CensoredDataset) -> float:
    """Mean negative log-likelihood (ignorable constants dropped)."""
    _check_theta(theta, dataset)
    x, z, cens = dataset._canonical
    a = _index(theta, x)
    gamma = theta.gamma
    contrib = np.empty_like(a)
    unc = ~cens
    resid = gamma * z[unc] - a[unc]
    contrib[unc] = 0.5 * resid * resid - np.log(gamma)
    if np.any(cens):
        contrib[cens] = -special.log_phi_cdf(-a[cens])
    return float(np.sum(contrib) / a.shape[0])


def gradient(theta: Theta, dataset: CensoredDataset) -> np.ndarray:
    """Exact gradient of :func:`nll`; the gamma component is last (length d+2)."""
    _check_theta(theta, dataset)
    x, z, cens = dataset._canonical
    n = x.shape[0]
    a = _index(theta, x)
    gamma = theta.gamma
    unc = ~cens
    r = np.empty_like(a)
    resid = gamma * z[unc] - a[unc]
    r[unc] = -resid
    if np.any(cens):
        r[cens] = special.mills_g(-a[cens])
    out = np.empty(x.shape[1] + 1)
    out[:-1] = (x.T @ r) / n
    g_gamma = np.zeros(n)
    g_gamma[unc] = z[unc] * resid - 1.0 / gamma
    out[-1] = np.sum(g_gamma) / n
    return out


def _support_indices(support, n_delta):
    if isinstance(support, str):
        if support != "dense":
            raise InvalidArgumentError(f"support must be an index set or 'dense', got {support!r}")
        return np.arange(n_delta)
    idx = np.asarray(sorted(set(int(i) for i in support)), dtype=np.intp)
    if idx.size and (idx[0] < 0 or idx[-1] >= n_delta):
        raise InvalidArgumentError(f"support index out of range [0, {n_delta})")
    return idx


def hessian(theta: Theta, dataset: CensoredDataset, support="dense") -> np.ndarray:
    """Empirical Hessian of :func:`nll` restricted to ``support`` plus gamma.

    ``support`` is an iterable of delta indices (sorted and deduplicated) or
    ``"dense"``.  The returned matrix has the selected delta coordinates first
    and gamma last.
    """
    _check_theta(theta, dataset)
    idx = _support_indices(support, theta.delta.shape[0])
    x, z, cens = dataset._canonical
    n = x.shape[0]
    a = _index(theta, x)
    unc = ~cens
    w = np.ones(n)
    if np.any(cens):
        w[cens] = special.mills_h(-a[cens])
    xs = x[:, idx]
    k = idx.size
    hess = np.empty((k + 1, k + 1))
    hess[:k, :k] = (xs.T @ (xs * w[:, None])) / n
    zu = np.where(unc, z, 0.0)
    hess[:k, k] = -(xs.T @ zu) / n
    hess[k, :k] = hess[:k, k]
    hess[k, k] = np.sum(np.where(unc, z * z + theta.gamma**-2, 0.0)) / n
    return 0.5 * (hess + hess.T)


def theta_to_params(theta: Theta) -> ModelParams:
    return ModelParams(beta=theta.delta / theta.gamma, sigma=1.0 / theta.gamma)


def params_to_theta(params: ModelParams) -> Theta:
    return Theta(delta=params.beta / params.sigma, gamma=1.0 / params.sigma)


def predict(theta: Theta, x_row, c0: float = 0.0):
    """Conditional means for one design row (leading 1 included).

    Returns ``(latent_mean, censored_mean)`` where ``censored_mean`` is
    E[max(y*, c0)].  ``theta`` is on the shifted scale used for fitting.
    """
    x_row = np.asarray(x_row, dtype=float)
    if x_row.shape != theta.delta.shape:
        raise InvalidArgumentError(
            f"x_row has shape {x_row.shape}, expected {theta.delta.shape}"
        )
    params = theta_to_params(theta)
    m = float(x_row @ params.beta)
    a = m / params.sigma
    cdf = np.exp(special.log_phi_cdf(a))
    censored_mean = c0 + m * cdf + params.sigma * special.phi_pdf(a)
    return m + c0, float(censored_mean)
