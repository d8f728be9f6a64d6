"""Joint projection: hard thresholding of delta, lower truncation of gamma."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .model import Theta

__all__ = ["ProjectionSpec", "hard_threshold", "top_indices", "truncate_gamma", "project"]


@dataclass(frozen=True)
class ProjectionSpec:
    s: int
    c_star: float = 1e-3
    keep_intercept: bool = False

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 0:
            raise InvalidArgumentError(f"sparsity s must be a nonnegative integer, got {self.s}")
        if not np.isfinite(self.c_star) or self.c_star <= 0:
            raise InvalidArgumentError(f"c_star must be positive, got {self.c_star}")


def top_indices(v, k):
    """Indices of the k largest |v| entries, ordered by (|v| desc, index asc) at the cut.

    Uses a partial selection for the threshold magnitude, so the cost is O(len(v))
    on average.  Returned indices are sorted ascending.
    """
    mag = np.abs(np.asarray(v, dtype=float))
    if k <= 0:
        return np.empty(0, dtype=np.intp)
    if k >= mag.size:
        return np.arange(mag.size)
    cut = -np.partition(-mag, k - 1)[k - 1]
    above = np.flatnonzero(mag > cut)
    at = np.flatnonzero(mag == cut)[: k - above.size]
    return np.sort(np.concatenate([above, at]))


def hard_threshold(v, s, keep_intercept=False):
    """Keep the ``s`` largest-magnitude entries of ``v`` and zero the rest.

    Ties at the boundary go to the lowest index.  With ``keep_intercept`` the
    entry at index 0 is always kept and uses one unit of the budget.
    """
    v = np.asarray(v, dtype=float)
    if int(s) != s or s < 0 or s > v.size:
        raise InvalidArgumentError(f"s must be in [0, {v.size}], got {s}")
    out = np.zeros_like(v)
    if np.count_nonzero(v) <= s and not (keep_intercept and s == 0):
        out[:] = v
        return out
    if keep_intercept:
        if s == 0:
            return out
        out[0] = v[0]
        keep = top_indices(v[1:], s - 1) + 1
    else:
        keep = top_indices(v, s)
    out[keep] = v[keep]
    return out


def truncate_gamma(g, c_star):
    return max(float(g), float(c_star))


def project(delta_raw, gamma_raw, spec: ProjectionSpec) -> Theta:
    """Project an unconstrained (delta, gamma) pair onto the feasible set."""
    delta = hard_threshold(delta_raw, spec.s, spec.keep_intercept)
    return Theta(delta, truncate_gamma(gamma_raw, spec.c_star))
