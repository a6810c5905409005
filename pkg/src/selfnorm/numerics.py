"""Shared numerical kernels.

High-accuracy normal CDF built on an error-function expansion, compensated
summation, ordinary least squares, and exact enumeration of weighted sums of
discrete innovations.  Everything here is pure and deterministic; the normal
CDF deliberately avoids any external special-function dependency so results
are bit-reproducible across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EnumerationTooLargeError

__all__ = [
    "LineFit",
    "SummationAccumulator",
    "discrete_outcome_grid",
    "enumerate_weighted_sums",
    "normal_cdf",
    "normal_quantile",
    "ols_fit",
    "pairwise_sum",
]

_SQRT2 = math.sqrt(2.0)
_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)

# Quadrature step of the error-function expansion.  The aliasing error of the
# trapezoid rule is O(exp(-pi^2/h^2)), about 1e-107 at h = 0.2, and the k-th
# term decays like exp(-(k h)^2), so 40 terms reach below 1e-27.
_ERFC_H = 0.2
_ERFC_KH2 = (np.arange(1, 41) * _ERFC_H) ** 2
_ERFC_EXP_KH2 = np.exp(-_ERFC_KH2)


# ---------------------------------------------------------------------------
# Error function and normal CDF
# ---------------------------------------------------------------------------

def _erf_series(x: np.ndarray) -> np.ndarray:
    """Maclaurin series for erf, used for |x| < 0.5 where it converges fast."""
    term = x.astype(float).copy()
    acc = term.copy()
    xx = x * x
    for n in range(1, 40):
        term *= -xx / n
        contrib = term / (2 * n + 1)
        acc += contrib
        if float(np.max(np.abs(contrib), initial=0.0)) < 1e-19:
            break
    return _TWO_OVER_SQRT_PI * acc


def _erfc_nonneg(x: np.ndarray) -> np.ndarray:
    """erfc(x) for x >= 0 to near machine precision.

    For x >= 0.5 this evaluates the trapezoid expansion of the integral
    representation erfc(x) = (2x e^{-x^2}/pi) * I(x) together with the pole
    correction 2/(e^{2 pi x / h} - 1); the combination is accurate to a few
    ulp over the whole double range.  Smaller x go through the erf series,
    where 1 - erf(x) loses no relative precision because erfc(x) > 0.47.
    """
    out = np.empty_like(x)
    small = x < 0.5
    if small.any():
        out[small] = 1.0 - _erf_series(x[small])
    if not small.all():
        xb = x[~small]
        x2 = xb * xb
        s = 0.5 / x2
        for kh2, ekh2 in zip(_ERFC_KH2, _ERFC_EXP_KH2):
            s += ekh2 / (kh2 + x2)
        with np.errstate(over="ignore"):
            pole = 2.0 / np.expm1((2.0 * math.pi / _ERFC_H) * xb)
        val = (2.0 / math.pi * _ERFC_H) * xb * np.exp(-x2) * s - pole
        out[~small] = np.maximum(val, 0.0)
    return out


def normal_cdf(z):
    """Standard normal CDF.

    Accepts a scalar or an ndarray.  Built so that Phi(-z) == 1 - Phi(z)
    holds exactly in floating point: the negative branch returns
    erfc(|z|/sqrt(2))/2 and the positive branch returns one minus the same
    quantity.  +/-inf map to 1 and 0, NaN propagates.
    """
    arr = np.asarray(z, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)

    neg = arr < 0.0
    finite = np.isfinite(arr)
    x = np.where(finite, np.abs(arr), 0.0) / _SQRT2
    tail = _erfc_nonneg(x) * 0.5
    out[neg] = tail[neg]
    out[~neg] = 1.0 - tail[~neg]
    out[arr == np.inf] = 1.0
    out[arr == -np.inf] = 0.0
    out[np.isnan(arr)] = np.nan
    return float(out[0]) if scalar else out


def normal_quantile(p):
    """Inverse of normal_cdf on (0, 1), via a rough start plus Newton polish.

    Accurate to roughly 1e-12; raises ValueError outside (0, 1).
    """
    arr = np.asarray(p, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("quantile argument must lie strictly inside (0, 1)")

    q = np.minimum(arr, 1.0 - arr)
    # Tail start: if Phi(-z) = q then z ~ sqrt(-2 ln q) up to a slowly
    # varying factor; good enough for Newton to take over.
    z = np.sqrt(-2.0 * np.log(q))
    z = np.where(arr < 0.5, -z, z)
    for _ in range(8):
        err = normal_cdf(z) - arr
        density = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        step = err / np.maximum(density, 1e-300)
        z -= np.clip(step, -1.0, 1.0)
    return float(z[0]) if scalar else z


# ---------------------------------------------------------------------------
# Summation
# ---------------------------------------------------------------------------

class SummationAccumulator:
    """Running compensated sum (Neumaier variant of Kahan summation).

    The accumulated result is within 4 * eps * sum(|terms|) of the exact sum,
    which in particular recovers cancellation cases such as
    [1e16, 1, -1e16] -> 1 that a plain tree reduction loses.
    """

    __slots__ = ("_sum", "_comp")

    def __init__(self) -> None:
        self._sum = 0.0
        self._comp = 0.0

    def add(self, value: float) -> None:
        value = float(value)
        t = self._sum + value
        if abs(self._sum) >= abs(value):
            self._comp += (self._sum - t) + value
        else:
            self._comp += (value - t) + self._sum
        self._sum = t

    def extend(self, values: Iterable[float]) -> None:
        for v in values:
            self.add(v)

    @property
    def result(self) -> float:
        return self._sum + self._comp


def pairwise_sum(values) -> float:
    """Sum of a sequence with compensated accumulation."""
    acc = SummationAccumulator()
    arr = np.asarray(values, dtype=float).ravel()
    for v in arr:
        acc.add(float(v))
    return acc.result


# ---------------------------------------------------------------------------
# Least squares
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class LineFit:
    slope: float
    intercept: float
    r_squared: float


def ols_fit(xs, ys) -> LineFit:
    """Ordinary least squares line through (xs, ys).

    Uses centered, compensated sums.  Requires at least two distinct x
    values; r_squared is 1.0 for an exact fit (including constant ys).
    """
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("xs and ys must have equal length")
    if x.size < 2:
        raise ValueError("need at least two points")

    x_mean = pairwise_sum(x) / x.size
    y_mean = pairwise_sum(y) / y.size
    dx = x - x_mean
    dy = y - y_mean
    sxx = pairwise_sum(dx * dx)
    if sxx <= 0.0:
        raise ValueError("x values are all identical; slope undefined")
    sxy = pairwise_sum(dx * dy)
    slope = sxy / sxx
    intercept = y_mean - slope * x_mean

    ss_tot = pairwise_sum(dy * dy)
    resid = dy - slope * dx
    ss_res = pairwise_sum(resid * resid)
    if ss_tot <= 0.0:
        r_squared = 1.0
    else:
        r_squared = max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return LineFit(slope=slope, intercept=intercept, r_squared=r_squared)


# ---------------------------------------------------------------------------
# Exact enumeration of discrete innovations
# ---------------------------------------------------------------------------

Atoms = tuple[np.ndarray, np.ndarray]

ENUMERATION_CAP = 1 << 20


def discrete_outcome_grid(site_atoms: Sequence[Atoms], cap: int = ENUMERATION_CAP):
    """All joint outcomes of independent discrete sites.

    ``site_atoms`` lists, per site, the atom values and their probabilities.
    Returns (outcomes, probs) where outcomes has shape (n_outcomes, n_sites)
    and probs sums to 1.  Refuses when the outcome count exceeds ``cap``.
    """
    counts = [len(v) for v, _ in site_atoms]
    total = 1
    for c in counts:
        total *= c
        if total > cap:
            raise EnumerationTooLargeError(
                f"outcome space {total}+ exceeds enumeration cap {cap}"
            )
    k = len(site_atoms)
    outcomes = np.empty((total, k))
    probs = np.ones(total)
    stride = total
    for t, (vals, ps) in enumerate(site_atoms):
        c = counts[t]
        stride //= c
        idx = (np.arange(total) // stride) % c
        outcomes[:, t] = np.asarray(vals, dtype=float)[idx]
        probs *= np.asarray(ps, dtype=float)[idx]
    return outcomes, probs


def enumerate_weighted_sums(
    site_atoms: Sequence[Atoms],
    weights,
    cap: int = ENUMERATION_CAP,
):
    """Exact joint distribution of linear combinations of discrete sites.

    ``weights`` has shape (n_out, n_sites); the result is the distribution of
    weights @ eps as (points, probs) with points of shape (n_atoms, n_out).
    Atoms are merged as the convolution proceeds, so sums of many equal-value
    innovations (a binomial collapse) stay small even when the raw outcome
    grid would not.  The running atom count is capped.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[1] != len(site_atoms):
        raise ValueError("weights must be (n_out, n_sites)")
    atoms: dict[tuple[float, ...], float] = {(0.0,) * w.shape[0]: 1.0}
    for t, (vals, ps) in enumerate(site_atoms):
        col = w[:, t]
        if not np.any(col):
            continue
        nxt: dict[tuple[float, ...], float] = {}
        for point, prob in atoms.items():
            for v, q in zip(vals, ps):
                key = tuple(point[r] + col[r] * float(v) for r in range(len(point)))
                nxt[key] = nxt.get(key, 0.0) + prob * float(q)
        if len(nxt) > cap:
            raise EnumerationTooLargeError(
                f"atom count {len(nxt)} exceeds enumeration cap {cap}"
            )
        atoms = nxt
    items = sorted(atoms.items())
    points = np.array([k for k, _ in items])
    probs = np.array([v for _, v in items])
    return points, probs
