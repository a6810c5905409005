"""Self-normalized statistics of a dependent field.

Given a realization {x_i : i in J} and its dependence structure, the central
objects are the neighborhood sums y_i = sum_{j in A_i} x_j, the total
s = sum x_i, the normalizer v = sqrt((sum x_i y_i - |J| xbar ybar)_+), and
the studentized ratio w = s / v.  A truncated companion system censors each
coordinate at sigma/kappa and replaces the normalizer with a clamped version
psi that can never vanish, which is what the moment bounds are proved
against.

Array reductions here rely on numpy's pairwise summation; the handful of
scalar accumulations that need better behavior use the compensated
accumulator from the numerics module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dependence import DependenceStructure
from .models import FieldModel, exact_pair_moment, exact_sigma2
from .numerics import SummationAccumulator

__all__ = [
    "SampleStatistics",
    "TruncatedSystem",
    "compute_statistics",
    "compute_truncated",
    "neighborhood_sum",
    "psi",
    "sigma_bar2",
]


@dataclass(frozen=True, slots=True)
class SampleStatistics:
    """The plain (untruncated) statistic system of one realization."""

    s: float
    y: np.ndarray
    xbar: float
    ybar: float
    v: float
    w: float


@dataclass(frozen=True, slots=True)
class TruncatedSystem:
    """Censored companion system at level sigma/kappa.

    ``vbar`` normalizes by the clamped root of q = sum xbar_i ybar_i alone;
    ``vtilde`` first recenters q by |J| times the product of the untruncated
    sample means, which is the version whose distribution stays within
    4 kappa^2 beta3 + beta0 of the plain w.
    """

    xbar_i: np.ndarray
    ybar_i: np.ndarray
    sbar: float
    vbar: float
    wbar: float
    vtilde: float
    wtilde: float
    xi: np.ndarray
    eta: np.ndarray


def psi(x, sigma: float):
    """sqrt of x clamped to [sigma^2/4, 2 sigma^2]; accepts arrays."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    lo = 0.25 * sigma * sigma
    hi = 2.0 * sigma * sigma
    clamped = np.clip(x, lo, hi)
    if np.ndim(x) == 0:
        return float(np.sqrt(clamped))
    return np.sqrt(clamped)


def neighborhood_sum(values: np.ndarray, structure: DependenceStructure) -> np.ndarray:
    """y with y_i = sum_{j in A_i} values_j, batched over leading axes.

    Lattice structures use shifted-slice accumulation over the offset ball,
    which costs (2m+1)^d vector adds; everything else multiplies by the
    sparse A matrix.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != structure.size:
        raise ValueError(
            f"last axis has length {values.shape[-1]}, expected {structure.size}"
        )
    if structure.dims is not None:
        return _lattice_ball_sum(values, structure.dims, structure.m)
    flat = values.reshape(-1, structure.size)
    out = (structure.a_matrix_float @ flat.T).T
    return np.ascontiguousarray(out).reshape(values.shape)


def _lattice_ball_sum(values: np.ndarray, dims: tuple[int, ...], m: int) -> np.ndarray:
    if m == 0:
        return values.copy()
    lead = values.shape[:-1]
    grid = values.reshape(*lead, *dims)
    out = np.zeros_like(grid)
    d = len(dims)
    offsets = np.stack(
        np.meshgrid(*([np.arange(-m, m + 1)] * d), indexing="ij"), axis=-1
    ).reshape(-1, d)
    lead_sl = (slice(None),) * len(lead)
    for delta in offsets:
        dst, src = [], []
        for k in range(d):
            dk = int(delta[k])
            dst.append(slice(max(0, -dk), dims[k] - max(0, dk)))
            src.append(slice(max(0, dk), dims[k] + min(0, dk)))
        out[lead_sl + tuple(dst)] += grid[lead_sl + tuple(src)]
    return out.reshape(*lead, int(np.prod(dims)))


def _degenerate_w(s):
    """Convention for v = 0: w = +/-inf by the sign of s, 0 when s = 0."""
    return np.where(s > 0, np.inf, np.where(s < 0, -np.inf, 0.0))


def _batch_plain(values: np.ndarray, structure: DependenceStructure):
    """Vectorized (s, v, w, y) over rows of a (rows, |J|) matrix."""
    n = structure.size
    y = neighborhood_sum(values, structure)
    s = values.sum(axis=-1)
    t = (values * y).sum(axis=-1)
    v2 = t - s * y.sum(axis=-1) / n
    v = np.sqrt(np.maximum(v2, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(v > 0, s / np.where(v > 0, v, 1.0), _degenerate_w(s))
    return s, v, w, y


def compute_statistics(
    realization: np.ndarray, structure: DependenceStructure
) -> SampleStatistics:
    """Plain statistic system of a single realization (1-d input)."""
    x = np.asarray(realization, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a one-dimensional realization")
    s, v, w, y = _batch_plain(x[None, :], structure)
    return SampleStatistics(
        s=float(s[0]),
        y=y[0],
        xbar=float(s[0]) / structure.size,
        ybar=float(y[0].sum()) / structure.size,
        v=float(v[0]),
        w=float(w[0]),
    )


def _batch_truncated(
    values: np.ndarray,
    structure: DependenceStructure,
    sigma: float,
    kappa: int,
):
    """Vectorized truncated system over rows; returns a dict of arrays.

    Keys: xbar, ybar (matrices), q, sbar, vbar, wbar, vtilde, wtilde (rows).
    vbar >= sigma/2 by construction, so wbar never degenerates.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    n = structure.size
    level = sigma / kappa
    xbar = np.where(np.abs(values) <= level, values, 0.0)
    ybar = neighborhood_sum(xbar, structure)
    sbar = xbar.sum(axis=-1)
    q = (xbar * ybar).sum(axis=-1)
    vbar = psi(q, sigma)
    y_full = neighborhood_sum(values, structure)
    recentered = q - values.sum(axis=-1) * y_full.sum(axis=-1) / n
    vtilde = psi(recentered, sigma)
    return {
        "xbar": xbar,
        "ybar": ybar,
        "q": q,
        "sbar": sbar,
        "vbar": vbar,
        "wbar": sbar / vbar,
        "vtilde": vtilde,
        "wtilde": sbar / vtilde,
    }


def compute_truncated(
    realization: np.ndarray,
    structure: DependenceStructure,
    sigma: float,
    kappa: int,
) -> TruncatedSystem:
    """Truncated companion system of a single realization at level sigma/kappa."""
    x = np.asarray(realization, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a one-dimensional realization")
    parts = _batch_truncated(x[None, :], structure, sigma, kappa)
    vbar = float(parts["vbar"][0])
    return TruncatedSystem(
        xbar_i=parts["xbar"][0],
        ybar_i=parts["ybar"][0],
        sbar=float(parts["sbar"][0]),
        vbar=vbar,
        wbar=float(parts["wbar"][0]),
        vtilde=float(parts["vtilde"][0]),
        wtilde=float(parts["wtilde"][0]),
        xi=parts["xbar"][0] / vbar,
        eta=parts["ybar"][0] / vbar,
    )


def truncated_pair_sum(model: FieldModel, kappa: int, absolute: bool = False) -> float:
    """sum_i sum_{j in A_i} E{xbar_i xbar_j} at level sigma/kappa, exact.

    With ``absolute`` the summand is E|xbar_i xbar_j|, the numerator of the
    neighborhood cross-moment component theta.  Raises UnsupportedMomentError
    when the model has no exact joint-moment path.
    """
    sigma = np.sqrt(exact_sigma2(model))
    level = sigma / kappa
    s = model.structure
    acc = SummationAccumulator()
    for i in range(s.size):
        for j in s.a(i):
            acc.add(exact_pair_moment(model, i, int(j), level, absolute=absolute))
    return acc.result


def sigma_bar2(model: FieldModel, kappa: int) -> float:
    """Variance proxy of the truncated field, sum of truncated cross-moments.

    Exact computation; models without an exact joint-moment path raise
    UnsupportedMomentError and callers estimate by Monte Carlo instead.
    """
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    return truncated_pair_sum(model, kappa, absolute=False)
