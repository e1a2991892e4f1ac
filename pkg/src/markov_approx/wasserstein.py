"""Empirical Wasserstein-1 estimators.

Exact quantile coupling in one dimension, exact assignment for small
equal-size multivariate samples, and the sliced projection proxy for
everything else, plus bootstrap error bars. Sliced values are a
documented proportional proxy for multivariate W1: slopes in log-log
rate fits are unaffected, absolute values need the calibration factor
from :func:`sliced_calibration`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .sampling import RngStream

ASSIGNMENT_CAP = 4096


@dataclass
class SampleSet:
    """A collection of i.i.d. draws of one law: points (n, d) plus provenance."""

    points: np.ndarray
    seed: int | None = None
    tag: str = ""

    def __post_init__(self) -> None:
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.size == 0:
            raise ValueError("SampleSet must be non-empty")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass
class W1Estimate:
    value: float
    stderr: float = 0.0
    method: str = "exact1d"
    n_projections: int = 0

    def __post_init__(self) -> None:
        if self.value < 0 or self.stderr < 0:
            raise ValueError("W1 value and stderr must be nonnegative")


def _points(a: SampleSet | np.ndarray) -> np.ndarray:
    pts = a.points if isinstance(a, SampleSet) else np.asarray(a, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.size == 0:
        raise ValueError("empty sample")
    return pts


def _w1_sorted(a: np.ndarray, b: np.ndarray) -> float:
    """W1 of two equal-size sorted 1-D samples: mean absolute quantile gap."""
    return float(np.abs(a - b).mean())


def w1_exact_1d(a: SampleSet | np.ndarray, b: SampleSet | np.ndarray) -> W1Estimate:
    """Exact W1 between two 1-D empirical laws.

    Equal sizes use the sorted quantile coupling; unequal sizes
    integrate |F_a - F_b| over the merged support.
    """
    xa = _points(a)
    xb = _points(b)
    if xa.shape[1] != 1 or xb.shape[1] != 1:
        raise ValueError("w1_exact_1d requires 1-D samples")
    xa = np.sort(xa[:, 0], kind="stable")
    xb = np.sort(xb[:, 0], kind="stable")
    if xa.shape == xb.shape:
        return W1Estimate(_w1_sorted(xa, xb), method="exact1d")
    # piecewise CDF integration over the merged grid
    grid = np.concatenate([xa, xb])
    grid.sort(kind="stable")
    fa = np.searchsorted(xa, grid[:-1], side="right") / xa.size
    fb = np.searchsorted(xb, grid[:-1], side="right") / xb.size
    value = float(np.sum(np.abs(fa - fb) * np.diff(grid)))
    return W1Estimate(value, method="exact1d")


def w1_assignment(a: SampleSet | np.ndarray, b: SampleSet | np.ndarray) -> W1Estimate:
    """Exact W1 between equal-size empirical laws via optimal assignment."""
    xa = _points(a)
    xb = _points(b)
    if xa.shape[0] != xb.shape[0]:
        raise ValueError(f"sample sizes differ: {xa.shape[0]} vs {xb.shape[0]}")
    if xa.shape[0] > ASSIGNMENT_CAP:
        raise ValueError(f"assignment solver capped at n={ASSIGNMENT_CAP}")
    cost = np.linalg.norm(xa[:, None, :] - xb[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    return W1Estimate(float(cost[rows, cols].mean()), method="assignment")


def unit_projections(stream: RngStream, dim: int, n_proj: int) -> np.ndarray:
    """(dim, n_proj) matrix of uniform unit direction vectors."""
    dirs = stream.generator.standard_normal((dim, n_proj))
    return dirs / np.linalg.norm(dirs, axis=0, keepdims=True)


def w1_sliced(
    a: SampleSet | np.ndarray,
    b: SampleSet | np.ndarray,
    n_proj: int,
    stream: RngStream,
) -> W1Estimate:
    """Average 1-D W1 over random unit projections; deterministic given the stream.

    The reported stderr is the projection Monte Carlo error
    (spread across directions / sqrt(n_proj)), not sampling noise.
    """
    xa = _points(a)
    xb = _points(b)
    if xa.shape[1] < 2:
        raise ValueError("w1_sliced requires dim >= 2; use w1_exact_1d")
    if n_proj < 1:
        raise ValueError("need at least one projection")
    if xa.shape[0] != xb.shape[0]:
        raise ValueError("sliced W1 requires equal sample sizes")
    dirs = unit_projections(stream, xa.shape[1], n_proj)
    pa = np.sort(xa @ dirs, axis=0)
    pb = np.sort(xb @ dirs, axis=0)
    per_proj = np.abs(pa - pb).mean(axis=0)
    stderr = float(per_proj.std(ddof=1) / np.sqrt(n_proj)) if n_proj > 1 else 0.0
    return W1Estimate(
        float(per_proj.mean()), stderr=stderr, method="sliced", n_projections=n_proj
    )


def w1_coordwise_sum(a: SampleSet | np.ndarray, b: SampleSet | np.ndarray) -> W1Estimate:
    """Sum of per-coordinate exact 1-D W1; an upper-bound proxy for joint W1."""
    xa = _points(a)
    xb = _points(b)
    if xa.shape != xb.shape:
        raise ValueError("coordinatewise W1 requires equal shapes")
    total = sum(
        _w1_sorted(np.sort(xa[:, i]), np.sort(xb[:, i])) for i in range(xa.shape[1])
    )
    return W1Estimate(float(total), method="coordwise_sum")


def sliced_calibration(
    a: SampleSet | np.ndarray,
    b: SampleSet | np.ndarray,
    n_proj: int,
    stream: RngStream,
    subsample: int = 512,
) -> float:
    """Multiplicative factor aligning sliced values with assignment W1.

    Fitted once per experiment family on subsamples; rate slopes do not
    depend on it.
    """
    xa = _points(a)
    xb = _points(b)
    n = min(subsample, xa.shape[0], xb.shape[0], ASSIGNMENT_CAP)
    gen = stream.generator
    ia = gen.choice(xa.shape[0], size=n, replace=False)
    ib = gen.choice(xb.shape[0], size=n, replace=False)
    exact = w1_assignment(xa[ia], xb[ib]).value
    proxy = w1_sliced(xa[ia], xb[ib], n_proj, stream.substream(1)).value
    if proxy == 0.0:
        return 1.0
    return exact / proxy


def bootstrap_stderr(
    a: SampleSet | np.ndarray,
    b: SampleSet | np.ndarray,
    estimator: Callable[[np.ndarray, np.ndarray], float],
    resamples: int,
    stream: RngStream,
) -> float:
    """Standard deviation of ``estimator`` over with-replacement resample pairs."""
    if resamples < 50:
        raise ValueError("need at least 50 bootstrap resamples")
    xa = _points(a)
    xb = _points(b)
    gen = stream.generator
    vals = np.empty(resamples)
    for r in range(resamples):
        ia = gen.integers(0, xa.shape[0], xa.shape[0])
        ib = gen.integers(0, xb.shape[0], xb.shape[0])
        vals[r] = estimator(xa[ia], xb[ib])
    return float(vals.std(ddof=1))


def _resample_sorted(sorted_x: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Sorted bootstrap resample of a sorted 1-D array in O(n).

    Multinomial counts over the sorted atoms followed by repeat; equal
    in law to sorting a fresh with-replacement resample.
    """
    n = sorted_x.size
    counts = gen.multinomial(n, np.full(n, 1.0 / n))
    return np.repeat(sorted_x, counts)


def bootstrap_stderr_w1_1d(
    a: SampleSet | np.ndarray,
    b: SampleSet | np.ndarray,
    resamples: int,
    stream: RngStream,
) -> float:
    """Fast bootstrap stderr of the equal-size exact 1-D W1 estimator."""
    if resamples < 50:
        raise ValueError("need at least 50 bootstrap resamples")
    xa = np.sort(_points(a)[:, 0], kind="stable")
    xb = np.sort(_points(b)[:, 0], kind="stable")
    if xa.size != xb.size:
        raise ValueError("fast 1-D bootstrap requires equal sizes")
    gen = stream.generator
    vals = np.empty(resamples)
    for r in range(resamples):
        vals[r] = _w1_sorted(_resample_sorted(xa, gen), _resample_sorted(xb, gen))
    return float(vals.std(ddof=1))


def bootstrap_stderr_w1_sliced(
    a: SampleSet | np.ndarray,
    b: SampleSet | np.ndarray,
    dirs: np.ndarray,
    resamples: int,
    stream: RngStream,
) -> float:
    """Bootstrap stderr of sliced W1 with a fixed projection matrix.

    Each resample redraws the data points once (shared multinomial
    counts across projections), so the directions stay part of the
    estimator definition and only sampling noise is measured.
    """
    if resamples < 50:
        raise ValueError("need at least 50 bootstrap resamples")
    xa = _points(a)
    xb = _points(b)
    if xa.shape[0] != xb.shape[0]:
        raise ValueError("sliced bootstrap requires equal sizes")
    pa = xa @ dirs
    pb = xb @ dirs
    orders_a = np.argsort(pa, axis=0, kind="stable")
    orders_b = np.argsort(pb, axis=0, kind="stable")
    sorted_a = np.take_along_axis(pa, orders_a, axis=0)
    sorted_b = np.take_along_axis(pb, orders_b, axis=0)
    n, n_proj = pa.shape
    gen = stream.generator
    vals = np.empty(resamples)
    for r in range(resamples):
        ca = gen.multinomial(n, np.full(n, 1.0 / n))
        cb = gen.multinomial(n, np.full(n, 1.0 / n))
        acc = 0.0
        for j in range(n_proj):
            ra = np.repeat(sorted_a[:, j], ca[orders_a[:, j]])
            rb = np.repeat(sorted_b[:, j], cb[orders_b[:, j]])
            acc += _w1_sorted(ra, rb)
        vals[r] = acc / n_proj
    return float(vals.std(ddof=1))


def save_sample_set(sample: SampleSet, path) -> None:
    """CSV serialization: header ``dim,count`` then one row of d reals per point."""
    with open(path, "w") as f:
        f.write(f"{sample.dim},{sample.n}\n")
        for row in sample.points:
            f.write(",".join(format(v, ".17g") for v in row) + "\n")


def load_sample_set(path) -> SampleSet:
    with open(path) as f:
        header = f.readline().strip().split(",")
        dim, count = int(header[0]), int(header[1])
        points = np.loadtxt(f, delimiter=",", ndmin=2)
    if points.shape != (count, dim):
        raise ValueError(f"corrupt sample file: expected {(count, dim)}, got {points.shape}")
    return SampleSet(points)
