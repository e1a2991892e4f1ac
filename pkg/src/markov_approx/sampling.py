"""Random draws used by every experiment.

Gaussian vectors, rotationally symmetric alpha-stable vectors (via
subordination), heavy-tailed Pareto innovations, and the normalizing
constants that tie them together. All randomness flows through
:class:`RngStream`, a counter-based (Philox) stream keyed by
``(seed, stream_id)`` so that distinct ids are independent by
construction and a given id always reproduces the same sequence.

States are plain 1-D ``numpy`` arrays; batch samplers return ``(n, d)``
arrays with one draw per row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as _gamma


def _mix64(a: int, b: int) -> int:
    """Splitmix64-style mixing of two integers into one 64-bit id."""
    x = (a * 0x9E3779B97F4A7C15 + b + 1) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


@dataclass
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    The underlying generator is Philox with the 128-bit key
    ``(seed, stream_id)``, so streams with distinct ids never share
    state. The draw sequence for a fixed key is identical across runs
    and worker counts.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = np.array(
                [self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_id & 0xFFFFFFFFFFFFFFFF],
                dtype=np.uint64,
            )
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def substream(self, k: int) -> "RngStream":
        """Derive an independent child stream; deterministic in ``k``."""
        return RngStream(self.seed, _mix64(self.stream_id, k))


def sphere_surface_area(dim: int) -> float:
    """Surface area of the unit sphere in R^dim, 2*pi^(d/2)/Gamma(d/2)."""
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    return 2.0 * np.pi ** (dim / 2.0) / _gamma(dim / 2.0)


def d_alpha_constant(alpha: float, dim: int) -> float:
    """Stable normalizing constant alpha*2^alpha*Gamma((d+alpha)/2) / (Gamma(d/2)*Gamma((2-alpha)/2)).

    Defined for any alpha in (0, 2); range validation is the caller's
    job (``stable_constants`` restricts to (1, 2) for sampling use).
    """
    return (
        alpha
        * 2.0**alpha
        * _gamma((dim + alpha) / 2.0)
        / (_gamma(dim / 2.0) * _gamma((2.0 - alpha) / 2.0))
    )


@dataclass(frozen=True)
class StableParams:
    """Parameters of the rotationally symmetric alpha-stable family.

    ``d_alpha`` is the Gamma-function normalizing constant above.
    ``sigma`` is the Pareto innovation scale used by the Euler chain:
    it is chosen so that the per-unit-time jump intensity of the
    rescaled Pareto innovations beyond radius r equals the jump
    intensity of the sampled stable process (tail sigma^-alpha *
    r^-alpha), which requires sigma = (alpha / d_alpha)^(1/alpha).
    """

    alpha: float
    dim: int
    d_alpha: float
    sigma: float
    sphere_area: float


def stable_constants(alpha: float, dim: int) -> StableParams:
    """Build :class:`StableParams`; alpha must lie in (1, 2)."""
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"alpha must be in (1, 2), got {alpha}")
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    d_alpha = d_alpha_constant(alpha, dim)
    sigma = (alpha / d_alpha) ** (1.0 / alpha)
    return StableParams(
        alpha=alpha,
        dim=dim,
        d_alpha=d_alpha,
        sigma=sigma,
        sphere_area=sphere_surface_area(dim),
    )


def gaussian_sample(stream: RngStream, n: int, dim: int) -> np.ndarray:
    """n independent draws of N(0, I_dim), shape (n, dim)."""
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    return stream.generator.standard_normal((n, dim))


def gaussian_vector(stream: RngStream, dim: int) -> np.ndarray:
    """One draw of N(0, I_dim)."""
    return gaussian_sample(stream, 1, dim)[0]


def _one_sided_stable(gen: np.random.Generator, index: float, n: int) -> np.ndarray:
    """Positive stable draws with Laplace transform exp(-u^index), 0 < index < 1.

    Chambers-Mallows-Stuck with skewness 1, rescaled by
    cos(pi*index/2)^(1/index) to normalize the Laplace exponent.
    """
    half = np.pi * index / 2.0
    v = gen.uniform(-np.pi / 2.0, np.pi / 2.0, n)
    w = gen.standard_exponential(n)
    shift = np.pi / 2.0  # arctan(tan(pi*index/2)) / index at skewness 1
    scale = (1.0 + np.tan(half) ** 2) ** (1.0 / (2.0 * index))
    x = (
        scale
        * np.sin(index * (v + shift))
        / np.cos(v) ** (1.0 / index)
        * (np.cos(v - index * (v + shift)) / w) ** ((1.0 - index) / index)
    )
    return x * np.cos(half) ** (1.0 / index)


def stable_sample(stream: RngStream, params: StableParams, n: int) -> np.ndarray:
    """n draws of Z_1 with characteristic function exp(-|lambda|^alpha), shape (n, dim).

    Subordination: Z = sqrt(2 S) * G with S one-sided (alpha/2)-stable
    (Laplace transform exp(-u^(alpha/2))) and G standard Gaussian, so
    E exp(i<lambda, Z>) = E exp(-S |lambda|^2) = exp(-|lambda|^alpha).
    """
    gen = stream.generator
    s = _one_sided_stable(gen, params.alpha / 2.0, n)
    g = gen.standard_normal((n, params.dim))
    return np.sqrt(2.0 * s)[:, None] * g


def stable_vector(stream: RngStream, params: StableParams) -> np.ndarray:
    return stable_sample(stream, params, 1)[0]


def pareto_radius(u: np.ndarray | float, alpha: float) -> np.ndarray | float:
    """Inverse-CDF radius u -> u^(-1/alpha); tail P(R > r) = r^-alpha on r >= 1."""
    return np.asarray(u) ** (-1.0 / alpha)


def pareto_sample(stream: RngStream, params: StableParams, n: int) -> np.ndarray:
    """n draws with density alpha / (V(S^(d-1)) |z|^(alpha+d)) on |z| > 1.

    Radius and direction are independent: R = U^(-1/alpha) with U
    uniform on (0, 1], direction a normalized Gaussian vector.
    """
    gen = stream.generator
    u = 1.0 - gen.random(n)  # in (0, 1]; keeps the radius finite
    r = pareto_radius(u, params.alpha)
    g = gen.standard_normal((n, params.dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return np.asarray(r)[:, None] * g


def pareto_vector(stream: RngStream, params: StableParams) -> np.ndarray:
    return pareto_sample(stream, params, 1)[0]


def empirical_cf(points: np.ndarray, lam: np.ndarray) -> float:
    """Real part of the empirical characteristic function, mean cos(<lam, Z_i>)."""
    points = np.atleast_2d(points)
    return float(np.mean(np.cos(points @ np.asarray(lam, dtype=float))))
