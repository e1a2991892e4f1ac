"""Exact finite-state check of the two-process comparison identity.

Two Markov transition kernels on a shared finite state space stand in
for a continuous-time process observed at integer times (kernel ``p1``)
and its discrete approximation (kernel ``q1``). The difference of the
two N-step expectations telescopes into a sum of one-step generator
gaps, and on a finite state space the identity holds to machine
precision, which is what this module verifies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampling import RngStream

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class FiniteChainPair:
    """Two row-stochastic kernels on shared states, compared over ``horizon`` steps."""

    states: tuple[str, ...]
    p1: np.ndarray
    q1: np.ndarray
    horizon: int

    def __post_init__(self) -> None:
        s = len(self.states)
        for name, mat in (("p1", self.p1), ("q1", self.q1)):
            if mat.shape != (s, s):
                raise ValueError(f"{name} must be {s}x{s}, got {mat.shape}")
            if np.any(mat < 0):
                raise ValueError(f"{name} has negative entries")
            if np.max(np.abs(mat.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
                raise ValueError(f"{name} rows must sum to 1 within {ROW_SUM_TOL}")
        if self.horizon < 2:
            raise ValueError(f"horizon must be >= 2, got {self.horizon}")

    @property
    def n_states(self) -> int:
        return len(self.states)

    def state_index(self, x: int | str) -> int:
        if isinstance(x, str):
            try:
                return self.states.index(x)
            except ValueError:
                raise KeyError(f"unknown state {x!r}") from None
        if not 0 <= x < self.n_states:
            raise KeyError(f"state index {x} out of range")
        return int(x)


def _as_values(pair: FiniteChainPair, h: np.ndarray) -> np.ndarray:
    v = np.asarray(h, dtype=float)
    if v.shape != (pair.n_states,):
        raise ValueError(f"test function must have {pair.n_states} values")
    if not np.all(np.isfinite(v)):
        raise ValueError("test function values must be finite")
    return v


def u_k(pair: FiniteChainPair, h: np.ndarray, k: int) -> np.ndarray:
    """k-step expectation of h under p1: the vector p1^k h (u_0 = h)."""
    if not 0 <= k <= pair.horizon:
        raise ValueError(f"k must be in [0, {pair.horizon}], got {k}")
    v = _as_values(pair, h)
    for _ in range(k):
        v = pair.p1 @ v
    return v


def lhs(pair: FiniteChainPair, h: np.ndarray, x: int | str) -> float:
    """(p1^N h - q1^N h) evaluated at state x."""
    i = pair.state_index(x)
    v = _as_values(pair, h)
    vp, vq = v.copy(), v.copy()
    for _ in range(pair.horizon):
        vp = pair.p1 @ vp
        vq = pair.q1 @ vq
    return float(vp[i] - vq[i])


def rhs_telescope(pair: FiniteChainPair, h: np.ndarray, x: int | str) -> float:
    """Telescoped form: sum_j (q1^(j-1) (p1 - q1) p1^(N-j) h) at state x."""
    i = pair.state_index(x)
    n = pair.horizon
    # forward[j] = p1^(N-j) h for j = 1..N
    forward = [None] * (n + 1)
    v = _as_values(pair, h)
    forward[n] = v
    for j in range(n - 1, 0, -1):
        forward[j] = pair.p1 @ forward[j + 1]
    row = np.zeros(pair.n_states)
    row[i] = 1.0
    total = 0.0
    diff = pair.p1 - pair.q1
    for j in range(1, n + 1):
        total += float(row @ (diff @ forward[j]))
        row = row @ pair.q1
    return total


def generator_gap(pair: FiniteChainPair, h: np.ndarray, k: int, y: int | str) -> float:
    """One-step generator gap ((p1 - I) u_k - (q1 - I) u_k) at state y."""
    if not 1 <= k <= pair.horizon - 1:
        raise ValueError(f"k must be in [1, {pair.horizon - 1}], got {k}")
    i = pair.state_index(y)
    uk = u_k(pair, h, k)
    return float((pair.p1 @ uk)[i] - (pair.q1 @ uk)[i])


def random_chain_pair(
    stream: RngStream, n_states: int, horizon: int
) -> FiniteChainPair:
    """Full-support random pair: Dirichlet(1, ..., 1) rows for both kernels."""
    gen = stream.generator
    p1 = gen.dirichlet(np.ones(n_states), size=n_states)
    q1 = gen.dirichlet(np.ones(n_states), size=n_states)
    states = tuple(f"s{i}" for i in range(n_states))
    return FiniteChainPair(states=states, p1=p1, q1=q1, horizon=horizon)


def identity_max_error(
    trials: int, stream: RngStream, max_states: int = 8, max_horizon: int = 12
) -> float:
    """Max |lhs - rhs_telescope| over random instances, states, and test functions."""
    gen = stream.generator
    worst = 0.0
    for t in range(trials):
        s = int(gen.integers(2, max_states + 1))
        n = int(gen.integers(2, max_horizon + 1))
        pair = random_chain_pair(stream.substream(t), s, n)
        h = gen.standard_normal(s)
        x = int(gen.integers(0, s))
        worst = max(worst, abs(lhs(pair, h, x) - rhs_telescope(pair, h, x)))
    return worst


def save_chain_file(path, pair: FiniteChainPair, h: np.ndarray | None = None) -> None:
    """Plain-text format: first line ``S N``, then S rows of p1, S rows of q1, optional h row."""
    with open(path, "w") as f:
        f.write(f"{pair.n_states} {pair.horizon}\n")
        for mat in (pair.p1, pair.q1):
            for row in mat:
                f.write(" ".join(format(v, ".17g") for v in row) + "\n")
        if h is not None:
            f.write(" ".join(format(v, ".17g") for v in np.asarray(h, dtype=float)) + "\n")


def load_chain_file(path) -> tuple[FiniteChainPair, np.ndarray | None]:
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    s, n = (int(tok) for tok in lines[0].split())
    rows = [np.array([float(tok) for tok in ln.split()]) for ln in lines[1:]]
    if len(rows) not in (2 * s, 2 * s + 1):
        raise ValueError(f"expected {2 * s} matrix rows (+ optional h), got {len(rows)}")
    p1 = np.vstack(rows[:s])
    q1 = np.vstack(rows[s : 2 * s])
    h = rows[2 * s] if len(rows) == 2 * s + 1 else None
    pair = FiniteChainPair(
        states=tuple(f"s{i}" for i in range(s)), p1=p1, q1=q1, horizon=n
    )
    return pair, h
