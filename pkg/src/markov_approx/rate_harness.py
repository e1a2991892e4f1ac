"""Parameter sweeps, log-log rate fits, and machine-readable results.

A sweep runs one experiment over a monotone parameter grid (step size
eta, or sample count n), measuring the empirical W1 distance with an
error bar at every point plus a same-law bias floor for the whole
sweep. Grid points whose distance is within twice the floor are
flagged and excluded from the fit: below that level the estimator
measures its own bias, not the laws' distance.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import t as student_t

from . import normal_clt, sgd_diffusion, stable_ou
from .chain_compare import identity_max_error
from .sampling import RngStream, gaussian_sample, stable_constants
from .wasserstein import (
    bootstrap_stderr_w1_1d,
    bootstrap_stderr_w1_sliced,
    w1_coordwise_sum,
    w1_exact_1d,
)

EXPERIMENTS = ("sgd", "stable", "clt", "framework")
FLOOR_FLAG_MULT = 2.0
THREADS_ENV = "MARKOV_APPROX_THREADS"


class FitError(ValueError):
    """Raised when a rate fit is impossible (too few usable points, bad values)."""


@dataclass
class SweepSpec:
    experiment: str
    grid: list[float]
    fixed: dict
    n_paths: int
    seed: int
    w1_method: str = "auto"

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        diffs = np.diff(np.asarray(self.grid, dtype=float))
        if len(self.grid) >= 2 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("grid must be strictly monotone")


@dataclass
class SweepRow:
    param: float
    w1: float
    stderr: float
    flagged: bool = False


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[SweepRow]
    floor: float

    def unflagged(self) -> list[SweepRow]:
        return [r for r in self.rows if not r.flagged]


@dataclass
class RateFit:
    slope: float
    intercept: float
    residuals: np.ndarray
    half_width: float
    log_correction: str
    n_used: int


# --- per-experiment point runners ------------------------------------------


def _sgd_model(fixed: dict) -> sgd_diffusion.QuadraticModel:
    variant = fixed.get("variant", "shifted_data")
    hessian = np.asarray(fixed["hessian"], dtype=float)
    if hessian.ndim == 1:
        hessian = np.diag(hessian)
    if variant == "shifted_data":
        return sgd_diffusion.shifted_data_model(hessian)
    return sgd_diffusion.random_curvature_from_hessian(hessian, fixed["gamma"])


def _integer_steps(t_total: float, eta: float) -> int:
    n = t_total / eta
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"T={t_total} is not an integer multiple of eta={eta}")
    return int(round(n))


def _sgd_point(spec: SweepSpec, eta: float, stream: RngStream) -> tuple[float, float]:
    model = _sgd_model(spec.fixed)
    cfg = sgd_diffusion.SgdConfig(
        eta=eta,
        horizon_n=_integer_steps(spec.fixed["T"], eta),
        x0=spec.fixed["x0"],
        n_paths=spec.n_paths,
    )
    a, b = sgd_diffusion.simulate_pair_marginals(model, cfg, stream)
    w1 = w1_coordwise_sum(a, b).value
    d = model.dim
    se = d * bootstrap_stderr_w1_sliced(
        a.points, b.points, np.eye(d), resamples=100, stream=stream.substream(7)
    )
    return w1, se


def _sgd_floor(spec: SweepSpec, stream: RngStream) -> float:
    model = _sgd_model(spec.fixed)
    eta = min(spec.grid)
    cfg = sgd_diffusion.SgdConfig(
        eta=eta,
        horizon_n=_integer_steps(spec.fixed["T"], eta),
        x0=spec.fixed["x0"],
        n_paths=spec.n_paths,
    )
    a = sgd_diffusion.sde_endpoints(model, cfg, stream.substream(0))
    b = sgd_diffusion.sde_endpoints(model, cfg, stream.substream(1))
    return w1_coordwise_sum(a, b).value


def _stable_cfg(spec: SweepSpec, eta: float) -> stable_ou.StableOuConfig:
    params = stable_constants(spec.fixed["alpha"], spec.fixed["d"])
    return stable_ou.StableOuConfig(
        params=params,
        eta=eta,
        horizon_n=_integer_steps(spec.fixed["T"], eta),
        x0=np.resize(np.asarray(spec.fixed.get("x0", 0.0), dtype=float), params.dim),
        n_paths=spec.n_paths,
    )


STABLE_SLICED_PROJECTIONS = 64


def _stable_w1(spec, a, b, stream: RngStream) -> tuple[float, float]:
    """Exact W1 in one dimension, sliced proxy for d in {2, 3}."""
    dim = a.shape[1]
    if dim == 1:
        return (
            w1_exact_1d(a, b).value,
            bootstrap_stderr_w1_1d(a, b, 200, stream.substream(7)),
        )
    if dim > 3:
        raise ValueError("stable sweep W1 measurement limited to d in {1, 2, 3}")
    from .wasserstein import bootstrap_stderr_w1_sliced, unit_projections

    dirs = unit_projections(stream.substream(8), dim, STABLE_SLICED_PROJECTIONS)
    value = float(np.abs(np.sort(a @ dirs, axis=0) - np.sort(b @ dirs, axis=0)).mean())
    se = bootstrap_stderr_w1_sliced(a, b, dirs, 50, stream.substream(7))
    return value, se


def _stable_point(spec: SweepSpec, eta: float, stream: RngStream) -> tuple[float, float]:
    cfg = _stable_cfg(spec, eta)
    a, b = stable_ou.simulate_pair_marginals(cfg, stream)
    return _stable_w1(spec, a.points, b.points, stream)


def _stable_floor(spec: SweepSpec, stream: RngStream) -> float:
    cfg = _stable_cfg(spec, max(spec.grid))
    t_final = spec.fixed["T"]
    a = stable_ou.exact_ou_sample(cfg, t_final, stream.substream(0))
    b = stable_ou.exact_ou_sample(cfg, t_final, stream.substream(1))
    return _stable_w1(spec, a, b, stream.substream(9))[0]


def _clt_cfg(spec: SweepSpec) -> normal_clt.CltConfig:
    return normal_clt.CltConfig(
        dim=int(spec.fixed["d"]),
        innovation=spec.fixed["innovation"],
        n_grid=[int(v) for v in spec.grid],
        n_paths=spec.n_paths,
    )


def _clt_point(spec: SweepSpec, n: float, stream: RngStream) -> tuple[float, float]:
    est = normal_clt.measure_gap(_clt_cfg(spec), int(n), stream)
    return est.value, est.stderr


def _clt_floor(spec: SweepSpec, stream: RngStream) -> float:
    cfg = _clt_cfg(spec)
    a = gaussian_sample(stream.substream(0), spec.n_paths, cfg.dim)
    b = gaussian_sample(stream.substream(1), spec.n_paths, cfg.dim)
    if cfg.dim == 1:
        return w1_exact_1d(a, b).value
    from .wasserstein import unit_projections

    dirs = unit_projections(stream.substream(3), cfg.dim, normal_clt.SLICED_PROJECTIONS)
    return float(np.abs(np.sort(a @ dirs, axis=0) - np.sort(b @ dirs, axis=0)).mean())


def _framework_point(spec: SweepSpec, trials: float, stream: RngStream) -> tuple[float, float]:
    return identity_max_error(int(trials), stream), 0.0


_POINT_RUNNERS = {
    "sgd": _sgd_point,
    "stable": _stable_point,
    "clt": _clt_point,
    "framework": _framework_point,
}
_FLOOR_RUNNERS = {
    "sgd": _sgd_floor,
    "stable": _stable_floor,
    "clt": _clt_floor,
    "framework": lambda spec, stream: 0.0,
}


def max_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_sweep(spec: SweepSpec) -> SweepResult:
    """One row per grid point, plus the sweep's same-law floor.

    Every grid point owns a disjoint substream of the sweep seed, so
    rows are independent of each other and of the worker count.
    """
    root = RngStream(spec.seed)
    runner = _POINT_RUNNERS[spec.experiment]

    def one(i_param):
        i, param = i_param
        try:
            return runner(spec, param, root.substream(i + 1))
        except Exception as exc:
            raise RuntimeError(
                f"{spec.experiment} sweep failed at grid point {param}"
            ) from exc

    workers = max_workers()
    items = list(enumerate(spec.grid))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, items))
    else:
        outcomes = [one(it) for it in items]
    floor = _FLOOR_RUNNERS[spec.experiment](spec, root.substream(0))
    rows = [
        SweepRow(param=float(p), w1=w, stderr=se, flagged=w <= FLOOR_FLAG_MULT * floor)
        for (_, p), (w, se) in zip(items, outcomes)
    ]
    return SweepResult(spec=spec, rows=rows, floor=floor)


# --- fitting ----------------------------------------------------------------


def _corrected(w1: np.ndarray, params: np.ndarray, correction: str) -> np.ndarray:
    if correction == "none":
        return w1
    if correction == "divide_1_plus_log":
        return w1 / (1.0 + np.abs(np.log(params)))
    raise ValueError(f"unknown correction {correction!r}")


def fit_rate(result: SweepResult | list[SweepRow], correction: str = "none") -> RateFit:
    """OLS of log w1 (optionally divided by 1 + |log param|) against log param."""
    rows = result.unflagged() if isinstance(result, SweepResult) else list(result)
    if isinstance(result, SweepResult) and len(result.rows) < 4:
        raise FitError("rate fit needs at least 4 grid points")
    if len(rows) < 3:
        raise FitError(f"only {len(rows)} unflagged points; need >= 3 to fit a slope")
    params = np.array([r.param for r in rows], dtype=float)
    w1 = np.array([r.w1 for r in rows], dtype=float)
    if np.any(w1 <= 0):
        raise FitError("nonpositive W1 values cannot be log-fitted")
    x = np.log(params)
    y = np.log(_corrected(w1, params, correction))
    design = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    residuals = y - design @ coef
    dof = len(rows) - 2
    if dof > 0:
        s2 = float(residuals @ residuals) / dof
        se_slope = np.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
        half_width = float(student_t.ppf(0.975, dof) * se_slope)
    else:
        half_width = float("inf")
    return RateFit(
        slope=slope,
        intercept=intercept,
        residuals=residuals,
        half_width=half_width,
        log_correction=correction,
        n_used=len(rows),
    )


def expected_rate(spec: SweepSpec) -> tuple[float | None, tuple[float, float] | None, str]:
    """(expected slope, acceptance window, log correction) for the experiment."""
    if spec.experiment == "sgd":
        return 1.0, (0.75, 1.25), "divide_1_plus_log"
    if spec.experiment == "stable":
        alpha = spec.fixed["alpha"]
        exp = (2.0 - alpha) / alpha
        return exp, (exp - 0.30, exp + 0.30), "none"
    if spec.experiment == "clt":
        return -0.5, (-0.65, -0.38), "divide_1_plus_log"
    return None, None, "none"


# --- emission ---------------------------------------------------------------


def emit(result: SweepResult, fit: RateFit | None, path) -> tuple[Path, Path]:
    """Write the sweep CSV and a JSON summary next to it; returns both paths."""
    if not result.rows:
        raise ValueError("refusing to emit an empty table")
    csv_path = Path(path)
    json_path = csv_path.with_suffix(".json")
    spec = result.spec
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["experiment", "param", "w1", "stderr", "n_paths", "seed"])
        for row in result.rows:
            writer.writerow(
                [
                    spec.experiment,
                    format(row.param, ".17g"),
                    format(row.w1, ".17g"),
                    format(row.stderr, ".17g"),
                    spec.n_paths,
                    spec.seed,
                ]
            )
    exp_slope, window, correction = expected_rate(spec)
    summary = {
        "experiment": spec.experiment,
        "correction": fit.log_correction if fit else correction,
        "slope": fit.slope if fit else None,
        "intercept": fit.intercept if fit else None,
        "ci_half_width": fit.half_width if fit else None,
        "n_used": fit.n_used if fit else 0,
        "expected_exponent": exp_slope,
        "window": list(window) if window else None,
        "pass": (
            bool(window[0] <= fit.slope <= window[1]) if fit and window else None
        ),
        "floor": result.floor,
        "flagged_params": [r.param for r in result.rows if r.flagged],
        "n_paths": spec.n_paths,
        "seed": spec.seed,
    }
    with open(json_path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return csv_path, json_path


def parse_table(path) -> list[SweepRow]:
    """Re-read an emitted CSV; floats round-trip bit-exactly."""
    rows = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            rows.append(
                SweepRow(
                    param=float(rec["param"]),
                    w1=float(rec["w1"]),
                    stderr=float(rec["stderr"]),
                )
            )
    return rows
