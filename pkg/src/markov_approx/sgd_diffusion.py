"""Online SGD on quadratic losses and its diffusion approximation.

Two loss families are implemented. In the ``shifted_data`` family the
sample gradient is H(x - zeta) with Gaussian data noise zeta, so the
drift is Hx and the noise covariance H^2 is constant. In the
``random_curvature`` family the eigenvalues of the Hessian are
perturbed by Gaussian noise and a ridge term of strength ``gamma``
pulls toward a noisy target, giving a state-dependent noise covariance
Q[diag(Q^T x)^2 + gamma^2 I]Q^T.

Alongside the simulators this module carries the numerical audits:
dissipativity / ellipticity / fourth-moment-Lipschitz probes with the
closed-form constants they should report, a fourth-moment boundedness
audit of the SGD chain, and a common-random-number finite-difference
check of the semigroup gradient contraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import gammaln

from .sampling import RngStream, gaussian_sample
from .wasserstein import SampleSet

SYM_TOL = 1e-10


@dataclass(frozen=True)
class QuadraticModel:
    """Quadratic loss model: Hessian plus the noise structure of its gradients."""

    variant: str  # "shifted_data" or "random_curvature"
    hessian: np.ndarray
    basis: np.ndarray | None = None  # orthogonal eigenbasis (random_curvature)
    eigenvalues: np.ndarray | None = None
    gamma: float = 0.0

    @property
    def dim(self) -> int:
        return self.hessian.shape[0]


def _check_spd(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("Hessian must be a square matrix")
    if np.max(np.abs(h - h.T)) > SYM_TOL:
        raise ValueError("Hessian must be symmetric")
    if np.linalg.eigvalsh(h)[0] <= 0:
        raise ValueError("Hessian must be positive definite")
    return h


def shifted_data_model(hessian: np.ndarray) -> QuadraticModel:
    """Quadratic loss on noisy data: sample gradient H(x - zeta)."""
    return QuadraticModel(variant="shifted_data", hessian=_check_spd(hessian))


def random_curvature_model(
    basis: np.ndarray, eigenvalues: np.ndarray, gamma: float
) -> QuadraticModel:
    """Noisy-eigenvalue loss with ridge strength gamma > 0."""
    basis = np.asarray(basis, dtype=float)
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    d = basis.shape[0]
    if basis.shape != (d, d):
        raise ValueError("basis must be square")
    if np.max(np.abs(basis.T @ basis - np.eye(d))) > SYM_TOL:
        raise ValueError("basis must be orthogonal")
    if np.any(eigenvalues <= 0):
        raise ValueError("eigenvalues must be positive")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    hessian = basis @ np.diag(eigenvalues) @ basis.T
    hessian = (hessian + hessian.T) / 2.0
    return QuadraticModel(
        variant="random_curvature",
        hessian=hessian,
        basis=basis,
        eigenvalues=eigenvalues,
        gamma=float(gamma),
    )


def random_curvature_from_hessian(hessian: np.ndarray, gamma: float) -> QuadraticModel:
    """Eigendecompose a symmetric PD Hessian into the (basis, eigenvalues) form."""
    hessian = _check_spd(hessian)
    eigenvalues, basis = np.linalg.eigh(hessian)
    return random_curvature_model(basis, eigenvalues, gamma)


@dataclass
class SgdConfig:
    eta: float
    horizon_n: int
    x0: np.ndarray
    n_paths: int
    sde_substeps: int = 64  # reference-integrator refinement: dt = eta / sde_substeps

    def __post_init__(self) -> None:
        # eta = 0 freezes the chain; tolerated so audits can exercise the edge
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.horizon_n < 2:
            raise ValueError("horizon must be >= 2")
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))


# --- gradients -------------------------------------------------------------


def draw_noise(model: QuadraticModel, stream: RngStream, n: int):
    """Fresh gradient noise for n paths: zeta, or (curvature, shift) for random_curvature."""
    if model.variant == "shifted_data":
        return gaussian_sample(stream, n, model.dim)
    a = gaussian_sample(stream, n, model.dim)
    b = gaussian_sample(stream, n, model.dim)
    return a, b


def grad_psi(model: QuadraticModel, x: np.ndarray, noise) -> np.ndarray:
    """Sample gradient at x (rows are paths; a single point works too)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.dim:
        raise ValueError(f"state dimension {x.shape[-1]} != model dimension {model.dim}")
    if model.variant == "shifted_data":
        zeta = np.asarray(noise, dtype=float)
        return (x - zeta) @ model.hessian
    curv, shift = noise
    u = x @ model.basis
    return (u * (model.eigenvalues + curv)) @ model.basis.T + model.gamma * (x - shift)


def grad_potential(model: QuadraticModel, x: np.ndarray) -> np.ndarray:
    """Mean gradient (drift of the diffusion): Hx, plus gamma x for random_curvature."""
    x = np.asarray(x, dtype=float)
    out = x @ model.hessian
    if model.variant == "random_curvature":
        out = out + model.gamma * x
    return out


def sigma_sqrt(model: QuadraticModel, x: np.ndarray) -> np.ndarray:
    """Square root of the gradient-noise covariance at a single point x.

    Constant H for shifted_data. For random_curvature the covariance is
    diagonal in the eigenbasis, so the root is exact:
    Q diag(sqrt((Q^T x)^2 + gamma^2)) Q^T.
    """
    if model.variant == "shifted_data":
        return model.hessian.copy()
    u = model.basis.T @ np.asarray(x, dtype=float)
    root = np.sqrt(u**2 + model.gamma**2)
    return model.basis @ (root[:, None] * model.basis.T)


def _sigma_sqrt_apply(model: QuadraticModel, x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Rows of Sigma^(1/2)(x_i) g_i without forming matrices."""
    if model.variant == "shifted_data":
        return g @ model.hessian
    u = x @ model.basis
    root = np.sqrt(u**2 + model.gamma**2)
    return ((g @ model.basis) * root) @ model.basis.T


# --- dynamics --------------------------------------------------------------


def sgd_step(
    model: QuadraticModel, eta: float, w: np.ndarray, stream: RngStream
) -> np.ndarray:
    """One SGD update w - eta * grad_psi(w, fresh noise)."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    noise = draw_noise(model, stream, w.shape[0])
    out = w - eta * grad_psi(model, w, noise)
    return out[0] if out.shape[0] == 1 else out


def sgd_endpoints(
    model: QuadraticModel,
    eta: float,
    n_steps: int,
    x0: np.ndarray,
    n_paths: int,
    stream: RngStream,
) -> np.ndarray:
    """n_paths independent SGD chains run for n_steps; returns the endpoints (n, d)."""
    w = np.tile(np.asarray(x0, dtype=float), (n_paths, 1))
    for _ in range(n_steps):
        noise = draw_noise(model, stream, n_paths)
        w = w - eta * grad_psi(model, w, noise)
    return w


def sde_step(
    model: QuadraticModel,
    eta: float,
    dt: float,
    x: np.ndarray,
    stream: RngStream,
) -> np.ndarray:
    """One Euler step of the diffusion: x - grad_potential(x) dt + sqrt(eta dt) Sigma^(1/2)(x) G."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    drift = x - grad_potential(model, x) * dt
    if eta > 0 and dt > 0:
        g = gaussian_sample(stream, x.shape[0], model.dim)
        drift = drift + np.sqrt(eta * dt) * _sigma_sqrt_apply(model, x, g)
    return drift[0] if drift.shape[0] == 1 else drift


def exact_sde_endpoints(
    model: QuadraticModel,
    eta: float,
    t: float,
    x0: np.ndarray,
    n_paths: int,
    stream: RngStream,
) -> np.ndarray:
    """Draws of the diffusion at time t for shifted_data, using its Gaussian law.

    The linear SDE dX = -HX dt + sqrt(eta) H dB has marginal
    N(exp(-Ht) x0, (eta/2) H (I - exp(-2Ht))); sampling it directly
    removes all integrator bias.
    """
    if model.variant != "shifted_data":
        raise ValueError("closed-form Gaussian marginal only for shifted_data")
    lam, basis = np.linalg.eigh(model.hessian)
    mean = basis @ (np.exp(-lam * t) * (basis.T @ np.asarray(x0, dtype=float)))
    cov_eigs = eta / 2.0 * lam * (1.0 - np.exp(-2.0 * lam * t))
    g = gaussian_sample(stream, n_paths, model.dim)
    return mean + (g * np.sqrt(cov_eigs)) @ basis.T


def sde_endpoints(
    model: QuadraticModel, cfg: SgdConfig, stream: RngStream
) -> np.ndarray:
    """Diffusion marginal at physical time eta * horizon: exact when available, fine Euler otherwise."""
    t_final = cfg.eta * cfg.horizon_n
    if model.variant == "shifted_data":
        return exact_sde_endpoints(model, cfg.eta, t_final, cfg.x0, cfg.n_paths, stream)
    dt = cfg.eta / cfg.sde_substeps
    x = np.tile(cfg.x0, (cfg.n_paths, 1))
    for _ in range(cfg.horizon_n * cfg.sde_substeps):
        x = sde_step(model, cfg.eta, dt, x, stream)
    return x


def simulate_pair_marginals(
    model: QuadraticModel, cfg: SgdConfig, stream: RngStream
) -> tuple[SampleSet, SampleSet]:
    """Independent samples of the SGD endpoint and the diffusion endpoint.

    The two sets share no randomness: each side draws from its own
    substream.
    """
    sgd = sgd_endpoints(
        model, cfg.eta, cfg.horizon_n, cfg.x0, cfg.n_paths, stream.substream(0)
    )
    sde = sde_endpoints(model, cfg, stream.substream(1))
    return (
        SampleSet(sgd, seed=stream.seed, tag="sgd"),
        SampleSet(sde, seed=stream.seed, tag="sde"),
    )


# --- assumption constants and probes ---------------------------------------


@dataclass(frozen=True)
class AssumptionConstants:
    """Dissipativity / smoothness / ellipticity constants for one model."""

    theta0: float
    theta1: float
    theta2: float
    theta3: float
    theta4: float
    theta5: float
    delta: float
    kappa: float
    ell0: tuple[float, float, float, float]  # E|grad_psi(0, zeta)|^j, j = 1..4


def _gaussian_norm_moment(dim: int, j: int) -> float:
    """E |G|^j for G ~ N(0, I_dim): 2^(j/2) Gamma((d+j)/2) / Gamma(d/2)."""
    return float(2 ** (j / 2.0) * np.exp(gammaln((dim + j) / 2.0) - gammaln(dim / 2.0)))


def _quadform_abs_moments(eigs: np.ndarray, max_dim_quadrature: int = 4) -> tuple:
    """E (sum_i lam_i^2 z_i^2)^(j/2) for j = 1..4, z standard normal.

    Tensor Gauss-Hermite quadrature for small d; j = 2 and 4 also have
    closed forms (traces), which the tests cross-check.
    """
    d = eigs.size
    if d > max_dim_quadrature:
        raise ValueError("quadrature moments limited to small dimension")
    nodes, weights = hermegauss(60)
    weights = weights / np.sqrt(2.0 * np.pi)
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    w = np.ones_like(grids[0])
    for g in np.meshgrid(*([weights] * d), indexing="ij"):
        w = w * g
    q = sum((eigs[i] ** 2) * grids[i] ** 2 for i in range(d))
    r = np.sqrt(q)
    return tuple(float(np.sum(w * r**j)) for j in (1, 2, 3, 4))


def claimed_constants(model: QuadraticModel) -> AssumptionConstants:
    """The constants each model family satisfies, in closed form."""
    h = model.hessian
    lam_min = float(np.linalg.eigvalsh(h)[0])
    hs = float(np.linalg.norm(h, "fro"))
    d = model.dim
    if model.variant == "shifted_data":
        eigs = np.linalg.eigvalsh(h)
        return AssumptionConstants(
            theta0=lam_min,
            theta1=0.0,
            theta2=0.0,
            theta3=0.0,
            theta4=0.0,
            theta5=0.0,
            delta=lam_min,
            kappa=hs,
            ell0=_quadform_abs_moments(eigs),
        )
    g = model.gamma
    q_hs = float(np.linalg.norm(model.basis, "fro"))  # = sqrt(d)
    kappa = (27.0 * (hs**4 + 3.0 * d**6 + g**4)) ** 0.25
    ell0 = tuple(g**j * _gaussian_norm_moment(d, j) for j in (1, 2, 3, 4))
    return AssumptionConstants(
        theta0=lam_min + g,
        theta1=0.0,
        theta2=0.0,
        theta3=np.sqrt(d) * q_hs**3,
        theta4=np.sqrt(d) * q_hs**4 * (1.0 + 1.0 / g + g**-3),
        theta5=3.0 * np.sqrt(d) * q_hs**5 * (2.0 + g**-3 + g**-5),
        delta=g,
        kappa=kappa,
        ell0=ell0,
    )


def admissible_eta(model: QuadraticModel) -> float:
    """Largest step size under which the fourth-moment audit applies."""
    c = claimed_constants(model)
    return min(1.0, c.theta0 / (2.0 * (10.0 + 7.0 * c.kappa**4 + 7.0 * c.ell0[3])))


@dataclass
class ProbeCheck:
    name: str
    max_rel_violation: float
    passed: bool


@dataclass
class AssumptionReport:
    constants: AssumptionConstants
    checks: list[ProbeCheck]
    n_probe: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_rel_violation(self) -> float:
        return max(c.max_rel_violation for c in self.checks)


def check_assumptions(
    model: QuadraticModel,
    n_probe: int,
    stream: RngStream,
    rel_tol: float = 1e-8,
    mc_noise: int = 128,
) -> AssumptionReport:
    """Probe the claimed constants on random points; report-only, never raises.

    Checks, each as a relative violation (positive part / claimed side):
    dissipativity <v, H_P v> >= theta0 |v|^2, its integrated form
    <x - y, grad P(x) - grad P(y)> >= theta0 |x - y|^2, ellipticity
    xi^T Sigma^(1/2) xi >= delta |xi|^2, and the fourth-moment Lipschitz
    bound E|grad_psi(x) - grad_psi(y)|^4 <= kappa^4 |x - y|^4.
    """
    if n_probe < 1:
        raise ValueError("need at least one probe")
    c = claimed_constants(model)
    gen = stream.generator
    d = model.dim
    scales = np.array([0.5, 1.0, 4.0])[gen.integers(0, 3, n_probe)]
    x = gen.standard_normal((n_probe, d)) * scales[:, None]
    y = gen.standard_normal((n_probe, d)) * scales[:, None]
    v = gen.standard_normal((n_probe, d))
    xi = gen.standard_normal((n_probe, d))

    def rel_gap(short: np.ndarray, long: np.ndarray) -> float:
        # positive part of (long - short) / long, i.e. how far short falls below
        return float(np.max((long - short) / np.abs(long)))

    # dissipativity: grad_potential is linear, so directional second derivative is exact
    hv = grad_potential(model, v)
    diss = rel_gap(np.einsum("ij,ij->i", v, hv), c.theta0 * np.sum(v**2, axis=1))
    diff = x - y
    integ = rel_gap(
        np.einsum("ij,ij->i", diff, grad_potential(model, x) - grad_potential(model, y)),
        c.theta0 * np.sum(diff**2, axis=1),
    )
    if model.variant == "shifted_data":
        sx = xi @ model.hessian
    else:
        u = x @ model.basis
        sx = ((xi @ model.basis) * np.sqrt(u**2 + model.gamma**2)) @ model.basis.T
    ellip = rel_gap(np.einsum("ij,ij->i", xi, sx), c.delta * np.sum(xi**2, axis=1))

    if model.variant == "shifted_data":
        fourth_lhs = np.sum((diff @ model.hessian) ** 2, axis=1) ** 2  # zeta cancels
    else:
        acc = np.zeros(n_probe)
        sub = stream.substream(1)
        for _ in range(mc_noise):
            noise = draw_noise(model, sub, n_probe)
            delta_g = grad_psi(model, x, noise) - grad_psi(model, y, noise)
            acc += np.sum(delta_g**2, axis=1) ** 2
        fourth_lhs = acc / mc_noise
    fourth_rhs = c.kappa**4 * np.sum(diff**2, axis=1) ** 2
    fourth = float(np.max((fourth_lhs - fourth_rhs) / fourth_rhs))

    checks = [
        ProbeCheck("dissipativity", max(diss, 0.0), diss <= rel_tol),
        ProbeCheck("dissipativity_integrated", max(integ, 0.0), integ <= rel_tol),
        ProbeCheck("ellipticity", max(ellip, 0.0), ellip <= rel_tol),
        ProbeCheck("fourth_moment_lipschitz", max(fourth, 0.0), fourth <= rel_tol),
    ]
    return AssumptionReport(constants=c, checks=checks, n_probe=n_probe)


# --- audits ----------------------------------------------------------------


@dataclass
class MomentAuditReport:
    steps: np.ndarray
    estimates: np.ndarray
    start_value: float
    budget: float
    flagged: bool


def moment_audit(
    model: QuadraticModel,
    cfg: SgdConfig,
    stream: RngStream,
    budget: float | None = None,
    record_every: int = 100,
) -> MomentAuditReport:
    """Track E|w_k|^4 along the chain and flag if it ever exceeds |w0|^4 + budget."""
    eta_max = admissible_eta(model)
    if cfg.eta > eta_max:
        raise ValueError(f"eta={cfg.eta} exceeds the admissible bound {eta_max:.5g}")
    c = claimed_constants(model)
    if budget is None:
        budget = 10.0 * (1.0 + c.ell0[3] / c.theta0)
    w = np.tile(cfg.x0, (cfg.n_paths, 1))
    start = float(np.sum(cfg.x0**2) ** 2)
    steps = [0]
    estimates = [start]
    for k in range(1, cfg.horizon_n + 1):
        noise = draw_noise(model, stream, cfg.n_paths)
        w = w - cfg.eta * grad_psi(model, w, noise)
        if k % record_every == 0 or k == cfg.horizon_n:
            steps.append(k)
            estimates.append(float(np.mean(np.sum(w**2, axis=1) ** 2)))
    estimates = np.array(estimates)
    return MomentAuditReport(
        steps=np.array(steps),
        estimates=estimates,
        start_value=start,
        budget=float(budget),
        flagged=bool(np.any(estimates > start + budget)),
    )


def lipschitz_test_functions(dim: int) -> dict[str, Callable[[np.ndarray], np.ndarray]]:
    """Fixed library of 1-Lipschitz test functions on R^dim."""
    funcs: dict[str, Callable[[np.ndarray], np.ndarray]] = {}
    for i in range(dim):
        funcs[f"coord{i}"] = lambda x, i=i: x[..., i]
    funcs["norm"] = lambda x: np.linalg.norm(x, axis=-1)
    funcs["softplus0"] = lambda x: np.logaddexp(0.0, x[..., 0]) - np.log(2.0)
    return funcs


@dataclass
class ContractionProbe:
    estimate: float
    bound: float
    stderr: float
    passed: bool


@dataclass
class ContractionReport:
    t: float
    h_name: str
    probes: list[ContractionProbe]

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.probes)


def check_semigroup_contraction(
    model: QuadraticModel,
    t: float,
    h_name: str | Callable[[np.ndarray], np.ndarray],
    eps: float,
    stream: RngStream,
    eta: float = 0.5,
    n_probe: int = 20,
    n_mc: int = 20_000,
    stderr_mult: float = 5.0,
) -> ContractionReport:
    """Finite-difference check that |P_t h(x + eps v) - P_t h(x)| / eps decays like exp(-theta0 t / 8).

    Common random numbers: the perturbed and base endpoints share every
    noise draw, so the difference quotient has tiny variance. ``h_name``
    is a key of :func:`lipschitz_test_functions` or a 1-Lipschitz
    callable.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if callable(h_name):
        h, h_name = h_name, getattr(h_name, "__name__", "custom")
    else:
        h = lipschitz_test_functions(model.dim)[h_name]
    theta0 = claimed_constants(model).theta0
    gen = stream.generator
    probes = []
    for p in range(n_probe):
        x = gen.standard_normal(model.dim) * 2.0
        v = gen.standard_normal(model.dim)
        v /= np.linalg.norm(v)
        sub = stream.substream(100 + p)
        if model.variant == "shifted_data":
            lam, basis = np.linalg.eigh(model.hessian)
            decay = basis @ np.diag(np.exp(-lam * t)) @ basis.T
            noise = (
                gaussian_sample(sub, n_mc, model.dim)
                * np.sqrt(eta / 2.0 * lam * (1.0 - np.exp(-2.0 * lam * t)))
            ) @ basis.T
            base = decay @ x + noise
            pert = decay @ (x + eps * v) + noise
        else:
            n_sub = max(1, int(np.ceil(t / eta * 16)))
            dt = t / n_sub
            base = np.tile(x, (n_mc, 1))
            pert = np.tile(x + eps * v, (n_mc, 1))
            for _ in range(n_sub):
                g = gaussian_sample(sub, n_mc, model.dim)
                base = base - grad_potential(model, base) * dt + np.sqrt(
                    eta * dt
                ) * _sigma_sqrt_apply(model, base, g)
                pert = pert - grad_potential(model, pert) * dt + np.sqrt(
                    eta * dt
                ) * _sigma_sqrt_apply(model, pert, g)
        quot = (h(pert) - h(base)) / eps
        est = abs(float(np.mean(quot)))
        se = float(np.std(quot, ddof=1) / np.sqrt(n_mc))
        bound = np.exp(-theta0 * t / 8.0)  # |v| = 1
        probes.append(
            ContractionProbe(
                estimate=est,
                bound=float(bound),
                stderr=se,
                passed=est <= bound + stderr_mult * se,
            )
        )
    return ContractionReport(t=t, h_name=h_name, probes=probes)
