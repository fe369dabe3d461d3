"""Regularity property engine: automorphisms, homogeneity,
comprehensiveness, concentration, and the constructive locality
certificate.

An automorphism is a scale-translation pair acting jointly on observation
and parameter space: ``U(s, m) = (alpha*s, alpha*m + beta)`` and
``T(sigma, mu) = (alpha*sigma, alpha*mu + beta)``.  Checks are run against
the densities on ``(s, m)`` space, where ``U`` has Jacobian determinant
``alpha^(N+1)``.  The likelihood condition holds for every member of the
power-prior family; the marginal condition compares the exponent ``p`` of
the ``s^(-p)`` marginal with the Jacobian exponent ``N+1``, so it holds
for all ``(alpha, beta)`` exactly when the prior is scale free, and for
translations (``alpha = 1``) under every prior.

The locality certificate follows the constructive proof that the
scale-free problem is local: ``k = 2N + 1 + c^N`` competitor parameters
(2N mean shifts, one inflated scale, and a ``c^N`` grid of contracted
scales) dominate the likelihood of ``theta`` by a margin ``T = N log(c+1)``
everywhere outside an exempt box whose scaled probability is bounded by a
constant independent of ``theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    LOG_2PI,
    DegenerateInputError,
    InvalidConfigError,
    NeymanScottError,
    Parameter,
    PriorSpec,
    ProblemConfig,
    SufficientStat,
    _check_param,
    _check_stat,
    code_penalty_R,
    log_likelihood,
    stat_log_likelihood,
    stat_log_marginal,
)
from .estimators import (
    axis_level_box,
    coords_from_param,
    ip_estimate,
    param_from_coords,
    penalty_at_ideal_point,
)

__all__ = [
    "Automorphism",
    "AutomorphismReport",
    "check_automorphism",
    "transitivity_witness",
    "HomogeneityReport",
    "homogeneity_check",
    "ComprehensivenessReport",
    "comprehensiveness_check",
    "ConcentrationBox",
    "concentration_box",
    "LocalityConstructionError",
    "CertificateError",
    "find_valid_c",
    "LocalityCertificate",
    "LocalityReport",
    "GridSpec",
    "locality_certificate",
]


class LocalityConstructionError(NeymanScottError):
    """The locality construction's inequalities cannot be satisfied."""


class CertificateError(NeymanScottError):
    """Certificate verification failed at some exterior sample point."""

    def __init__(self, message: str, report: "LocalityReport | None" = None) -> None:
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class Automorphism:
    """Scale-translation pair ``(alpha, beta)`` with ``alpha > 0``.

    Acts on observations as ``(s, m) -> (alpha*s, alpha*m + beta)`` and on
    parameters as ``(sigma, mu) -> (alpha*sigma, alpha*mu + beta)``; the
    observation-space Jacobian determinant in ``(s, m)`` coordinates is
    ``alpha^(N+1)``.
    """

    alpha: float
    beta: np.ndarray

    def __post_init__(self) -> None:
        alpha = float(self.alpha)
        if not (alpha > 0.0 and math.isfinite(alpha)):
            raise InvalidConfigError(f"alpha must be finite and > 0, got {self.alpha!r}")
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def n_groups(self) -> int:
        return self.beta.shape[0]

    def apply_stat(self, stat: SufficientStat) -> SufficientStat:
        return SufficientStat(self.alpha * stat.m + self.beta, self.alpha**2 * stat.s2)

    def apply_param(self, theta: Parameter) -> Parameter:
        return Parameter(self.alpha**2 * theta.sigma2, self.alpha * theta.mu + self.beta)

    def compose(self, other: "Automorphism") -> "Automorphism":
        """The automorphism acting as ``self`` after ``other``."""
        return Automorphism(self.alpha * other.alpha, self.alpha * other.beta + self.beta)

    def inverse(self) -> "Automorphism":
        return Automorphism(1.0 / self.alpha, -self.beta / self.alpha)

    def log_jacobian(self, cfg: ProblemConfig) -> float:
        return (cfg.N + 1) * math.log(self.alpha)


@dataclass(frozen=True)
class AutomorphismReport:
    marginal_ok: bool
    likelihood_ok: bool
    max_marginal_violation: float
    max_likelihood_violation: float
    max_violation: float
    samples: int
    tol: float

    def to_dict(self) -> dict:
        return {
            "marginal_ok": self.marginal_ok,
            "likelihood_ok": self.likelihood_ok,
            "max_marginal_violation": self.max_marginal_violation,
            "max_likelihood_violation": self.max_likelihood_violation,
            "max_violation": self.max_violation,
            "samples": self.samples,
            "tol": self.tol,
        }


def _random_stat(rng: np.random.Generator, cfg: ProblemConfig) -> SufficientStat:
    return SufficientStat(rng.normal(0.0, 2.0, cfg.N), math.exp(rng.normal(0.0, 1.0)))


def _random_param(rng: np.random.Generator, cfg: ProblemConfig) -> Parameter:
    return Parameter(math.exp(rng.normal(0.0, 1.0)), rng.normal(0.0, 2.0, cfg.N))


def check_automorphism(
    aut: Automorphism,
    prior: PriorSpec,
    cfg: ProblemConfig,
    samples: int = 100,
    seed: int = 0,
    tol: float = 1e-9,
) -> AutomorphismReport:
    """Test whether ``(U, T)`` preserves the scaled marginal and the
    likelihood on random ``(stat, theta)`` pairs.

    Checks, in ``(s, m)``-space densities,

        log r(x) = log r(U(x)) + (N+1) log alpha
        log f(x | theta) = log f(U(x) | T(theta)) + (N+1) log alpha

    and reports the worst absolute violation of each condition.  The
    marginal condition's violation is ``|p - (N+1)| * log alpha`` in closed
    form; the likelihood condition holds identically for this family.
    """
    if samples < 1:
        raise InvalidConfigError("samples must be >= 1")
    if aut.n_groups != cfg.N:
        raise InvalidConfigError("automorphism translation length does not match N")
    rng = np.random.default_rng(seed)
    log_jac = aut.log_jacobian(cfg)
    worst_marginal = 0.0
    worst_likelihood = 0.0
    for _ in range(samples):
        stat = _random_stat(rng, cfg)
        theta = _random_param(rng, cfg)
        moved = aut.apply_stat(stat)
        marginal_gap = stat_log_marginal(stat, prior, cfg) - (
            stat_log_marginal(moved, prior, cfg) + log_jac
        )
        likelihood_gap = stat_log_likelihood(stat, theta, cfg) - (
            stat_log_likelihood(moved, aut.apply_param(theta), cfg) + log_jac
        )
        worst_marginal = max(worst_marginal, abs(marginal_gap))
        worst_likelihood = max(worst_likelihood, abs(likelihood_gap))
    return AutomorphismReport(
        marginal_ok=worst_marginal < tol,
        likelihood_ok=worst_likelihood < tol,
        max_marginal_violation=worst_marginal,
        max_likelihood_violation=worst_likelihood,
        max_violation=max(worst_marginal, worst_likelihood),
        samples=samples,
        tol=tol,
    )


def transitivity_witness(src, dst) -> Automorphism:
    """Automorphism carrying ``src`` to ``dst`` (both observations or both
    parameters): ``alpha`` is the scale ratio and ``beta = dst_m - alpha *
    src_m`` (means), so ``U(src) = dst`` exactly.
    """
    if isinstance(src, SufficientStat) and isinstance(dst, SufficientStat):
        if src.s2 <= 0.0:
            raise DegenerateInputError("source statistic must have s2 > 0")
        alpha = dst.s / src.s
        return Automorphism(alpha, dst.m - alpha * src.m)
    if isinstance(src, Parameter) and isinstance(dst, Parameter):
        alpha = dst.sigma / src.sigma
        return Automorphism(alpha, dst.mu - alpha * src.mu)
    raise InvalidConfigError("src and dst must both be observations or both be parameters")


def _fit_drift(values: np.ndarray, log_scales: np.ndarray, slope: float) -> dict:
    # Fixed-slope affine fit: values ~ intercept + slope * log_scales.
    intercept = float(np.mean(values - slope * log_scales))
    residuals = values - (intercept + slope * log_scales)
    return {
        "slope": slope,
        "intercept": intercept,
        "max_residual": float(np.max(np.abs(residuals))),
    }


@dataclass(frozen=True)
class HomogeneityReport:
    is_homogeneous: bool
    r_star_values: np.ndarray
    spread: float
    drift: dict
    tol: float

    def to_dict(self) -> dict:
        return {
            "is_homogeneous": self.is_homogeneous,
            "spread": self.spread,
            "tol": self.tol,
            "drift_slope": self.drift["slope"],
            "drift_intercept": self.drift["intercept"],
            "drift_max_residual": self.drift["max_residual"],
            "r_star_values": [float(v) for v in self.r_star_values],
        }


def homogeneity_check(
    prior: PriorSpec,
    cfg: ProblemConfig,
    thetas: list[Parameter],
    tol: float = 1e-9,
) -> HomogeneityReport:
    """Is the minimal penalty ``R*_theta`` constant over parameters?

    Also fits the predicted drift ``R*_theta = const + ((N+1-p)/2) *
    log sigma^2`` (slope ``N/2`` under the Wallace prior, zero under the
    scale-free prior) and reports the residual of that law.
    """
    if not thetas:
        raise InvalidConfigError("thetas must be a nonempty sample")
    values = np.array([penalty_at_ideal_point(theta, prior, cfg) for theta in thetas])
    log_scales = np.array([math.log(theta.sigma2) for theta in thetas])
    spread = float(values.max() - values.min())
    slope = 0.5 * (cfg.N + 1 - prior.p)
    return HomogeneityReport(
        is_homogeneous=spread < tol,
        r_star_values=values,
        spread=spread,
        drift=_fit_drift(values, log_scales, slope),
        tol=tol,
    )


@dataclass(frozen=True)
class ComprehensivenessReport:
    is_comprehensive: bool
    r_opt_values: np.ndarray
    spread: float
    drift: dict
    tol: float

    def to_dict(self) -> dict:
        return {
            "is_comprehensive": self.is_comprehensive,
            "spread": self.spread,
            "tol": self.tol,
            "drift_slope": self.drift["slope"],
            "drift_intercept": self.drift["intercept"],
            "drift_max_residual": self.drift["max_residual"],
            "r_opt_values": [float(v) for v in self.r_opt_values],
        }


def comprehensiveness_check(
    prior: PriorSpec,
    cfg: ProblemConfig,
    stats: list[SufficientStat],
    tol: float = 1e-9,
) -> ComprehensivenessReport:
    """Is the minimal penalty over parameters constant over observations?

    The closed-form minimizer is the forward Ideal Point estimate.  The
    drift law here is ``R_opt = const + ((N+1-p)/2) * log s^2``.
    """
    if not stats:
        raise InvalidConfigError("stats must be a nonempty sample")
    values = []
    log_scales = []
    for stat in stats:
        theta = ip_estimate(stat, prior, cfg).theta
        values.append(code_penalty_R(theta, stat, prior, cfg))
        log_scales.append(math.log(stat.s2))
    values = np.array(values)
    log_scales = np.array(log_scales)
    spread = float(values.max() - values.min())
    slope = 0.5 * (cfg.N + 1 - prior.p)
    return ComprehensivenessReport(
        is_comprehensive=spread < tol,
        r_opt_values=values,
        spread=spread,
        drift=_fit_drift(values, log_scales, slope),
        tol=tol,
    )


@dataclass(frozen=True)
class ConcentrationBox:
    """Axis-crossing box containing the level set in parameter space."""

    center: np.ndarray
    box: np.ndarray
    epsilon: float

    @property
    def widths(self) -> np.ndarray:
        return self.box[:, 1] - self.box[:, 0]

    def contains_param(self, theta: Parameter) -> bool:
        coords = coords_from_param(theta)
        return bool(np.all(coords >= self.box[:, 0]) and np.all(coords <= self.box[:, 1]))


def concentration_box(
    stat: SufficientStat, prior: PriorSpec, epsilon: float, cfg: ProblemConfig
) -> ConcentrationBox:
    """Bounding box of ``{theta : R_theta(stat) < R*_theta + epsilon}`` in
    ``(log sigma, mu/sigma)`` coordinates.

    The profile ``R_theta(stat) - R*_theta`` is strictly convex with a
    unique zero at the Ideal Point estimate and grows without bound along
    every axis, so bisection from the estimate yields a finite box for
    every ``epsilon`` (all admissible priors share the same profile).
    """
    if not epsilon > 0.0:
        raise InvalidConfigError(f"epsilon must be > 0, got {epsilon!r}")
    _check_stat(stat, cfg)
    center = coords_from_param(ip_estimate(stat, prior, cfg).theta)

    def profile_at(coords: np.ndarray) -> float:
        theta = param_from_coords(coords)
        return code_penalty_R(theta, stat, prior, cfg) - penalty_at_ideal_point(theta, prior, cfg)

    box = axis_level_box(profile_at, center, epsilon)
    return ConcentrationBox(center=center, box=box, epsilon=float(epsilon))


def find_valid_c(cfg: ProblemConfig, c_max: int = 10**6) -> int:
    """Smallest integer ``c >= 2`` satisfying the two sufficient
    inequalities of the locality construction:

        c^(4J) / (2NJ)^(2J) >= (c+1)^7        (scale-grid margin)
        (c+1)^N >= c^N + 2N + 2               (e^T >= k + 1)

    Both are evaluated in exact integer arithmetic.  For ``N = 1`` the
    second inequality reads ``c + 1 >= c + 4`` and has no solution: the
    construction needs ``N >= 2``, and this is surfaced as an error rather
    than silently patched.
    """
    if cfg.N == 1:
        raise LocalityConstructionError(
            "the locality construction requires N >= 2: for N = 1 the inequality "
            "(c+1)^N >= c^N + 2N + 2 reduces to c+1 >= c+4, which no c satisfies"
        )
    base = (2 * cfg.nj) ** (2 * cfg.J)
    for c in range(2, c_max + 1):
        if c ** (4 * cfg.J) < base * (c + 1) ** 7:
            continue
        if (c + 1) ** cfg.N < c**cfg.N + 2 * cfg.N + 2:
            continue
        return c
    raise LocalityConstructionError(f"no valid c found up to {c_max}")


@dataclass(frozen=True)
class LocalityCertificate:
    """Competitor family certifying locality at ``theta``.

    ``theta_list`` consists of ``k = 2N + 1 + c^N`` parameters: the ``2N``
    mean-shifted points (one coordinate moved by ``+-sigma*sqrt(2T)``), the
    inflated point ``(e*sigma, mu)``, and a ``c^N`` grid of points with
    scale ``sqrt(2NJ)*sigma/c`` and means on the per-coordinate ``c``
    segment centers.  The grid is stored implicitly (``grid_sigma`` plus
    per-coordinate centers as ``start/step/count``); ``materialize_grid``
    expands it when ``c^N`` is small enough to enumerate.

    ``exempt_box`` is the covering box, in ``(log s, m/s)`` coordinates, of
    the region where domination is not asserted (``delta_prime <= s/sigma
    <= delta`` and ``|m_n - mu_n| <= sigma*sqrt(2T)``); its scaled
    probability is bounded by ``v0_bound``, which depends only on
    ``(N, J, c)``.
    """

    theta: Parameter
    cfg: ProblemConfig
    c: int
    k: int
    T_margin: float
    delta: float
    delta_prime: float
    explicit_thetas: list[Parameter]
    grid_sigma: float
    grid_start: np.ndarray
    grid_step: np.ndarray
    exempt_box: np.ndarray = field(repr=False)
    v0_bound: float = 0.0

    def is_exempt(self, stat: SufficientStat) -> bool:
        """Exact membership in the exempt region (not just its covering box)."""
        sigma = self.theta.sigma
        ratio = stat.s / sigma
        if not (self.delta_prime <= ratio <= self.delta):
            return False
        bound = sigma * math.sqrt(2.0 * self.T_margin)
        return bool(np.all(np.abs(stat.m - self.theta.mu) <= bound))

    def materialize_grid(self, limit: int = 200_000) -> list[Parameter]:
        count = self.c**self.cfg.N
        if count > limit:
            raise InvalidConfigError(f"grid has {count} points, above the materialization limit {limit}")
        axes = [self.grid_start[n] + self.grid_step[n] * np.arange(self.c) for n in range(self.cfg.N)]
        mesh = np.meshgrid(*axes, indexing="ij")
        mus = np.stack([g.ravel() for g in mesh], axis=1)
        return [Parameter(self.grid_sigma**2, mu) for mu in mus]

    def theta_list(self, limit: int = 200_000) -> list[Parameter]:
        return self.explicit_thetas + self.materialize_grid(limit)

    def best_log_likelihood_gap(self, stat: SufficientStat) -> float:
        """``max_i log f(x | theta_i) - log f(x | theta)`` over all k
        competitors.  The grid maximum is attained at the per-coordinate
        nearest segment center, so the grid never has to be enumerated.
        """
        cfg = self.cfg
        base = log_likelihood(stat, self.theta, cfg)
        sigma = self.theta.sigma
        shift = sigma * math.sqrt(2.0 * self.T_margin)
        best = -math.inf
        for n in range(cfg.N):
            for sign in (1.0, -1.0):
                mu = self.theta.mu.copy()
                mu[n] += sign * shift
                best = max(best, log_likelihood(stat, Parameter(self.theta.sigma2, mu), cfg))
        inflated = Parameter((math.e * sigma) ** 2, self.theta.mu)
        best = max(best, log_likelihood(stat, inflated, cfg))
        idx = np.rint((stat.m - self.grid_start) / self.grid_step).astype(int)
        idx = np.clip(idx, 0, self.c - 1)
        nearest = self.grid_start + self.grid_step * idx
        best = max(best, log_likelihood(stat, Parameter(self.grid_sigma**2, nearest), cfg))
        return best - base


@dataclass(frozen=True)
class GridSpec:
    """Verification grid: log-spaced in ``s/sigma``, linear in
    ``(m - mu)/sigma``, expanded beyond the exempt box so the sample
    contains both exempt and exterior points.
    """

    points_scale: int = 48
    points_mean: int = 24
    expand_scale: float = 1.5
    expand_mean: float = 2.0


@dataclass(frozen=True)
class LocalityReport:
    all_pass: bool
    n_points: int
    n_exterior: int
    n_exempt: int
    worst_margin: float
    worst_point: np.ndarray
    v0_bound: float
    c: int
    k: int
    T_margin: float
    delta: float
    delta_prime: float

    def to_dict(self) -> dict:
        return {
            "all_pass": self.all_pass,
            "n_points": self.n_points,
            "n_exterior": self.n_exterior,
            "n_exempt": self.n_exempt,
            "worst_margin": self.worst_margin,
            "worst_point": [float(v) for v in self.worst_point],
            "v0_bound": self.v0_bound,
            "c": self.c,
            "k": self.k,
            "T_margin": self.T_margin,
            "delta": self.delta,
            "delta_prime": self.delta_prime,
        }


def _build_certificate(theta: Parameter, cfg: ProblemConfig, c: int) -> LocalityCertificate:
    T = cfg.N * math.log(c + 1.0)
    sigma = theta.sigma
    shift = sigma * math.sqrt(2.0 * T)
    # delta: the inflated-scale chain dominates once s/sigma exceeds it;
    # delta_prime: the contracted grid dominates below it.  Both are the
    # tightest values satisfying the construction's sufficient conditions.
    delta = math.sqrt((T + cfg.nj) / ((1.0 - math.exp(-2.0)) * 0.5 * cfg.nj))
    delta_prime = math.sqrt(0.25 * T / ((c * c / (2.0 * cfg.nj) - 1.0) * 0.5 * cfg.nj))

    explicit = []
    for n in range(cfg.N):
        for sign in (1.0, -1.0):
            mu = theta.mu.copy()
            mu[n] += sign * shift
            explicit.append(Parameter(theta.sigma2, mu))
    explicit.append(Parameter((math.e * sigma) ** 2, theta.mu.copy()))

    step = 2.0 * shift / c
    grid_start = theta.mu - shift + 0.5 * step
    grid_step = np.full(cfg.N, step)
    grid_sigma = math.sqrt(2.0 * cfg.nj) * sigma / c

    # Covering box of the exempt region in (log s, m/s) coordinates.
    ls_lo = math.log(sigma * delta_prime)
    ls_hi = math.log(sigma * delta)
    lo_m = theta.mu - shift
    hi_m = theta.mu + shift
    s_lo = sigma * delta_prime
    s_hi = sigma * delta
    u_lo = np.minimum(lo_m / s_lo, lo_m / s_hi)
    u_hi = np.maximum(hi_m / s_lo, hi_m / s_hi)
    exempt_box = np.vstack([np.array([[ls_lo, ls_hi]]), np.stack([u_lo, u_hi], axis=1)])

    v0 = (2.0 * math.sqrt(2.0 * T)) ** cfg.N * math.log(delta / delta_prime) / delta_prime**cfg.N
    return LocalityCertificate(
        theta=theta,
        cfg=cfg,
        c=c,
        k=2 * cfg.N + 1 + c**cfg.N,
        T_margin=T,
        delta=delta,
        delta_prime=delta_prime,
        explicit_thetas=explicit,
        grid_sigma=grid_sigma,
        grid_start=grid_start,
        grid_step=grid_step,
        exempt_box=exempt_box,
        v0_bound=v0,
    )


def locality_certificate(
    theta: Parameter,
    cfg: ProblemConfig,
    c: int | None = None,
    grid: GridSpec = GridSpec(),
    seed: int = 0,
) -> tuple[LocalityCertificate, LocalityReport]:
    """Build the competitor family at ``theta`` and verify the domination
    margin on a grid covering and exceeding the exempt box.

    At every sampled observation outside the exempt region the margin
    ``max_i log f(x|theta_i) - log f(x|theta) - T`` must be positive;
    failure raises :class:`CertificateError` carrying the witness point.
    ``seed`` jitters the grid offsets so no sample lands exactly on the
    exempt boundary.
    """
    _check_param(theta, cfg)
    if c is None:
        c = find_valid_c(cfg)
    if c < 2:
        raise InvalidConfigError("c must be >= 2")
    cert = _build_certificate(theta, cfg, c)
    rng = np.random.default_rng(seed)
    sigma = theta.sigma

    # Grid in relative coordinates: log(s/sigma) and (m - mu)/sigma.
    ls_lo = math.log(cert.delta_prime) - grid.expand_scale
    ls_hi = math.log(cert.delta) + grid.expand_scale
    jitter = rng.uniform(0.25, 0.75)
    ls_vals = ls_lo + (ls_hi - ls_lo) * (np.arange(grid.points_scale) + jitter) / grid.points_scale
    half = math.sqrt(2.0 * cert.T_margin) * grid.expand_mean
    jitter_m = rng.uniform(0.25, 0.75, cfg.N)
    mean_axes = [
        -half + 2.0 * half * (np.arange(grid.points_mean) + jitter_m[n]) / grid.points_mean
        for n in range(cfg.N)
    ]
    mesh = np.meshgrid(ls_vals, *mean_axes, indexing="ij")
    rel_ls = mesh[0].ravel()
    rel_m = np.stack([g.ravel() for g in mesh[1:]], axis=1)

    s = sigma * np.exp(rel_ls)
    m = theta.mu[None, :] + sigma * rel_m
    n_points = s.shape[0]

    # Exempt region membership (exact, not the covering box).
    sqrt2T = math.sqrt(2.0 * cert.T_margin)
    exempt = (
        (s / sigma >= cert.delta_prime)
        & (s / sigma <= cert.delta)
        & np.all(np.abs(rel_m) <= sqrt2T, axis=1)
    )

    margins = _margins_vectorized(cert, s, m)
    exterior = ~exempt
    n_ext = int(exterior.sum())
    ext_margins = margins[exterior]
    worst_idx_local = int(np.argmin(ext_margins))
    worst_margin = float(ext_margins[worst_idx_local])
    ext_indices = np.flatnonzero(exterior)
    worst_i = ext_indices[worst_idx_local]
    worst_point = np.concatenate(([s[worst_i] ** 2], m[worst_i]))

    report = LocalityReport(
        all_pass=bool(worst_margin > 0.0),
        n_points=n_points,
        n_exterior=n_ext,
        n_exempt=int(exempt.sum()),
        worst_margin=worst_margin,
        worst_point=worst_point,
        v0_bound=cert.v0_bound,
        c=cert.c,
        k=cert.k,
        T_margin=cert.T_margin,
        delta=cert.delta,
        delta_prime=cert.delta_prime,
    )
    if not report.all_pass:
        raise CertificateError(
            f"domination margin {worst_margin} <= 0 at exterior point s2={worst_point[0]}, "
            f"m={worst_point[1:]}",
            report,
        )
    return cert, report


def _margins_vectorized(cert: LocalityCertificate, s: np.ndarray, m: np.ndarray) -> np.ndarray:
    """``max_i log f - log f(theta) - T`` for arrays of observations."""
    cfg = cert.cfg
    theta = cert.theta
    sigma2 = theta.sigma2
    sigma = theta.sigma
    nj = cfg.nj
    J = cfg.J

    d = m - theta.mu[None, :]
    quad = nj * s**2 + J * (d**2).sum(axis=1)
    base = -0.5 * nj * (LOG_2PI + math.log(sigma2)) - quad / (2.0 * sigma2)

    # Mean-shifted competitors: best over coordinate and sign.
    shift = sigma * math.sqrt(2.0 * cert.T_margin)
    best_shift = (J * shift / sigma2) * np.abs(d).max(axis=1) - 0.5 * J * shift**2 / sigma2 + base

    # Inflated-scale competitor.
    e2 = math.e**2
    inflated = -0.5 * nj * (LOG_2PI + math.log(e2 * sigma2)) - quad / (2.0 * e2 * sigma2)

    # Contracted grid: nearest segment center per coordinate.
    idx = np.rint((m - cert.grid_start[None, :]) / cert.grid_step[None, :]).astype(int)
    idx = np.clip(idx, 0, cert.c - 1)
    nearest = cert.grid_start[None, :] + cert.grid_step[None, :] * idx
    gquad = nj * s**2 + J * ((m - nearest) ** 2).sum(axis=1)
    gsigma2 = cert.grid_sigma**2
    gridded = -0.5 * nj * (LOG_2PI + math.log(gsigma2)) - gquad / (2.0 * gsigma2)

    best = np.maximum(np.maximum(best_shift, inflated), gridded)
    return best - base - cert.T_margin

