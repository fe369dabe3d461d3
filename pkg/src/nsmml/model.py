"""Closed-form probabilistic core of the Neyman-Scott problem.

The model: ``N`` groups of ``J`` observations, each ``x[n, j] ~ Normal(mu_n,
sigma^2)`` with one variance shared across all groups.  The pair
``(m, s^2)`` -- per-group means and the pooled within-group variance -- is a
sufficient statistic, and every quantity this package works with has a
closed form in terms of it:

* the log-likelihood of the raw ``N x J`` sample,
* the log of the scaled marginal ``r`` under a power prior,
* the code-length penalty ``R = log(r / likelihood)``,
* the Fisher-information ``(1/2) log det`` used by Wallace-Freeman.

Priors form the one-parameter improper family ``h(sigma, mu) = sigma^(-p)``
on ``(0, inf) x R^N``.  ``p = 1`` is the Wallace prior (uniform means,
``1/sigma`` scale); ``p = N + 1`` is the scale-free prior, which is also the
Jeffreys prior of this model.  The proportionality constant of ``h`` is
fixed at exactly 1 so that scaled quantities are reproducible run to run.

All densities and penalties live in the log domain; gamma factors go
through ``scipy.special.gammaln``.  Every function here is pure and safe
for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "NeymanScottError",
    "InvalidConfigError",
    "DegenerateInputError",
    "ProblemConfig",
    "PriorSpec",
    "SufficientStat",
    "Parameter",
    "sufficient_stats",
    "log_likelihood",
    "log_marginal",
    "code_penalty_R",
    "fisher_log_sqrt_det",
    "stat_log_jacobian",
    "stat_log_likelihood",
    "stat_log_marginal",
]

LOG_2PI = math.log(2.0 * math.pi)


class NeymanScottError(Exception):
    """Base class for errors raised by this package."""


class InvalidConfigError(NeymanScottError, ValueError):
    """A problem configuration, prior, or input shape is malformed."""


class DegenerateInputError(NeymanScottError, ValueError):
    """An input lies outside the domain where the densities exist.

    Typical causes: ``s2 = 0`` (the marginal diverges there), a
    non-positive variance, or a prior exponent that drives the gamma
    function argument non-positive.
    """


@dataclass(frozen=True)
class ProblemConfig:
    """Shape of an instance: ``N`` groups of ``J`` observations each.

    ``J >= 2`` is required (with a single observation per group the
    within-group variance is identically zero) and ``N >= 1``.
    """

    N: int
    J: int

    def __post_init__(self) -> None:
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 1):
            raise InvalidConfigError(f"N must be an integer >= 1, got {self.N!r}")
        if not (isinstance(self.J, (int, np.integer)) and self.J >= 2):
            raise InvalidConfigError(f"J must be an integer >= 2, got {self.J!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "J", int(self.J))

    @property
    def nj(self) -> int:
        """Total number of observations ``N * J``."""
        return self.N * self.J

    @property
    def dof(self) -> int:
        """Within-group degrees of freedom ``N * (J - 1)``."""
        return self.N * (self.J - 1)


@dataclass(frozen=True)
class PriorSpec:
    """Member of the power-prior family ``h(sigma, mu) = sigma^(-p)``.

    ``p = 1`` is the Wallace prior; ``p = N + 1`` is the scale-free prior
    (jointly scale-invariant in ``(sigma, mu)``, and the Jeffreys prior of
    the model).  Exponents below 1 are rejected.
    """

    p: float

    def __post_init__(self) -> None:
        p = float(self.p)
        if not (p >= 1.0 and math.isfinite(p)):
            raise InvalidConfigError(f"prior exponent p must satisfy p >= 1, got {self.p!r}")
        object.__setattr__(self, "p", p)

    @property
    def is_wallace(self) -> bool:
        return self.p == 1.0

    def is_scale_free(self, cfg: ProblemConfig) -> bool:
        return self.p == cfg.N + 1.0

    @classmethod
    def wallace(cls) -> "PriorSpec":
        return cls(1.0)

    @classmethod
    def scale_free(cls, cfg: ProblemConfig) -> "PriorSpec":
        return cls(float(cfg.N + 1))


def _as_mean_vector(value, name: str) -> np.ndarray:
    vec = np.atleast_1d(np.asarray(value, dtype=float))
    if vec.ndim != 1:
        raise InvalidConfigError(f"{name} must be a 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise InvalidConfigError(f"{name} must be finite")
    return vec


@dataclass(frozen=True)
class SufficientStat:
    """Observed point ``(m, s^2)``: group means and pooled variance.

    ``s2 >= 0`` always; every operation except :func:`sufficient_stats`
    requires ``s2 > 0``.
    """

    m: np.ndarray
    s2: float

    def __post_init__(self) -> None:
        m = _as_mean_vector(self.m, "m")
        s2 = float(self.s2)
        if not (s2 >= 0.0 and math.isfinite(s2)):
            raise InvalidConfigError(f"s2 must be a finite value >= 0, got {self.s2!r}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "s2", s2)

    @property
    def n_groups(self) -> int:
        return self.m.shape[0]

    @property
    def s(self) -> float:
        return math.sqrt(self.s2)


@dataclass(frozen=True)
class Parameter:
    """Candidate parameter ``(sigma^2, mu)`` with ``sigma^2 > 0``."""

    sigma2: float
    mu: np.ndarray

    def __post_init__(self) -> None:
        sigma2 = float(self.sigma2)
        if not (sigma2 > 0.0 and math.isfinite(sigma2)):
            raise DegenerateInputError(f"sigma2 must be finite and > 0, got {self.sigma2!r}")
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "mu", _as_mean_vector(self.mu, "mu"))

    @property
    def n_groups(self) -> int:
        return self.mu.shape[0]

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


def _check_stat(stat: SufficientStat, cfg: ProblemConfig) -> None:
    if stat.n_groups != cfg.N:
        raise InvalidConfigError(
            f"stat has {stat.n_groups} group means but the configuration has N={cfg.N}"
        )
    if stat.s2 <= 0.0:
        raise DegenerateInputError("s2 must be > 0 for this operation (the marginal diverges at s2 = 0)")


def _check_param(theta: Parameter, cfg: ProblemConfig) -> None:
    if theta.n_groups != cfg.N:
        raise InvalidConfigError(
            f"parameter has {theta.n_groups} means but the configuration has N={cfg.N}"
        )


def sufficient_stats(data: np.ndarray, cfg: ProblemConfig) -> SufficientStat:
    """Reduce an ``N x J`` sample to its sufficient statistic.

    ``m_n`` is the mean of row ``n``; ``s2`` is the pooled within-group
    variance ``sum_{n,j} (x[n,j] - m_n)^2 / (N*J)``.
    """
    x = np.asarray(data, dtype=float)
    if x.shape != (cfg.N, cfg.J):
        raise InvalidConfigError(f"data shape {x.shape} does not match (N, J) = ({cfg.N}, {cfg.J})")
    if not np.all(np.isfinite(x)):
        raise InvalidConfigError("data must be finite")
    m = x.mean(axis=1)
    s2 = float(((x - m[:, None]) ** 2).sum() / cfg.nj)
    return SufficientStat(m=m, s2=s2)


def log_likelihood(stat: SufficientStat, theta: Parameter, cfg: ProblemConfig) -> float:
    """Log-density of the raw ``N x J`` sample, via its sufficient statistic.

    Uses the decomposition ``sum (x - mu)^2 = N*J*s2 + J * sum (m - mu)^2``,
    so the value equals the product of the ``N*J`` individual normal
    densities evaluated on any raw sample with these statistics.
    """
    _check_stat(stat, cfg)
    _check_param(theta, cfg)
    quad = cfg.nj * stat.s2 + cfg.J * float(((stat.m - theta.mu) ** 2).sum())
    return -0.5 * cfg.nj * (LOG_2PI + math.log(theta.sigma2)) - quad / (2.0 * theta.sigma2)


def log_marginal(stat: SufficientStat, prior: PriorSpec, cfg: ProblemConfig) -> float:
    """Log of the scaled marginal ``r = integral of sigma^(-p) * likelihood``.

    Closed form for the whole power family: with ``q = N*(J-1) + p``,

        r = (2*pi)^(-N(J-1)/2) * J^(-N/2) * (1/2)
            * (N*J*s2 / 2)^((1-q)/2) * Gamma((q-1)/2).

    For ``p = 1`` and ``p = N + 1`` this reduces to the Wallace-prior and
    scale-free expressions (gamma arguments ``N(J-1)/2`` and ``NJ/2``); the
    general exponent is validated against adaptive quadrature in the test
    suite.  Depends on the statistic only through ``s2``.
    """
    _check_stat(stat, cfg)
    q = cfg.dof + prior.p
    if q <= 1.0:
        raise DegenerateInputError(f"marginal undefined: gamma argument (q-1)/2 <= 0 for p={prior.p}")
    half_quad = 0.5 * cfg.nj * stat.s2
    return (
        -0.5 * cfg.dof * LOG_2PI
        - 0.5 * cfg.N * math.log(cfg.J)
        - math.log(2.0)
        + 0.5 * (1.0 - q) * math.log(half_quad)
        + gammaln(0.5 * (q - 1.0))
    )


def code_penalty_R(theta: Parameter, stat: SufficientStat, prior: PriorSpec, cfg: ProblemConfig) -> float:
    """Code-length penalty ``R = log(marginal / likelihood)``.

    The expected value of this penalty over a codebook region is the
    data-encoding cost the region pays for representing its members by the
    single parameter ``theta``.
    """
    return log_marginal(stat, prior, cfg) - log_likelihood(stat, theta, cfg)


def fisher_log_sqrt_det(theta: Parameter, cfg: ProblemConfig) -> float:
    """``(1/2) log det F(theta)`` in the ``(sigma^2, mu)`` parameterization.

    ``F = diag(NJ / (2 sigma^4), J/sigma^2, ..., J/sigma^2)``, so
    ``sqrt(det F)`` is proportional to ``sigma^(-(N+2))`` as a density in
    ``(sigma^2, mu)`` -- equivalently ``sigma^(-(N+1))`` as a density in
    ``sigma``, i.e. the scale-free prior is the Jeffreys prior.
    """
    _check_param(theta, cfg)
    return 0.5 * (math.log(0.5 * cfg.nj) + cfg.N * math.log(cfg.J)) - 0.5 * (cfg.N + 2) * math.log(
        theta.sigma2
    )


def stat_log_jacobian(stat: SufficientStat, cfg: ProblemConfig) -> float:
    """Log ratio between the ``(s, m)``-space density and the raw density.

    Integrating the raw density over the sphere of samples sharing
    ``(s, m)`` multiplies it by ``C(s) = 2 N J s (N J s^2)^(dof/2 - 1)
    * J^(N/2) * pi^(dof/2) / Gamma(dof/2)``, a function of ``s`` alone.
    Adding this term converts :func:`log_likelihood` and
    :func:`log_marginal` into densities on ``(s, m)``, the observation
    space in which the scale-translation automorphisms act with Jacobian
    ``alpha^(N+1)``.
    """
    _check_stat(stat, cfg)
    nu = cfg.dof
    return (
        math.log(2.0 * cfg.nj)
        + 0.5 * math.log(stat.s2)
        + (0.5 * nu - 1.0) * math.log(cfg.nj * stat.s2)
        + 0.5 * cfg.N * math.log(cfg.J)
        + 0.5 * nu * math.log(math.pi)
        - gammaln(0.5 * nu)
    )


def stat_log_likelihood(stat: SufficientStat, theta: Parameter, cfg: ProblemConfig) -> float:
    """Log-density of the sufficient statistic ``(s, m)`` given ``theta``."""
    return log_likelihood(stat, theta, cfg) + stat_log_jacobian(stat, cfg)


def stat_log_marginal(stat: SufficientStat, prior: PriorSpec, cfg: ProblemConfig) -> float:
    """Log of the scaled marginal density on ``(s, m)`` space.

    Proportional to ``s^(-p)``: uniform in ``(log s, m/s)`` coordinates
    exactly when the prior is scale free.
    """
    return log_marginal(stat, prior, cfg) + stat_log_jacobian(stat, cfg)
