"""Point estimators for the Neyman-Scott problem.

Implements maximum likelihood, the Ideal Point map in both directions,
Ideal Group sublevel regions, the Wallace-Freeman estimator, and the
variance estimator obtained after integrating the group means out.  All
of them reduce to closed forms of the shared shape ``sigma2_hat =
constant * s2``, ``mu_hat = m``; the constants are:

=====================  =====================================
estimator              sigma2_hat / s2
=====================  =====================================
ML                     1
Ideal Point            N*J / (N*(J-1) + p - 1)
Wallace-Freeman        N*J / (N*J + p - N - 1)
means integrated out   J / (J - 1)
=====================  =====================================

For the scale-free prior (p = N + 1) both Ideal Point and Wallace-Freeman
collapse onto ML exactly; for the Wallace prior (p = 1) both return the
consistent ``J * s2 / (J - 1)``.  The numerical-optimizer cross-checks for
these closed forms live in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .model import (
    DegenerateInputError,
    InvalidConfigError,
    Parameter,
    PriorSpec,
    ProblemConfig,
    SufficientStat,
    _check_param,
    _check_stat,
    code_penalty_R,
)

__all__ = [
    "METHOD_ML",
    "METHOD_IP",
    "METHOD_WF",
    "METHOD_MARGINALIZED",
    "Estimate",
    "IdealGroupRegion",
    "ml_estimate",
    "ip_estimate",
    "ip_reverse",
    "penalty_at_ideal_point",
    "ideal_group",
    "wf_estimate",
    "marginalized_sigma2_ml",
    "stat_from_coords",
    "coords_from_stat",
    "param_from_coords",
    "coords_from_param",
]

METHOD_ML = "ML"
METHOD_IP = "IP"
METHOD_WF = "WF"
METHOD_MARGINALIZED = "MARGINALIZED_SIGMA2"

_METHODS = frozenset({METHOD_ML, METHOD_IP, METHOD_WF, METHOD_MARGINALIZED})


@dataclass(frozen=True)
class Estimate:
    """A point estimate together with the method and prior that produced it."""

    theta: Parameter
    method: str
    prior: PriorSpec | None = None

    def __post_init__(self) -> None:
        if self.method not in _METHODS:
            raise InvalidConfigError(f"unknown estimator method {self.method!r}")


def _ip_shrinkage(prior: PriorSpec, cfg: ProblemConfig) -> float:
    # s2 = shrinkage * sigma2 at the penalty-minimizing observation.
    return (cfg.dof + prior.p - 1.0) / cfg.nj


def ml_estimate(stat: SufficientStat, cfg: ProblemConfig) -> Estimate:
    """Maximum likelihood: ``sigma2_hat = s2``, ``mu_hat = m``."""
    _check_stat(stat, cfg)
    return Estimate(Parameter(stat.s2, stat.m.copy()), METHOD_ML)


def ip_estimate(stat: SufficientStat, prior: PriorSpec, cfg: ProblemConfig) -> Estimate:
    """Forward Ideal Point estimate: the parameter whose penalty-minimizing
    observation is ``stat``.

    ``sigma2_hat = N*J*s2 / (N*(J-1) + p - 1)`` and ``mu_hat = m``; this is
    the stationary point of the penalty in closed form.  The map is onto
    the whole parameter space for every admissible ``p``, so it is a true
    (single-valued) estimator here.
    """
    _check_stat(stat, cfg)
    sigma2 = stat.s2 / _ip_shrinkage(prior, cfg)
    return Estimate(Parameter(sigma2, stat.m.copy()), METHOD_IP, prior)


def ip_reverse(theta: Parameter, prior: PriorSpec, cfg: ProblemConfig) -> SufficientStat:
    """Reverse Ideal Point map: the unique observation minimizing the
    penalty of ``theta``.

    ``m = mu`` and ``s2 = sigma2 * (N*(J-1) + p - 1) / (N*J)``.  Composing
    with :func:`ip_estimate` gives the identity on parameters.
    """
    _check_param(theta, cfg)
    return SufficientStat(theta.mu.copy(), theta.sigma2 * _ip_shrinkage(prior, cfg))


def penalty_at_ideal_point(theta: Parameter, prior: PriorSpec, cfg: ProblemConfig) -> float:
    """Minimum of the code penalty of ``theta`` over all observations."""
    return code_penalty_R(theta, ip_reverse(theta, prior, cfg), prior, cfg)


def stat_from_coords(coords: np.ndarray) -> SufficientStat:
    """Observation from ``(log s, m/s)`` coordinates."""
    coords = np.asarray(coords, dtype=float)
    s = math.exp(coords[0])
    return SufficientStat(coords[1:] * s, s * s)


def coords_from_stat(stat: SufficientStat) -> np.ndarray:
    """``(log s, m/s)`` coordinates of an observation."""
    s = stat.s
    return np.concatenate(([math.log(s)], stat.m / s))


def param_from_coords(coords: np.ndarray) -> Parameter:
    """Parameter from ``(log sigma, mu/sigma)`` coordinates."""
    coords = np.asarray(coords, dtype=float)
    sigma = math.exp(coords[0])
    return Parameter(sigma * sigma, coords[1:] * sigma)


def coords_from_param(theta: Parameter) -> np.ndarray:
    """``(log sigma, mu/sigma)`` coordinates of a parameter."""
    sigma = theta.sigma
    return np.concatenate(([math.log(sigma)], theta.mu / sigma))


def _expand_to_level(profile, t0: float, step: float, level: float, max_doublings: int = 200) -> float:
    """First crossing of ``profile(t) = level`` from ``t0`` in the direction
    of ``step``.  Requires ``profile(t0) < level`` and eventual growth past
    ``level`` (true for all the convex penalty profiles used here).
    """
    lo = t0
    hi = t0 + step
    for _ in range(max_doublings):
        if profile(hi) >= level:
            break
        lo = hi
        hi = t0 + 2.0 * (hi - t0)
    else:
        raise DegenerateInputError(
            f"no level crossing found within {max_doublings} bracket doublings"
        )
    return brentq(lambda t: profile(t) - level, min(lo, hi), max(lo, hi), xtol=1e-12, rtol=1e-12)


def axis_level_box(profile_at, center: np.ndarray, level: float, initial_step: float = 0.25) -> np.ndarray:
    """Axis-aligned box of level crossings through ``center``.

    For each coordinate axis, holds the remaining coordinates at the
    center and finds the two points where ``profile_at(coords) = level``.
    ``profile_at(center)`` must lie below ``level``.  Returns an array of
    shape ``(dim, 2)`` with the low/high crossings per axis.
    """
    center = np.asarray(center, dtype=float)
    dim = center.shape[0]
    box = np.empty((dim, 2))
    for axis in range(dim):
        def profile(t: float, axis: int = axis) -> float:
            coords = center.copy()
            coords[axis] = t
            return profile_at(coords)

        box[axis, 0] = _expand_to_level(profile, center[axis], -initial_step, level)
        box[axis, 1] = _expand_to_level(profile, center[axis], initial_step, level)
    return box


@dataclass(frozen=True)
class IdealGroupRegion:
    """Sublevel set ``{x : R_theta(x) <= R*_theta + epsilon}``.

    Represented by its defining inequality (the :meth:`contains` predicate
    evaluates the penalty directly) plus an axis-crossing box in
    ``(log s, m/s)`` coordinates through the penalty-minimizing
    observation.  ``epsilon`` parameterizes the threshold; this is the
    sublevel-set form of the Ideal Group, not the historical
    integral-derived threshold.
    """

    center: Parameter
    prior: PriorSpec
    cfg: ProblemConfig
    epsilon: float
    r_star: float
    box: np.ndarray = field(repr=False)

    def contains(self, stat: SufficientStat) -> bool:
        return code_penalty_R(self.center, stat, self.prior, self.cfg) <= self.r_star + self.epsilon

    @property
    def widths(self) -> np.ndarray:
        return self.box[:, 1] - self.box[:, 0]


def ideal_group(theta: Parameter, prior: PriorSpec, epsilon: float, cfg: ProblemConfig) -> IdealGroupRegion:
    """Ideal Group region of ``theta`` at threshold ``R*_theta + epsilon``.

    The box is found by 1-D root-finding along each ``(log s, m/s)`` axis
    through the penalty-minimizing observation, which the region always
    contains.
    """
    if not epsilon > 0.0:
        raise InvalidConfigError(f"epsilon must be > 0, got {epsilon!r}")
    r_star = penalty_at_ideal_point(theta, prior, cfg)
    center = coords_from_stat(ip_reverse(theta, prior, cfg))

    def profile_at(coords: np.ndarray) -> float:
        return code_penalty_R(theta, stat_from_coords(coords), prior, cfg) - r_star

    box = axis_level_box(profile_at, center, epsilon)
    return IdealGroupRegion(theta, prior, cfg, float(epsilon), r_star, box)


def wf_estimate(stat: SufficientStat, prior: PriorSpec, cfg: ProblemConfig) -> Estimate:
    """Wallace-Freeman estimate: maximizes ``prior * likelihood / sqrt(det F)``.

    With the power prior expressed as a density in ``(sigma^2, mu)`` (the
    ``2 sigma`` Jacobian turns ``sigma^(-p)`` into ``sigma^(-(p+1)) / 2``),
    differentiation gives ``mu_hat = m`` and

        sigma2_hat = N*J*s2 / (N*J + p - N - 1).

    The objective is parameterization invariant, so the same estimate
    results from working in ``(sigma, mu)``; for ``p = N + 1`` (the
    Jeffreys prior) the estimate equals maximum likelihood exactly.
    """
    _check_stat(stat, cfg)
    denom = cfg.nj + prior.p - cfg.N - 1.0
    if denom <= 0.0:
        raise DegenerateInputError(f"Wallace-Freeman objective unbounded for p={prior.p}")
    return Estimate(Parameter(cfg.nj * stat.s2 / denom, stat.m.copy()), METHOD_WF, prior)


def marginalized_sigma2_ml(stat: SufficientStat, cfg: ProblemConfig) -> float:
    """Variance estimate after integrating the means out (uniform improper
    prior on ``mu``): maximizes ``sigma^(-N(J-1)) exp(-N*J*s2 / (2 sigma^2))``,
    giving ``J * s2 / (J - 1)`` for every ``N``.
    """
    _check_stat(stat, cfg)
    return cfg.J * stat.s2 / (cfg.J - 1.0)
