"""Independent numerical oracles shared by the test modules.

These deliberately avoid the package's closed forms: the marginal oracle
integrates prior times likelihood by adaptive quadrature, the Hessian
oracle uses central finite differences, and the raw-sample builder lets
likelihood values be cross-checked against a literal product of normal
densities.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

from nsmml import ProblemConfig, SufficientStat, sufficient_stats


def oracle_log_marginal(stat: SufficientStat, p: float, cfg: ProblemConfig) -> float:
    """Adaptive quadrature of ``integral sigma^(-p) f(x|sigma^2, mu)``.

    The mean integrals factor per coordinate by symmetry; each factor and
    the outer scale integral are evaluated adaptively.
    """
    nj = cfg.N * cfg.J

    def integrand(sigma: float) -> float:
        val = sigma ** (-p) * (2.0 * math.pi * sigma * sigma) ** (-nj / 2.0)
        val *= math.exp(-nj * stat.s2 / (2.0 * sigma * sigma))
        half_width = 50.0 * sigma / math.sqrt(cfg.J)  # integrand is ~0 beyond this
        for mn in stat.m:
            inner, _ = quad(
                lambda u, mn=mn, sigma=sigma: math.exp(-cfg.J * (mn - u) ** 2 / (2.0 * sigma * sigma)),
                mn - half_width,
                mn + half_width,
                epsabs=1e-14,
                epsrel=1e-12,
            )
            val *= inner
        return val

    total, _ = quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=1e-10, limit=300)
    return math.log(total)


def fd_hessian(fn, x0: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of a scalar function."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.shape[0]
    hess = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            if i == j:
                e = np.zeros(n)
                e[i] = h
                val = (fn(x0 + e) - 2.0 * fn(x0) + fn(x0 - e)) / h**2
            else:
                ei = np.zeros(n)
                ej = np.zeros(n)
                ei[i] = h
                ej[j] = h
                val = (
                    fn(x0 + ei + ej) - fn(x0 + ei - ej) - fn(x0 - ei + ej) + fn(x0 - ei - ej)
                ) / (4.0 * h**2)
            hess[i, j] = hess[j, i] = val
    return hess


def raw_sample_with_stats(m: np.ndarray, s2: float, cfg: ProblemConfig) -> np.ndarray:
    """A concrete N x J sample whose sufficient statistic is ``(m, s2)``."""
    pattern = np.zeros(cfg.J)
    pattern[0], pattern[1] = 1.0, -1.0  # zero mean, sum of squares 2
    t = math.sqrt(cfg.J * s2 / 2.0)
    data = np.asarray(m, dtype=float)[:, None] + t * pattern[None, :]
    stat = sufficient_stats(data, cfg)
    assert np.allclose(stat.m, m) and abs(stat.s2 - s2) < 1e-12
    return data


def log_normal_pdf_product(data: np.ndarray, sigma2: float, mu: np.ndarray) -> float:
    """Literal sum of per-observation normal log-densities."""
    total = 0.0
    for n in range(data.shape[0]):
        for j in range(data.shape[1]):
            z = (data[n, j] - mu[n]) ** 2 / (2.0 * sigma2)
            total += -0.5 * math.log(2.0 * math.pi * sigma2) - z
    return total
