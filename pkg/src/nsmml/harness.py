"""Simulation and estimator-sweep harness.

Random numbers come from numpy's PCG64 generator; Gaussian variates are
produced by the deterministic inverse-CDF transform (``ndtri`` applied to
centered 53-bit uniforms), so a seed pins the byte-exact output across
runs and platforms.  Each sweep trial draws from its own substream,
``SeedSequence((seed, N, trial))``, which makes every emitted row
independently recomputable and lets trials run in any order (or in
parallel) without changing the aggregate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .model import (
    InvalidConfigError,
    PriorSpec,
    ProblemConfig,
    SufficientStat,
    sufficient_stats,
)
from .estimators import (
    METHOD_IP,
    METHOD_MARGINALIZED,
    METHOD_ML,
    METHOD_WF,
    ip_estimate,
    marginalized_sigma2_ml,
    ml_estimate,
    wf_estimate,
)

__all__ = [
    "standard_normal",
    "simulate",
    "SweepSpec",
    "SweepRow",
    "run_sweep",
    "trial_ratios",
    "resolve_prior",
    "parse_sweep_config",
    "SWEEP_CSV_HEADER",
    "rows_to_csv",
]

PRIOR_FREE_METHODS = (METHOD_ML, METHOD_MARGINALIZED)


def standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normals via inverse CDF on centered 53-bit uniforms.

    ``u = (2k + 1) / 2^54`` for ``k`` uniform on ``[0, 2^53)`` never hits 0
    or 1, and the whole transform is a fixed deterministic function of the
    generator stream.
    """
    k = rng.integers(0, 1 << 53, size=shape, dtype=np.int64)
    return ndtri((2.0 * k + 1.0) / float(1 << 54))


def simulate(cfg: ProblemConfig, sigma2_true: float, mu_true, seed) -> np.ndarray:
    """Draw an ``N x J`` sample with ``x[n, j] ~ Normal(mu_n, sigma2_true)``.

    ``seed`` may be an integer or a ``numpy.random.SeedSequence``; output
    is byte-identical for equal seeds.
    """
    if not sigma2_true > 0.0:
        raise InvalidConfigError("sigma2_true must be > 0")
    mu = np.broadcast_to(np.asarray(mu_true, dtype=float), (cfg.N,))
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng = np.random.Generator(np.random.PCG64(ss))
    z = standard_normal(rng, (cfg.N, cfg.J))
    return mu[:, None] + math.sqrt(sigma2_true) * z


@dataclass(frozen=True)
class SweepSpec:
    """Monte Carlo sweep over group counts and estimators.

    ``mu_law`` fixes how true means are drawn each trial: ``"normal"``
    (standard normal scaled by the true sigma; the default, immaterial for
    these translation-equivariant estimators), ``"zero"``, or
    ``"fixed:<value>"`` (a constant mean for every group).  ``priors``
    entries are ``"wallace"``, ``"scale-free"`` or a numeric exponent;
    ``"scale-free"`` resolves to ``p = N + 1`` per row.
    """

    J: int
    N_list: tuple[int, ...]
    trials: int
    sigma2_true: float = 1.0
    mu_law: str = "normal"
    estimators: tuple[str, ...] = (METHOD_ML, METHOD_IP, METHOD_WF, METHOD_MARGINALIZED)
    priors: tuple = ("wallace", "scale-free")
    seed: int = 0

    def __post_init__(self) -> None:
        n_list = tuple(int(n) for n in self.N_list)
        if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])) or n_list[0] < 1:
            raise InvalidConfigError("N_list must be strictly increasing positive integers")
        if self.trials < 1:
            raise InvalidConfigError("trials must be >= 1")
        if not self.sigma2_true > 0.0:
            raise InvalidConfigError("sigma2_true must be > 0")
        known = {METHOD_ML, METHOD_IP, METHOD_WF, METHOD_MARGINALIZED}
        if not self.estimators or any(e not in known for e in self.estimators):
            raise InvalidConfigError(f"estimators must be a nonempty subset of {sorted(known)}")
        if not (self.mu_law in ("normal", "zero") or self.mu_law.startswith("fixed:")):
            raise InvalidConfigError(f"unknown mu_law {self.mu_law!r}")
        object.__setattr__(self, "N_list", n_list)
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "priors", tuple(self.priors))
        object.__setattr__(self, "J", int(self.J))
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class SweepRow:
    N: int
    estimator: str
    prior_p: float | None
    mean_ratio: float
    sd_ratio: float
    trials: int


def resolve_prior(choice, cfg: ProblemConfig) -> PriorSpec:
    """Resolve a symbolic prior choice against a configuration."""
    if isinstance(choice, PriorSpec):
        return choice
    if isinstance(choice, (int, float)):
        return PriorSpec(float(choice))
    name = str(choice).strip().lower()
    if name == "wallace":
        return PriorSpec.wallace()
    if name in ("scale-free", "scale_free", "scalefree"):
        return PriorSpec.scale_free(cfg)
    try:
        return PriorSpec(float(name))
    except ValueError:
        raise InvalidConfigError(f"unknown prior {choice!r}") from None


def _true_means(spec: SweepSpec, cfg: ProblemConfig, rng: np.random.Generator) -> np.ndarray:
    if spec.mu_law == "zero":
        return np.zeros(cfg.N)
    if spec.mu_law == "normal":
        return math.sqrt(spec.sigma2_true) * standard_normal(rng, cfg.N)
    return np.full(cfg.N, float(spec.mu_law.split(":", 1)[1]))


def _estimate_sigma2(method: str, stat: SufficientStat, prior: PriorSpec | None, cfg: ProblemConfig) -> float:
    if method == METHOD_ML:
        return ml_estimate(stat, cfg).theta.sigma2
    if method == METHOD_IP:
        return ip_estimate(stat, prior, cfg).theta.sigma2
    if method == METHOD_WF:
        return wf_estimate(stat, prior, cfg).theta.sigma2
    if method == METHOD_MARGINALIZED:
        return marginalized_sigma2_ml(stat, cfg)
    raise InvalidConfigError(f"unknown estimator {method!r}")


def _row_combos(spec: SweepSpec) -> list[tuple[str, object]]:
    combos: list[tuple[str, object]] = []
    for method in spec.estimators:
        if method in PRIOR_FREE_METHODS:
            combos.append((method, None))
        else:
            combos.extend((method, choice) for choice in spec.priors)
    return combos


def trial_ratios(spec: SweepSpec, n_groups: int) -> dict[tuple[str, object], np.ndarray]:
    """Per-trial ratios ``sigma2_hat / sigma2_true`` for every estimator x
    prior combination at one group count.  Trial ``t`` uses the substream
    ``SeedSequence((seed, n_groups, t))``; all combinations share the
    trial's simulated data.
    """
    cfg = ProblemConfig(N=n_groups, J=spec.J)
    combos = _row_combos(spec)
    out = {combo: np.empty(spec.trials) for combo in combos}
    for t in range(spec.trials):
        ss = np.random.SeedSequence((spec.seed, n_groups, t))
        rng = np.random.Generator(np.random.PCG64(ss))
        mu = _true_means(spec, cfg, rng)
        data = mu[:, None] + math.sqrt(spec.sigma2_true) * standard_normal(rng, (cfg.N, cfg.J))
        stat = sufficient_stats(data, cfg)
        for method, choice in combos:
            prior = None if choice is None else resolve_prior(choice, cfg)
            out[(method, choice)][t] = _estimate_sigma2(method, stat, prior, cfg) / spec.sigma2_true
    return out


def run_sweep(spec: SweepSpec) -> list[SweepRow]:
    """Aggregate mean and standard deviation of per-trial ratios.

    Rows appear in deterministic order: group counts ascending, then
    estimators and priors in the order the spec lists them.  The mean is
    the mean of per-trial ratios (matching the pointwise consistency
    statement); the sd is the sample standard deviation (0 for one trial).
    """
    rows: list[SweepRow] = []
    for n_groups in spec.N_list:
        cfg = ProblemConfig(N=n_groups, J=spec.J)
        ratios = trial_ratios(spec, n_groups)
        for method, choice in _row_combos(spec):
            values = ratios[(method, choice)]
            prior_p = None if choice is None else resolve_prior(choice, cfg).p
            sd = float(values.std(ddof=1)) if spec.trials > 1 else 0.0
            rows.append(
                SweepRow(
                    N=n_groups,
                    estimator=method,
                    prior_p=prior_p,
                    mean_ratio=float(values.mean()),
                    sd_ratio=sd,
                    trials=spec.trials,
                )
            )
    return rows


SWEEP_CSV_HEADER = "N,estimator,prior_p,mean_ratio,sd_ratio,trials"


def rows_to_csv(rows: list[SweepRow]) -> str:
    lines = [SWEEP_CSV_HEADER]
    for r in rows:
        prior = "" if r.prior_p is None else repr(float(r.prior_p))
        lines.append(
            f"{r.N},{r.estimator},{prior},{repr(r.mean_ratio)},{repr(r.sd_ratio)},{r.trials}"
        )
    return "\n".join(lines) + "\n"


def parse_sweep_config(text: str) -> SweepSpec:
    """Parse the plain-text ``key = value`` sweep configuration.

    Recognized keys: ``J``, ``N_list`` (comma-separated), ``trials``,
    ``sigma2_true``, ``mu_law``, ``estimators`` (comma-separated),
    ``priors`` (comma-separated names or exponents), ``seed``.  ``#``
    starts a comment.  Example::

        # consistency dichotomy at J = 2
        J = 2
        N_list = 10, 100, 2000
        trials = 200
        sigma2_true = 1.0
        mu_law = normal
        estimators = ML, IP, WF, MARGINALIZED_SIGMA2
        priors = wallace, scale-free
        seed = 12345
    """
    values: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"malformed config line {raw!r} (expected key = value)")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    required = {"J", "N_list", "trials"}
    missing = required - values.keys()
    if missing:
        raise InvalidConfigError(f"config is missing required keys: {sorted(missing)}")

    def split_list(s: str) -> list[str]:
        return [part.strip() for part in s.split(",") if part.strip()]

    estimators = values.get("estimators", "ML, IP, WF, MARGINALIZED_SIGMA2")
    # Accept the short MARGINALIZED alias used on the command line.
    methods = tuple(
        METHOD_MARGINALIZED if e.upper() in ("MARGINALIZED", METHOD_MARGINALIZED) else e.upper()
        for e in split_list(estimators)
    )
    priors = tuple(split_list(values.get("priors", "wallace, scale-free")))
    return SweepSpec(
        J=int(values["J"]),
        N_list=tuple(int(v) for v in split_list(values["N_list"])),
        trials=int(values["trials"]),
        sigma2_true=float(values.get("sigma2_true", "1.0")),
        mu_law=values.get("mu_law", "normal"),
        estimators=methods,
        priors=priors,
        seed=int(values.get("seed", "0")),
    )
