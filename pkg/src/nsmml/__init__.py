"""Numerical laboratory for minimum-message-length estimators on the
Neyman-Scott problem: closed-form densities and code penalties under the
power-prior family, the ML / Ideal Point / Ideal Group / Wallace-Freeman
estimator family, a regularity property engine with a constructive
locality certificate, discrete strict-MML codebook optimization, and a
Monte Carlo consistency harness with a CLI front end.
"""

from .model import (
    DegenerateInputError,
    InvalidConfigError,
    NeymanScottError,
    Parameter,
    PriorSpec,
    ProblemConfig,
    SufficientStat,
    code_penalty_R,
    fisher_log_sqrt_det,
    log_likelihood,
    log_marginal,
    stat_log_jacobian,
    stat_log_likelihood,
    stat_log_marginal,
    sufficient_stats,
)
from .estimators import (
    METHOD_IP,
    METHOD_MARGINALIZED,
    METHOD_ML,
    METHOD_WF,
    Estimate,
    IdealGroupRegion,
    ideal_group,
    ip_estimate,
    ip_reverse,
    marginalized_sigma2_ml,
    ml_estimate,
    penalty_at_ideal_point,
    wf_estimate,
)
from .regularity import (
    Automorphism,
    CertificateError,
    GridSpec,
    LocalityCertificate,
    LocalityConstructionError,
    check_automorphism,
    comprehensiveness_check,
    concentration_box,
    find_valid_c,
    homogeneity_check,
    locality_certificate,
    transitivity_witness,
)
from .codebook import (
    CandidateSpec,
    Codebook,
    DiscreteProblem,
    SizeLimitError,
    codebook_cost,
    codebook_from_text,
    codebook_to_text,
    codebook_transport,
    discretize,
    make_codebook,
    pointwise_assignment,
    problem_from_text,
    problem_to_text,
    region_mass_audit,
    smml_exhaustive,
    smml_ip_overlap,
    smml_local_search,
    torus_problem,
    transport_cost_bound,
)
from .harness import (
    SweepRow,
    SweepSpec,
    parse_sweep_config,
    resolve_prior,
    rows_to_csv,
    run_sweep,
    simulate,
    trial_ratios,
)

__version__ = "0.1.0"
