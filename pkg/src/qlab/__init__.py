"""Accessible fidelity, quantumness and maximal output norms of CP maps for pure-state ensembles."""

from .channels import (
    CpMap,
    HolevoMap,
    KrausMap,
    NuInfReport,
    check_eb_multiplicativity,
    completely_depolarizing,
    conjugated,
    eb_chain_check,
    identity_channel,
    nu_infinity,
    phi_from_ensemble,
    tensor_maps,
)
from .core import (
    Ensemble,
    JointDistribution,
    Povm,
    PureState,
    basis_ensemble,
    dominating_eigenvector,
    inv_sqrt,
    operator_norm,
    random_povm,
    random_pure_state,
    tensor,
)
from .discrimination import DiscriminationResult, discrimination_step, helstrom_value
from .errors import DimensionMismatch, InvalidInput, NotPositiveDefinite, NumericFailure, QlabError
from .fidelity import (
    Certificate,
    EavesdropStrategy,
    FidelityBracket,
    FidelityConfig,
    accessible_fidelity,
    accessible_fidelity_seesaw,
    dual_certificate_search,
    g_value,
    intercept_resend_fidelity,
    povm_to_ensemble,
)
from .products import (
    CorrelatedComposite,
    check_feasible_product,
    compose_correlated_strategy,
    product_ensemble,
    verify_correlated_bound,
    verify_multiplicativity,
)
from .quantumness import QuantumnessConfig, QuantumnessReport, max_fidelity_over_priors, quantumness

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
