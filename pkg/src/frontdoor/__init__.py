"""Average treatment effects from testable generalized front-door conditions."""

from .graph import (
    GraphError,
    Roles,
    SeparationQuery,
    Smcm,
    add_regime_node,
    ancestors,
    check_assumptions,
    descendants,
    format_smcm,
    m_separated,
    parse_smcm,
    remove_incoming,
    remove_outgoing,
)
from .data import AuditManifest, DataError, DataTable
from .citest import CiMethod, CiResult, test_ci, test_ci_unconditional
from .ensemble import EnsembleParams, ScanOutcome, run_ensemble, sample_smcm, scan_graph
from .sem import SemModel, draw_model, generate, true_ate
from .adjust import (
    DiscreteJoint,
    RegressionModel,
    ate_frontdoor_naive,
    ate_plugin,
    ate_twostage_fig3,
    eval_generalized_frontdoor_discrete,
    fit_outcome_regression,
)
from .search import (
    AdmissibleSet,
    AteReport,
    SearchConfig,
    SearchRoles,
    bootstrap_pvalues,
    run_algorithm1,
    select_witness,
)

__version__ = "0.1.0"

__all__ = [
    "GraphError", "Roles", "SeparationQuery", "Smcm", "add_regime_node", "ancestors",
    "check_assumptions", "descendants", "format_smcm", "m_separated", "parse_smcm",
    "remove_incoming", "remove_outgoing",
    "AuditManifest", "DataError", "DataTable",
    "CiMethod", "CiResult", "test_ci", "test_ci_unconditional",
    "EnsembleParams", "ScanOutcome", "run_ensemble", "sample_smcm", "scan_graph",
    "SemModel", "draw_model", "generate", "true_ate",
    "DiscreteJoint", "RegressionModel", "ate_frontdoor_naive", "ate_plugin",
    "ate_twostage_fig3", "eval_generalized_frontdoor_discrete", "fit_outcome_regression",
    "AdmissibleSet", "AteReport", "SearchConfig", "SearchRoles", "bootstrap_pvalues",
    "run_algorithm1", "select_witness",
]
