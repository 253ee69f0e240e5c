"""Medical fact verification: decomposition, retrieval, verification and scoring."""

from ._medfact import (
    MedfactError,
    PassageIndex,
    cache_key,
    canonical_id,
    cohen_kappa,
    correlate,
    emit_report,
    parse_cot_response,
    render_prompt,
    resource,
    resource_names,
    run_cli,
    unanimous,
)

__all__ = [
    "MedfactError",
    "PassageIndex",
    "cache_key",
    "canonical_id",
    "cohen_kappa",
    "correlate",
    "emit_report",
    "parse_cot_response",
    "render_prompt",
    "resource",
    "resource_names",
    "run_cli",
    "unanimous",
]
