"""Pairwise-margin influence accounting for ranking models."""

from .core import (
    AdditiveModel,
    BlackBoxModel,
    ItemTable,
    LinearModel,
    ModelState,
    PairDistribution,
    QuadraticModel,
    ScoringModel,
    build_pair_distribution,
    load_model,
    model_from_config,
    pair_margin,
    score_items,
)
from .errors import (
    AttributionError,
    DegenerateDataError,
    DisconnectedGraphError,
    EdgeFieldError,
    EmptySupportError,
    GeometryError,
    InfluenceLedgerError,
    InvalidInputError,
    TieError,
    UninformativePairError,
)
from .fields import (
    EdgeField,
    PairGraph,
    curl_table,
    cycle_residual,
    dimension_gap,
    factor_fields,
    field_from_attribution,
    field_from_scores,
    hodge_decompose,
    score_representability,
    triangle_curl,
)
from .geometry import (
    ActiveFactorContext,
    competition_graph,
    energy_identity,
    influence_at,
    jacobian,
    potential,
    rigidity_check,
    softmax_share,
)
from .ledger import (
    InfluenceReport,
    factor_contributions,
    global_influence,
    influence_exchange,
    influence_share,
    local_decomposition,
    refine_effort,
)
from .order import (
    Ranking,
    boundary_distance,
    chamber_label,
    flip_scan,
    gauge_fix,
    kendall_tau,
    normal_coordinate,
    ranking_from_scores,
)
from .paths import (
    PathSpec,
    curvature_report,
    margin_gradient,
    midpoint_linearize,
    mixed_partial,
    nonlinear_global,
    nonlinear_shares,
    parameter_sensitivity,
    path_attribute,
    pig,
    surface_flux_rect,
)

__version__ = "0.1.0"
