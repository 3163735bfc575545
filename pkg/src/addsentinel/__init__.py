"""Account-aware distribution-discrepancy defense for classification services.

Fits per-class Gaussian references on training features, keeps a per-account
sliding window of recent query features, scores each query's window against
the references with a weighted class-wise squared Fréchet distance, and
poisons responses for flagged accounts.
"""

from .calibration import CalibrationReport, calibrate_tau
from .discriminant import GaussianDiscriminant, discriminant_from_reference
from .estimator import AccountDiscrepancyDetector
from .gateway import (
    DefenseEngine,
    EngineStats,
    QueryRequest,
    QueryResponse,
    engine_stats,
)
from .metrics import aupr, auroc, fpr_at_tpr, separation_gap
from .reference import (
    ReferenceModel,
    fit_reference,
    load_reference,
    pooled_moments,
    save_reference,
)
from .scoring import (
    DetectorConfig,
    Verdict,
    apply_threshold,
    prepare_reference,
    score_add,
    score_energy,
    score_ew,
    score_gdd,
    score_msp,
)
from .stats import Moments, estimate_moments, frechet_distance, sqrtm_psd
from .synthetic import (
    StreamBatch,
    StreamSpec,
    SyntheticWorld,
    adaptive_engine,
    classify_gd,
    count_missed,
    evasion_threshold,
    fit_world_reference,
    gen_stream,
    make_world,
    missed_count_formula,
    sample_surrogate,
    sample_training,
)
from .windows import (
    AccountWindow,
    WindowStore,
    get_or_create_window,
    near_duplicate_rate,
    partition_by_class,
    push_queries,
)

__version__ = "0.1.0"

__all__ = [
    "AccountDiscrepancyDetector",
    "AccountWindow",
    "CalibrationReport",
    "DefenseEngine",
    "DetectorConfig",
    "EngineStats",
    "GaussianDiscriminant",
    "Moments",
    "QueryRequest",
    "QueryResponse",
    "ReferenceModel",
    "StreamBatch",
    "StreamSpec",
    "SyntheticWorld",
    "Verdict",
    "WindowStore",
    "adaptive_engine",
    "apply_threshold",
    "aupr",
    "auroc",
    "calibrate_tau",
    "classify_gd",
    "count_missed",
    "discriminant_from_reference",
    "engine_stats",
    "estimate_moments",
    "evasion_threshold",
    "fit_reference",
    "fit_world_reference",
    "fpr_at_tpr",
    "frechet_distance",
    "gen_stream",
    "get_or_create_window",
    "load_reference",
    "make_world",
    "missed_count_formula",
    "near_duplicate_rate",
    "partition_by_class",
    "pooled_moments",
    "prepare_reference",
    "push_queries",
    "sample_surrogate",
    "sample_training",
    "save_reference",
    "score_add",
    "score_energy",
    "score_ew",
    "score_gdd",
    "score_msp",
    "separation_gap",
    "sqrtm_psd",
]
