"""Memory-activation recommender with mined production-rule reweighting."""

from .config import EngineConfig
from .datamodel import (
    BucketKind,
    ContextBucket,
    EventLog,
    Interaction,
    ItemSequence,
    UserGroupMap,
    bucketize,
    ingest_log,
    user_history,
)
from .declarative import (
    ActivationParams,
    ChunkStore,
    association_strength,
    base_level,
    score_candidates,
    spreading,
)
from .evalharness import MetricReport, SplitSpec, evaluate, temporal_split
from .procedural import (
    FiringRecord,
    PopularityCalibrationRule,
    ScopeWeights,
    apply_boosts,
    apply_popularity_calibration,
    boost_weight,
    match_rules,
)
from .recommend import Engine, Explanation, Recommendation, ablate, explain, recommend
from .rulemine import (
    ContextRule,
    MiningConfig,
    PeriodicRule,
    RuleSet,
    Scope,
    ScopedRule,
    SequentialRule,
    mine_contextual,
    mine_periodic,
    mine_scoped,
    mine_sequential,
)

__version__ = "0.1.0"
