"""Keyword-pruning decision engine and rolling-window replay harness."""

__version__ = "0.1.0"

from .data import (
    Campaign,
    ExperimentLog,
    KeywordDayRecord,
    KeywordStats,
    SyntheticConfig,
    generate_synthetic_log,
    ingest_log,
    least_squares_slope,
    log_digest,
    scan_log,
    window_stats,
    write_log_csv,
)
from .errors import KwpruneError
from .gateway import LiveBackend, Role, ScriptedBackend
from .memory import MemoryStore, levenshtein, load_store, persist_store, retrieve_topk
from .plan import PruningPlan, interpret_plan, parse_plan, pretty_print
from .policies import (
    POLICY_NAMES,
    DecisionContext,
    PruningDecision,
    ctr_rank,
    cvr_rank,
    hindsight_oracle,
    identity_decide,
    impression_rank,
    impression_regression,
    kp_agent_decide,
)
from .simulator import (
    BudgetModel,
    SimulationAborted,
    SimulationConfig,
    SimulationTrace,
    budget_shares,
    compute_reward,
    run_experiment,
    summarize,
    write_manifest,
    write_summary_csv,
    write_trace_csv,
)
from .toolset import StatsTable

__all__ = [
    "__version__",
    "Campaign",
    "ExperimentLog",
    "KeywordDayRecord",
    "KeywordStats",
    "SyntheticConfig",
    "generate_synthetic_log",
    "ingest_log",
    "least_squares_slope",
    "log_digest",
    "scan_log",
    "window_stats",
    "write_log_csv",
    "KwpruneError",
    "LiveBackend",
    "Role",
    "ScriptedBackend",
    "MemoryStore",
    "levenshtein",
    "load_store",
    "persist_store",
    "retrieve_topk",
    "PruningPlan",
    "interpret_plan",
    "parse_plan",
    "pretty_print",
    "POLICY_NAMES",
    "DecisionContext",
    "PruningDecision",
    "ctr_rank",
    "cvr_rank",
    "hindsight_oracle",
    "identity_decide",
    "impression_rank",
    "impression_regression",
    "kp_agent_decide",
    "BudgetModel",
    "SimulationAborted",
    "SimulationConfig",
    "SimulationTrace",
    "budget_shares",
    "compute_reward",
    "run_experiment",
    "summarize",
    "write_manifest",
    "write_summary_csv",
    "write_trace_csv",
    "StatsTable",
]
