"""Hybrid alert correlation engine: normalization, topology-aware entity
resolution, log-template signatures, frequent-itemset patterns, layered
correlation, root-cause localization, and feedback-driven refinement."""

from .correlate import AlertGroup, CorrelationConfig, SreRule, correlate, finalize_groups
from .errors import SigweaveError
from .feedback import FeedbackRecord, FeedbackStore, apply_feedback
from .localize import LocalizationResult, blast_radius, find_roots, localize_group
from .logsig import LogLine, LogStore, TemplateModel, build_signature, signature_similarity
from .mine import MiningConfig, PatternStore, frequent_itemsets, generate_rules, mine_patterns, windowize
from .model import AdapterConfig, NormalizedEvent, Severity, normalize_event
from .resolve import EnrichedEvent, EntityDictionary, EntityRef, MatcherRule, enrich_event
from .server import RunManifest, ServiceConfig, create_app, run_pipeline
from .topology import TopologyGraph

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "AlertGroup",
    "CorrelationConfig",
    "EnrichedEvent",
    "EntityDictionary",
    "EntityRef",
    "FeedbackRecord",
    "FeedbackStore",
    "LocalizationResult",
    "LogLine",
    "LogStore",
    "MatcherRule",
    "MiningConfig",
    "NormalizedEvent",
    "PatternStore",
    "RunManifest",
    "ServiceConfig",
    "Severity",
    "SigweaveError",
    "SreRule",
    "TemplateModel",
    "TopologyGraph",
    "apply_feedback",
    "blast_radius",
    "build_signature",
    "correlate",
    "create_app",
    "enrich_event",
    "finalize_groups",
    "find_roots",
    "frequent_itemsets",
    "generate_rules",
    "localize_group",
    "mine_patterns",
    "normalize_event",
    "run_pipeline",
    "signature_similarity",
    "windowize",
    "__version__",
]
