"""Central ingestion, fusion, rules and persistence."""

from cattlesense.aggregator.engine import Aggregator, EventRecord, replay_records
from cattlesense.aggregator.eventlog import EventLog, iter_log
from cattlesense.aggregator.rules import RuleConfig, evaluate_environment

__all__ = [
    "Aggregator",
    "EventRecord",
    "EventLog",
    "RuleConfig",
    "evaluate_environment",
    "iter_log",
    "replay_records",
]
