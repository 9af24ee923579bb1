"""Peer-to-peer site recommendation from implicit feedback in community event logs."""
__version__ = "0.1.0"

from .context import RankingContext
from .events import EventKind, EventLog, EventRecord, parse_event_log, write_event_log
from .features import FeatureConfig, HashingEmbedder
from .feedback import extract_initiations
from .synthetic import SyntheticConfig, generate_synthetic_log

__all__ = ["EventKind", "EventLog", "EventRecord", "FeatureConfig", "HashingEmbedder", "RankingContext",
           "SyntheticConfig", "extract_initiations", "generate_synthetic_log", "parse_event_log",
           "write_event_log"]
