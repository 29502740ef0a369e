from .matching import MatchConfig, MatchPair, MatchResult, match, venn_stats
from .verdicts import StaleRevisionError, Verdict, VerdictError, VerdictLog

__all__ = [
    "MatchConfig",
    "MatchPair",
    "MatchResult",
    "StaleRevisionError",
    "Verdict",
    "VerdictError",
    "VerdictLog",
    "match",
    "venn_stats",
]
