"""EPON IPTV caching and channel-multicast simulator."""

from ._core import (
    CacheConfig,
    CacheDecision,
    CachePolicy,
    ConfigError,
    ProtocolError,
    SegmentCache,
    SegmentStats,
    TraceError,
    TraceRecord,
    cache_bench,
    config_hash,
    config_reference,
    generate_trace,
    ipdv,
    make_cache,
    mean_abs_ipdv,
    next_request_probability,
    protocol_check,
    recency_factor,
    simulate,
    utility1,
    utility2,
)

__all__ = [
    "CacheConfig",
    "CacheDecision",
    "CachePolicy",
    "ConfigError",
    "ProtocolError",
    "SegmentCache",
    "SegmentStats",
    "TraceError",
    "TraceRecord",
    "cache_bench",
    "config_hash",
    "config_reference",
    "generate_trace",
    "ipdv",
    "make_cache",
    "mean_abs_ipdv",
    "next_request_probability",
    "protocol_check",
    "recency_factor",
    "simulate",
    "utility1",
    "utility2",
]
