"""
Structured Logging Module

JSON Lines file logging with experiment/stage context, optional Redis Stream sink.
"""
from .structured_logger import (
    setup_structured_logging,
    get_experiment_logger,
    ExperimentLogger,
    JsonFormatter,
    RedisStreamHandler,
)

__all__ = [
    "setup_structured_logging",
    "get_experiment_logger",
    "ExperimentLogger",
    "JsonFormatter",
    "RedisStreamHandler",
]
