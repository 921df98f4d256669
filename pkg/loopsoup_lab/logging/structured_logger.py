"""
Structured logging for experiment runs.

Three sinks hang off the `loopsoup_lab` logger:
- JSON Lines file (daily rotation, 7 files kept) for run history
- Redis Stream for live tailing of long Monte Carlo runs, only when LOOPSOUP_REDIS_URL is set
- console, human-readable

Records carry the current experiment id and stage, taken from the record's
`extra` or, failing that, from context variables set by ExperimentLogger.
"""
import json
import logging
import os
import threading
from contextlib import contextmanager
from contextvars import ContextVar
from datetime import datetime, timezone
from functools import partialmethod
from logging.handlers import TimedRotatingFileHandler
from typing import Iterator, Optional

import redis

from ..config import LOG_DIR, LOG_FILE, REDIS_STREAM_KEY, REDIS_STREAM_MAXLEN, REDIS_URL

ROOT_LOGGER = "loopsoup_lab"
CONTEXT_FIELDS = ("experiment", "stage")
CONSOLE_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

_context: dict[str, ContextVar[Optional[str]]] = {
    name: ContextVar(name, default=None) for name in CONTEXT_FIELDS
}


def log_entry(record: logging.LogRecord) -> dict:
    """The JSON document shared by the file and Redis sinks (without exception text)."""
    created = datetime.fromtimestamp(record.created, tz=timezone.utc).astimezone()
    entry = {
        "timestamp": created.isoformat(),
        "level": record.levelname,
        "message": record.getMessage(),
        "source": record.name,
    }
    for name in CONTEXT_FIELDS:
        value = getattr(record, name, None) or _context[name].get()
        if value:
            entry[name] = value
    return entry


class JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        entry = log_entry(record)
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, ensure_ascii=False)


class RedisStreamHandler(logging.Handler):
    """
    XADD every record to a capped Redis stream.

    The client connects on first use. Any connection or publish failure turns
    the sink off for the rest of the process; logging never raises into a run.
    """

    def __init__(self, redis_url: str = REDIS_URL, stream_key: str = REDIS_STREAM_KEY,
                 maxlen: int = REDIS_STREAM_MAXLEN):
        super().__init__()
        self.redis_url = redis_url
        self.stream_key = stream_key
        self.maxlen = maxlen
        self._client: Optional[redis.Redis] = None
        self._connect_lock = threading.Lock()
        self._off = not redis_url

    @property
    def disabled_sink(self) -> bool:
        return self._off

    def _connect(self) -> Optional[redis.Redis]:
        with self._connect_lock:
            if self._client is None and not self._off:
                try:
                    client = redis.from_url(self.redis_url, decode_responses=True,
                                            socket_connect_timeout=2, socket_timeout=2)
                    client.ping()
                    self._client = client
                except Exception:
                    self._off = True
        return self._client

    def emit(self, record: logging.LogRecord):
        if self._off:
            return
        try:
            client = self._client or self._connect()
            if client is not None:
                client.xadd(self.stream_key, log_entry(record), maxlen=self.maxlen, approximate=True)
        except Exception:
            self._off = True


class ExperimentLogger:
    """
    Logger wrapper that stamps the experiment id and stage on every record.

        logger = get_experiment_logger(__name__)
        logger.set_experiment("onepoint")
        with logger.stage("sampling"):
            logger.info("Sampling 2000 replica soups")

    The experiment and stage are also published through context variables so
    loggers of the core modules called meanwhile pick them up.
    """

    def __init__(self, name: str):
        self._logger = logging.getLogger(name)
        self._fields: dict[str, Optional[str]] = dict.fromkeys(CONTEXT_FIELDS)

    @property
    def name(self) -> str:
        return self._logger.name

    def _set(self, field: str, value: Optional[str]):
        self._fields[field] = value
        _context[field].set(value)

    def set_experiment(self, experiment: str):
        self._set("experiment", experiment)

    def set_stage(self, stage: str):
        self._set("stage", stage)

    @contextmanager
    def stage(self, stage: str) -> Iterator["ExperimentLogger"]:
        previous = self._fields["stage"]
        self.set_stage(stage)
        try:
            yield self
        finally:
            self._set("stage", previous)

    def clear(self):
        for field in CONTEXT_FIELDS:
            self._set(field, None)

    def log(self, level: int, msg: str, *args, **kwargs):
        extra = kwargs.setdefault("extra", {})
        for field, value in self._fields.items():
            if value:
                extra.setdefault(field, value)
        self._logger.log(level, msg, *args, **kwargs)

    debug = partialmethod(log, logging.DEBUG)
    info = partialmethod(log, logging.INFO)
    warning = partialmethod(log, logging.WARNING)
    error = partialmethod(log, logging.ERROR)
    critical = partialmethod(log, logging.CRITICAL)

    def exception(self, msg: str, *args, **kwargs):
        kwargs["exc_info"] = True
        self.log(logging.ERROR, msg, *args, **kwargs)


_loggers: dict[str, ExperimentLogger] = {}


def get_experiment_logger(name: str) -> ExperimentLogger:
    """Cached ExperimentLogger per module; use it instead of logging.getLogger()."""
    if name not in _loggers:
        _loggers[name] = ExperimentLogger(name)
    return _loggers[name]


def _attach(root: logging.Logger, handler: logging.Handler, formatter: logging.Formatter, level):
    handler.setFormatter(formatter)
    handler.setLevel(level)
    root.addHandler(handler)


def setup_structured_logging(level: int | str = logging.INFO, log_file: Optional[str] = None):
    """Install the file, Redis (if configured) and console sinks. Call once at CLI startup."""
    log_file = log_file or LOG_FILE
    os.makedirs(os.path.dirname(log_file) or LOG_DIR, exist_ok=True)

    root = logging.getLogger(ROOT_LOGGER)
    root.setLevel(level)
    root.handlers.clear()

    json_formatter = JsonFormatter()
    _attach(root, TimedRotatingFileHandler(log_file, when="D", interval=1, backupCount=7, encoding="utf-8"),
            json_formatter, level)
    if REDIS_URL:
        _attach(root, RedisStreamHandler(), json_formatter, level)
    _attach(root, logging.StreamHandler(), logging.Formatter(CONSOLE_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"), level)

    root.debug("Structured logging initialized", extra={"stage": "startup"})
