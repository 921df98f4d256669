"""
CSV and JSON persistence for experiment outputs.

Floats are written with repr so a rerun with the same seed produces the same
bytes and every value reloads exactly.
"""
import csv
import hashlib
import json
import os
from typing import Iterable, Sequence

import numpy as np
from pydantic import BaseModel

from ..errors import ConfigurationError
from ..logging import get_experiment_logger
from .models import ExperimentConfig, SuiteConfig

logger = get_experiment_logger(__name__)


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return int(value)
    return value


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def read_csv(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def write_json(path: str, data) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    if isinstance(data, BaseModel):
        data = data.model_dump(mode="json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
    return path


def config_hash(config: BaseModel) -> str:
    """SHA-256 of the canonical JSON dump (sorted keys)."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_experiment_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as f:
            return ExperimentConfig.model_validate_json(f.read())
    except ValueError as e:
        raise ConfigurationError(f"invalid experiment config {path}: {e}") from e


def load_suite_config(path: str) -> SuiteConfig:
    try:
        with open(path, encoding="utf-8") as f:
            return SuiteConfig.model_validate_json(f.read())
    except ValueError as e:
        raise ConfigurationError(f"invalid suite config {path}: {e}") from e


def csv_files(directory: str) -> list[str]:
    """Relative paths of every CSV below `directory`, sorted."""
    found = []
    for root, _dirs, files in os.walk(directory):
        for name in files:
            if name.endswith(".csv"):
                found.append(os.path.relpath(os.path.join(root, name), directory))
    return sorted(found)


def identical_csv_trees(a: str, b: str) -> tuple[bool, list[str]]:
    """Byte comparison of the CSV outputs of two run directories."""
    names_a, names_b = csv_files(a), csv_files(b)
    if names_a != names_b:
        return False, sorted(set(names_a) ^ set(names_b))
    differing = []
    for name in names_a:
        with open(os.path.join(a, name), "rb") as fa, open(os.path.join(b, name), "rb") as fb:
            if fa.read() != fb.read():
                differing.append(name)
    return not differing, differing
