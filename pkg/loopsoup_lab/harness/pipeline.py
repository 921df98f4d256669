"""
Experiment pipeline - runs experiments, writes manifests, checks determinism
"""
import os
import shutil
import tempfile
from datetime import datetime, timezone
from typing import Optional

from .. import __version__
from ..config import OUTPUT_DIR
from ..errors import LoopSoupError
from ..logging import get_experiment_logger
from . import io
from .context import RunContext, criterion
from .experiments import CRITERION_OWNERS, EXPERIMENTS
from .models import CriterionResult, ExperimentConfig, RunManifest, SuiteConfig, SuiteManifest
from .sweep import convergence_sweep

logger = get_experiment_logger(__name__)

__all__ = ["run_experiment", "run_suite", "convergence_sweep"]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _run_dir(config: ExperimentConfig, out_dir: Optional[str]) -> str:
    return out_dir or config.output_dir or os.path.join(OUTPUT_DIR, f"{config.experiment}-seed{config.seed}")


def run_experiment(config: ExperimentConfig, out_dir: Optional[str] = None) -> RunManifest:
    """
    Run one experiment and write its CSV files plus manifest.json.

    Library errors are recorded in the manifest with status "error" and never
    propagate; the manifest is always written.
    """
    out_dir = _run_dir(config, out_dir)
    os.makedirs(out_dir, exist_ok=True)

    logger.set_experiment(config.experiment)
    logger.set_stage("initializing")
    logger.info(f"Starting {config.experiment} (seed={config.seed}) -> {out_dir}")

    manifest = RunManifest(
        experiment=config.experiment,
        status="error",
        config_hash=io.config_hash(config),
        code_version=__version__,
        seed=config.seed,
        started_at=_now(),
    )
    ctx = RunContext(config, out_dir)
    try:
        criteria = EXPERIMENTS[config.experiment](ctx)
        manifest.criteria = [c.model_copy(update={"experiment": config.experiment}) for c in criteria]
        manifest.status = "passed" if all(c.passed for c in criteria) else "failed"
        for c in criteria:
            logger.info(f"Criterion {c.id} ({c.name}): {'PASS' if c.passed else 'FAIL'}")
    except (LoopSoupError, OSError) as e:
        logger.exception(f"{config.experiment} failed: {e}")
        manifest.error = f"{type(e).__name__}: {e}"

    # ==================== manifest ====================
    logger.set_stage("finishing")
    manifest.files = list(ctx.files)
    manifest.finished_at = _now()
    io.write_json(os.path.join(out_dir, "manifest.json"), manifest)
    logger.info(f"{config.experiment} finished with status {manifest.status}")
    logger.clear()
    return manifest


def _determinism_check(suite: SuiteConfig, reference_dir: str) -> CriterionResult:
    config = next((c for c in suite.experiments if c.experiment == suite.determinism_experiment), None)
    if config is None:
        config = ExperimentConfig(experiment=suite.determinism_experiment, seed=suite.seed)
    scratch = tempfile.mkdtemp(prefix="loopsoup-rerun-")
    try:
        if not os.path.isdir(reference_dir):
            run_experiment(config, reference_dir)
        run_experiment(config, scratch)
        same, differing = io.identical_csv_trees(reference_dir, scratch)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
    return criterion(15, "bit-identical rerun", same and bool(io.csv_files(reference_dir)),
                     {"experiment": config.experiment, "differing": differing}, {"bytes": "identical"})


def run_suite(suite: SuiteConfig, out_dir: Optional[str] = None) -> SuiteManifest:
    """Every configured experiment, then the determinism rerun; one verdict per criterion id."""
    out_dir = out_dir or suite.output_dir or os.path.join(OUTPUT_DIR, f"suite-seed{suite.seed}")
    os.makedirs(out_dir, exist_ok=True)
    manifest = SuiteManifest(config_hash=io.config_hash(suite), code_version=__version__, started_at=_now())

    for config in suite.experiments:
        manifest.runs.append(run_experiment(config, os.path.join(out_dir, config.experiment)))

    by_id = {c.id: c for run in manifest.runs for c in run.criteria}
    with logger.stage("determinism"):
        by_id[15] = _determinism_check(suite, os.path.join(out_dir, suite.determinism_experiment))
    for cid, owner in sorted(CRITERION_OWNERS.items()):
        if cid not in by_id:
            # the owning experiment was not configured or stopped with an error
            by_id[cid] = criterion(cid, f"not evaluated ({owner})", False)
    manifest.criteria = [by_id[cid] for cid in sorted(by_id)]

    manifest.finished_at = _now()
    io.write_json(os.path.join(out_dir, "suite_manifest.json"), manifest)
    failed = [c.id for c in manifest.criteria if not c.passed]
    logger.info(f"Suite finished: {len(manifest.criteria) - len(failed)}/{len(manifest.criteria)} criteria passed"
                + (f", failed {failed}" if failed else ""))
    logger.clear()
    return manifest
