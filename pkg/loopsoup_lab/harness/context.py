"""
Per-run state shared by the experiment runners: domain, seeds, soups,
AlphaTable cache and the list of files written.
"""
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Sequence

import numpy as np

from ..config import TABLE_DIR
from ..core.geometry import Domain, make_domain
from ..core.loopmeasure import AlphaTable, CutoffConfig, TableBudget, build_alpha_table
from ..core.soup import FieldParams, SignedSoup, sample_signed_soup
from ..logging import get_experiment_logger
from ..rng import child_seed, stream
from . import io
from .models import CriterionResult, ExperimentConfig

logger = get_experiment_logger(__name__)


def criterion(cid: int, name: str, passed: bool, measured: Optional[dict] = None,
              tolerance: Optional[dict] = None) -> CriterionResult:
    return CriterionResult(id=cid, name=name, passed=bool(passed), measured=measured or {},
                           tolerance=tolerance or {})


@dataclass
class RunContext:
    config: ExperimentConfig
    out_dir: str
    files: list[str] = field(default_factory=list)

    @cached_property
    def domain(self) -> Domain:
        spec = self.config.domain
        return make_domain(spec.kind, **spec.params())

    @cached_property
    def points(self) -> np.ndarray:
        return np.array([complex(x, y) for x, y in self.config.grid.points])

    def rng(self, tag: str, index: int = 0) -> np.random.Generator:
        return stream(self.config.seed, index, tag)

    def seed_for(self, tag: str, index: int = 0) -> int:
        return child_seed(self.rng(tag, index))

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def write_csv(self, name: str, header: Sequence[str], rows) -> str:
        path = io.write_csv(self.path(name), header, rows)
        self.files.append(name)
        logger.info(f"Wrote {name}")
        return path

    def cutoffs(self, delta: float, R: Optional[float] = None, center: Optional[complex] = None) -> CutoffConfig:
        spec = self.config.cutoffs
        return CutoffConfig.for_domain(self.domain, delta, eps_mass=spec.eps_mass, R=R, center=center,
                                       rho_fraction=spec.rho_fraction, n_steps_max=spec.n_steps_max)

    def soups(self, params: FieldParams, cutoffs: CutoffConfig, n_rep: int, tag: str) -> Iterator[SignedSoup]:
        """Replica soups on independent streams (seed, replica, tag)."""
        for i in range(n_rep):
            yield sample_signed_soup(self.domain, params, cutoffs, self.rng(tag, i), seed=self.config.seed)

    # ---------- AlphaTable ----------

    def budget(self) -> TableBudget:
        spec, cut = self.config.table, self.config.cutoffs
        return TableBudget(n_rep=spec.n_rep, lam_probe=spec.lam_probe, eps_mass=cut.eps_mass,
                           rho_fraction=cut.rho_fraction, n_steps_max=cut.n_steps_max)

    def table_directory(self, points: Sequence[complex], deltas: Sequence[float], seed: int) -> str:
        if self.config.table.directory:
            return self.config.table.directory
        key = json.dumps({
            "domain": self.domain.describe(),
            "points": [[float(complex(p).real), float(complex(p).imag)] for p in points],
            "deltas": [float(d) for d in deltas],
            "budget": asdict(self.budget()),
            "seed": seed,
        }, sort_keys=True)
        return os.path.join(TABLE_DIR, hashlib.sha256(key.encode("utf-8")).hexdigest()[:16])

    def table(self, points: Sequence[complex], deltas: Sequence[float]) -> AlphaTable:
        """Build or reuse the AlphaTable for these points and cutoffs."""
        deltas = sorted({float(d) for d in deltas})
        seed = self.seed_for("alpha_table")
        directory = self.table_directory(points, deltas, seed)
        return build_alpha_table(self.domain, points, deltas, self.budget(), seed,
                                 directory=directory, force=self.config.table.force)
