"""
Experiment configuration and run manifests.

One JSON document per experiment, validated here. Unknown keys are rejected so
a typo never silently falls back to a default.
"""
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = 1

ExperimentId = Literal[
    "alpha", "onepoint", "twopoint", "npoint", "conformal", "gauss",
    "theta-boundary", "boundary-constants", "chaos", "convergence", "isometry",
]
EXPERIMENT_IDS: tuple[str, ...] = ExperimentId.__args__

Pair = Tuple[float, float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ==================== config ====================


class DomainSpec(_Strict):
    kind: Literal["disk", "square", "mapped_disk"] = "disk"
    center: Pair = (0.0, 0.0)
    radius: float = Field(1.0, gt=0)
    side: float = Field(2.0, gt=0)
    map: Literal["identity", "mobius", "cayley", "affine"] = "identity"
    a: Pair = (0.0, 0.0)
    scale: Pair = (1.0, 0.0)
    shift: Pair = (0.0, 0.0)

    def params(self) -> Dict[str, Any]:
        if self.kind == "disk":
            return {"center": self.center, "radius": self.radius}
        if self.kind == "square":
            return {"center": self.center, "side": self.side}
        return {"map": self.map, "a": self.a, "scale": self.scale, "shift": self.shift}


class FieldSpec(_Strict):
    lam: float = Field(1.0, gt=0)
    betas: List[float] = Field(default_factory=lambda: [0.5, 1.0])


class GaussSpec(_Strict):
    xi: float = Field(1.0, ge=0)


class CutoffSpec(_Strict):
    deltas: List[float] = Field(default_factory=lambda: [0.1])
    R: Optional[float] = 0.5
    eps_mass: float = Field(1e-3, gt=0, lt=1)
    rho_fraction: float = Field(1.0 / 32, gt=0, le=0.25)
    n_steps_max: int = Field(16384, ge=256)

    @field_validator("deltas")
    @classmethod
    def _positive(cls, v: List[float]) -> List[float]:
        if not v or any(d <= 0 for d in v):
            raise ValueError("deltas must be a non-empty list of positive cutoffs")
        return v


class GridSpec(_Strict):
    points: List[Pair] = Field(default_factory=lambda: [(0.0, 0.0)])
    h: float = Field(0.25, gt=0)


class TableSpec(_Strict):
    n_rep: int = Field(200, ge=2)
    lam_probe: float = Field(1.0, gt=0)
    directory: Optional[str] = None
    force: bool = False


class ExperimentOptions(_Strict):
    """Experiment-specific knobs; each experiment reads only its own."""

    action: Literal["run", "build", "check"] = "run"
    annulus_pairs: List[Pair] = Field(default_factory=lambda: [(0.1, 0.5), (0.05, 0.5), (0.1, 0.2)])
    max_stderr: float = 0.01
    skellam_lam: float = 2.0
    skellam_n_rep: int = 10000
    gof_min_p: float = 0.01
    pairs: List[Tuple[Pair, Pair]] = Field(default_factory=lambda: [
        ((0.0, 0.0), (0.3, 0.0)),
        ((-0.2, 0.1), (0.2, 0.1)),
        ((0.0, -0.3), (0.0, 0.2)),
        ((0.25, 0.25), (-0.2, -0.2)),
    ])
    two_point_delta: float = 0.05
    conformal_points: List[Pair] = Field(default_factory=lambda: [(0.2, 0.0), (-0.3, 0.2)])
    mobius_a: Pair = (0.4, 0.0)
    conformal_tolerance: float = 0.05
    n_samples: int = 10000
    csv_replicas: int = 100
    scale_levels: int = 4
    boundary_distances: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    ys: List[float] = Field(default_factory=lambda: [0.5, 1.0])
    rs: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    disk_delta: float = 0.05
    lam_ladder: List[float] = Field(default_factory=lambda: [100.0, 1000.0, 10000.0])
    orders: List[int] = Field(default_factory=lambda: [1, 2])
    q_max: int = Field(6, ge=6)
    isometry_beta: float = 0.3
    tail_n: int = 5
    simulate_max_lam: float = 100.0
    gap_tolerance: float = 0.01


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    experiment: ExperimentId
    domain: DomainSpec = Field(default_factory=DomainSpec)
    field: FieldSpec = Field(default_factory=FieldSpec)
    gauss: GaussSpec = Field(default_factory=GaussSpec)
    cutoffs: CutoffSpec = Field(default_factory=CutoffSpec)
    grid: GridSpec = Field(default_factory=GridSpec)
    table: TableSpec = Field(default_factory=TableSpec)
    options: ExperimentOptions = Field(default_factory=ExperimentOptions)
    n_rep: int = Field(200, ge=2)
    lam_probe: float = Field(1.0, gt=0)
    seed: int = Field(0, ge=0)
    output_dir: Optional[str] = None


class SuiteConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    seed: int = Field(0, ge=0)
    output_dir: Optional[str] = None
    determinism_experiment: ExperimentId = "onepoint"
    experiments: List[ExperimentConfig] = Field(default_factory=list)

    @model_validator(mode="after")
    def _default_experiments(self) -> "SuiteConfig":
        if not self.experiments:
            self.experiments = [ExperimentConfig(experiment=e, seed=self.seed) for e in EXPERIMENT_IDS]
        return self


# ==================== results ====================


class CriterionResult(BaseModel):
    id: int = Field(ge=1, le=15)
    name: str
    passed: bool
    measured: Dict[str, Any] = Field(default_factory=dict)
    tolerance: Dict[str, Any] = Field(default_factory=dict)
    experiment: Optional[str] = None


class RunManifest(BaseModel):
    experiment: str
    status: Literal["passed", "failed", "error"]
    config_hash: str
    code_version: str
    seed: int
    started_at: str
    finished_at: Optional[str] = None
    criteria: List[CriterionResult] = Field(default_factory=list)
    files: List[str] = Field(default_factory=list)
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.status == "passed"


class SuiteManifest(BaseModel):
    config_hash: str
    code_version: str
    started_at: str
    finished_at: Optional[str] = None
    runs: List[RunManifest] = Field(default_factory=list)
    criteria: List[CriterionResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.criteria) and all(c.passed for c in self.criteria)
