"""
Loop-measure masses (the α-quantities): exact formulas, Monte Carlo
estimators and the persisted AlphaTable.

The loop measure has infinite total mass, so sampling works on a truncated
candidate process: roots uniform on a bounding box, durations on
[t_min, t_max] with density ∝ t⁻², intensity λ·(2πt²)⁻¹ dt dz. Candidates are
thinned by trace ⊂ D and diameter ≥ δ. The truncation bias is bounded by
`CutoffConfig.bias_ledger` and must stay below ε_mass.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import optimize, special

from ..errors import (
    ConfigurationError,
    DiagonalError,
    MissingEntryError,
    ParameterError,
    RebuildRequiredError,
)
from ..logging import get_experiment_logger
from ..rng import stream
from .geometry import BoundingBox, Disk, Domain, MappedDisk, Square
from .loops import (
    N_STEPS_MAX,
    N_STEPS_MIN,
    RHO_FRACTION,
    Loop,
    default_resolution,
    path_diameter,
    refine_bridges,
    sample_bridges,
    steps_for_resolution,
)

logger = get_experiment_logger(__name__)

TABLE_SCHEMA_VERSION = 1
ANNULUS_RATE = 0.2  # μ(loops covering z, δ ≤ diam < R) = (1/5) ln(R/δ)

# first zero of J0; Dirichlet eigenvalue of Δ/2 on a disk of radius r is J0_ZERO²/(2r²)
J0_ZERO = float(special.jn_zeros(0, 1)[0])

# skeleton used to reject candidates before refinement
_SKELETON_STEPS = 16
# excursion allowance between skeleton samples, in units of √(t/n)
_SKELETON_MARGIN = 8.0
_CHUNK = 20000

RngLike = Union[np.random.Generator, int]


# ==================== estimates ====================


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n: int

    @classmethod
    def exact(cls, value: float) -> "Estimate":
        return cls(float(value), 0.0, 0)

    @classmethod
    def from_counts(cls, counts: np.ndarray, lam: float) -> "Estimate":
        """
        Mean count / λ. stderr is the larger of the Poisson value √(mean)/(λ√n)
        and the empirical replica stderr.
        """
        counts = np.asarray(counts, dtype=float)
        n = counts.size
        mean = counts.mean()
        poisson_se = math.sqrt(mean / n) / lam
        empirical_se = counts.std(ddof=1) / math.sqrt(n) / lam if n > 1 else 0.0
        return cls(float(mean / lam), float(max(poisson_se, empirical_se)), int(n))

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "Estimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        se = samples.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
        return cls(float(samples.mean()), float(se), int(n))

    def combined_stderr(self, *others: "Estimate") -> float:
        return math.sqrt(self.stderr ** 2 + sum(o.stderr ** 2 for o in others))

    def agrees_with(self, target: float, k: float = 3.0, extra: float = 0.0) -> bool:
        return abs(self.value - target) <= k * math.hypot(self.stderr, extra) + 1e-12

    def as_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "n": self.n}


# ==================== cutoffs ====================


def _enclosing_radius(domain: Domain) -> float:
    if isinstance(domain, Disk):
        return domain.radius
    if isinstance(domain, MappedDisk):
        return domain.diameter / 2
    if isinstance(domain, Square):
        return domain.side / math.sqrt(2)
    return domain.diameter


def short_time_bias(box_area: float, delta: float, t_min: float) -> float:
    """
    Mass of loops rooted in the box with duration < t_min and diameter ≥ δ.

    diameter ≥ δ forces an excursion ≥ δ/2 from the root, whose bridge
    probability is ≤ 4·exp(−δ²/(4t)); integrating against |box|/(2πt²) gives
    |box|·8/(πδ²)·exp(−δ²/(4 t_min)).
    """
    return box_area * 8.0 / (math.pi * delta ** 2) * math.exp(-delta ** 2 / (4.0 * t_min))


def long_time_bias(area: float, radius: float, t_max: float) -> float:
    """
    Mass of loops with duration > t_max staying inside a region of the given
    area contained in a ball of the given radius: ∫ t⁻¹ Tr P_t dt with
    Tr P_t ≤ e^{−λ₁t/2}·area/(πt), bounded by area/(π t_max²)·(2/λ₁)·e^{−λ₁ t_max/2}.
    """
    lam1 = J0_ZERO ** 2 / (2.0 * radius ** 2)
    return area / (math.pi * t_max ** 2) * (2.0 / lam1) * math.exp(-lam1 * t_max / 2.0)


@dataclass(frozen=True)
class CutoffConfig:
    delta: float
    t_min: float
    t_max: float
    box: BoundingBox
    eps_mass: float = 1e-3
    R: Optional[float] = None
    rho_fraction: float = RHO_FRACTION
    n_steps_min: int = N_STEPS_MIN
    n_steps_max: int = N_STEPS_MAX
    region_area: float = 0.0
    region_radius: float = 0.0

    def __post_init__(self):
        if self.delta <= 0:
            raise ParameterError("sampling requires δ > 0")
        if not 0 < self.t_min < self.t_max:
            raise ParameterError(f"need 0 < t_min < t_max, got {self.t_min}, {self.t_max}")
        if self.R is not None and self.R <= self.delta:
            raise ParameterError(f"IR cutoff R={self.R} must exceed δ={self.delta}")

    @property
    def candidate_mass(self) -> float:
        """Λ = |box|·(1/2π)(1/t_min − 1/t_max)."""
        return self.box.area / (2 * math.pi) * (1.0 / self.t_min - 1.0 / self.t_max)

    def bias_ledger(self) -> dict:
        short = short_time_bias(self.box.area, self.delta, self.t_min)
        if self.region_radius > 0:
            long = long_time_bias(self.region_area, self.region_radius, self.t_max)
        else:
            # no enclosing region declared: bound with the box's circumscribed ball
            radius = math.hypot(self.box.width, self.box.height)
            long = long_time_bias(self.box.area, radius, self.t_max)
        return {"short_time": short, "long_time": long, "total": short + long, "eps_mass": self.eps_mass}

    def check(self) -> "CutoffConfig":
        ledger = self.bias_ledger()
        if ledger["total"] > self.eps_mass:
            raise ConfigurationError(
                f"truncation bias {ledger['total']:.3g} exceeds ε_mass={self.eps_mass:.3g} "
                f"(short {ledger['short_time']:.3g}, long {ledger['long_time']:.3g})"
            )
        return self

    def with_delta(self, delta: float) -> "CutoffConfig":
        return CutoffConfig(delta, self.t_min, self.t_max, self.box, self.eps_mass, self.R,
                            self.rho_fraction, self.n_steps_min, self.n_steps_max,
                            self.region_area, self.region_radius)

    def describe(self) -> dict:
        d = asdict(self)
        d["box"] = asdict(self.box)
        return d

    @classmethod
    def for_domain(cls, domain: Domain, delta: float, eps_mass: float = 1e-3,
                   R: Optional[float] = None, center: Optional[complex] = None,
                   rho_fraction: float = RHO_FRACTION, n_steps_max: int = N_STEPS_MAX) -> "CutoffConfig":
        """
        Default truncation: half of ε_mass to each end.

        t_min = δ²/(8 ln(1/ε′)) makes the short-time bound equal ε_mass/2;
        t_max starts at d(D)² and grows until the long-time bound is ≤ ε_mass/2.
        With an IR cutoff R around `center`, only loops inside B(center, R)
        matter and the box shrinks to that ball's square.
        """
        if delta <= 0:
            raise ParameterError("sampling requires δ > 0")
        if R is not None and center is not None:
            box = BoundingBox.around(complex(center), R)
            dom = domain.bbox
            box = BoundingBox(max(box.x_min, dom.x_min), min(box.x_max, dom.x_max),
                              max(box.y_min, dom.y_min), min(box.y_max, dom.y_max))
            region_area, region_radius, scale = box.area, R, 2 * R
        else:
            box = domain.bbox
            region_area, region_radius, scale = domain.area, _enclosing_radius(domain), domain.diameter

        eps_prime = math.sqrt(eps_mass / 2 * math.pi * delta ** 2 / (8.0 * box.area))
        if eps_prime >= 1:
            eps_prime = 0.5
        t_min = delta ** 2 / (8.0 * math.log(1.0 / eps_prime))

        t_max = scale ** 2
        target = eps_mass / 2

        def excess(t):
            return long_time_bias(region_area, region_radius, t) - target

        if excess(t_max) > 0:
            hi = t_max
            while excess(hi) > 0:
                hi *= 2
            t_max = optimize.brentq(excess, t_max, hi)
        return cls(delta, t_min, t_max, box, eps_mass, R, rho_fraction, N_STEPS_MIN, n_steps_max,
                   region_area, region_radius).check()


# ==================== candidate sampler ====================


def _bbox_diagonal(paths: np.ndarray) -> np.ndarray:
    w = paths.real.max(axis=1) - paths.real.min(axis=1)
    h = paths.imag.max(axis=1) - paths.imag.min(axis=1)
    return np.hypot(w, h)


def _skeleton_filter(domain: Domain, paths: np.ndarray, durations: np.ndarray,
                     delta: float) -> np.ndarray:
    # a sample outside D rejects exactly; the diameter test keeps a margin for
    # unsampled excursions (per-loop miss probability below 1e-12)
    n = paths.shape[1] - 1
    inside = np.all(domain.contains(paths), axis=1)
    margin = _SKELETON_MARGIN * np.sqrt(durations / n)
    return inside & (_bbox_diagonal(paths) + margin >= delta)


def sample_loops(domain: Domain, lam: float, cutoffs: CutoffConfig,
                 rng: np.random.Generator) -> list[Loop]:
    """
    One realization of the truncated loop soup of intensity λ: loops in D with
    diameter ≥ δ (and < R when an IR cutoff is set).
    """
    if lam <= 0:
        raise ParameterError("intensity λ must be positive")
    n_candidates = int(rng.poisson(lam * cutoffs.candidate_mass))
    inv_min, inv_max = 1.0 / cutoffs.t_min, 1.0 / cutoffs.t_max
    base_levels = int(round(math.log2(cutoffs.n_steps_min / _SKELETON_STEPS)))
    loops: list[Loop] = []

    for start in range(0, n_candidates, _CHUNK):
        k = min(_CHUNK, n_candidates - start)
        roots = cutoffs.box.uniform(rng, k)
        durations = 1.0 / (inv_min - rng.random(k) * (inv_min - inv_max))

        paths = sample_bridges(roots, durations, _SKELETON_STEPS, rng)
        keep = _skeleton_filter(domain, paths, durations, cutoffs.delta)
        paths, durations = paths[keep], durations[keep]
        if not len(paths):
            continue

        paths = refine_bridges(paths, durations, base_levels, rng)
        keep = _skeleton_filter(domain, paths, durations, cutoffs.delta)
        paths, durations = paths[keep], durations[keep]

        for path, t in zip(paths, durations):
            coarse = path_diameter(path)
            if cutoffs.R is not None and coarse >= cutoffs.R:
                # sample diameters only underestimate, so this loop is out of range
                continue
            rho = default_resolution(cutoffs.delta, coarse, cutoffs.rho_fraction)
            n = steps_for_resolution(t, rho, cutoffs.n_steps_min, cutoffs.n_steps_max)
            levels = int(round(math.log2(n / cutoffs.n_steps_min)))
            if levels:
                path = refine_bridges(path[None, :], np.array([t]), levels, rng)[0]
                if not domain.contains_path(path):
                    continue
            diameter = path_diameter(path)
            if diameter < cutoffs.delta or (cutoffs.R is not None and diameter >= cutoffs.R):
                continue
            loop = Loop(complex(path[0]), float(t), path,
                        default_resolution(cutoffs.delta, diameter, cutoffs.rho_fraction))
            loop.__dict__["diameter"] = diameter
            loops.append(loop)

    logger.debug(f"Sampled {len(loops)} loops from {n_candidates} candidates (λ={lam})")
    return loops


def replica_rngs(rng: RngLike, n_rep: int, module_tag: str) -> list[np.random.Generator]:
    """Integer seeds give per-replica streams; a Generator is shared sequentially."""
    if isinstance(rng, np.random.Generator):
        return [rng] * n_rep
    return [stream(int(rng), i, module_tag) for i in range(n_rep)]


def count_replicas(domain: Domain, lam: float, cutoffs: CutoffConfig, n_rep: int, rng: RngLike,
                    counter: Callable[[list[Loop]], np.ndarray], tag: str) -> np.ndarray:
    rows = []
    for i, r in enumerate(replica_rngs(rng, n_rep, tag)):
        rows.append(counter(sample_loops(domain, lam, cutoffs, r)))
        if (i + 1) % 500 == 0:
            logger.info(f"{tag}: {i + 1}/{n_rep} replicas")
    return np.asarray(rows, dtype=float)


# ==================== exact masses ====================


def alpha_exact_annulus(delta: float, R: float) -> float:
    """(1/5) ln(R/δ), the mass of loops covering z with δ ≤ diam < R when B(z,R) ⊂ D."""
    if delta <= 0 or R <= 0:
        raise ParameterError("cutoffs must be positive")
    if delta > R:
        raise ParameterError(f"annulus needs δ ≤ R, got δ={delta}, R={R}")
    return ANNULUS_RATE * math.log(R / delta)


def alpha_upper_bound(domain: Domain, delta: float) -> float:
    """(1/5) ln(d(D)/δ) bounds α_δ(z) for every z ∈ D; zero once δ ≥ d(D)."""
    if delta <= 0:
        raise ParameterError("δ must be positive")
    if delta >= domain.diameter:
        return 0.0
    return ANNULUS_RATE * math.log(domain.diameter / delta)


# ==================== Monte Carlo masses ====================


def _default_cutoffs(domain, delta, cutoffs, eps_mass, R=None, center=None):
    if cutoffs is not None:
        return cutoffs.check()
    return CutoffConfig.for_domain(domain, delta, eps_mass=eps_mass, R=R, center=center)


def estimate_alpha(domain: Domain, z: complex, delta: float, lam_probe: float, n_rep: int,
                   rng: RngLike, cutoffs: Optional[CutoffConfig] = None,
                   R: Optional[float] = None, eps_mass: float = 1e-3) -> Estimate:
    """α_δ(z) (or α_{δ,R}(z)) as mean cover count / λ_probe over replica soups."""
    z = complex(z)
    domain.boundary_distance(z)
    if delta >= domain.diameter:
        return Estimate(0.0, 0.0, n_rep)
    center = z if R is not None and R <= domain.boundary_distance(z) else None
    cutoffs = _default_cutoffs(domain, delta, cutoffs, eps_mass, R=R, center=center)

    def count(loops):
        return np.array([sum(1 for lp in loops
                             if lp.diameter >= delta and (R is None or lp.diameter < R)
                             and lp.covers(z)[()])])

    counts = count_replicas(domain, lam_probe, cutoffs, n_rep, rng, count, "alpha")[:, 0]
    return Estimate.from_counts(counts, lam_probe)


def estimate_alpha_pair(domain: Domain, z: complex, w: complex, n_rep: int, rng: RngLike,
                        lam_probe: float = 1.0, cutoffs: Optional[CutoffConfig] = None,
                        eps_mass: float = 1e-3) -> Estimate:
    """α(z,w): mass of loops whose hull contains both points."""
    z, w = complex(z), complex(w)
    if z == w:
        raise DiagonalError("α(z,z) is infinite")
    domain.boundary_distance(np.array([z, w]))
    sep = abs(z - w)
    if sep >= domain.diameter:
        return Estimate(0.0, 0.0, n_rep)
    cutoffs = _default_cutoffs(domain, sep, cutoffs, eps_mass)

    def count(loops):
        return np.array([sum(1 for lp in loops if np.all(lp.covers(np.array([z, w]))))])

    counts = count_replicas(domain, lam_probe, cutoffs, n_rep, rng, count, "alpha_pair")[:, 0]
    return Estimate.from_counts(counts, lam_probe)


def estimate_alpha_conditional(domain: Domain, z: complex, w: complex, delta: float, n_rep: int,
                               rng: RngLike, lam_probe: float = 1.0,
                               cutoffs: Optional[CutoffConfig] = None, eps_mass: float = 1e-3) -> Estimate:
    """α_δ(z|w): loops of diameter ≥ δ covering z but not w."""
    z, w = complex(z), complex(w)
    if delta > abs(z - w):
        raise ParameterError(f"conditional mass needs δ ≤ |z − w|, got δ={delta}, |z − w|={abs(z - w)}")
    cutoffs = _default_cutoffs(domain, delta, cutoffs, eps_mass)

    def count(loops):
        n = 0
        for lp in loops:
            if lp.diameter >= delta:
                cz, cw = lp.covers(np.array([z, w]))
                n += int(cz and not cw)
        return np.array([n])

    counts = count_replicas(domain, lam_probe, cutoffs, n_rep, rng, count, "alpha_cond")[:, 0]
    return Estimate.from_counts(counts, lam_probe)


def estimate_alpha_ball(domain: Domain, z: complex, delta: float, n_rep: int, rng: RngLike,
                        lam_probe: float = 1.0, cutoffs: Optional[CutoffConfig] = None,
                        eps_mass: float = 1e-3) -> Estimate:
    """ᾱ_δ(z): loops covering z that are not contained in B(z, δ)."""
    z = complex(z)
    # such loops reach distance δ from z and surround z, so their diameter is ≥ δ
    cutoffs = _default_cutoffs(domain, delta, cutoffs, eps_mass)

    def count(loops):
        return np.array([sum(1 for lp in loops if lp.max_distance(z)[0] >= delta and lp.covers(z)[()])])

    counts = count_replicas(domain, lam_probe, cutoffs, n_rep, rng, count, "alpha_ball")[:, 0]
    return Estimate.from_counts(counts, lam_probe)


# ==================== AlphaTable ====================

KINDS = ("alpha", "alpha_pair", "alpha_cond", "alpha_ball")
_KEY_DIGITS = 12


def _pkey(z: Optional[complex]) -> Optional[tuple[float, float]]:
    if z is None:
        return None
    z = complex(z)
    return (round(z.real, _KEY_DIGITS), round(z.imag, _KEY_DIGITS))


def _dkey(delta: Optional[float]) -> Optional[float]:
    return None if delta is None else round(float(delta), _KEY_DIGITS)


@dataclass(frozen=True)
class TableBudget:
    n_rep: int = 200
    lam_probe: float = 1.0
    eps_mass: float = 1e-3
    rho_fraction: float = RHO_FRACTION
    n_steps_max: int = N_STEPS_MAX


@dataclass
class AlphaTable:
    domain: dict
    points: np.ndarray
    metadata: dict = field(default_factory=dict)
    entries: dict = field(default_factory=dict)

    def set(self, kind: str, z: complex, estimate: Estimate, w: Optional[complex] = None,
            delta: Optional[float] = None):
        if kind not in KINDS:
            raise ParameterError(f"unknown table kind {kind}")
        if estimate.value < 0:
            raise ParameterError(f"negative mass for {kind} at {z}")
        if kind == "alpha_pair":
            z, w = sorted([complex(z), complex(w)], key=lambda c: (c.real, c.imag))
        self.entries[(kind, _pkey(z), _pkey(w), _dkey(delta))] = estimate

    def get(self, kind: str, z: complex, w: Optional[complex] = None,
            delta: Optional[float] = None) -> Estimate:
        if kind == "alpha_pair":
            if complex(z) == complex(w):
                raise DiagonalError("α(z,z) is infinite")
            z, w = sorted([complex(z), complex(w)], key=lambda c: (c.real, c.imag))
        key = (kind, _pkey(z), _pkey(w), _dkey(delta))
        try:
            return self.entries[key]
        except KeyError:
            raise MissingEntryError(f"no {kind} entry for z={z}, w={w}, δ={delta}") from None

    def has(self, kind: str, z: complex, w: Optional[complex] = None, delta: Optional[float] = None) -> bool:
        try:
            self.get(kind, z, w, delta)
            return True
        except (MissingEntryError, DiagonalError):
            return False

    def alpha(self, z: complex, delta: float) -> Estimate:
        return self.get("alpha", z, delta=delta)

    def alpha_pair(self, z: complex, w: complex) -> Estimate:
        return self.get("alpha_pair", z, w)

    def alpha_cond(self, z: complex, w: complex, delta: float) -> Estimate:
        return self.get("alpha_cond", z, w, delta)

    def alpha_ball(self, z: complex, delta: float) -> Estimate:
        return self.get("alpha_ball", z, delta=delta)

    def pair_matrix(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """α(z_i, z_j) and stderr for i ≠ j; the diagonal is left at zero."""
        k = len(points)
        values = np.zeros((k, k))
        errors = np.zeros((k, k))
        for i in range(k):
            for j in range(i + 1, k):
                e = self.alpha_pair(points[i], points[j])
                values[i, j] = values[j, i] = e.value
                errors[i, j] = errors[j, i] = e.stderr
        return values, errors

    # ---------- persistence ----------

    def save(self, directory: str):
        os.makedirs(directory, exist_ok=True)
        for kind in KINDS:
            with open(os.path.join(directory, f"{kind}.csv"), "w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f)
                writer.writerow(["z_re", "z_im", "w_re", "w_im", "delta", "value", "stderr", "n"])
                for (k, z, w, d), e in sorted(self.entries.items(), key=lambda kv: repr(kv[0])):
                    if k != kind:
                        continue
                    writer.writerow([
                        repr(z[0]), repr(z[1]),
                        "" if w is None else repr(w[0]), "" if w is None else repr(w[1]),
                        "" if d is None else repr(d),
                        repr(e.value), repr(e.stderr), e.n,
                    ])
        with open(os.path.join(directory, "metadata.json"), "w", encoding="utf-8") as f:
            json.dump(self.metadata, f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, directory: str) -> "AlphaTable":
        with open(os.path.join(directory, "metadata.json"), encoding="utf-8") as f:
            metadata = json.load(f)
        points = np.array([complex(x, y) for x, y in metadata.get("points", [])])
        table = cls(domain=metadata.get("domain", {}), points=points, metadata=metadata)
        for kind in KINDS:
            path = os.path.join(directory, f"{kind}.csv")
            if not os.path.exists(path):
                continue
            with open(path, newline="", encoding="utf-8") as f:
                for row in csv.DictReader(f):
                    z = (float(row["z_re"]), float(row["z_im"]))
                    w = None if row["w_re"] == "" else (float(row["w_re"]), float(row["w_im"]))
                    d = None if row["delta"] == "" else float(row["delta"])
                    table.entries[(kind, z, w, d)] = Estimate(float(row["value"]), float(row["stderr"]), int(row["n"]))
        return table

    # ---------- invariants ----------

    def check(self, domain: Domain, k: float = 3.0) -> dict:
        """Sandwich, upper-bound and additivity checks over every stored entry."""
        report = {"sandwich": [], "upper_bound": [], "additivity": []}
        for (kind, z, _w, d), e in self.entries.items():
            if kind != "alpha":
                continue
            zc = complex(*z)
            bound = alpha_upper_bound(domain, d)
            report["upper_bound"].append(e.value <= bound + k * e.stderr)
            if self.has("alpha_ball", zc, delta=d) and self.has("alpha_ball", zc, delta=d / 2):
                lo, hi = self.alpha_ball(zc, d), self.alpha_ball(zc, d / 2)
                report["sandwich"].append(
                    lo.value <= e.value + k * lo.combined_stderr(e)
                    and e.value <= hi.value + k * hi.combined_stderr(e)
                )
            for wc in self.points:
                if complex(wc) == zc or abs(complex(wc) - zc) < d:
                    continue
                if self.has("alpha_cond", zc, wc, d):
                    cond, pair = self.alpha_cond(zc, wc, d), self.alpha_pair(zc, wc)
                    report["additivity"].append(
                        abs(cond.value + pair.value - e.value) <= k * e.combined_stderr(cond, pair) + 1e-12
                    )
        report["passed"] = all(all(v) for v in report.values() if isinstance(v, list))
        return report


def _table_metadata(domain: Domain, points: np.ndarray, deltas: Sequence[float],
                    budget: TableBudget, seed: int) -> dict:
    return {
        "schema_version": TABLE_SCHEMA_VERSION,
        "domain": domain.describe(),
        "points": [[float(p.real), float(p.imag)] for p in points],
        "deltas": [float(d) for d in deltas],
        "budget": asdict(budget),
        "seed": int(seed),
    }


def _same_build(stored: dict, requested: dict) -> bool:
    return {k: v for k, v in stored.items() if k not in ("created", "cutoffs")} == requested


def build_alpha_table(domain: Domain, grid: Sequence[complex], deltas: Sequence[float],
                      budget: TableBudget, seed: int, directory: Optional[str] = None,
                      force: bool = False) -> AlphaTable:
    """
    Estimate every α entry for the grid from one shared set of replica soups.

    Entries: α_δ(z) for δ in `deltas` and at d_z and every d_{z,w}; α(z,w) for all
    pairs; α_δ(z|w) for δ ≤ |z−w| and at d_{z,w}; ᾱ_δ(z) at δ and δ/2. Sharing
    the soups makes set inclusions (sandwich, additivity) hold replica by replica.
    """
    points = np.asarray([complex(p) for p in grid])
    if len(set(map(_pkey, points))) != len(points):
        raise ParameterError("grid points must be pairwise distinct")
    d_z = np.atleast_1d(domain.boundary_distance(points))
    requested = _table_metadata(domain, points, deltas, budget, seed)

    if directory and os.path.exists(os.path.join(directory, "metadata.json")):
        table = AlphaTable.load(directory)
        if _same_build(table.metadata, requested):
            logger.info(f"Reusing AlphaTable from {directory}")
            return table
        if not force:
            raise RebuildRequiredError(f"AlphaTable in {directory} was built with different metadata")
        logger.warning(f"Rebuilding stale AlphaTable in {directory}")

    k = len(points)
    sep = np.abs(points[:, None] - points[None, :])

    alpha_keys: list[tuple[int, float]] = []
    for i in range(k):
        cuts = set(_dkey(d) for d in deltas) | {_dkey(d_z[i])}
        cuts |= {_dkey(min(sep[i, j], d_z[i])) for j in range(k) if j != i}
        alpha_keys += [(i, c) for c in sorted(cuts)]
    ball_keys = [(i, c) for i in range(k) for c in sorted({_dkey(d) for d in deltas} | {_dkey(d / 2) for d in deltas})]
    pair_keys = [(i, j) for i in range(k) for j in range(i + 1, k)]
    cond_keys: list[tuple[int, int, float]] = []
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            cuts = {_dkey(d) for d in deltas if d <= sep[i, j]} | {_dkey(min(sep[i, j], d_z[i]))}
            cond_keys += [(i, j, c) for c in sorted(cuts)]

    cut_values = [c for _, c in alpha_keys] + [c for _, c in ball_keys]
    if pair_keys:
        cut_values.append(min(sep[i, j] for i, j in pair_keys))
    delta0 = min(cut_values)
    cutoffs = CutoffConfig.for_domain(domain, delta0, eps_mass=budget.eps_mass,
                                      rho_fraction=budget.rho_fraction, n_steps_max=budget.n_steps_max)
    logger.info(
        f"Building AlphaTable: {k} points, {len(alpha_keys)} α, {len(pair_keys)} pairs, "
        f"{len(cond_keys)} conditional, δ₀={delta0:.4g}, Λ={cutoffs.candidate_mass:.4g}"
    )

    ai = np.array([i for i, _ in alpha_keys], dtype=int)
    ad = np.array([c for _, c in alpha_keys])
    bi = np.array([i for i, _ in ball_keys], dtype=int)
    bd = np.array([c for _, c in ball_keys])
    pi_ = np.array([i for i, _ in pair_keys], dtype=int)
    pj = np.array([j for _, j in pair_keys], dtype=int)
    ci = np.array([i for i, _, _ in cond_keys], dtype=int)
    cj = np.array([j for _, j, _ in cond_keys], dtype=int)
    cd = np.array([c for _, _, c in cond_keys])

    def count(loops: list[Loop]) -> np.ndarray:
        n_a, n_b = np.zeros(len(ai)), np.zeros(len(bi))
        n_p, n_c = np.zeros(len(pi_)), np.zeros(len(ci))
        for lp in loops:
            cover = lp.covers(points)
            if not cover.any():
                continue
            diam = lp.diameter
            n_a += cover[ai] & (diam >= ad)
            reach = lp.max_distance(points)
            n_b += cover[bi] & (reach[bi] >= bd)
            n_p += cover[pi_] & cover[pj]
            n_c += cover[ci] & ~cover[cj] & (diam >= cd)
        return np.concatenate([n_a, n_b, n_p, n_c])

    counts = count_replicas(domain, budget.lam_probe, cutoffs, budget.n_rep, seed, count, "alpha_table")
    if counts.ndim == 1:
        counts = counts.reshape(budget.n_rep, -1)

    metadata = dict(requested)
    metadata["cutoffs"] = cutoffs.describe()
    metadata["created"] = datetime.now(timezone.utc).isoformat()
    table = AlphaTable(domain=domain.describe(), points=points, metadata=metadata)

    col = 0
    for i, c in alpha_keys:
        table.set("alpha", points[i], Estimate.from_counts(counts[:, col], budget.lam_probe), delta=c)
        col += 1
    for i, c in ball_keys:
        table.set("alpha_ball", points[i], Estimate.from_counts(counts[:, col], budget.lam_probe), delta=c)
        col += 1
    for i, j in pair_keys:
        table.set("alpha_pair", points[i], Estimate.from_counts(counts[:, col], budget.lam_probe), w=points[j])
        col += 1
    for i, j, c in cond_keys:
        table.set("alpha_cond", points[i], Estimate.from_counts(counts[:, col], budget.lam_probe),
                  w=points[j], delta=c)
        col += 1

    if directory:
        table.save(directory)
        logger.info(f"AlphaTable saved to {directory}")
    return table
