"""
One-, two- and n-point functions of the Poisson layering field.

All closed forms are exponentials of estimated loop masses; uncertainty is
propagated to first order (delta method) and returned as an Estimate.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import MissingEntryError, ParameterError
from ..logging import get_experiment_logger
from .geometry import Domain, MobiusMap, PointPair
from .loopmeasure import AlphaTable, CutoffConfig, Estimate, RngLike, count_replicas
from .soup import FieldParams, conformal_weight

logger = get_experiment_logger(__name__)

MAX_POINTS = 4


def one_point_limit(domain: Domain, z: complex, params: FieldParams, table: AlphaTable) -> Estimate:
    """⟨V(z)⟩ = d_z^{2Δ}·exp(10Δ·α_{d_z}(z))."""
    dz = domain.boundary_distance(z)
    a = table.alpha(z, dz)
    delta = params.delta
    value = dz ** (2 * delta) * math.exp(10 * delta * a.value)
    return Estimate(value, value * 10 * delta * a.stderr, a.n)


def two_point_cutoff(z: complex, w: complex, delta: float, delta_p: float, beta: float, beta_p: float,
                     lam: float, table: AlphaTable) -> Estimate:
    """E[V^δ(z)V^{δ′}(w)] for δ, δ′ < |z−w| (raw fields)."""
    sep = abs(complex(z) - complex(w))
    if delta >= sep or delta_p >= sep:
        raise ParameterError(f"cutoffs ({delta}, {delta_p}) must be below the separation {sep:.4g}")
    a_z = table.alpha_cond(z, w, delta)
    a_zw = table.alpha_pair(z, w)
    a_w = table.alpha_cond(w, z, delta_p)
    c = np.array([math.cosh(beta) - 1, math.cosh(beta + beta_p) - 1, math.cosh(beta_p) - 1]) * lam
    a = np.array([a_z.value, a_zw.value, a_w.value])
    se = np.array([a_z.stderr, a_zw.stderr, a_w.stderr])
    value = math.exp(float(c @ a))
    return Estimate(value, value * float(np.sqrt(np.sum((c * se) ** 2))), min(a_z.n, a_zw.n, a_w.n))


def two_point_limit(domain: Domain, z: complex, w: complex, params: FieldParams, table: AlphaTable,
                    beta_p: Optional[float] = None) -> Estimate:
    """
    ⟨V_β(z)V_β′(w)⟩ = d_{z,w}^{2Δ(β)} d_{w,z}^{2Δ(β′)}
        · e^{10Δ(β+β′)α(z,w)} · e^{10Δ(β)α_{d_{z,w}}(z|w)} · e^{10Δ(β′)α_{d_{w,z}}(w|z)}
    """
    if complex(z) == complex(w):
        raise ParameterError("two-point limit needs distinct points")
    beta_p = params.beta if beta_p is None else beta_p
    pair = PointPair(domain, complex(z), complex(w))
    d_zw, d_wz = pair.d_zw, pair.d_wz
    a_z = table.alpha_cond(z, w, d_zw)
    a_zw = table.alpha_pair(z, w)
    a_w = table.alpha_cond(w, z, d_wz)
    dz, dw, dzw = params.weight(params.beta), params.weight(beta_p), params.weight(params.beta + beta_p)
    c = 10 * np.array([dz, dzw, dw])
    a = np.array([a_z.value, a_zw.value, a_w.value])
    se = np.array([a_z.stderr, a_zw.stderr, a_w.stderr])
    value = d_zw ** (2 * dz) * d_wz ** (2 * dw) * math.exp(float(c @ a))
    return Estimate(value, value * float(np.sqrt(np.sum((c * se) ** 2))), min(a_z.n, a_zw.n, a_w.n))


def two_point_l1_gap(domain: Domain, points: Sequence[complex], delta: float, params: FieldParams,
                     table: AlphaTable) -> float:
    """
    Grid average of |E[Ṽ^δ(z)Ṽ^δ(w)] − ⟨V(z)V(w)⟩| over ordered pairs with |z−w| > δ.
    """
    gaps = []
    scale = delta ** (4 * params.delta)
    for z, w in itertools.permutations(points, 2):
        if abs(z - w) <= delta:
            continue
        cut = two_point_cutoff(z, w, delta, delta, params.beta, params.beta, params.lam, table).value
        gaps.append(abs(cut * scale - two_point_limit(domain, z, w, params, table).value))
    if not gaps:
        raise ParameterError(f"no point pair separated by more than δ={delta}")
    return float(np.mean(gaps))


# ==================== n-point functions ====================


@dataclass(frozen=True)
class NPointSpec:
    domain: Domain
    points: tuple[complex, ...]
    betas: tuple[float, ...]
    lam: float

    def __post_init__(self):
        if not self.points or len(self.points) != len(self.betas):
            raise ParameterError("need n ≥ 1 points with one β each")
        if len(self.points) > MAX_POINTS:
            raise ParameterError(f"n-point functions supported for n ≤ {MAX_POINTS}")
        if len(set(self.points)) != len(self.points):
            raise ParameterError("points must be distinct")
        self.domain.boundary_distance(np.asarray(self.points))

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def m(self) -> float:
        """min of pairwise separations and boundary distances"""
        pts = np.asarray(self.points)
        dist = list(np.atleast_1d(self.domain.boundary_distance(pts)))
        dist += [abs(a - b) for a, b in itertools.combinations(self.points, 2)]
        return float(min(dist))

    def permuted(self, order: Sequence[int]) -> "NPointSpec":
        return NPointSpec(self.domain, tuple(self.points[i] for i in order),
                          tuple(self.betas[i] for i in order), self.lam)

    def mapped(self, conformal_map) -> "NPointSpec":
        return NPointSpec(self.domain, tuple(complex(conformal_map(z)) for z in self.points), self.betas, self.lam)


@dataclass
class CoverPatternMasses:
    """
    α(S, S₀): mass of loops covering exactly the points of S among S₀.

    `masses` holds every non-empty pattern at cutoff `delta` (multi-point
    patterns do not depend on δ below m); `singles_at_m` holds singletons at m.
    """

    points: tuple[complex, ...]
    delta: float
    m: float
    masses: dict = field(default_factory=dict)
    singles_at_m: dict = field(default_factory=dict)

    def pattern(self, indices) -> Estimate:
        key = frozenset(indices)
        try:
            return self.masses[key]
        except KeyError:
            raise MissingEntryError(f"no cover-pattern mass for {sorted(key)}") from None

    def single_at_m(self, j: int) -> Estimate:
        try:
            return self.singles_at_m[j]
        except KeyError:
            raise MissingEntryError(f"no singleton mass at cutoff m for point {j}") from None

    def permuted(self, order: Sequence[int]) -> "CoverPatternMasses":
        """Masses for the point list reordered as points[order[k]]."""
        position = {old: new for new, old in enumerate(order)}
        masses = {frozenset(position[i] for i in key): e for key, e in self.masses.items()}
        singles = {position[j]: e for j, e in self.singles_at_m.items()}
        return CoverPatternMasses(tuple(self.points[i] for i in order), self.delta, self.m, masses, singles)

    def covering_total(self, j: int) -> Estimate:
        """Σ over patterns containing j; equals α_δ(z_j) within error."""
        parts = [e for key, e in self.masses.items() if j in key]
        return Estimate(sum(e.value for e in parts), math.sqrt(sum(e.stderr ** 2 for e in parts)),
                        min(e.n for e in parts))


def estimate_cover_patterns(domain: Domain, points: Sequence[complex], lam_probe: float, n_rep: int,
                            rng: RngLike, delta: Optional[float] = None, eps_mass: float = 1e-3,
                            cutoffs: Optional[CutoffConfig] = None) -> CoverPatternMasses:
    """Exact-cover pattern masses from per-replica loop bookkeeping."""
    spec_points = tuple(complex(p) for p in points)
    n = len(spec_points)
    if n > MAX_POINTS:
        raise ParameterError(f"n-point functions supported for n ≤ {MAX_POINTS}")
    pts = np.asarray(spec_points)
    d = list(np.atleast_1d(domain.boundary_distance(pts)))
    d += [abs(a - b) for a, b in itertools.combinations(spec_points, 2)]
    m = float(min(d))
    delta = m / 2 if delta is None else delta
    if delta > m:
        raise ParameterError(f"pattern cutoff δ={delta} must not exceed m={m:.4g}")
    if cutoffs is None:
        cutoffs = CutoffConfig.for_domain(domain, delta, eps_mass=eps_mass)
    weights = 1 << np.arange(n)

    def count(loops):
        by_pattern = np.zeros(1 << n)
        singles = np.zeros(n)
        for lp in loops:
            cover = lp.covers(pts)
            if not cover.any():
                continue
            code = int(weights @ cover)
            by_pattern[code] += 1
            if lp.diameter >= m and cover.sum() == 1:
                singles[int(np.flatnonzero(cover)[0])] += 1
        return np.concatenate([by_pattern, singles])

    counts = count_replicas(domain, lam_probe, cutoffs, n_rep, rng, count, "cover_patterns")
    masses = {}
    for code in range(1, 1 << n):
        key = frozenset(j for j in range(n) if code >> j & 1)
        masses[key] = Estimate.from_counts(counts[:, code], lam_probe)
    singles = {j: Estimate.from_counts(counts[:, (1 << n) + j], lam_probe) for j in range(n)}
    return CoverPatternMasses(spec_points, delta, m, masses, singles)


def n_point_limit(spec: NPointSpec, masses: CoverPatternMasses) -> Estimate:
    """
    m^{2ΣΔ(β_j)} · Π_{|S|>1} e^{10Δ(Σ_S β)·α(S,S₀)} · Π_j e^{10Δ(β_j)·α_m(z_j,S₀)}
    """
    m = spec.m
    log_value = 2 * sum(conformal_weight(spec.lam, b) for b in spec.betas) * math.log(m)
    var = 0.0
    n_min = None
    for size in range(2, spec.n + 1):
        for subset in itertools.combinations(range(spec.n), size):
            c = 10 * conformal_weight(spec.lam, sum(spec.betas[j] for j in subset))
            e = masses.pattern(subset)
            log_value += c * e.value
            var += (c * e.stderr) ** 2
            n_min = e.n if n_min is None else min(n_min, e.n)
    for j, beta in enumerate(spec.betas):
        c = 10 * conformal_weight(spec.lam, beta)
        e = masses.single_at_m(j)
        log_value += c * e.value
        var += (c * e.stderr) ** 2
        n_min = e.n if n_min is None else min(n_min, e.n)
    value = math.exp(log_value)
    return Estimate(value, value * math.sqrt(var), n_min or 0)


@dataclass(frozen=True)
class CovarianceReport:
    ratio: float
    stderr: float
    predicted: float

    @property
    def relative_gap(self) -> float:
        return abs(self.ratio / self.predicted - 1.0)

    def as_dict(self) -> dict:
        return {"ratio": self.ratio, "stderr": self.stderr, "predicted": self.predicted,
                "relative_gap": self.relative_gap}


def conformal_covariance_check(a: complex, spec: NPointSpec, masses: CoverPatternMasses,
                               mapped_masses: Optional[CoverPatternMasses] = None) -> CovarianceReport:
    """
    φ_D(f(z⃗))/φ_D(z⃗) against Π_j |f′(z_j)|^{2Δ(β_j)} for the disk automorphism f_a.
    """
    f = MobiusMap(complex(a))
    mapped = spec.mapped(f)
    if len(set(mapped.points)) != spec.n:
        raise ParameterError("mapped configuration is degenerate")
    predicted = math.prod(
        float(f.derivative_modulus(z)) ** (2 * conformal_weight(spec.lam, b))
        for z, b in zip(spec.points, spec.betas)
    )
    if mapped_masses is None:
        if a != 0:
            raise ParameterError("mapped pattern masses are required for a non-identity map")
        mapped_masses = masses
    original = n_point_limit(spec, masses)
    image = n_point_limit(mapped, mapped_masses)
    ratio = image.value / original.value
    rel = math.hypot(original.stderr / original.value, image.stderr / image.value)
    return CovarianceReport(ratio, ratio * rel, predicted)
