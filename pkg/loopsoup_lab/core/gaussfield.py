"""
Gaussian layering field, GMC density and the Radon–Nikodym factor Θ_D.

G₀ is white noise on loop space with control measure μ_D, so the vector
(G₀(A_δ(z_i)))_i is centered Gaussian with covariance μ(A_δ(z_i) ∩ A_δ(z_j)),
read off an AlphaTable and sampled jointly by a symmetric factorization.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from ..errors import FactorizationError, GridSpacingError, ParameterError, TableQualityError
from ..logging import get_experiment_logger
from .geometry import CayleyMap, Domain, PointPair, unit_disk
from .loopmeasure import ANNULUS_RATE, AlphaTable, CutoffConfig, Estimate, RngLike, count_replicas
from .loops import path_diameter

logger = get_experiment_logger(__name__)


@dataclass(frozen=True)
class GaussParams:
    xi: float

    def __post_init__(self):
        if self.xi < 0:
            raise ParameterError("ξ must be non-negative")

    @property
    def delta(self) -> float:
        """Δ_ξ = ξ²/20"""
        return self.xi ** 2 / 20.0

    @property
    def subcritical(self) -> bool:
        return self.xi < 2

    @property
    def l2_regime(self) -> bool:
        return self.xi < math.sqrt(2)

    @property
    def one_point_regime(self) -> bool:
        return self.delta < 0.25


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    points: np.ndarray
    delta: float
    matrix: np.ndarray
    stderr: np.ndarray
    clipped: float = 0.0

    @property
    def size(self) -> int:
        return len(self.points)

    def scaled(self, factor: float) -> "CovarianceMatrix":
        return CovarianceMatrix(self.points, self.delta, self.matrix * factor, self.stderr * factor, self.clipped)


def _psd_repair(matrix: np.ndarray, stderr: np.ndarray) -> tuple[np.ndarray, float]:
    matrix = (matrix + matrix.T) / 2
    eigvals, eigvecs = linalg.eigh(matrix)
    lam_min = float(eigvals.min())
    if lam_min >= 0:
        return matrix, 0.0
    tolerance = 3.0 * float(stderr.max(initial=0.0))
    if -lam_min > tolerance:
        raise TableQualityError(
            f"covariance has eigenvalue {lam_min:.4g}, beyond the noise tolerance {tolerance:.4g}"
        )
    repaired = (eigvecs * np.clip(eigvals, 0, None)) @ eigvecs.T
    return (repaired + repaired.T) / 2, -lam_min


def covariance_matrix(grid: Sequence[complex], delta: float, table: AlphaTable) -> CovarianceMatrix:
    """M_ii = α_δ(z_i), M_ij = α(z_i,z_j); grid spacing must be ≥ δ."""
    points = np.asarray([complex(z) for z in grid])
    k = len(points)
    m = np.zeros((k, k))
    se = np.zeros((k, k))
    for i, z in enumerate(points):
        e = table.alpha(z, delta)
        m[i, i], se[i, i] = e.value, e.stderr
    for i, j in itertools.combinations(range(k), 2):
        if abs(points[i] - points[j]) < delta:
            raise GridSpacingError(
                f"points {points[i]} and {points[j]} are closer than δ={delta}; "
                "joint sampling below the cutoff scale is not supported"
            )
        e = table.alpha_pair(points[i], points[j])
        m[i, j] = m[j, i] = e.value
        se[i, j] = se[j, i] = e.stderr
    repaired, clipped = _psd_repair(m, se)
    if clipped:
        logger.warning(f"Clipped negative eigenvalue {clipped:.3g} from α covariance")
    return CovarianceMatrix(points, delta, repaired, se, clipped)


def scale_covariance(z: complex, deltas: Sequence[float], table: AlphaTable) -> CovarianceMatrix:
    """
    Joint law of G₀(A_δ(z)) across scales: Cov = α_{max(δ_k, δ_l)}(z).
    """
    deltas = np.asarray(sorted(deltas, reverse=True), dtype=float)
    k = len(deltas)
    m = np.zeros((k, k))
    se = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            e = table.alpha(z, max(deltas[a], deltas[b]))
            m[a, b], se[a, b] = e.value, e.stderr
    repaired, clipped = _psd_repair(m, se)
    return CovarianceMatrix(np.full(k, complex(z)), float(deltas[-1]), repaired, se, clipped)


@dataclass(frozen=True, eq=False)
class GaussFieldSample:
    points: np.ndarray
    values: np.ndarray  # (n_replicas, n_points)
    cov: CovarianceMatrix
    delta: float
    seed: Optional[int] = None

    @property
    def n_replicas(self) -> int:
        return self.values.shape[0]


def sample_gaussian_field(cov: CovarianceMatrix, rng: np.random.Generator, size: int = 1,
                          seed: Optional[int] = None) -> GaussFieldSample:
    """Centered normal vectors G = L·Z with L = U·√Λ from the eigendecomposition."""
    try:
        eigvals, eigvecs = linalg.eigh(cov.matrix)
    except linalg.LinAlgError as e:
        raise FactorizationError(f"eigendecomposition failed: {e}") from e
    if eigvals.min(initial=0.0) < -1e-12 * max(1.0, float(np.abs(eigvals).max(initial=0.0))):
        raise FactorizationError("covariance is not positive semidefinite")
    factor = eigvecs * np.sqrt(np.clip(eigvals, 0, None))
    values = rng.standard_normal((size, cov.size)) @ factor.T
    if not np.all(np.isfinite(values)):
        raise FactorizationError("non-finite Gaussian sample")
    return GaussFieldSample(cov.points, values, cov, cov.delta, seed)


def annulus_increments(sample: GaussFieldSample) -> np.ndarray:
    """G(A_{δ_{k+1}}) − G(A_{δ_k}) for a scale-covariance sample (coarse to fine)."""
    return np.diff(sample.values, axis=1)


def glf_value(sample: GaussFieldSample, i: int, gauss: GaussParams, delta: float,
              renormalize: bool = True, replica: Optional[int] = None):
    """e^{ξG_i} or δ^{2Δ_ξ}·e^{ξG_i}; all replicas unless one is selected."""
    if not 0 <= i < sample.values.shape[1]:
        raise ParameterError(f"grid index {i} out of range")
    g = sample.values[:, i] if replica is None else sample.values[replica, i]
    value = np.exp(gauss.xi * g)
    if renormalize:
        value = value * delta ** (2 * gauss.delta)
    return value


def gmc_density_factor(sample: GaussFieldSample, i: int, gauss: GaussParams, delta: float,
                       table: AlphaTable, replica: Optional[int] = None):
    """e^{ξG_i − (ξ²/2)α_δ(z_i)}"""
    a = table.alpha(sample.points[i], delta).value
    g = sample.values[:, i] if replica is None else sample.values[replica, i]
    return np.exp(gauss.xi * g - gauss.xi ** 2 / 2 * a)


def glf_one_point(domain: Domain, z: complex, gauss: GaussParams, table: AlphaTable) -> Estimate:
    """⟨W(z)⟩ = d_z^{2Δ_ξ}·e^{(ξ²/2)α_{d_z}(z)}"""
    dz = domain.boundary_distance(z)
    a = table.alpha(z, dz)
    c = gauss.xi ** 2 / 2
    value = dz ** (2 * gauss.delta) * math.exp(c * a.value)
    return Estimate(value, value * c * a.stderr, a.n)


def glf_two_point(domain: Domain, z: complex, w: complex, gauss: GaussParams, table: AlphaTable) -> Estimate:
    """(d_{z,w}d_{w,z})^{2Δ_ξ}·e^{(ξ²/2)(α_{d_{z,w}}(z)+α_{d_{w,z}}(w))}·e^{ξ²α(z,w)}"""
    if complex(z) == complex(w):
        raise ParameterError("two-point function needs distinct points")
    pair = PointPair(domain, complex(z), complex(w))
    a_z = table.alpha(z, pair.d_zw)
    a_w = table.alpha(w, pair.d_wz)
    a_zw = table.alpha_pair(z, w)
    x2 = gauss.xi ** 2
    c = np.array([x2 / 2, x2 / 2, x2])
    a = np.array([a_z.value, a_w.value, a_zw.value])
    se = np.array([a_z.stderr, a_w.stderr, a_zw.stderr])
    value = (pair.d_zw * pair.d_wz) ** (2 * gauss.delta) * math.exp(float(c @ a))
    return Estimate(value, value * float(np.sqrt(np.sum((c * se) ** 2))), min(a_z.n, a_w.n, a_zw.n))


def theta_cutoff(z: complex, delta: float, table: AlphaTable) -> Estimate:
    """Θ_δ(z) = (1/5) ln δ + α_δ(z)"""
    a = table.alpha(z, delta)
    return Estimate(ANNULUS_RATE * math.log(delta) + a.value, a.stderr, a.n)


def theta(domain: Domain, z: complex, table: AlphaTable) -> Estimate:
    """Θ_D(z) = (1/5) ln d_z + α_{d_z}(z)"""
    return theta_cutoff(z, domain.boundary_distance(z), table)


def rn_ratio(z: complex, gauss: GaussParams, delta: float, table: AlphaTable) -> float:
    """W̃^δ/M^δ = δ^{2Δ_ξ}e^{(ξ²/2)α_δ(z)} = e^{(ξ²/2)Θ_δ(z)}, deterministic."""
    return math.exp(gauss.xi ** 2 / 2 * theta_cutoff(z, delta, table).value)


# ==================== half-plane boundary constants ====================


@dataclass
class HalfPlaneReport:
    """α_{r·y,ℍ}(iy) estimates keyed by (y, r), plus the shift from halving the disk cutoff."""

    estimates: dict
    bias: dict
    disk_delta: float

    def rows(self) -> list[list]:
        out = []
        for (y, r), e in sorted(self.estimates.items()):
            out.append([y, r, e.value, e.stderr, e.n, self.bias.get((y, r), "")])
        return out


def _half_plane_counts(ys, rs, lam_probe, n_rep, rng, disk_delta, eps_mass):
    disk = unit_disk()
    cayley = CayleyMap()
    pre = np.array([complex(cayley.inverse(1j * y)) for y in ys])
    targets = [(i, y, r) for i, y in enumerate(ys) for r in rs]
    cutoffs = CutoffConfig.for_domain(disk, disk_delta, eps_mass=eps_mass)

    def count(loops):
        out = np.zeros(len(targets))
        for lp in loops:
            cover = lp.covers(pre)
            if not cover.any():
                continue
            image_diameter = path_diameter(cayley(lp.path))
            for col, (i, y, r) in enumerate(targets):
                out[col] += cover[i] and image_diameter >= r * y
        return out

    counts = count_replicas(disk, lam_probe, cutoffs, n_rep, rng, count, "half_plane")
    return targets, counts


def estimate_half_plane_constant(ys: Sequence[float], rs: Sequence[float], lam_probe: float, n_rep: int,
                                 rng: RngLike, disk_delta: float = 0.05, eps_mass: float = 1e-3,
                                 bias_rng: Optional[RngLike] = None) -> HalfPlaneReport:
    """
    Transport unit-disk soups to ℍ by the Cayley map and count loops covering iy
    with image diameter ≥ r·y. Coverage is decided on the disk side at
    φ⁻¹(iy) = (y−1)/(y+1). The disk cutoff bias is estimated by a second run at
    disk_delta/2 when `bias_rng` is given.
    """
    targets, counts = _half_plane_counts(ys, rs, lam_probe, n_rep, rng, disk_delta, eps_mass)
    estimates = {(y, r): Estimate.from_counts(counts[:, col], lam_probe) for col, (_, y, r) in enumerate(targets)}
    bias = {}
    if bias_rng is not None:
        _, fine = _half_plane_counts(ys, rs, lam_probe, n_rep, bias_rng, disk_delta / 2, eps_mass)
        for col, (_, y, r) in enumerate(targets):
            bias[(y, r)] = float(fine[:, col].mean() / lam_probe - estimates[(y, r)].value)
    return HalfPlaneReport(estimates, bias, disk_delta)
