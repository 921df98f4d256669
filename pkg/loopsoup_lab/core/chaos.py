"""
Wiener–Itô chaos of the layering fields.

Kernels of both fields have the shape

    f_q((ε₁,γ₁),…,(ε_q,γ_q)) = (1/q!) ∫ a(z) Π c(ε_i) 1{z ∈ γ̄_i} dz,

so inner products reduce to double integrals over a QuadGrid of a·a'·(s·α)^q,
with s = ½Σ_ε c(ε)c'(ε). Diagonal cells carry the logarithmic singularity of
α(z,t) and are averaged against the exact distance law of two uniform points
in a square.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from ..errors import GridSpacingError, ParameterError, RegimeError
from ..logging import get_experiment_logger
from .geometry import QuadGrid
from .loopmeasure import ANNULUS_RATE, AlphaTable, Estimate
from .soup import FieldParams, SignedSoup, field_integral

logger = get_experiment_logger(__name__)

TAIL_TOLERANCE = 1e-12
TAIL_RATE_LIMIT = 5.0
NEIGHBOUR_RADIUS = 1.5  # in units of h; picks the 8 surrounding cells


# ==================== difference operators ====================


def difference_operator(h: Callable[[object], float], beta: float, xs: Sequence, eta: Sequence) -> float:
    """
    D_{x_1}…D_{x_q} applied to Y(η) = exp(β Σ_{x∈η} h(x)), by recursion on
    D_x F(η) = F(η ∪ {x}) − F(η).
    """
    def base(config: tuple) -> float:
        return math.exp(beta * sum(h(x) for x in config))

    def add_point(fn, x):
        return lambda config: fn(config + (x,)) - fn(config)

    fn = base
    for x in xs:
        fn = add_point(fn, x)
    return fn(tuple(eta))


def difference_product(h: Callable[[object], float], beta: float, xs: Sequence, eta: Sequence) -> float:
    """Y(η)·Π(e^{βh(x_i)} − 1)"""
    y = math.exp(beta * sum(h(x) for x in eta))
    return y * float(np.prod([math.expm1(beta * h(x)) for x in xs]))


# ==================== kernels ====================


def pair_coefficient(kind: str, lam: float, beta: float = 0.0, xi: float = 0.0) -> float:
    """s_VV = λ(cosh 2β − 2cosh β + 1), s_VW = √λ ξ sinh β, s_WW = ξ²."""
    if kind == "VV":
        return lam * (math.cosh(2 * beta) - 2 * math.cosh(beta) + 1)
    if kind == "VW":
        return math.sqrt(lam) * xi * math.sinh(beta)
    if kind == "WW":
        return xi ** 2
    raise ParameterError(f"unknown pair kind {kind}")


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Cell weights a(z_i) and sign coefficients (c(+1), c(−1)) of a chaos kernel."""

    name: str
    weights: np.ndarray
    coefficients: tuple[float, float]

    def pair_coefficient(self, other: "KernelSpec") -> float:
        return 0.5 * (self.coefficients[0] * other.coefficients[0] + self.coefficients[1] * other.coefficients[1])


def _weights(phi, grid: QuadGrid) -> np.ndarray:
    values = grid.evaluate(phi) if callable(phi) else np.asarray(phi, dtype=float)
    if values.shape != grid.centers.shape:
        raise ParameterError("test function values do not match the grid")
    return values


def poisson_one_point(z: complex, delta: float, params: FieldParams, table: AlphaTable) -> float:
    """E[Ṽ^δ(z)] = δ^{2Δ}·exp(λ(cosh β − 1)α_δ(z))"""
    return delta ** (2 * params.delta) * math.exp(10 * params.delta * table.alpha(z, delta).value)


def gaussian_one_point(z: complex, delta: float, xi: float, table: AlphaTable) -> float:
    """δ^{2Δ_ξ}·e^{(ξ²/2)α_δ(z)}; at δ = d_z this is ⟨W(z)⟩."""
    return delta ** (xi ** 2 / 10) * math.exp(xi ** 2 / 2 * table.alpha(z, delta).value)


def poisson_kernel(phi, params: FieldParams, table: AlphaTable, grid: QuadGrid,
                   delta: Optional[float] = None) -> KernelSpec:
    """
    Kernel of V(φ) (δ=None) or of the cell-center sum Σ h²φ(z_i)Ṽ^δ(z_i).
    Coefficients carry √λ so norms are taken against the unit-intensity measure.
    """
    weights = _weights(phi, grid)
    if delta is None:
        d = np.atleast_1d(grid.domain.boundary_distance(grid.centers))
        mean = np.array([poisson_one_point(z, dz, params, table) for z, dz in zip(grid.centers, d)])
    else:
        mean = np.array([poisson_one_point(z, delta, params, table) for z in grid.centers])
    root = math.sqrt(params.lam)
    return KernelSpec("V", weights * mean, (root * math.expm1(params.beta), root * math.expm1(-params.beta)))


def gaussian_kernel(phi, xi: float, table: AlphaTable, grid: QuadGrid) -> KernelSpec:
    weights = _weights(phi, grid)
    d = np.atleast_1d(grid.domain.boundary_distance(grid.centers))
    mean = np.array([gaussian_one_point(z, dz, xi, table) for z, dz in zip(grid.centers, d)])
    return KernelSpec("W", weights * mean, (xi, -xi))


# ==================== quadrature of α ====================


def _square_distance_density(u: float) -> float:
    """Density of |X − Y| for X, Y uniform in the unit square, on [0, √2]."""
    if u <= 0:
        return 0.0
    if u <= 1:
        return 2 * u * (math.pi - 4 * u + u * u)
    if u <= math.sqrt(2):
        return 2 * u * (4 * math.sqrt(u * u - 1) - (u * u + 2 - math.pi) - 4 * math.acos(1 / u))
    return 0.0


def _near(fn: Callable[[float], float], h: float) -> float:
    # u = e^{−x} on [0, 1] resolves the log singularity at u → 0
    def integrand(x: float) -> float:
        u = math.exp(-x)
        return fn(h * u) * _square_distance_density(u) * u

    return integrate.quad(integrand, 0.0, np.inf, limit=200)[0]


@lru_cache(maxsize=1)
def _density_mass() -> float:
    return _near(lambda r: 1.0, 1.0) + integrate.quad(_square_distance_density, 1.0, math.sqrt(2))[0]


def cell_average(fn: Callable[[float], float], h: float) -> float:
    """E[fn(|X − Y|)] for X, Y uniform in one cell of side h."""
    far = integrate.quad(lambda u: fn(h * u) * _square_distance_density(u), 1.0, math.sqrt(2), limit=100)[0]
    return (_near(fn, h) + far) / _density_mass()


def power_term(x, q: int) -> np.ndarray:
    """x^q/q!, evaluated in log space so large orders neither overflow nor lose sign."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0
    out[nz] = np.exp(q * np.log(np.abs(x[nz])) - special.gammaln(q + 1))
    if q % 2:
        out = np.where(x < 0, -out, out)
    return out


@dataclass(frozen=True, eq=False)
class PairQuadrature:
    """
    Off-diagonal α(z_i, z_j) plus per-cell offsets g_i of the diagonal log law
    α(z,t) ≈ (1/5) ln(1/max(|z−t|, cutoff)) + g_i. When `pointwise` is set the
    diagonal of `alpha` already holds the value to use and no averaging happens.
    """

    grid: QuadGrid
    alpha: np.ndarray
    alpha_stderr: np.ndarray
    offsets: np.ndarray
    cutoff: float = 0.0
    pointwise: bool = False

    def _diagonal_alpha(self, r: float, g: float) -> float:
        return -ANNULUS_RATE * math.log(max(r, self.cutoff, 1e-300)) + g

    def diagonal_average(self, fn: Callable[[float], float]) -> np.ndarray:
        """E[fn(α)] on each diagonal cell."""
        return np.array([cell_average(lambda r, g=g: fn(self._diagonal_alpha(r, g)), self.grid.h)
                         for g in self.offsets])

    def term_matrix(self, s: float, q: int) -> np.ndarray:
        """(s·α_ij)^q/q! with diagonal cells averaged."""
        out = power_term(s * self.alpha, q)
        if not self.pointwise:
            np.fill_diagonal(out, self.diagonal_average(lambda a: float(power_term(s * a, q))))
        return out

    def expm1_matrix(self, s: float) -> np.ndarray:
        """e^{s·α_ij} − 1 with diagonal cells averaged."""
        out = np.expm1(s * self.alpha)
        if not self.pointwise:
            np.fill_diagonal(out, self.diagonal_average(lambda a: math.expm1(s * a)))
        return out


def pair_quadrature(table: AlphaTable, grid: QuadGrid, cutoff: Optional[float] = None) -> PairQuadrature:
    """
    Without a cutoff, g_i is fitted from the neighbouring cells:
    g_i = mean_j (α(z_i,z_j) + (1/5) ln|z_i − z_j|). With cutoff δ,
    g_i = α_δ(z_i) + (1/5) ln δ, the value that makes the law continuous at δ.
    """
    centers = grid.centers
    alpha, stderr = table.pair_matrix(centers)
    if cutoff is not None:
        if grid.h < cutoff:
            raise GridSpacingError(f"grid spacing {grid.h} is below the cutoff δ={cutoff}")
        offsets = np.array([table.alpha(z, cutoff).value + ANNULUS_RATE * math.log(cutoff) for z in centers])
        return PairQuadrature(grid, alpha, stderr, offsets, float(cutoff))
    dist = np.abs(centers[:, None] - centers[None, :])
    np.fill_diagonal(dist, np.inf)
    offsets = np.zeros(len(centers))
    for i in range(len(centers)):
        near = np.flatnonzero(dist[i] <= NEIGHBOUR_RADIUS * grid.h)
        if near.size == 0:
            near = np.array([int(np.argmin(dist[i]))])
        offsets[i] = np.mean(alpha[i, near] + ANNULUS_RATE * np.log(dist[i, near]))
    return PairQuadrature(grid, alpha, stderr, offsets)


def pointwise_quadrature(table: AlphaTable, grid: QuadGrid, delta: float) -> PairQuadrature:
    """
    Masses for the cell-center sum Σ h²φ(z_i)Ṽ^δ(z_i): diagonal α_δ(z_i),
    off-diagonal α(z_i, z_j).
    """
    if grid.h < delta:
        raise GridSpacingError(f"grid spacing {grid.h} is below the cutoff δ={delta}")
    alpha, stderr = table.pair_matrix(grid.centers)
    for i, z in enumerate(grid.centers):
        e = table.alpha(z, delta)
        alpha[i, i], stderr[i, i] = e.value, e.stderr
    return PairQuadrature(grid, alpha, stderr, np.zeros(len(grid.centers)), float(delta), pointwise=True)


# ==================== inner products ====================


@dataclass(frozen=True)
class KernelProduct:
    """q!·⟨f_q, g_q⟩ with the share from z, t in the same cell."""

    value: float
    diagonal: float

    @property
    def off_diagonal(self) -> float:
        return self.value - self.diagonal


def scaled_inner_product(f: KernelSpec, g: KernelSpec, q: int, quad: PairQuadrature) -> KernelProduct:
    """q!·⟨f_q, g_q⟩ = (1/q!) ∬ a_f(z) a_g(t) [s·α(z,t)]^q dz dt"""
    if q < 1:
        raise ParameterError("chaos order must be ≥ 1")
    t = quad.term_matrix(f.pair_coefficient(g), q)
    area2 = quad.grid.cell_area ** 2
    total = float(f.weights @ t @ g.weights) * area2
    diag = float(np.sum(f.weights * g.weights * np.diag(t))) * area2
    return KernelProduct(total, diag)


def kernel_inner_product(f: KernelSpec, g: KernelSpec, q: int, quad: PairQuadrature) -> float:
    """⟨f_q, g_q⟩ in L²(ν^q)"""
    return scaled_inner_product(f, g, q, quad).value * math.exp(-special.gammaln(q + 1))


def chaos_norm(f: KernelSpec, q: int, quad: PairQuadrature) -> float:
    """q!·‖f_q‖²"""
    return scaled_inner_product(f, f, q, quad).value


def chaos_norms(kernel: KernelSpec, quad: PairQuadrature, q_max: int) -> np.ndarray:
    return np.array([chaos_norm(kernel, q, quad) for q in range(1, q_max + 1)])


def cutoff_kernel_norms(phi, delta: float, params: FieldParams, table: AlphaTable, grid: QuadGrid,
                        q_max: int) -> np.ndarray:
    """q!·‖f^δ_q‖² for q = 1..q_max, for the cell-center sum at cutoff δ."""
    quad = pointwise_quadrature(table, grid, delta)
    return chaos_norms(poisson_kernel(phi, params, table, grid, delta=delta), quad, q_max)


def kernel_gap(q: int, params: FieldParams, xi: float, phi, table: AlphaTable, grid: QuadGrid,
               quad: Optional[PairQuadrature] = None) -> dict:
    """q!·‖λ^{q/2}v_q − w_q‖² with its diagonal-cell share."""
    if not params.limit_regime_ok:
        raise RegimeError(f"need Δ(λ,2β) < 1, got {params.delta_2beta:.4g}")
    if xi >= math.sqrt(2):
        raise RegimeError(f"need ξ < √2, got {xi}")
    quad = quad or pair_quadrature(table, grid)
    v = poisson_kernel(phi, params, table, grid)
    w = gaussian_kernel(phi, xi, table, grid)
    vv = scaled_inner_product(v, v, q, quad)
    vw = scaled_inner_product(v, w, q, quad)
    ww = scaled_inner_product(w, w, q, quad)
    return {
        "q": q,
        "gap": vv.value - 2 * vw.value + ww.value,
        "diagonal": vv.diagonal - 2 * vw.diagonal + ww.diagonal,
        "v_norm": vv.value,
        "w_norm": ww.value,
    }


def tail_norm(n: int, params: FieldParams, phi, table: AlphaTable, grid: QuadGrid,
              quad: Optional[PairQuadrature] = None, q_max: int = 400) -> float:
    """Σ_{q>N} q!‖λ^{q/2}v_q‖², summed until a term drops below 1e-12 of the total."""
    rate = params.lam * math.expm1(abs(params.beta)) ** 2
    if rate >= TAIL_RATE_LIMIT:
        raise RegimeError(f"λ|e^|β| − 1|² = {rate:.4g} is outside the summable regime")
    quad = quad or pair_quadrature(table, grid)
    v = poisson_kernel(phi, params, table, grid)
    total = 0.0
    for q in range(n + 1, q_max + 1):
        term = chaos_norm(v, q, quad)
        total += term
        if abs(term) <= TAIL_TOLERANCE * abs(total) or total == 0.0:
            return total
    logger.warning(f"Tail sum did not settle by q={q_max}")
    return total


def gaussian_series_bound(phi, xi: float, grid: QuadGrid) -> float:
    """d(D)^{8Δ_ξ}·‖φ‖²_∞·∬|z − t|^{−4Δ_ξ}, which dominates every partial sum of Var W(φ)."""
    delta_xi = xi ** 2 / 20
    sup = float(np.max(np.abs(_weights(phi, grid))))
    centers = grid.centers
    dist = np.abs(centers[:, None] - centers[None, :])
    np.fill_diagonal(dist, 1.0)
    kernel = dist ** (-4 * delta_xi)
    np.fill_diagonal(kernel, cell_average(lambda r: max(r, 1e-300) ** (-4 * delta_xi), grid.h))
    return grid.domain.diameter ** (8 * delta_xi) * sup ** 2 * float(kernel.sum()) * grid.cell_area ** 2


# ==================== closed-form moments ====================


def _expm1_quadrature(weights: np.ndarray, s: float, quad: PairQuadrature) -> float:
    return float(weights @ quad.expm1_matrix(s) @ weights) * quad.grid.cell_area ** 2


def glf_mean(phi, xi: float, table: AlphaTable, grid: QuadGrid) -> float:
    return grid.integrate(gaussian_kernel(phi, xi, table, grid).weights)


def glf_variance(phi, xi: float, table: AlphaTable, grid: QuadGrid,
                 quad: Optional[PairQuadrature] = None) -> float:
    """Var W(φ) = ∬ φφ⟨W(z)⟩⟨W(t)⟩(e^{ξ²α(z,t)} − 1)"""
    quad = quad or pair_quadrature(table, grid)
    return _expm1_quadrature(gaussian_kernel(phi, xi, table, grid).weights, xi ** 2, quad)


def poisson_mean(phi, params: FieldParams, table: AlphaTable, grid: QuadGrid) -> float:
    return grid.integrate(poisson_kernel(phi, params, table, grid).weights)


def poisson_variance(phi, params: FieldParams, table: AlphaTable, grid: QuadGrid,
                     quad: Optional[PairQuadrature] = None) -> float:
    """Var V(φ) = ∬ φφ⟨V(z)⟩⟨V(t)⟩(e^{λ(cosh 2β − 2cosh β + 1)α(z,t)} − 1)"""
    quad = quad or pair_quadrature(table, grid)
    s = pair_coefficient("VV", params.lam, params.beta)
    return _expm1_quadrature(poisson_kernel(phi, params, table, grid).weights, s, quad)


def mean_gap(params: FieldParams, xi: float, phi, table: AlphaTable, grid: QuadGrid) -> dict:
    v = poisson_mean(phi, params, table, grid)
    w = glf_mean(phi, xi, table, grid)
    return {"v_mean": v, "w_mean": w, "gap": abs(v - w), "relative_gap": abs(v - w) / abs(w) if w else math.inf}


# ==================== isometry ====================


ISOMETRY_ORDERS = 6


@dataclass
class IsometryReport:
    variance: Estimate
    norms: np.ndarray
    partial_sums: np.ndarray
    full_series: float
    table_error: float
    first_chaos: Estimate
    extra: dict = field(default_factory=dict)

    @property
    def gaps(self) -> np.ndarray:
        return self.variance.value - self.partial_sums

    @property
    def checked_sum(self) -> float:
        """Σ_{q≤ISOMETRY_ORDERS} q!·‖f_q‖², the series the verdict compares against."""
        if len(self.partial_sums) < ISOMETRY_ORDERS:
            raise ParameterError(f"isometry verdict needs {ISOMETRY_ORDERS} chaos orders, got {len(self.partial_sums)}")
        return float(self.partial_sums[ISOMETRY_ORDERS - 1])

    def consistent(self, k: float = 3.0) -> bool:
        """Σ_{q≤6} within k·(MC + table error) of the replica variance. full_series and first_chaos are diagnostics."""
        tol = k * (self.variance.stderr + self.table_error)
        return bool(abs(self.variance.value - self.checked_sum) <= tol)

    def as_dict(self) -> dict:
        return {
            "variance": self.variance.as_dict(),
            "norms": self.norms.tolist(),
            "partial_sums": self.partial_sums.tolist(),
            "checked_sum": self.checked_sum if len(self.partial_sums) >= ISOMETRY_ORDERS else None,
            "full_series": self.full_series,
            "table_error": self.table_error,
            "first_chaos": self.first_chaos.as_dict(),
            **self.extra,
        }


def variance_estimate(values: np.ndarray) -> Estimate:
    """Sample variance with the fourth-moment standard error."""
    values = np.asarray(values, dtype=float)
    n = values.size
    var = float(values.var(ddof=1))
    m4 = float(np.mean((values - values.mean()) ** 4))
    return Estimate(var, math.sqrt(max(m4 - var * var, 0.0) / n), int(n))


def isometry_check(soups: Sequence[SignedSoup], phi, delta: float, params: FieldParams, q_max: int,
                   table: AlphaTable, grid: QuadGrid) -> IsometryReport:
    """
    Replica variance of the cell-center sum Σ h²φ(z_i)Ṽ^δ(z_i) against partial
    sums of its chaos norms, plus the mean of the first-chaos integral
    I₁(f₁) = Σ_loops f₁ − λ∫f₁ dν over the same replicas.
    """
    if len(soups) < 2:
        raise ParameterError("isometry check needs at least two replicas")
    if q_max < ISOMETRY_ORDERS:
        raise ParameterError(f"isometry check needs q_max >= {ISOMETRY_ORDERS}, got {q_max}")
    weights = _weights(phi, grid)
    values = np.array([field_integral(soup, weights, grid, delta, params) for soup in soups])
    variance = variance_estimate(values)

    quad = pointwise_quadrature(table, grid, delta)
    kernel = poisson_kernel(weights, params, table, grid, delta=delta)
    norms = cutoff_kernel_norms(weights, delta, params, table, grid, q_max)
    s = pair_coefficient("VV", params.lam, params.beta)
    area2 = grid.cell_area ** 2

    def series(shift: float) -> float:
        a = np.clip(quad.alpha + shift * quad.alpha_stderr, 0, None)
        return float(kernel.weights @ np.expm1(s * a) @ kernel.weights) * area2

    table_error = abs(series(1.0) - series(-1.0)) / 2

    # f₁(ε,γ) = Σ_i h² a_i (e^{βε} − 1) 1{z_i ∈ γ̄, diam γ ≥ δ}
    hw = kernel.weights * grid.cell_area
    masses = np.array([table.alpha(z, delta).value for z in grid.centers])
    compensator = params.lam * (math.cosh(params.beta) - 1) * float(hw @ masses)
    first = np.array([
        float(np.expm1(params.beta * soup.signs) @ (soup.cover_matrix(grid.centers, delta) @ hw)) - compensator
        for soup in soups
    ])
    report = IsometryReport(variance, norms, np.cumsum(norms), series(0.0), table_error,
                            Estimate.from_samples(first))
    logger.info(
        f"Isometry: Var={variance.value:.4g}±{variance.stderr:.2g}, "
        f"Σ_q≤{ISOMETRY_ORDERS}={report.checked_sum:.4g}, full={report.full_series:.4g}, table err={table_error:.2g}"
    )
    return report
