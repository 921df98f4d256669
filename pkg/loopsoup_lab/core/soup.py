"""
Signed Brownian loop soups and the Poisson layering field.

A soup sampled once at cutoff δ₀ answers every query with δ ≥ δ₀. Signs are
i.i.d. fair ±1, which is the same law as two independent half-intensity
soups carrying +1 and −1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, Optional, Union

import numpy as np
from scipy import stats

from ..errors import CutoffMismatchError, ParameterError
from ..logging import get_experiment_logger
from .geometry import Domain, QuadGrid
from .loopmeasure import CutoffConfig, sample_loops
from .loops import MarkedLoop

logger = get_experiment_logger(__name__)


def conformal_weight(lam: float, beta: float) -> float:
    """Δ(λ,β) = (λ/10)(cosh β − 1)."""
    return lam / 10.0 * (math.cosh(beta) - 1.0)


@dataclass(frozen=True)
class FieldParams:
    lam: float
    beta: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ParameterError(f"intensity λ must be positive, got {self.lam}")

    @property
    def delta(self) -> float:
        return conformal_weight(self.lam, self.beta)

    @property
    def delta_2beta(self) -> float:
        return conformal_weight(self.lam, 2 * self.beta)

    @property
    def limit_regime_ok(self) -> bool:
        """Δ(λ,2β) < 1, required for limit-field experiments."""
        return self.delta_2beta < 1

    def weight(self, beta: float) -> float:
        return conformal_weight(self.lam, beta)

    def with_beta(self, beta: float) -> "FieldParams":
        return FieldParams(self.lam, beta)


@dataclass(frozen=True, eq=False)
class SignedSoup:
    domain: Domain
    loops: tuple[MarkedLoop, ...]
    lam: float
    cutoffs: CutoffConfig
    seed: Optional[int] = None

    def __len__(self) -> int:
        return len(self.loops)

    @cached_property
    def signs(self) -> np.ndarray:
        return np.array([m.sign for m in self.loops], dtype=np.int64)

    @cached_property
    def diameters(self) -> np.ndarray:
        return np.array([m.loop.diameter for m in self.loops], dtype=float)

    def split_by_sign(self) -> tuple[list[MarkedLoop], list[MarkedLoop]]:
        plus = [m for m in self.loops if m.sign == 1]
        minus = [m for m in self.loops if m.sign == -1]
        return plus, minus

    def cover_matrix(self, zs, delta: float, R: Optional[float] = None) -> np.ndarray:
        """(n_loops, n_points) boolean: loop in the diameter window covers the point."""
        _check_cutoff(self, delta, R)
        zs = np.atleast_1d(np.asarray(zs, dtype=complex))
        out = np.zeros((len(self.loops), zs.size), dtype=bool)
        window = self.diameters >= delta
        if R is not None:
            window &= self.diameters < R
        for i in np.flatnonzero(window):
            out[i] = self.loops[i].loop.covers(zs)
        return out


def _check_cutoff(soup: SignedSoup, delta: float, R: Optional[float]):
    if delta < soup.cutoffs.delta * (1 - 1e-12):
        raise CutoffMismatchError(f"δ={delta} is below the soup's sampling cutoff {soup.cutoffs.delta}")
    if R is not None and delta >= R:
        raise ParameterError(f"need δ < R, got δ={delta}, R={R}")
    if soup.cutoffs.R is not None and (R is None or R > soup.cutoffs.R * (1 + 1e-12)):
        raise CutoffMismatchError(f"soup was sampled with IR cutoff {soup.cutoffs.R}, query R={R}")


def sample_signed_soup(domain: Domain, params: FieldParams, cutoffs: CutoffConfig,
                       rng: np.random.Generator, seed: Optional[int] = None) -> SignedSoup:
    cutoffs.check()
    loops = sample_loops(domain, params.lam, cutoffs, rng)
    signs = 2 * rng.integers(0, 2, size=len(loops)) - 1
    marked = tuple(MarkedLoop(int(s), lp) for s, lp in zip(signs, loops))
    return SignedSoup(domain, marked, params.lam, cutoffs, seed)


def layering_numbers(soup: SignedSoup, zs, delta: float, R: Optional[float] = None) -> np.ndarray:
    cover = soup.cover_matrix(zs, delta, R)
    return soup.signs @ cover.astype(np.int64) if len(soup) else np.zeros(cover.shape[1], dtype=np.int64)


def layering_number(soup: SignedSoup, z: complex, delta: float, R: Optional[float] = None) -> int:
    """N^δ(z) (or N^{δ,R}(z)): Σ ε over loops with δ ≤ diam < R covering z."""
    return int(layering_numbers(soup, [complex(z)], delta, R)[0])


def field_values(soup: SignedSoup, zs, delta: float, params: FieldParams, renormalize: bool = True,
                 R: Optional[float] = None) -> np.ndarray:
    n = layering_numbers(soup, zs, delta, R)
    values = np.exp(params.beta * n)
    if renormalize:
        values = values * delta ** (2 * params.delta)
    return values


def field_value(soup: SignedSoup, z: complex, delta: float, params: FieldParams,
                renormalize: bool = True, R: Optional[float] = None) -> float:
    """e^{βN} (raw) or δ^{2Δ(λ,β)}·e^{βN} (renormalized)."""
    return float(field_values(soup, [complex(z)], delta, params, renormalize, R)[0])


def field_integral(soup: SignedSoup, phi: Union[Callable, np.ndarray], grid: QuadGrid, delta: float,
                   params: FieldParams) -> float:
    """Midpoint quadrature of φ·Ṽ^δ over the grid cells."""
    if grid.domain != soup.domain:
        raise ParameterError("quadrature grid was built for a different domain")
    weights = grid.evaluate(phi) if callable(phi) else np.asarray(phi, dtype=float)
    if weights.shape != grid.centers.shape:
        raise ParameterError("test function values do not match the grid")
    return grid.integrate(weights * field_values(soup, grid.centers, delta, params, True))


def skellam_gof(numbers: np.ndarray, mu: float, min_expected: float = 5.0) -> tuple[float, float]:
    """
    χ² test of layering numbers against Skellam(μ, μ). Cells with expected
    count below `min_expected` are pooled into the two tails.
    Returns (statistic, p-value).
    """
    numbers = np.asarray(numbers, dtype=np.int64)
    n = numbers.size
    if mu <= 0:
        raise ParameterError("Skellam rate must be positive")
    law = stats.skellam(mu, mu)
    k = np.arange(int(law.ppf(1e-12)), int(law.isf(1e-12)) + 1)
    core = k[n * law.pmf(k) >= min_expected]
    if core.size < 2:
        raise ParameterError(f"too few replicas ({n}) for a Skellam goodness-of-fit test")
    lo, hi = int(core.min()), int(core.max())
    cells = np.arange(lo, hi + 1)
    observed = [np.sum(numbers < lo)] + [np.sum(numbers == c) for c in cells] + [np.sum(numbers > hi)]
    expected = [n * law.cdf(lo - 1)] + list(n * law.pmf(cells)) + [n * law.sf(hi)]
    observed, expected = np.asarray(observed, dtype=float), np.asarray(expected, dtype=float)
    expected *= n / expected.sum()
    statistic, p_value = stats.chisquare(observed, expected)
    return float(statistic), float(p_value)


REPLICA_COLUMNS = ["replica", "z_re", "z_im", "delta", "R", "N", "V", "V_tilde"]


def replica_rows(soup: SignedSoup, replica: int, zs, delta: float, params: FieldParams,
                 R: Optional[float] = None) -> Iterator[list]:
    """Long-format rows (replica, z_re, z_im, delta, R, N, V, V_tilde)."""
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    n = layering_numbers(soup, zs, delta, R)
    raw = np.exp(params.beta * n)
    renorm = raw * delta ** (2 * params.delta)
    for z, ni, v, vt in zip(zs, n, raw, renorm):
        yield [replica, float(z.real), float(z.imag), delta, "" if R is None else R, int(ni), float(v), float(vt)]
