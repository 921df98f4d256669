"""
Planar domains, boundary distances, conformal maps and quadrature grids.

Domains form a closed catalog (unit/centred disk, axis-aligned square, disk
image under a registered map) so that membership and boundary distance are
exact. All point arguments are complex numbers or complex numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from ..errors import DomainMembershipError, ParameterError

Point = Union[complex, np.ndarray]


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def lower_left(self) -> complex:
        return complex(self.x_min, self.y_min)

    def contains(self, z: Point) -> np.ndarray:
        z = np.asarray(z)
        return (z.real >= self.x_min) & (z.real <= self.x_max) & (z.imag >= self.y_min) & (z.imag <= self.y_max)

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        x = rng.uniform(self.x_min, self.x_max, n)
        y = rng.uniform(self.y_min, self.y_max, n)
        return x + 1j * y

    @classmethod
    def around(cls, z: complex, half_side: float) -> "BoundingBox":
        return cls(z.real - half_side, z.real + half_side, z.imag - half_side, z.imag + half_side)


# ==================== conformal maps ====================


class ConformalMap:
    """Registered conformal map: forward evaluation, inverse and |f'|."""

    map_id = "abstract"

    def __call__(self, z: Point) -> Point:
        raise NotImplementedError

    def inverse(self, w: Point) -> Point:
        raise NotImplementedError

    def derivative_modulus(self, z: Point) -> Point:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"map": self.map_id}


class IdentityMap(ConformalMap):
    map_id = "identity"

    def __call__(self, z):
        return z

    def inverse(self, w):
        return w

    def derivative_modulus(self, z):
        return np.ones_like(np.abs(np.asarray(z, dtype=complex)))[()]


@dataclass(frozen=True)
class MobiusMap(ConformalMap):
    """Disk automorphism f(z) = (z − a)/(1 − ā z)."""

    a: complex
    map_id = "mobius"

    def __post_init__(self):
        if abs(self.a) >= 1:
            raise ParameterError(f"Möbius parameter must satisfy |a| < 1, got |a|={abs(self.a):.6g}")

    def __call__(self, z):
        return (z - self.a) / (1 - np.conj(self.a) * z)

    def inverse(self, w):
        return (w + self.a) / (1 + np.conj(self.a) * w)

    def derivative_modulus(self, z):
        return (1 - abs(self.a) ** 2) / np.abs(1 - np.conj(self.a) * z) ** 2

    def describe(self) -> dict:
        return {"map": self.map_id, "a": [self.a.real, self.a.imag]}


class CayleyMap(ConformalMap):
    """Unit disk onto the upper half-plane, φ(w) = i(1+w)/(1−w)."""

    map_id = "cayley"

    def __call__(self, w):
        return 1j * (1 + w) / (1 - w)

    def inverse(self, zeta):
        return (zeta - 1j) / (zeta + 1j)

    def derivative_modulus(self, w):
        return 2.0 / np.abs(1 - w) ** 2


@dataclass(frozen=True)
class AffineMap(ConformalMap):
    """z ↦ scale·z + shift."""

    scale: complex = 1.0
    shift: complex = 0.0
    map_id = "affine"

    def __post_init__(self):
        if self.scale == 0:
            raise ParameterError("affine map needs a non-zero scale")

    def __call__(self, z):
        return self.scale * z + self.shift

    def inverse(self, w):
        return (w - self.shift) / self.scale

    def derivative_modulus(self, z):
        return np.full_like(np.abs(np.asarray(z, dtype=complex)), abs(self.scale))[()]

    def describe(self) -> dict:
        return {
            "map": self.map_id,
            "scale": [complex(self.scale).real, complex(self.scale).imag],
            "shift": [complex(self.shift).real, complex(self.shift).imag],
        }


@dataclass(frozen=True)
class ComposedMap(ConformalMap):
    """outer ∘ inner, derivative modulus by the chain rule."""

    outer: ConformalMap
    inner: ConformalMap
    map_id = "composed"

    def __call__(self, z):
        return self.outer(self.inner(z))

    def inverse(self, w):
        return self.inner.inverse(self.outer.inverse(w))

    def derivative_modulus(self, z):
        return self.outer.derivative_modulus(self.inner(z)) * self.inner.derivative_modulus(z)

    def describe(self) -> dict:
        return {"map": self.map_id, "outer": self.outer.describe(), "inner": self.inner.describe()}


def compose(*maps: ConformalMap) -> ConformalMap:
    """compose(f, g, h) = f ∘ g ∘ h"""
    if not maps:
        return IdentityMap()
    result = maps[-1]
    for outer in reversed(maps[:-1]):
        result = ComposedMap(outer, result)
    return result


def mobius_derivative_modulus(a: complex, z: complex) -> float:
    if abs(a) >= 1:
        raise ParameterError(f"|a| must be < 1, got {abs(a):.6g}")
    if abs(z) >= 1:
        raise DomainMembershipError(f"z={z} is not in the unit disk")
    return float(MobiusMap(complex(a)).derivative_modulus(z))


# ==================== domains ====================


class Domain:
    """Bounded simply connected planar domain with exact membership."""

    kind = "abstract"

    @property
    def bbox(self) -> BoundingBox:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    @property
    def area(self) -> float:
        raise NotImplementedError

    def contains(self, z: Point) -> np.ndarray:
        raise NotImplementedError

    def _distance(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def boundary_distance(self, z: Point) -> Point:
        """d_z = dist(z, ∂D); raises DomainMembershipError for points outside."""
        arr = np.asarray(z, dtype=complex)
        inside = self.contains(arr)
        if not np.all(inside):
            bad = arr[~inside] if arr.ndim else arr
            raise DomainMembershipError(f"point(s) outside {self.kind} domain: {np.atleast_1d(bad)[:3]}")
        d = self._distance(arr)
        return float(d) if d.ndim == 0 else d

    def contains_path(self, path: np.ndarray) -> bool:
        return bool(np.all(self.contains(path)))

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Disk(Domain):
    center: complex = 0j
    radius: float = 1.0
    kind = "disk"

    def __post_init__(self):
        if self.radius <= 0:
            raise ParameterError("disk radius must be positive")

    @property
    def bbox(self) -> BoundingBox:
        return BoundingBox.around(complex(self.center), self.radius)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def area(self) -> float:
        return np.pi * self.radius ** 2

    def contains(self, z):
        return np.abs(np.asarray(z) - self.center) < self.radius

    def _distance(self, z):
        return self.radius - np.abs(z - self.center)

    def describe(self) -> dict:
        c = complex(self.center)
        return {"kind": self.kind, "center": [c.real, c.imag], "radius": self.radius}


@dataclass(frozen=True)
class Square(Domain):
    center: complex = 0j
    side: float = 2.0
    kind = "square"

    def __post_init__(self):
        if self.side <= 0:
            raise ParameterError("square side must be positive")

    @property
    def bbox(self) -> BoundingBox:
        return BoundingBox.around(complex(self.center), self.side / 2)

    @property
    def diameter(self) -> float:
        return self.side * np.sqrt(2.0)

    @property
    def area(self) -> float:
        return self.side ** 2

    def contains(self, z):
        u = np.asarray(z) - self.center
        h = self.side / 2
        return (np.abs(u.real) < h) & (np.abs(u.imag) < h)

    def _distance(self, z):
        u = z - self.center
        h = self.side / 2
        return np.minimum(h - np.abs(u.real), h - np.abs(u.imag))

    def describe(self) -> dict:
        c = complex(self.center)
        return {"kind": self.kind, "center": [c.real, c.imag], "side": self.side}


def _circumcircle(p: complex, q: complex, r: complex) -> tuple[complex, float]:
    # circle through three points; collinear points mean the image is a half-plane
    ax, ay, bx, by, cx, cy = p.real, p.imag, q.real, q.imag, r.real, r.imag
    d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < 1e-12:
        raise ParameterError("map sends the unit disk to an unbounded domain")
    ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay) + (cx**2 + cy**2) * (ay - by)) / d
    uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx) + (cx**2 + cy**2) * (bx - ax)) / d
    center = complex(ux, uy)
    return center, abs(p - center)


@dataclass(frozen=True)
class MappedDisk(Domain):
    """Image of the unit disk under a registered map (must stay bounded)."""

    conformal_map: ConformalMap = field(default_factory=IdentityMap)
    kind = "mapped_disk"

    @cached_property
    def _image(self) -> Disk:
        pts = [complex(self.conformal_map(complex(np.cos(t), np.sin(t)))) for t in (0.3, 2.4, 4.4)]
        center, radius = _circumcircle(*pts)
        inner = complex(self.conformal_map(0j))
        if abs(inner - center) >= radius:
            raise ParameterError("map sends the unit disk to the exterior of a circle")
        return Disk(center, radius)

    @property
    def bbox(self) -> BoundingBox:
        return self._image.bbox

    @property
    def diameter(self) -> float:
        return self._image.diameter

    @property
    def area(self) -> float:
        return self._image.area

    def contains(self, z):
        return self._image.contains(z)

    def _distance(self, z):
        return self._image._distance(z)

    def describe(self) -> dict:
        return {"kind": self.kind, **self.conformal_map.describe()}


def unit_disk() -> Disk:
    return Disk(0j, 1.0)


@dataclass(frozen=True)
class PointPair:
    """z, w with the truncated separations d_{z,w} = |z−w| ∧ d_z and d_{w,z}."""

    domain: Domain
    z: complex
    w: complex

    @property
    def separation(self) -> float:
        return abs(self.z - self.w)

    @property
    def d_zw(self) -> float:
        return min(self.separation, self.domain.boundary_distance(self.z))

    @property
    def d_wz(self) -> float:
        return min(self.separation, self.domain.boundary_distance(self.w))


# ==================== quadrature ====================


@dataclass(frozen=True)
class QuadGrid:
    """Uniform midpoint cells of side h lying entirely inside the domain."""

    domain: Domain
    h: float
    centers: np.ndarray
    coverage_deficit: float

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def n_cells(self) -> int:
        return int(self.centers.size)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.cell_area)

    def evaluate(self, phi) -> np.ndarray:
        """Sample a test function φ(z) at cell centers."""
        return np.broadcast_to(np.asarray(phi(self.centers), dtype=float), self.centers.shape).copy()


def quad_grid(domain: Domain, h: float) -> QuadGrid:
    if h <= 0:
        raise ParameterError("quadrature cell size must be positive")
    box = domain.bbox
    nx = int(np.floor(box.width / h + 1e-9))
    ny = int(np.floor(box.height / h + 1e-9))
    # center the cell lattice inside the bounding box
    x0 = box.x_min + (box.width - nx * h) / 2
    y0 = box.y_min + (box.height - ny * h) / 2
    xs = x0 + h * np.arange(nx)
    ys = y0 + h * np.arange(ny)
    lower = (xs[:, None] + 1j * ys[None, :]).ravel()
    corners = np.stack([lower, lower + h, lower + 1j * h, lower + h + 1j * h])
    # domains in the catalog are convex, so four inside corners put the whole cell inside
    keep = np.all(domain.contains(corners), axis=0)
    centers = lower[keep] + (h + 1j * h) / 2
    deficit = domain.area - centers.size * h * h
    return QuadGrid(domain=domain, h=h, centers=centers, coverage_deficit=float(deficit))


def make_domain(kind: str, **params) -> Domain:
    """Domain from a config descriptor."""
    if kind == "disk":
        c = params.get("center", (0.0, 0.0))
        return Disk(complex(c[0], c[1]), float(params.get("radius", 1.0)))
    if kind == "square":
        c = params.get("center", (0.0, 0.0))
        return Square(complex(c[0], c[1]), float(params.get("side", 2.0)))
    if kind == "mapped_disk":
        return MappedDisk(make_map(params.get("map", "identity"), **params))
    raise ParameterError(f"unknown domain kind: {kind}")


def make_map(map_id: str, **params) -> ConformalMap:
    if map_id == "identity":
        return IdentityMap()
    if map_id == "mobius":
        a = params.get("a", (0.0, 0.0))
        return MobiusMap(complex(a[0], a[1]))
    if map_id == "cayley":
        return CayleyMap()
    if map_id == "affine":
        s = params.get("scale", (1.0, 0.0))
        c = params.get("shift", (0.0, 0.0))
        return AffineMap(complex(s[0], s[1]), complex(c[0], c[1]))
    raise ParameterError(f"unknown conformal map: {map_id}")
