"""
Brownian-bridge loops, diameters and hulls.

A loop is stored as its complex sample path (n_steps + 1 points, closed).
The hull is the complement of the exterior component of the rasterized path,
computed by hole filling on a cell grid of side ρ. Winding numbers are only a
prefilter: pockets of winding zero exist inside hulls of self-crossing paths.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from ..errors import ParameterError, ProximityError, ResolutionError
from ..logging import get_experiment_logger
from .geometry import BoundingBox

logger = get_experiment_logger(__name__)

N_STEPS_MIN = 256
N_STEPS_MAX = 16384
RHO_FRACTION = 1.0 / 32
# raster sampling step along a segment, in cells
_RASTER_STEP = 0.25


def path_diameter(path: np.ndarray) -> float:
    """Max pairwise distance; pairwise search restricted to convex hull vertices."""
    pts = np.column_stack([path.real, path.imag])
    if len(pts) > 4:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            # collinear or repeated samples
            pass
    if len(pts) < 2:
        return 0.0
    return float(pdist(pts).max())


def default_resolution(delta: float, diameter: float, rho_fraction: float = RHO_FRACTION) -> float:
    """ρ = max(δ/32, diameter/512)."""
    return max(delta * rho_fraction, diameter / 512.0)


def steps_for_resolution(duration: float, rho: float,
                         n_min: int = N_STEPS_MIN, n_max: int = N_STEPS_MAX) -> int:
    """
    Smallest n = n_min·2^k with √(t/n)·√(2 ln n) ≤ ρ/2, clamped to n_max.

    Powers of two keep the count reachable by midpoint refinement of an
    n_min-step skeleton.
    """
    n = n_min
    while n < n_max and math.sqrt(duration / n) * math.sqrt(2 * math.log(n)) > rho / 2:
        n *= 2
    return min(n, n_max)


@dataclass(frozen=True, eq=False)
class Loop:
    root: complex
    duration: float
    path: np.ndarray
    resolution: Optional[float] = None

    @property
    def n_steps(self) -> int:
        return len(self.path) - 1

    @cached_property
    def diameter(self) -> float:
        return path_diameter(self.path)

    @cached_property
    def bbox(self) -> BoundingBox:
        p = self.path
        return BoundingBox(float(p.real.min()), float(p.real.max()), float(p.imag.min()), float(p.imag.max()))

    @cached_property
    def hull(self) -> "HullMask":
        rho = self.resolution if self.resolution is not None else self.diameter / 512.0
        return hull_mask(self, rho)

    def covers(self, z) -> np.ndarray:
        return hull_contains_many(self, self.hull, z)

    def max_distance(self, z) -> np.ndarray:
        """max_s |γ(s) − z| for each query point."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        return np.abs(self.path[None, :] - z[:, None]).max(axis=1)

    def with_resolution(self, rho: float) -> "Loop":
        return Loop(self.root, self.duration, self.path, rho)

    def translated(self, shift: complex) -> "Loop":
        return Loop(self.root + shift, self.duration, self.path + shift, self.resolution)

    def scaled(self, factor: float) -> "Loop":
        res = None if self.resolution is None else self.resolution * factor
        return Loop(self.root * factor, self.duration * factor ** 2, self.path * factor, res)

    @classmethod
    def from_path(cls, points: Iterable[complex], duration: float = 1.0,
                  resolution: Optional[float] = None) -> "Loop":
        path = np.asarray(list(points) if not isinstance(points, np.ndarray) else points, dtype=complex)
        if path[0] != path[-1]:
            path = np.append(path, path[0])
        return cls(complex(path[0]), duration, path, resolution)


@dataclass(frozen=True)
class MarkedLoop:
    sign: int
    loop: Loop

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ParameterError(f"loop sign must be ±1, got {self.sign}")


# ==================== sampling ====================


def sample_bridges(roots: np.ndarray, durations: np.ndarray, n_steps: int,
                   rng: np.random.Generator) -> np.ndarray:
    """
    Batch of discrete 2-D Brownian bridges, shape (K, n_steps + 1).

    W is a random walk with per-coordinate step variance t/n; B_k = W_k − (k/n)W_n
    has the exact bridge covariance at the grid times.
    """
    if n_steps < 8:
        raise ParameterError(f"n_steps must be ≥ 8, got {n_steps}")
    durations = np.asarray(durations, dtype=float)
    if np.any(durations <= 0):
        raise ParameterError("bridge duration must be positive")
    roots = np.asarray(roots, dtype=complex)
    k = roots.size
    scale = np.sqrt(durations / n_steps)[:, None]
    steps = (rng.standard_normal((k, n_steps)) + 1j * rng.standard_normal((k, n_steps))) * scale
    walk = np.zeros((k, n_steps + 1), dtype=complex)
    np.cumsum(steps, axis=1, out=walk[:, 1:])
    frac = np.arange(n_steps + 1) / n_steps
    paths = roots[:, None] + walk - frac[None, :] * walk[:, -1:]
    paths[:, 0] = roots
    paths[:, -1] = roots
    return paths


def refine_bridges(paths: np.ndarray, durations: np.ndarray, levels: int,
                   rng: np.random.Generator) -> np.ndarray:
    """
    Lévy midpoint refinement: each level doubles the step count.

    Given neighbours a, b at time distance h, the bridge midpoint is
    (a+b)/2 plus N(0, h/4) per coordinate, independently across intervals.
    """
    paths = np.atleast_2d(paths)
    durations = np.asarray(durations, dtype=float).reshape(-1)
    for _ in range(levels):
        k, m = paths.shape
        n = m - 1
        sd = np.sqrt(durations / n / 4.0)[:, None]
        noise = (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))) * sd
        refined = np.empty((k, 2 * n + 1), dtype=complex)
        refined[:, ::2] = paths
        refined[:, 1::2] = 0.5 * (paths[:, :-1] + paths[:, 1:]) + noise
        paths = refined
    return paths


def sample_bridge(root: complex, duration: float, n_steps: int, rng: np.random.Generator) -> Loop:
    path = sample_bridges(np.array([root]), np.array([duration]), n_steps, rng)[0]
    return Loop(complex(root), float(duration), path)


# ==================== hulls ====================


@dataclass(frozen=True, eq=False)
class HullMask:
    origin: complex
    rho: float
    cells: np.ndarray

    @property
    def area(self) -> float:
        return float(self.cells.sum()) * self.rho ** 2

    def cell_index(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=complex)
        ix = np.floor((z.real - self.origin.real) / self.rho).astype(np.int64)
        iy = np.floor((z.imag - self.origin.imag) / self.rho).astype(np.int64)
        return ix, iy

    def contains(self, z) -> np.ndarray:
        ix, iy = self.cell_index(z)
        nx, ny = self.cells.shape
        ok = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        out = np.zeros(np.shape(ix), dtype=bool)
        out[ok] = self.cells[ix[ok], iy[ok]]
        return out


def _raster_points(path: np.ndarray, spacing: float) -> np.ndarray:
    seg = path[1:] - path[:-1]
    counts = np.maximum(1, np.ceil(np.abs(seg) / spacing).astype(np.int64))
    idx = np.repeat(np.arange(seg.size), counts)
    starts = np.cumsum(counts) - counts
    frac = (np.arange(counts.sum()) - np.repeat(starts, counts)) / np.repeat(counts, counts)
    return np.append(path[idx] + frac * seg[idx], path[-1])


def hull_mask(loop: Loop, rho: float) -> HullMask:
    if rho <= 0:
        raise ParameterError("resolution must be positive")
    diameter = loop.diameter
    if diameter < 2 * rho:
        raise ResolutionError(f"degenerate loop: diameter {diameter:.4g} < 2ρ = {2 * rho:.4g}")
    if rho > diameter / 16:
        raise ResolutionError(f"resolution {rho:.4g} coarser than diameter/16 = {diameter / 16:.4g}")

    box = loop.bbox
    # two free cells on every side so the exterior is one connected border region
    origin = complex(box.x_min - 2 * rho, box.y_min - 2 * rho)
    nx = int(np.ceil((box.x_max - origin.real) / rho)) + 3
    ny = int(np.ceil((box.y_max - origin.imag) / rho)) + 3
    mask = HullMask(origin, rho, np.zeros((nx, ny), dtype=bool))

    ix, iy = mask.cell_index(_raster_points(loop.path, rho * _RASTER_STEP))
    trace = np.zeros((nx, ny), dtype=bool)
    trace[ix, iy] = True
    # background is 4-connected, so diagonal steps of the trace do not leak
    filled = ndimage.binary_fill_holes(trace)
    return HullMask(origin, rho, filled)


def winding_number(loop: Loop, z: complex, rho: Optional[float] = None) -> int:
    if rho is None:
        rho = loop.resolution if loop.resolution is not None else loop.diameter / 512.0
    rel = loop.path - z
    if np.abs(rel).min() < rho:
        raise ProximityError(f"point {z} lies within ρ={rho:.4g} of the path")
    turns = np.angle(rel[1:] / rel[:-1]).sum() / (2 * np.pi)
    return int(np.rint(turns))


def hull_contains(loop: Loop, mask: HullMask, z: complex) -> bool:
    z = complex(z)
    if not bool(loop.bbox.contains(z)):
        return False
    try:
        if winding_number(loop, z, mask.rho) != 0:
            return True
    except ProximityError:
        pass
    return bool(mask.contains(z))


def hull_contains_many(loop: Loop, mask: HullMask, zs) -> np.ndarray:
    """Vectorised containment; bounding-box prefilter then mask lookup."""
    zs = np.asarray(zs, dtype=complex)
    out = np.zeros(zs.shape, dtype=bool)
    inside = loop.bbox.contains(zs)
    if np.any(inside):
        out[inside] = mask.contains(zs[inside])
    return out


# ==================== dump / replay ====================


def dump_loops(loops: list[MarkedLoop | Loop], csv_path: str, seed: Optional[int] = None):
    """CSV (loop_id, step, x, y) plus a JSON sidecar of per-loop records."""
    os.makedirs(os.path.dirname(os.path.abspath(csv_path)), exist_ok=True)
    records = []
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["loop_id", "step", "x", "y"])
        for loop_id, item in enumerate(loops):
            loop = item.loop if isinstance(item, MarkedLoop) else item
            for step, p in enumerate(loop.path):
                writer.writerow([loop_id, step, repr(float(p.real)), repr(float(p.imag))])
            record = {
                "loop_id": loop_id,
                "root": [loop.root.real, loop.root.imag],
                "t": loop.duration,
                "n_steps": loop.n_steps,
                "resolution": loop.resolution,
                "seed": seed,
            }
            if isinstance(item, MarkedLoop):
                record["sign"] = item.sign
            records.append(record)
    with open(os.path.splitext(csv_path)[0] + ".json", "w", encoding="utf-8") as f:
        json.dump(records, f, indent=2)
    logger.debug(f"Dumped {len(records)} loops to {csv_path}")


def load_loops(csv_path: str) -> list[MarkedLoop | Loop]:
    with open(os.path.splitext(csv_path)[0] + ".json", encoding="utf-8") as f:
        records = json.load(f)
    points: dict[int, list[complex]] = {r["loop_id"]: [] for r in records}
    with open(csv_path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            points[int(row["loop_id"])].append(complex(float(row["x"]), float(row["y"])))
    loops: list[MarkedLoop | Loop] = []
    for r in records:
        loop = Loop(complex(*r["root"]), r["t"], np.asarray(points[r["loop_id"]]), r.get("resolution"))
        loops.append(MarkedLoop(r["sign"], loop) if "sign" in r else loop)
    return loops
