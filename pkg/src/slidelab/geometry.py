"""Lattice discretizations of balls, sampled functions, paraboloids and node masks.

Nodes are stored by integer lattice index relative to the ball center; physical
coordinates are ``center + h * index`` and are derived on demand.  Every node
owns a cell of volume ``h**n`` and measures are plain cell counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GridDomain",
    "GridFunction",
    "Paraboloid",
    "ContactSet",
    "make_ball_domain",
    "measure",
    "eval_paraboloid",
    "ball_volume",
]


def ball_volume(n: int, radius: float = 1.0) -> float:
    """Lebesgue measure of the n-ball of the given radius."""
    from math import gamma, pi

    return pi ** (n / 2) / gamma(n / 2 + 1) * radius**n


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Lattice points of spacing ``h`` inside the closed ball ``B_radius(center)``.

    A node is boundary-adjacent when its distance to the sphere is strictly
    less than ``band * h``; all other nodes are interior.
    """

    n: int
    h: float
    radius: float
    center: tuple = ()
    band: int = 2
    index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.n}")
        center = tuple(float(c) for c in self.center) or (0.0,) * self.n
        if len(center) != self.n:
            raise ValueError("center has the wrong dimension")
        object.__setattr__(self, "center", center)
        M = self.half_width
        axes = [np.arange(-M, M + 1)] * self.n
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)
        r2 = (grid.astype(float) ** 2).sum(axis=1)
        keep = r2 <= (self.radius / self.h) ** 2 * (1 + 1e-12) + 1e-9
        object.__setattr__(self, "index", _readonly(grid[keep].astype(np.int64)))

    @property
    def half_width(self) -> int:
        return int(np.floor(self.radius / self.h + 1e-9))

    @property
    def size(self) -> int:
        return len(self.index)

    @property
    def cell(self) -> float:
        return self.h**self.n

    @property
    def measure(self) -> float:
        return self.size * self.cell

    @cached_property
    def coords(self) -> np.ndarray:
        return _readonly(np.asarray(self.center) + self.h * self.index)

    @cached_property
    def rel_radius(self) -> np.ndarray:
        """Distance of each node to the center."""
        return _readonly(np.linalg.norm(self.h * self.index, axis=1))

    @cached_property
    def boundary_distance(self) -> np.ndarray:
        return _readonly(self.radius - self.rel_radius)

    @cached_property
    def boundary(self) -> np.ndarray:
        return _readonly(self.boundary_distance < self.band * self.h - 1e-12)

    @cached_property
    def interior(self) -> np.ndarray:
        return _readonly(~self.boundary)

    @cached_property
    def _lookup(self) -> np.ndarray:
        M = self.half_width
        table = np.full((2 * M + 1,) * self.n, -1, dtype=np.int64)
        table[tuple((self.index + M).T)] = np.arange(self.size)
        return table

    def node_ids(self, index: np.ndarray) -> np.ndarray:
        """Node numbers for lattice indices (shape (..., n)); -1 where absent."""
        index = np.asarray(index, dtype=np.int64)
        M = self.half_width
        shifted = index + M
        inside = np.all((shifted >= 0) & (shifted <= 2 * M), axis=-1)
        out = np.full(index.shape[:-1], -1, dtype=np.int64)
        if np.any(inside):
            out[inside] = self._lookup[tuple(shifted[inside].T)]
        return out

    def dense(self, values: np.ndarray, fill: float = np.nan) -> np.ndarray:
        """Scatter node values into the (2M+1)**n bounding box."""
        M = self.half_width
        box = np.full((2 * M + 1,) * self.n, fill, dtype=np.asarray(values).dtype)
        box[tuple((self.index + M).T)] = values
        return box

    def gather(self, box: np.ndarray) -> np.ndarray:
        M = self.half_width
        return box[tuple((self.index + M).T)]

    def ball_mask(self, radius: float, center: Sequence[float] | None = None,
                  open_ball: bool = False) -> np.ndarray:
        """Nodes in the closed (or open) ball ``B_radius(center)``."""
        c = np.asarray(self.center if center is None else center, dtype=float)
        d = np.linalg.norm(self.coords - c, axis=1)
        slack = 1e-12 * max(radius, 1.0)
        return d < radius - slack if open_ball else d <= radius + slack

    def concentric(self, radius: float, band: int | None = None) -> "GridDomain":
        """Same lattice restricted to a concentric ball."""
        return GridDomain(self.n, self.h, radius, self.center,
                          self.band if band is None else band)

    def embed(self, other: "GridDomain") -> np.ndarray:
        """Node numbers in ``self`` of every node of ``other`` (same lattice)."""
        if other.n != self.n or not np.isclose(other.h, self.h):
            raise ValueError("domains do not share a lattice")
        shift = (np.asarray(other.center) - np.asarray(self.center)) / self.h
        if not np.allclose(shift, np.round(shift)):
            raise ValueError("domain centers are not lattice-aligned")
        return self.node_ids(other.index + np.round(shift).astype(np.int64))


def make_ball_domain(n: int, radius: float, h: float, center=None, band: int = 2) -> GridDomain:
    if radius <= 0 or h <= 0:
        raise ValueError("radius and h must be positive")
    if h > radius / 4:
        raise ValueError(f"h={h} too coarse for radius {radius}: need h <= radius/4")
    return GridDomain(n, float(h), float(radius), () if center is None else tuple(center), band)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real values on the nodes of a domain."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.domain.size,):
            raise ValueError(f"expected {self.domain.size} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", _readonly(v))

    @classmethod
    def sample(cls, domain: GridDomain, f: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(domain, f(domain.coords))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.domain, values)

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    @property
    def osc(self) -> float:
        return float(self.values.max() - self.values.min())

    def restrict(self, sub: GridDomain) -> "GridFunction":
        ids = self.domain.embed(sub)
        if np.any(ids < 0):
            raise ValueError("sub-domain is not contained in the domain")
        return GridFunction(sub, self.values[ids])


@dataclass(frozen=True)
class Paraboloid:
    """``(a/2)|x|^2 + y.x + b``."""

    a: float
    y: tuple
    b: float

    def __post_init__(self):
        object.__setattr__(self, "y", tuple(float(c) for c in np.atleast_1d(self.y)))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 0.5 * self.a * (x * x).sum(axis=-1) + x @ np.asarray(self.y) + self.b

    @property
    def vertex(self) -> np.ndarray:
        if self.a == 0:
            raise ValueError("a paraboloid of opening 0 has no vertex")
        return -np.asarray(self.y) / self.a

    def lifted(self, t: float) -> "Paraboloid":
        return Paraboloid(self.a, self.y, self.b + t)


def eval_paraboloid(P: Paraboloid, x) -> np.ndarray:
    return P(x)


@dataclass(frozen=True, eq=False)
class ContactSet:
    """Boolean node mask; ``measure`` is the number of marked cells times ``h**n``."""

    domain: GridDomain
    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != (self.domain.size,):
            raise ValueError("mask shape does not match domain")
        object.__setattr__(self, "mask", _readonly(m))

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def measure(self) -> float:
        return self.count * self.domain.cell

    def _other(self, other) -> np.ndarray:
        if isinstance(other, ContactSet):
            if other.domain is not self.domain:
                raise ValueError("masks live on different domains")
            return other.mask
        return np.asarray(other, dtype=bool)

    def __and__(self, other):
        return ContactSet(self.domain, self.mask & self._other(other))

    def __or__(self, other):
        return ContactSet(self.domain, self.mask | self._other(other))

    def __sub__(self, other):
        return ContactSet(self.domain, self.mask & ~self._other(other))

    def complement(self) -> "ContactSet":
        return ContactSet(self.domain, ~self.mask)

    def __le__(self, other) -> bool:
        return not np.any(self.mask & ~self._other(other))

    @property
    def coords(self) -> np.ndarray:
        return self.domain.coords[self.mask]


def measure(s: ContactSet) -> float:
    return s.measure
