"""Convex and a-convex envelopes, contact sets, the opening field and
inf-convolution for grid functions."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import ceil, log2

import numpy as np

from slidelab._hull import LowerHull
from slidelab.geometry import ContactSet, GridDomain, GridFunction

log = logging.getLogger(__name__)

__all__ = [
    "EnvelopeResult",
    "EnvelopeCache",
    "ThetaField",
    "convex_envelope",
    "a_envelope",
    "contact_set",
    "contact_tolerance",
    "theta",
    "inf_convolution",
    "HARD_CAP",
]

C_TAU = 1e-6
HARD_CAP = 2.0**20


def contact_tolerance(a: float, h: float, c_tau: float | None = None) -> float:
    """Grid tolerance ``c_tau (a + 1) h^2`` for membership in a contact set."""
    return (C_TAU if c_tau is None else c_tau) * (a + 1) * h * h


def _sq_radius(dom: GridDomain) -> np.ndarray:
    return (dom.h * dom.h) * (dom.index.astype(float) ** 2).sum(axis=1)


@dataclass(frozen=True, eq=False)
class EnvelopeResult:
    """``Gamma^a_v`` with its contact set at tolerance ``tau``.

    ``hull`` is the lower hull of ``v + (a/2)|x - center|^2``; its per-node
    slopes are subgradients of that lifted convex function.
    """

    v: GridFunction
    a: float
    gamma: GridFunction
    contact: ContactSet
    tau: float
    hull: LowerHull = field(repr=False)

    @property
    def gap(self) -> np.ndarray:
        return self.v.values - self.gamma.values


def a_envelope(v: GridFunction, a: float, tau: float | None = None) -> EnvelopeResult:
    """Largest function below ``v`` admitting at every node a paraboloid of opening ``-a``.

    Computed as the convex envelope of ``v + (a/2)|x|^2`` minus the same quadratic.
    """
    if a < 0:
        raise ValueError("opening must be non-negative")
    dom = v.domain
    q = 0.5 * a * _sq_radius(dom)
    hull = LowerHull(dom, v.values + q)
    gamma = np.minimum(hull.gamma - q, v.values)
    tau = contact_tolerance(a, dom.h) if tau is None else float(tau)
    mask = dom.interior & (v.values - gamma <= tau)
    return EnvelopeResult(v, float(a), GridFunction(dom, gamma), ContactSet(dom, mask), tau, hull)


def convex_envelope(v: GridFunction, tau: float | None = None) -> EnvelopeResult:
    return a_envelope(v, 0.0, tau)


def contact_set(e: EnvelopeResult, tau: float | None = None) -> ContactSet:
    """Interior nodes where ``v - Gamma <= tau`` (default: the envelope's own tolerance)."""
    if tau is None:
        return e.contact
    dom = e.v.domain
    return ContactSet(dom, dom.interior & (e.gap <= tau))


class EnvelopeCache:
    """Envelopes of one function keyed by opening."""

    def __init__(self, v: GridFunction):
        self.v = v
        self._store: dict[float, EnvelopeResult] = {}

    def __call__(self, a: float) -> EnvelopeResult:
        a = float(a)
        if a not in self._store:
            self._store[a] = a_envelope(self.v, a)
        return self._store[a]

    def __len__(self):
        return len(self._store)


@dataclass(frozen=True, eq=False)
class ThetaField:
    """Per-node opening field.

    ``values`` holds the bisection upper endpoint at interior nodes of the
    requested region, ``inf`` where no opening up to the hard cap works and
    ``nan`` at nodes that were not computed.  With ``source`` set,
    :meth:`exceeds` answers threshold queries exactly from contact sets.
    """

    domain: GridDomain
    values: np.ndarray
    a_cap: np.ndarray
    rel_tol: float
    computed: np.ndarray
    source: EnvelopeCache | None = field(default=None, repr=False)

    @classmethod
    def lazy(cls, u: GridFunction, region=None, cache: EnvelopeCache | None = None) -> "ThetaField":
        """Field that answers threshold queries from contact sets only (no bisection)."""
        dom = u.domain
        sel = dom.interior.copy()
        if region is not None:
            sel &= region.mask if isinstance(region, ContactSet) else np.asarray(region, bool)
        nan = np.full(dom.size, np.nan)
        return cls(dom, nan, nan.copy(), 0.0, sel, cache or EnvelopeCache(u))

    @property
    def infinite(self) -> np.ndarray:
        return np.isinf(self.values)

    def exceeds(self, level: float, exact: bool = True) -> np.ndarray:
        """Mask of computed nodes with ``theta > level``."""
        if exact and self.source is not None:
            return self.computed & ~self.source(level).contact.mask
        with np.errstate(invalid="ignore"):
            return self.computed & (self.values > level)

    def tail_measure(self, level: float, region=None, exact: bool = True) -> float:
        m = self.exceeds(level, exact)
        if region is not None:
            m = m & (region.mask if isinstance(region, ContactSet) else np.asarray(region, bool))
        return float(np.count_nonzero(m)) * self.domain.cell


def theta(u: GridFunction, a_cap=None, rel_tol: float = 0.05, region=None,
          cache: EnvelopeCache | None = None) -> ThetaField:
    """Smallest opening of a tangent paraboloid from below, node by node.

    Membership in ``A_a`` is monotone in ``a``, so each node is bracketed on a
    shared logarithmic ladder ``a_j = 2^(j/m)`` with ``m = ceil(1/log2(1+rel_tol))``:
    first by octaves, then by binary search inside the octave.  Envelopes are
    computed once per rung and shared by all nodes.  ``a_cap`` (default
    ``64 osc(u) / dist(x, boundary)^2``) is doubled on demand up to ``2^20``;
    nodes still outside the contact set there are flagged ``inf``.
    """
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    dom = u.domain
    cache = cache or EnvelopeCache(u)
    sel = dom.interior.copy()
    if region is not None:
        sel &= region.mask if isinstance(region, ContactSet) else np.asarray(region, bool)
    nodes = np.flatnonzero(sel)
    dist = np.maximum(dom.boundary_distance[nodes], dom.h)
    if a_cap is None:
        cap = 64 * max(u.osc, 1e-300) / dist**2
    else:
        cap = np.broadcast_to(np.asarray(a_cap, dtype=float), nodes.shape).copy()
    if np.any(cap <= 0):
        raise ValueError("a_cap must be positive")
    m = max(1, ceil(1.0 / log2(1.0 + rel_tol)))

    def member(rung: int) -> np.ndarray:
        return cache(2.0 ** (rung / m)).contact.mask

    out = np.full(dom.size, np.nan)
    in0 = cache(0.0).contact.mask[nodes]
    out[nodes[in0]] = 0.0
    todo = np.flatnonzero(~in0)
    # octave search: lo < theta <= hi with hi, lo on multiples of m
    hi = np.full(len(nodes), np.iinfo(np.int64).min, dtype=np.int64)
    lo = np.full(len(nodes), np.iinfo(np.int64).min, dtype=np.int64)
    start = int(np.floor(log2(max(u.osc, 1e-12)))) * m
    hard = int(round(log2(HARD_CAP))) * m
    if len(todo):
        # upward from the start octave until each node is a member
        level, pending = start, todo
        while len(pending) and level <= hard:
            mem = member(level)[nodes[pending]]
            hi[pending[mem]] = level
            lo[pending[mem]] = level - m
            pending = pending[~mem]
            level += m
        out[nodes[pending]] = np.inf
        fin = todo[hi[todo] > np.iinfo(np.int64).min]
        fin = fin[~np.isinf(out[nodes[fin]])]
        # downward for nodes that were already members at the start octave
        pending, level = fin[hi[fin] == start], start - m
        while len(pending) and level >= start - 60 * m:
            mem = member(level)[nodes[pending]]
            hi[pending[mem]] = level
            lo[pending[mem]] = level - m
            pending = pending[mem]
            level -= m
        # binary search inside the octave
        r_lo, r_hi = lo[fin].copy(), hi[fin].copy()
        while True:
            open_ = r_hi - r_lo > 1
            if not np.any(open_):
                break
            mid = (r_lo + r_hi) // 2
            for r in np.unique(mid[open_]):
                idx = np.flatnonzero(open_ & (mid == r))
                mem = member(int(r))[nodes[fin[idx]]]
                r_hi[idx[mem]] = r
                r_lo[idx[~mem]] = r
        out[nodes[fin]] = 2.0 ** (r_hi / m)
        # the cap in force when the node resolved (doubled on demand)
        val = out[nodes]
        grow = np.isfinite(val) & (val > cap)
        while np.any(grow):
            cap[grow] *= 2
            grow = np.isfinite(val) & (val > cap) & (cap < HARD_CAP)
        cap[np.isinf(val)] = HARD_CAP
    caps = np.full(dom.size, np.nan)
    caps[nodes] = cap
    return ThetaField(dom, out, caps, rel_tol, sel, cache)


def inf_convolution(u: GridFunction, delta: float) -> GridFunction:
    """``u_delta(x) = min_y u(y) + |x - y|^2 / (2 delta)`` over the nodes ``y``.

    Exact: the quadratic penalty is separable, so the minimum is taken one
    axis at a time on the dense bounding box (``+inf`` outside the domain).
    Only offsets with ``|x - y|^2 <= 2 delta osc(u)`` can win.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    dom, h = u.domain, u.domain.h
    W = int(ceil(np.sqrt(2 * delta * max(u.osc, 0.0)) / h)) + 1
    box = dom.dense(u.values, fill=np.inf)
    for axis in range(dom.n):
        size = box.shape[axis]
        best = box.copy()
        for k in range(1, min(W, size - 1) + 1):
            pen = (k * h) ** 2 / (2 * delta)
            lead = [slice(None)] * dom.n
            trail = [slice(None)] * dom.n
            lead[axis], trail[axis] = slice(k, None), slice(None, -k)
            # y = x - k and y = x + k along this axis
            np.minimum(best[tuple(lead)], box[tuple(trail)] + pen, out=best[tuple(lead)])
            np.minimum(best[tuple(trail)], box[tuple(lead)] + pen, out=best[tuple(trail)])
        box = best
    return GridFunction(dom, dom.gather(box))
