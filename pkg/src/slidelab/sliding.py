"""Sliding paraboloids: tangent paraboloids to an envelope, lifting them until
they touch the function, and the resulting measure estimate."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from slidelab.envelope import EnvelopeCache, EnvelopeResult
from slidelab.geometry import ContactSet, GridDomain, GridFunction, Paraboloid

log = logging.getLogger(__name__)

__all__ = [
    "TangentFamily",
    "SlideResult",
    "MeasureReport",
    "tangent_paraboloids",
    "slide_up",
    "slide_family",
    "vertex_measure",
    "measure_estimate",
    "lemma_constant",
]

TIE_TOL = 1e-12


def lemma_constant(n: int, lam: float) -> float:
    """``2^-1 (2 n lam)^(1-n)``."""
    return 0.5 * (2 * n * lam) ** (1 - n)


@dataclass(frozen=True, eq=False)
class TangentFamily:
    """Paraboloids of opening ``-opening`` tangent from below to an envelope.

    Row ``i`` is ``-(opening/2)|z|^2 + slope_i . z + offset_i`` in coordinates
    ``z = x - center`` and touches the envelope at node ``sources[i]``.
    ``vertices`` are the points ``x0 + q/(opening - a)`` where ``q`` is the
    chosen subgradient of the lifted convex function ``Gamma^a + (a/2)|z|^2``.
    """

    domain: GridDomain
    a: float
    opening: float
    sources: np.ndarray
    slope: np.ndarray
    offset: np.ndarray
    vertices: np.ndarray

    def __len__(self):
        return len(self.sources)

    def paraboloid(self, i: int) -> Paraboloid:
        """Row ``i`` as a :class:`Paraboloid` in absolute coordinates."""
        c = np.asarray(self.domain.center)
        b = self.opening
        y = self.slope[i] + b * c
        off = self.offset[i] - 0.5 * b * (c @ c) - self.slope[i] @ c
        return Paraboloid(-b, tuple(y), float(off))

    def __iter__(self):
        X = self.domain.coords
        for i in range(len(self)):
            yield X[self.sources[i]], self.paraboloid(i), self.vertices[i]


def tangent_paraboloids(e: EnvelopeResult, F, new_opening: float | None = None) -> TangentFamily:
    """Tangent paraboloids of opening ``-new_opening`` (default ``-2a``) to ``Gamma^a`` on ``F``."""
    dom = e.v.domain
    mask = F.mask if isinstance(F, ContactSet) else np.asarray(F)
    src = np.flatnonzero(mask) if mask.dtype == bool else np.asarray(mask, dtype=np.int64)
    if mask.dtype == bool and np.any(mask & dom.boundary):
        raise ValueError("sources must be interior nodes")
    a = e.a
    b = 2 * a if new_opening is None else float(new_opening)
    if b < a or b <= 0:
        raise ValueError("new opening must be positive and at least a")
    z0 = e.hull.X[src]
    q = e.hull.slope[src]
    grad = q - a * z0
    gam = e.gamma.values[src]
    slope = grad + b * z0
    offset = gam - (grad * z0).sum(1) - 0.5 * b * (z0 * z0).sum(1)
    c = np.asarray(dom.center)
    if b > a:
        vert = c + z0 + q / (b - a)
    else:
        vert = np.full_like(z0, np.nan)
    return TangentFamily(dom, a, b, src, slope, offset, vert)


@dataclass(frozen=True, eq=False)
class SlideResult:
    """Outcome of lifting one paraboloid until it touches ``u`` from below."""

    source: np.ndarray
    paraboloid: Paraboloid
    lift: float
    contact: np.ndarray
    interior: bool


def _tie_scale(g: np.ndarray, X: np.ndarray, s: np.ndarray) -> np.ndarray:
    r = np.abs(X).sum(1).max() if len(X) else 0.0
    return TIE_TOL * (1 + np.abs(g).max() + np.abs(s).max(axis=-1) * r)


def slide_up(u: GridFunction, P: Paraboloid, source=None, interior_mask=None) -> SlideResult:
    """Lift ``P`` by ``t = min(u - P)`` over all nodes; report every node attaining it."""
    dom = u.domain
    diff = u.values - P(dom.coords)
    t = float(diff.min())
    tol = TIE_TOL * (1 + np.abs(u.values).max() + np.abs(P(dom.coords)).max())
    contact = np.flatnonzero(diff <= t + tol)
    inner = dom.interior if interior_mask is None else interior_mask
    x0 = np.full(dom.n, np.nan) if source is None else np.asarray(source, dtype=float)
    return SlideResult(x0, P, t, contact, bool(np.all(inner[contact])))


@dataclass(frozen=True, eq=False)
class SlideBatch:
    lift: np.ndarray
    touch: np.ndarray                 # one contact node per slide
    contact_ptr: np.ndarray           # CSR of all tied contact nodes
    contact_idx: np.ndarray

    def contacts(self, i: int) -> np.ndarray:
        return self.contact_idx[self.contact_ptr[i]:self.contact_ptr[i + 1]]


def slide_family(fam: TangentFamily, lifted: EnvelopeResult) -> SlideBatch:
    """Slide every paraboloid of ``fam`` up to ``u = lifted.v``.

    ``lifted`` is the envelope of ``u`` at opening ``fam.opening``; its hull
    is the lower hull of ``u + (b/2)|z|^2`` and the minimum of ``u - P`` is a
    support query on it.
    """
    if not np.isclose(lifted.a, fam.opening):
        raise ValueError("slides need the envelope at the paraboloid opening")
    H = lifted.hull
    k = len(fam)
    if k == 0:
        z = np.zeros(0, dtype=np.int64)
        return SlideBatch(np.zeros(0), z, np.zeros(1, dtype=np.int64), z)
    tol = _tie_scale(H.g, H.X, fam.slope)
    node, val, near = H.support(fam.slope, fam.slope / fam.opening, tol=tol)
    lift = val - fam.offset
    ptr = np.zeros(k + 1, dtype=np.int64)
    parts = []
    for i in range(k):
        if near[i]:
            c = H.tied(fam.slope[i], node[i], val[i], tol[i])
        else:
            c = node[i:i + 1]
        parts.append(c)
        ptr[i + 1] = ptr[i] + len(c)
    idx = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    return SlideBatch(lift, node, ptr, idx)


def vertex_measure(dom: GridDomain, vertices: np.ndarray) -> float:
    """Cell coverage of a finite point set: occupied lattice cells times ``h^n``."""
    if len(vertices) == 0:
        return 0.0
    cells = np.round((vertices - np.asarray(dom.center)) / dom.h).astype(np.int64)
    return float(len(np.unique(cells, axis=0))) * dom.cell


@dataclass(frozen=True, eq=False)
class MeasureReport:
    a: float
    lam: float
    F_measure: float
    E_measure: float
    V_measure: float
    gain_measure: float
    bound: float
    slack: float
    passed: bool
    interior_violations: int
    precondition: bool
    new_contact_A0: int = 0
    new_contact_Aa: int = 0
    pruned: int = 0
    sources: int = 0
    E: ContactSet | None = field(default=None, repr=False)
    min_lift: float = 0.0
    details: dict = field(default_factory=dict, repr=False)


def measure_estimate(u: GridFunction, a: float, lam: float, F=None, restrict=None,
                     slack: float = 0.1, prune: bool = False, new_opening: float | None = None,
                     cache: EnvelopeCache | None = None, interior_mask=None,
                     check_new_contact: bool = True) -> MeasureReport:
    """Slide the tangent paraboloids of ``Gamma^a_u`` on ``F`` and compare
    ``|A_2a \\ A_a|`` with ``2^-1 (2 n lam)^(1-n) |F|``.

    ``F`` is intersected with the interior nodes outside ``A_a`` (default: all
    of them).  ``restrict`` is a mask or concentric sub-domain ``Omega'``: the
    contact sets are intersected with it and slides must touch inside its
    interior.  With ``prune`` the sources whose slides touch outside the
    interior are dropped before measuring ``F`` (the lemma applies to any
    admissible ``F``); otherwise they make the precondition fail.
    """
    dom = u.domain
    cache = cache or EnvelopeCache(u)
    b = 2 * a if new_opening is None else float(new_opening)
    ea, eb = cache(a), cache(b)
    if restrict is None:
        region = np.ones(dom.size, dtype=bool)
    elif isinstance(restrict, GridDomain):
        ids = dom.embed(restrict)
        region = np.zeros(dom.size, dtype=bool)
        region[ids[ids >= 0]] = True
        sub_inner = np.zeros(dom.size, dtype=bool)
        sub_inner[ids[(ids >= 0) & restrict.interior]] = True
        if interior_mask is None:
            interior_mask = sub_inner
    else:
        region = restrict.mask if isinstance(restrict, ContactSet) else np.asarray(restrict, bool)
    inner = dom.interior if interior_mask is None else (np.asarray(interior_mask, bool) & dom.interior)

    base = dom.interior & ~ea.contact.mask
    if F is not None:
        fm = F.mask if isinstance(F, ContactSet) else np.asarray(F, bool)
        base &= fm
    fam = tangent_paraboloids(ea, ContactSet(dom, base), b)
    batch = slide_family(fam, eb)
    ok = np.array([bool(np.all(inner[batch.contacts(i)])) for i in range(len(fam))], dtype=bool)
    violations = int(np.count_nonzero(~ok))
    keep = ok if prune else np.ones(len(fam), dtype=bool)
    precondition = bool(np.all(ok[keep]))

    E = np.zeros(dom.size, dtype=bool)
    kept = np.flatnonzero(keep)
    if len(kept):
        E[np.concatenate([batch.contacts(i) for i in kept])] = True
    F_measure = float(len(kept)) * dom.cell
    V_measure = vertex_measure(dom, fam.vertices[kept])
    gain = (eb.contact.mask & ~ea.contact.mask & region)
    gain_measure = float(np.count_nonzero(gain)) * dom.cell
    bound = lemma_constant(dom.n, lam) * F_measure
    n_a0 = n_aa = 0
    if check_new_contact and E.any():
        n_a0 = int(np.count_nonzero(E & cache(0.0).contact.mask))
        n_aa = int(np.count_nonzero(E & ea.contact.mask))
    passed = precondition and gain_measure >= bound * (1 - slack)
    return MeasureReport(
        a=float(a), lam=float(lam), F_measure=F_measure,
        E_measure=float(np.count_nonzero(E)) * dom.cell, V_measure=V_measure,
        gain_measure=gain_measure, bound=bound, slack=slack, passed=bool(passed),
        interior_violations=violations, precondition=precondition,
        new_contact_A0=n_a0, new_contact_Aa=n_aa,
        pruned=int(len(fam) - len(kept)), sources=len(fam), E=ContactSet(dom, E),
        min_lift=float(batch.lift[kept].min()) if len(kept) else 0.0,
        details={"family": fam, "batch": batch, "kept": kept, "envelope": ea, "lifted": eb},
    )
