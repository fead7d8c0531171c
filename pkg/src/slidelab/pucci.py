"""Pucci extremal operators, discrete Hessians and a grid supersolution check."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from slidelab.geometry import GridFunction

__all__ = [
    "SymMatrix",
    "PucciParams",
    "SupersolutionReport",
    "sym_eigvalsh",
    "pucci_minus",
    "pucci_plus",
    "discrete_hessian",
    "hessian_field",
    "check_supersolution",
    "gallery",
]


@dataclass(frozen=True)
class SymMatrix:
    """Symmetric n x n matrix stored by its upper triangle (row-major)."""

    n: int
    upper: tuple

    def __post_init__(self):
        if len(self.upper) != self.n * (self.n + 1) // 2:
            raise ValueError("wrong number of upper-triangle entries")
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))

    @classmethod
    def from_array(cls, A) -> "SymMatrix":
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        iu = np.triu_indices(n)
        return cls(n, tuple(A[iu]))

    @classmethod
    def identity(cls, n: int) -> "SymMatrix":
        return cls.from_array(np.eye(n))

    def to_array(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        iu = np.triu_indices(self.n)
        A[iu] = self.upper
        return A + np.triu(A, 1).T

    def eigvals(self) -> np.ndarray:
        return sym_eigvalsh(self.to_array())

    def __neg__(self):
        return SymMatrix(self.n, tuple(-v for v in self.upper))

    def __mul__(self, t: float):
        return SymMatrix(self.n, tuple(t * v for v in self.upper))

    __rmul__ = __mul__

    def __add__(self, other: "SymMatrix"):
        return SymMatrix(self.n, tuple(a + b for a, b in zip(self.upper, other.upper)))


@dataclass(frozen=True)
class PucciParams:
    lam: float
    n: int

    def __post_init__(self):
        if not self.lam >= 1:
            raise ValueError(f"ellipticity ratio must be >= 1, got {self.lam}")
        if self.n not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")


@dataclass(frozen=True)
class SupersolutionReport:
    checked: int
    violating: int
    max_violation: float
    tau: float
    capped: int = 0

    @property
    def ok(self) -> bool:
        return self.violating == 0


def sym_eigvalsh(A) -> np.ndarray:
    """Ascending eigenvalues of symmetric matrices of size 1, 2 or 3 (batched).

    Closed forms: the 2x2 quadratic formula and the trigonometric solution of
    the 3x3 characteristic cubic, with the middle root recovered from the trace.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    if n == 1:
        return A[..., 0, :].copy()
    if n == 2:
        a, b, c = A[..., 0, 0], A[..., 0, 1], A[..., 1, 1]
        m = 0.5 * (a + c)
        r = np.hypot(0.5 * (a - c), b)
        return np.stack([m - r, m + r], axis=-1)
    if n != 3:
        raise ValueError("closed-form eigenvalues only for n <= 3")
    p1 = A[..., 0, 1] ** 2 + A[..., 0, 2] ** 2 + A[..., 1, 2] ** 2
    diag = np.stack([A[..., 0, 0], A[..., 1, 1], A[..., 2, 2]], axis=-1)
    q = diag.sum(axis=-1) / 3
    p2 = ((diag - q[..., None]) ** 2).sum(axis=-1) + 2 * p1
    p = np.sqrt(p2 / 6)
    safe = np.where(p > 0, p, 1.0)
    B = (A - q[..., None, None] * np.eye(3)) / safe[..., None, None]
    r = np.clip(np.linalg.det(B) / 2, -1.0, 1.0)
    phi = np.arccos(r) / 3
    e1 = q + 2 * p * np.cos(phi)
    e3 = q + 2 * p * np.cos(phi + 2 * np.pi / 3)
    e2 = 3 * q - e1 - e3
    out = np.stack([e3, e2, e1], axis=-1)
    # exactly diagonal input: skip the cubic
    flat = p1 == 0
    if np.any(flat):
        out = np.where(flat[..., None], np.sort(diag, axis=-1), out)
    return out


def _as_array(N) -> np.ndarray:
    return N.to_array() if isinstance(N, SymMatrix) else np.asarray(N, dtype=float)


def _lam(p) -> float:
    return p.lam if isinstance(p, PucciParams) else float(p)


def pucci_minus(N, p):
    """Sum of positive eigenvalues plus ``lam`` times the sum of negative ones."""
    ev = sym_eigvalsh(_as_array(N))
    out = np.where(ev > 0, ev, 0.0).sum(axis=-1) + _lam(p) * np.where(ev < 0, ev, 0.0).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def pucci_plus(N, p):
    out = -pucci_minus(-_as_array(N), p)
    return float(out) if np.ndim(out) == 0 else out


def _stencil_ids(domain, nodes: np.ndarray):
    """Neighbour node ids needed for central second differences at ``nodes``."""
    n = domain.n
    base = domain.index[nodes]
    E = np.eye(n, dtype=np.int64)
    ids = {}
    for i, j in combinations_with_replacement(range(n), 2):
        if i == j:
            ids[i, i] = (domain.node_ids(base + E[i]), domain.node_ids(base - E[i]))
        else:
            ids[i, j] = tuple(domain.node_ids(base + si * E[i] + sj * E[j])
                              for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)))
    return ids


def hessian_field(u: GridFunction, nodes=None):
    """Central-difference Hessians at ``nodes`` (default: all interior nodes).

    Returns ``(nodes, H)`` where ``nodes`` keeps only nodes whose full stencil
    lies in the domain and ``H`` has shape ``(len(nodes), n, n)``.
    """
    dom, h, v = u.domain, u.domain.h, u.values
    if nodes is None:
        nodes = np.flatnonzero(dom.interior)
    nodes = np.asarray(nodes, dtype=np.int64)
    ids = _stencil_ids(dom, nodes)
    ok = np.ones(len(nodes), dtype=bool)
    for group in ids.values():
        for g in group:
            ok &= g >= 0
    nodes = nodes[ok]
    H = np.empty((len(nodes), dom.n, dom.n))
    for (i, j), group in ids.items():
        g = [gi[ok] for gi in group]
        if i == j:
            H[:, i, i] = (v[g[0]] + v[g[1]] - 2 * v[nodes]) / h**2
        else:
            H[:, i, j] = H[:, j, i] = (v[g[0]] - v[g[1]] - v[g[2]] + v[g[3]]) / (4 * h**2)
    return nodes, H


def discrete_hessian(u: GridFunction, node: int) -> SymMatrix:
    """Central-difference Hessian at one interior node; exact for quadratics."""
    if not u.domain.interior[node]:
        raise ValueError(f"node {node} is boundary-adjacent")
    nodes, H = hessian_field(u, [node])
    if len(nodes) == 0:
        raise ValueError(f"stencil of node {node} leaves the domain")
    return SymMatrix.from_array(H[0])


def check_supersolution(u: GridFunction, p: PucciParams, tau: float = 0.0,
                        cap: float = 1e6, mask=None) -> SupersolutionReport:
    """Test ``pucci_minus(D^2 u) <= tau`` at interior nodes.

    Nodes with an eigenvalue at or below ``-cap`` are concave kinks seen by
    the stencil and pass without testing.  ``mask`` optionally restricts the
    checked nodes.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    sel = u.domain.interior if mask is None else (u.domain.interior & np.asarray(mask, bool))
    nodes, H = hessian_field(u, np.flatnonzero(sel))
    if len(nodes) == 0:
        return SupersolutionReport(0, 0, 0.0, tau)
    ev = sym_eigvalsh(H)
    capped = ev[:, 0] <= -cap
    m = np.where(ev > 0, ev, 0.0).sum(axis=1) + p.lam * np.where(ev < 0, ev, 0.0).sum(axis=1)
    bad = (m > tau) & ~capped
    worst = float(m[bad].max()) if np.any(bad) else 0.0
    return SupersolutionReport(len(nodes), int(bad.sum()), worst, tau, int(capped.sum()))


def gallery(name: str, p: PucciParams, dom):
    """Named explicit test function sampled on ``dom`` (see :mod:`slidelab.gallery`)."""
    from slidelab.gallery import gallery as _gallery

    return _gallery(name, p, dom)
