"""Lower convex hull of a lifted lattice cloud, with point location and
vertex-walk support queries.

The cloud is ``{(x_i, g_i)}`` for the nodes ``x_i`` of a :class:`GridDomain`.
In 1-D the hull is a monotone chain; in 2-D and 3-D it comes from qhull on
the ``(n+1)``-dimensional cloud.  Lower facets are kept as simplices of node
ids, their planes are recomputed from the vertex values, and every node is
assigned a facet (its own incident facet for hull vertices, the containing
facet for the rest).
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from slidelab.geometry import GridDomain

log = logging.getLogger(__name__)

_WALK_EPS = 1e-9


def _csr(rows: np.ndarray, cols: np.ndarray, size: int):
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    keep = np.ones(len(rows), dtype=bool)
    keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    rows, cols = rows[keep], cols[keep]
    indptr = np.zeros(size + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    return np.cumsum(indptr), cols


def _lower_chain(g: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Vertices of the lower hull of 1-D points sorted by ``idx`` (strictly convex turns)."""
    hull: list[int] = []
    for i in range(len(g)):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (idx[a] - idx[o]) * (g[i] - g[o]) - (g[a] - g[o]) * (idx[i] - idx[o])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull, dtype=np.int64)


class LowerHull:
    """Lower hull of ``{(x_i, g_i)}`` over the nodes of ``dom``.

    Attributes
    ----------
    gamma : (N,) envelope values at every node (convex envelope of ``g``)
    slope : (N, n) a subgradient of the envelope at each node
    facet_of : (N,) facet used for each node
    simplices : (F, n+1) node ids of lower facets
    plane_slope, plane_offset : facet planes ``slope . x + offset``
    """

    def __init__(self, dom: GridDomain, g: np.ndarray):
        self.dom = dom
        self.g = np.asarray(g, dtype=float)
        self.n = dom.n
        # work in coordinates relative to the center; planes refer to these
        self.X = dom.h * dom.index.astype(float)
        span = float(np.ptp(self.g)) if self.g.size else 0.0
        self.scale = max(1.0, float(np.abs(self.g).max(initial=0.0)))
        self.affine = False
        if dom.size <= self.n + 1 or self._fit_affine(span):
            return
        if self.n == 1:
            self._build_chain()
        else:
            self._build_qhull(span)
        self._finish()

    # -- construction -------------------------------------------------------

    def _fit_affine(self, span: float) -> bool:
        A = np.column_stack([self.X, np.ones(len(self.X))])
        coef, *_ = np.linalg.lstsq(A, self.g, rcond=None)
        resid = self.g - A @ coef
        if np.abs(resid).max() > 1e-12 * max(self.scale, span):
            return False
        self.affine = True
        self.gamma = self.g.copy()
        self.slope = np.tile(coef[:-1], (len(self.g), 1))
        self.affine_coef = coef
        ext = self._domain_extremes()
        self.extremes = ext
        return True

    def _domain_extremes(self) -> np.ndarray:
        if self.n == 1:
            return np.array([0, self.dom.size - 1], dtype=np.int64)
        return np.asarray(ConvexHull(self.X).vertices, dtype=np.int64)

    def _build_chain(self):
        idx = self.dom.index[:, 0]
        verts = _lower_chain(self.g, idx)
        S = np.column_stack([verts[:-1], verts[1:]])
        nF = len(S)
        nbr = np.full((nF, 2), -1, dtype=np.int64)
        nbr[:-1, 0] = np.arange(1, nF)       # opposite the left vertex: right neighbour
        nbr[1:, 1] = np.arange(nF - 1)
        self.simplices, self.neighbors = S, nbr

    def _build_qhull(self, span: float):
        n = self.n
        width = float(np.ptp(self.X, axis=0).max())
        gs = (self.g - self.g.mean()) * (width / span if span > 0 else 1.0)
        pts = np.column_stack([self.X, gs])
        try:
            hull = ConvexHull(pts)
        except QhullError:
            log.debug("qhull failed on the lifted cloud, retrying with joggle")
            hull = ConvexHull(pts, qhull_options="QJ")
        eq = hull.equations
        lower = eq[:, n] < -1e-10 * np.linalg.norm(eq[:, :n], axis=1).clip(1e-300)
        S = hull.simplices[lower].astype(np.int64)
        # projected simplices must be non-degenerate (exact integer test)
        I = self.dom.index
        E = I[S[:, 1:]] - I[S[:, :1]]
        if n == 2:
            det = E[:, 0, 0] * E[:, 1, 1] - E[:, 0, 1] * E[:, 1, 0]
        else:
            det = (E[:, 0, 0] * (E[:, 1, 1] * E[:, 2, 2] - E[:, 1, 2] * E[:, 2, 1])
                   - E[:, 0, 1] * (E[:, 1, 0] * E[:, 2, 2] - E[:, 1, 2] * E[:, 2, 0])
                   + E[:, 0, 2] * (E[:, 1, 0] * E[:, 2, 1] - E[:, 1, 1] * E[:, 2, 0]))
        good = det != 0
        remap = np.full(len(eq), -1, dtype=np.int64)
        keep_ids = np.flatnonzero(lower)[good]
        remap[keep_ids] = np.arange(len(keep_ids))
        self.simplices = S[good]
        nbr = hull.neighbors[keep_ids].astype(np.int64)
        self.neighbors = remap[nbr]

    def _finish(self):
        n, S, X, g = self.n, self.simplices, self.X, self.g
        nF = len(S)
        # planes through the vertex values: [x 1] [m; c] = g
        M = np.concatenate([X[S], np.ones((nF, n + 1, 1))], axis=2)
        sol = np.linalg.solve(M, g[S][:, :, None])[:, :, 0]
        self.plane_slope, self.plane_offset = sol[:, :n], sol[:, n]
        # barycentric transforms for point location
        E = X[S[:, 1:]] - X[S[:, :1]]                      # (F, n, n)
        self.bary_T = np.linalg.inv(np.swapaxes(E, 1, 2))
        verts = np.unique(S)
        self.vertices = verts
        N = len(g)
        self.is_vertex = np.zeros(N, dtype=bool)
        self.is_vertex[verts] = True
        # vertex -> incident facets
        fid = np.repeat(np.arange(nF), n + 1)
        self.vf_ptr, self.vf_idx = _csr(S.ravel(), fid, N)
        # vertex adjacency along facet edges
        a = np.repeat(S, n + 1, axis=1).ravel()
        b = np.tile(S, (1, n + 1)).ravel()
        off = a != b
        self.adj_ptr, self.adj_idx = _csr(a[off], b[off], N)

        gamma = np.empty(N)
        slope = np.empty((N, n))
        facet_of = np.full(N, -1, dtype=np.int64)
        # hull vertices: lexicographically smallest incident slope
        rows = S.ravel()
        keys = [self.plane_slope[fid, j] for j in range(n - 1, -1, -1)] + [rows]
        order = np.lexsort(keys)
        first = np.ones(len(order), dtype=bool)
        first[1:] = rows[order][1:] != rows[order][:-1]
        pick = order[first]
        facet_of[rows[pick]] = fid[pick]
        gamma[verts] = g[verts]
        self._tree = cKDTree(X[verts])
        # the rest: walk to the containing facet
        rest = np.flatnonzero(~self.is_vertex)
        if len(rest):
            facet_of[rest] = self.locate(X[rest])
        slope[:] = self.plane_slope[facet_of]
        if len(rest):
            val = (self.plane_slope[facet_of[rest]] * X[rest]).sum(1) + self.plane_offset[facet_of[rest]]
            gamma[rest] = np.minimum(val, g[rest])
        self.gamma, self.slope, self.facet_of = gamma, slope, facet_of
        # facet -> located non-vertex nodes (needed for ties on flat faces)
        self.fn_ptr, self.fn_idx = _csr(facet_of[rest], rest, nF)

    # -- queries ------------------------------------------------------------

    def _bary(self, f: np.ndarray, x: np.ndarray) -> np.ndarray:
        d = x - self.X[self.simplices[f, 0]]
        lam = np.einsum("kij,kj->ki", self.bary_T[f], d)
        return np.column_stack([1 - lam.sum(1), lam])

    def locate(self, x: np.ndarray) -> np.ndarray:
        """Lower facet containing each point (visibility walk from the nearest vertex)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        _, near = self._tree.query(x)
        v = self.vertices[near]
        f = self.vf_idx[self.vf_ptr[v]]
        active = np.arange(len(x))
        limit = 4 * int(np.ceil(len(self.X) ** (1 / self.n))) + 16
        for _ in range(limit):
            if not len(active):
                break
            lam = self._bary(f[active], x[active])
            j = lam.argmin(axis=1)
            inside = lam[np.arange(len(active)), j] >= -_WALK_EPS
            nxt = self.neighbors[f[active], j]
            stuck = ~inside & (nxt < 0)
            move = ~inside & ~stuck
            f[active[move]] = nxt[move]
            if np.any(stuck):
                f[active[stuck]] = self._brute_locate(x[active[stuck]])
            active = active[move]
        if len(active):
            f[active] = self._brute_locate(x[active])
        return f

    def _brute_locate(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(len(x), dtype=np.int64)
        for k in range(0, len(x), 256):
            vals = x[k:k + 256] @ self.plane_slope.T + self.plane_offset
            out[k:k + 256] = vals.argmax(axis=1)
        return out

    def support(self, s: np.ndarray, guess: np.ndarray, tol: float | None = None):
        """Minimize ``g - s . x`` over nodes for each row of ``s``.

        Starts at the hull vertex nearest ``guess`` and walks the vertex graph
        downhill; on a convex piecewise-linear surface a local minimum over
        hull neighbours is global.  Returns ``(node, value)``, plus a flag per
        query marking a hull neighbour within ``tol`` of the minimum when
        ``tol`` is given.
        """
        s = np.atleast_2d(np.asarray(s, dtype=float))
        g, X = self.g, self.X
        if self.affine:
            ext = self.extremes
            vals = g[ext][None, :] - s @ X[ext].T
            j = vals.argmin(axis=1)
            best = vals[np.arange(len(s)), j]
            if tol is None:
                return ext[j], best
            return ext[j], best, np.ones(len(s), dtype=bool)
        _, near = self._tree.query(np.atleast_2d(guess))
        cur = self.vertices[near]
        val = g[cur] - (s * X[cur]).sum(1)
        active = np.arange(len(s))
        while len(active):
            bq, bv, bn = self._best_neighbour(cur[active], s[active])
            down = bv < val[active[bq]]
            mv = active[bq[down]]
            cur[mv] = bn[down]
            val[mv] = bv[down]
            active = mv
        if tol is None:
            return cur, val
        bq, bv, _ = self._best_neighbour(cur, s)
        near = np.zeros(len(s), dtype=bool)
        near[bq] = bv <= val[bq] + tol
        return cur, val, near

    def _best_neighbour(self, c: np.ndarray, s: np.ndarray):
        ptr, idx, g, X = self.adj_ptr, self.adj_idx, self.g, self.X
        deg = ptr[c + 1] - ptr[c]
        qid = np.repeat(np.arange(len(c)), deg)
        start = np.repeat(ptr[c] - np.cumsum(deg) + deg, deg)
        nb = idx[start + np.arange(len(qid))]
        nv = g[nb] - (s[qid] * X[nb]).sum(1)
        order = np.lexsort((nv, qid))
        head = np.ones(len(order), dtype=bool)
        head[1:] = qid[order][1:] != qid[order][:-1]
        best = order[head]
        return qid[best], nv[best], nb[best]

    def tied(self, s: np.ndarray, node: int, value: float, tol: float) -> np.ndarray:
        """All nodes with ``g - s . x <= value + tol`` on the face touched at ``node``."""
        g, X = self.g, self.X
        if self.affine:
            return np.flatnonzero(g - X @ s <= value + tol)
        seen = {int(node)}
        stack = [int(node)]
        while stack:
            v = stack.pop()
            nb = self.adj_idx[self.adj_ptr[v]:self.adj_ptr[v + 1]]
            nb = nb[g[nb] - X[nb] @ s <= value + tol]
            for w in nb.tolist():
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        out = sorted(seen)
        if len(out) > 1:
            tv = np.array(out)
            mark = np.zeros(len(g), dtype=bool)
            mark[tv] = True
            faces = np.unique(np.concatenate(
                [self.vf_idx[self.vf_ptr[v]:self.vf_ptr[v + 1]] for v in out]))
            faces = faces[mark[self.simplices[faces]].all(axis=1)]
            if len(faces):
                extra = np.concatenate([self.fn_idx[self.fn_ptr[f]:self.fn_ptr[f + 1]] for f in faces])
                extra = extra[g[extra] - X[extra] @ s <= value + tol]
                out = sorted(set(out) | set(extra.tolist()))
        return np.array(out, dtype=np.int64)
