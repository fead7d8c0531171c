"""Drivers that replay the dyadic decay iterations on grids, audit the
resulting inequalities, fit empirical decay exponents and write CSV/SVG.

Every driver returns a :class:`RunResult` holding the per-step records, the
audited inequalities and a fitted exponent.  Audits never raise; the CLI
turns failed audits into ``failures.csv`` and a nonzero exit code.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from slidelab.envelope import EnvelopeCache, ThetaField
from slidelab.gallery import default_supersolutions, gallery
from slidelab.geometry import GridDomain, GridFunction, ball_volume, make_ball_domain
from slidelab.pucci import PucciParams, hessian_field, pucci_minus
from slidelab.sliding import lemma_constant, measure_estimate

log = logging.getLogger(__name__)

__all__ = [
    "Audit",
    "BoundRow",
    "DecayRecord",
    "EpsilonFit",
    "ExperimentConfig",
    "GeometryError",
    "GrowthRow",
    "RunResult",
    "audit_global_theorem",
    "audit_interior_theorem",
    "check_barrier",
    "check_growth",
    "check_theorem_bound",
    "fit_epsilon",
    "run_global_decay",
    "run_interior_decay",
    "run_weak_harnack",
    "smallest_tail_constant",
    "sweep_lambda",
    "write_csv",
    "write_decay_svg",
]

SLACK = 0.1
T_LIST = (2, 4, 8, 16, 32, 64)
HARNACK_T = (2, 4, 8)
INNER_RADIUS = 2.5


class GeometryError(RuntimeError):
    """A slide left the region the iteration requires it to stay in."""


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    gallery: str = "cone"
    n: int = 2
    h: float = 1 / 128
    lam: float = 1.0
    kmax: int = 6
    R: float = 8.0
    c0: float = 1 / 16
    C_wh: float | None = None
    paper_constants: bool = False
    out: str = "out"
    seed: int = 0
    svg: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError("n must be 1, 2 or 3")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.lam < 1:
            raise ValueError("lam must be at least 1")
        if self.kmax < 1:
            raise ValueError("kmax must be at least 1")
        if self.R <= 1:
            raise ValueError("R must exceed 1")
        if not 0 < self.c0 <= 1 / 8:
            raise ValueError("c0 must lie in (0, 1/8]")
        if self.C_wh is not None and self.C_wh <= 0:
            raise ValueError("C_wh must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        unknown = sorted(set(data) - set(cls.keys()))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        types = {f.name: f.type for f in fields(cls)}
        clean = {}
        for k, v in data.items():
            if v is None:
                clean[k] = None
            elif types[k] in ("int",):
                clean[k] = int(v)
            elif types[k] in ("float", "float | None"):
                clean[k] = float(eval_number(v))
            elif types[k] == "bool":
                clean[k] = _as_bool(v)
            else:
                clean[k] = str(v)
        return cls(**clean)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        import yaml

        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
            raise ValueError("config must be a flat mapping of keys to values")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(data)

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def eval_number(v) -> float:
    """Accept plain numbers and simple fractions such as ``1/128``."""
    if isinstance(v, (int, float)):
        return float(v)
    s = str(v).strip()
    if "/" in s:
        num, den = s.split("/", 1)
        return float(num) / float(den)
    return float(s)


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


# -- records -----------------------------------------------------------------


@dataclass(frozen=True)
class DecayRecord:
    k: int
    opening: float
    bad_measure: float
    ratio: float
    case: str
    F_measure: float
    E_interior: bool

    def row(self) -> list:
        return [self.k, self.opening, self.bad_measure, self.ratio, self.case,
                self.F_measure, self.E_interior]


DECAY_HEADER = ["k", "opening", "bad_measure", "ratio", "case", "F_measure", "E_interior"]


@dataclass(frozen=True)
class EpsilonFit:
    records_used: int
    eps_emp: float
    residual: float
    eps_theory: float


@dataclass(frozen=True)
class Audit:
    name: str
    k: int
    lhs: float
    rhs: float
    passed: bool
    detail: str = ""


FAILURE_HEADER = ["audit", "k", "lhs", "rhs", "detail"]


@dataclass(frozen=True)
class BoundRow:
    t: float
    lhs_measure: float
    rhs_budget: float
    passed: bool

    def row(self) -> list:
        return [self.t, self.lhs_measure, self.rhs_budget, self.passed]


BOUND_HEADER = ["t", "lhs_measure", "rhs_budget", "pass"]


@dataclass(frozen=True)
class GrowthRow:
    x0: tuple
    rho: float
    inf: float
    bound: float
    passed: bool


@dataclass
class RunResult:
    records: list[DecayRecord]
    fit: EpsilonFit
    audits: list[Audit] = field(default_factory=list)
    bounds: list[BoundRow] = field(default_factory=list)
    growth: list[GrowthRow] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.audits)

    @property
    def failures(self) -> list[Audit]:
        return [a for a in self.audits if not a.passed]


# -- exponent fit ------------------------------------------------------------


def fit_epsilon(records, eps_theory: float = float("nan")) -> EpsilonFit:
    """Least-squares slope of ``log2(bad_measure)`` against ``k``; ``eps = -slope``.

    All-zero records give ``eps = inf``.  Between one and two positive
    records is too few for a fit.
    """
    pos = [(r.k, r.bad_measure) for r in records if r.bad_measure > 0]
    if not pos:
        return EpsilonFit(0, math.inf, 0.0, eps_theory)
    if len(pos) < 3:
        raise ValueError(f"need at least 3 records with positive bad measure, got {len(pos)}")
    slope, resid = _line_fit([k for k, _ in pos], [math.log2(b) for _, b in pos])
    return EpsilonFit(len(pos), max(0.0, -slope), resid, eps_theory)


def _line_fit(x, y) -> tuple[float, float]:
    """Slope and RMS residual of a least-squares line (plain sums, reproducible)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum()) / sxx if sxx > 0 else 0.0
    res = y - (ym + slope * (x - xm))
    return slope, float(np.sqrt((res**2).mean()))


def _safe_fit(records, eps_theory) -> EpsilonFit:
    try:
        return fit_epsilon(records, eps_theory)
    except ValueError:
        used = sum(r.bad_measure > 0 for r in records)
        return EpsilonFit(used, math.nan, math.nan, eps_theory)


def _records(k_list, bads, cases, F_meas, E_ok) -> list[DecayRecord]:
    out = []
    for i, k in enumerate(k_list):
        if i == 0:
            ratio = math.nan
        elif bads[i - 1] > 0:
            ratio = bads[i] / bads[i - 1]
        else:
            ratio = 0.0
        out.append(DecayRecord(k, 2.0**k, bads[i], ratio, cases[i], F_meas[i], E_ok[i]))
    return out


def _bump_audit(k: int, rep, cell: float) -> Audit:
    """Measure gain against the lemma bound, the bound rounded down to whole cells."""
    need = rep.bound * (1 - SLACK)
    ok = rep.gain_measure >= need or round(rep.gain_measure / cell) >= math.floor(need / cell + 1e-9)
    return Audit("lemma_bump", k, rep.gain_measure, need, bool(ok), f"F={rep.F_measure:.6g}")


def _monotone_audit(bads) -> list[Audit]:
    return [Audit("monotone_bad", k + 1, bads[k + 1], bads[k], bads[k + 1] <= bads[k])
            for k in range(len(bads) - 1)]


# -- interior decay ----------------------------------------------------------


def _node_planes(hull, nodes):
    if hull.affine:
        c = hull.affine_coef
        return np.tile(c[:-1], (len(nodes), 1)), np.full(len(nodes), c[-1])
    f = hull.facet_of[nodes]
    return hull.plane_slope[f], hull.plane_offset[f]


def _clears_outer(slope, offset, alpha, r_lo, r_hi, tol) -> np.ndarray:
    """Whether ``alpha r^2 + 1/4 >= |slope| r + offset - tol`` on ``[r_lo, r_hi]``."""
    m = np.linalg.norm(np.atleast_2d(slope), axis=1)
    r = np.clip(m / (2 * alpha), r_lo, r_hi)
    return alpha * r * r - m * r + 0.25 - offset >= -tol


class _Truncated:
    """The extended function on ``B_rc`` standing in for its extension to ``B_R``.

    Outside ``B_1`` the extension is ``(1 - |x|^2)/4``; with opening ``a`` the
    lifted function there is ``(a/2 - 1/4)|x|^2 + 1/4``, radial and convex.
    Facet planes used by nodes of ``B_2`` and every slide are certified
    against that function on ``rc <= |x| <= R``; a failed certificate
    means the truncation is too tight.
    """

    def __init__(self, inner: GridFunction, rc: float, R: float):
        base = inner.domain
        self.rc, self.R = rc, R
        dom = GridDomain(base.n, base.h, rc, base.center, base.band)
        vals = 0.25 * (1 - (dom.coords**2).sum(1))
        ids = dom.embed(base)
        vals[ids] = np.minimum(vals[ids], inner.values)
        self.u = GridFunction(dom, vals)
        self.cache = EnvelopeCache(self.u)
        self.watch = dom.ball_mask(2.0, open_ball=True)
        self._certified: dict[float, bool] = {}

    @property
    def full(self) -> bool:
        return self.rc >= self.R

    def _tol(self, a: float) -> float:
        return 1e-10 * (1 + a * self.rc**2)

    def certified(self, a: float) -> bool:
        if self.full:
            return True
        if a not in self._certified:
            e = self.cache(a)
            m, c = _node_planes(e.hull, np.flatnonzero(self.watch))
            ok = _clears_outer(m, c, a / 2 - 0.25, self.rc, self.R, self._tol(a))
            self._certified[a] = bool(np.all(ok))
        return self._certified[a]

    def bad(self, a: float) -> float:
        dom = self.u.domain
        return float(np.count_nonzero(self.watch & ~self.cache(a).contact.mask)) * dom.cell

    def step(self, a: float, lam: float):
        """Measure estimate at opening ``a``, or ``None`` if the truncation is too tight."""
        if not (self.certified(a) and self.certified(2 * a)):
            return None
        ea = self.cache(a)
        F = self.watch & ~ea.contact.mask
        rep = measure_estimate(self.u, a, lam, F=F, restrict=self.watch, cache=self.cache,
                               check_new_contact=False)
        if rep.interior_violations:
            if self.full:
                raise GeometryError(
                    f"{rep.interior_violations} slides at opening {a:g} touch the boundary "
                    f"band of B_{self.R:g}; increase R")
            return None
        if not self.full and rep.sources:
            d = rep.details
            fam, batch = d["family"], d["batch"]
            val = batch.lift + fam.offset
            ok = _clears_outer(fam.slope, val, fam.opening / 2 - 0.25, self.rc, self.R,
                               self._tol(fam.opening))
            if not np.all(ok):
                return None
        return rep


def _member(cfg: ExperimentConfig, radius: float, u: GridFunction | None) -> GridFunction:
    if u is None:
        return gallery(cfg.gallery, PucciParams(cfg.lam, cfg.n), make_ball_domain(cfg.n, radius, cfg.h))
    if not np.isclose(u.domain.radius, radius) or np.any(np.asarray(u.domain.center) != 0):
        raise ValueError(f"explicit input must live on the centered ball of radius {radius:g}")
    return u


def _normalized_inner(cfg: ExperimentConfig, u: GridFunction | None = None) -> GridFunction:
    u = _member(cfg, 1.0, u)
    dom = u.domain
    norm = u.sup_norm
    scaled = u.values / (64 * norm) if norm > 0 else np.zeros(dom.size)
    # 1/64 <= value <= 3/64, inside (0, 2^-4]
    return GridFunction(dom, scaled + 1 / 32)


def run_interior_decay(cfg: ExperimentConfig, u: GridFunction | None = None) -> RunResult:
    """Dyadic decay of ``|B_2 \\ A_{2^k}|`` for the extension ``min(u, (1 - |x|^2)/4)``.

    ``u`` is rescaled into ``[1/64, 3/64]``.  The extension lives on ``B_R``;
    since nodes with ``|x| >= 2`` already lie in ``A_1``, the envelopes are
    computed on ``B_2.5`` and certified against the explicit outer part, with
    the radius doubled (up to ``R``) whenever a certificate fails.  ``u``
    (on ``B_1``) replaces the gallery member when given.
    """
    R = 32.0 if cfg.paper_constants else cfg.R
    n, lam = cfg.n, cfg.lam
    c = lemma_constant(n, lam)
    factor = 1 - c
    inner = _normalized_inner(cfg, u)
    tr = _Truncated(inner, min(INNER_RADIUS, R), R)
    ks = list(range(cfg.kmax + 1))
    bads, cases, F_meas, E_ok, reports = [], [], [], [], []
    for k in ks:
        a = 2.0**k
        while True:
            rep = tr.step(a, lam)
            if rep is not None:
                break
            if tr.full:
                raise GeometryError(f"truncation certificate failed on the full ball B_{R:g}")
            log.info("truncation radius %.3g too small at opening %g; doubling", tr.rc, a)
            tr = _Truncated(inner, min(2 * tr.rc, R), R)
        bads.append(tr.bad(a))
        cases.append("interior")
        F_meas.append(rep.F_measure)
        E_ok.append(rep.precondition)
        reports.append((rep, tr.bad(2 * a)))

    B2 = ball_volume(n, 2.0)
    audits = _monotone_audit(bads)
    for k, (rep, nxt) in zip(ks, reports):
        bad = bads[k]
        audits.append(_bump_audit(k, rep, tr.u.domain.cell))
        if bad > 0:
            audits.append(Audit("step_ratio", k, nxt / bad, factor + SLACK, nxt / bad <= factor + SLACK))
        audits.append(Audit("decay_bound", k, bad, factor**k * B2 * (1 + SLACK),
                            bad <= factor**k * B2 * (1 + SLACK)))
    records = _records(ks, bads, cases, F_meas, E_ok)
    notes = {"truncation_radius": tr.rc, "R": R, "vacuous": not any(bads)}
    return RunResult(records, _safe_fit(records, c / 2), audits, notes=notes)


# -- global decay ------------------------------------------------------------


def _normalized_global(cfg: ExperimentConfig, c0: float, u: GridFunction | None = None) -> GridFunction:
    u = _member(cfg, 1.0, u)
    dom = u.domain
    osc = u.osc
    w = (u.values - u.values.min()) / osc * c0**2 if osc > 0 else np.zeros(dom.size)
    return GridFunction(dom, w)


def run_global_decay(cfg: ExperimentConfig, u: GridFunction | None = None) -> RunResult:
    """Dyadic decay of ``|B_1 \\ A_{2^k}|`` with the boundary-layer dichotomy.

    ``u`` is rescaled into ``[0, c0^2]`` and ``rho_k = c0 2^(-k/2)``.  Sources
    are taken in ``B_{1 - 4 rho_k}``; when they carry at least half of the bad
    set the measure estimate is applied (slides must stay in
    ``B_{1 - rho_k}``), otherwise the bad set is bounded by the layer.
    """
    n, lam = cfg.n, cfg.lam
    c0 = 2.0 ** (-4 * n) if cfg.paper_constants else cfg.c0
    c = lemma_constant(n, lam)
    factor = 1 - c / 2
    w = _normalized_global(cfg, c0, u)
    dom = w.domain
    cache = EnvelopeCache(w)
    B1 = ball_volume(n, 1.0)
    ks = list(range(cfg.kmax + 1))
    bads, cases, F_meas, E_ok = [], [], [], []
    audits: list[Audit] = []

    def bad_of(a):
        return float(np.count_nonzero(dom.interior & ~cache(a).contact.mask)) * dom.cell

    for k in ks:
        a = 2.0**k
        rho = c0 * 2.0 ** (-k / 2)
        bad = bad_of(a)
        Fk = dom.interior & ~cache(a).contact.mask & dom.ball_mask(1 - 4 * rho, open_ball=True)
        Fm = float(np.count_nonzero(Fk)) * dom.cell
        bads.append(bad)
        F_meas.append(Fm)
        if Fm >= bad / 2:
            cases.append("case1")
            rep = measure_estimate(w, a, lam, F=Fk, cache=cache, check_new_contact=False,
                                   interior_mask=dom.ball_mask(1 - rho, open_ball=True))
            E_ok.append(rep.precondition)
            audits.append(Audit("vertex_locality", k, rep.interior_violations, 0,
                                rep.interior_violations == 0))
            if rep.precondition:
                audits.append(_bump_audit(k, rep, dom.cell))
            nxt = bad_of(2 * a)
            if bad > 0:
                audits.append(Audit("case1_ratio", k, nxt / bad, factor + SLACK,
                                    nxt / bad <= factor + SLACK))
        else:
            cases.append("case2")
            E_ok.append(True)
            lim = 8 * n * rho * B1 * (1 + SLACK)
            audits.append(Audit("case2_bound", k, bad, lim, bad <= lim))
        audits.append(Audit("decay_bound", k, bad, factor**k * B1 * (1 + SLACK),
                            bad <= factor**k * B1 * (1 + SLACK)))
    audits = _monotone_audit(bads) + audits
    records = _records(ks, bads, cases, F_meas, E_ok)
    notes = {"c0": c0, "vacuous": not any(bads)}
    return RunResult(records, _safe_fit(records, c / 2), audits, notes=notes)


# -- weak Harnack ------------------------------------------------------------


def sub_lattice(n: int) -> np.ndarray:
    """Nine test centers in the closed unit ball."""
    if n == 1:
        return np.linspace(-1, 1, 9)[:, None]
    if n == 2:
        g = np.array([-0.5, 0.0, 0.5])
        return np.array([(x, y) for x in g for y in g])
    corners = np.array([(x, y, z) for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)])
    return np.vstack([np.zeros((1, 3)), corners])


def _origin(dom: GridDomain) -> int:
    return int(dom.node_ids(np.zeros((1, dom.n), dtype=np.int64))[0])


def check_growth(u: GridFunction, lam: float, centers=None, radii=(0.25, 0.5, 1.0)) -> list[GrowthRow]:
    """``inf_{B_rho(x0)} u <= 2 rho^(-n lam) u(0)`` on grid balls."""
    dom = u.domain
    centers = sub_lattice(dom.n) if centers is None else np.atleast_2d(centers)
    u0 = float(u.values[_origin(dom)])
    rows = []
    for x0 in centers:
        for rho in radii:
            m = dom.ball_mask(rho, x0)
            inf = float(u.values[m].min())
            bound = 2 * rho ** (-dom.n * lam) * u0
            rows.append(GrowthRow(tuple(float(x) for x in x0), float(rho), inf, bound,
                                  inf <= bound * (1 + 1e-12) + 1e-14))
    return rows


def harnack_rho(k: int, n: int, lam: float, c0: float) -> float:
    return c0 * 2.0 ** (-(k + 1) / (2 * n * lam))


def desk_harnack_constant(n: int, lam: float, c0: float, kmax: int) -> float:
    """Smallest constant for which the growth bound implies ``inf 2^-k u <= rho_k^2``."""
    return max(2 * harnack_rho(k, n, lam, c0) ** (-n * lam - 2) * 2.0**-k for k in range(kmax + 1))


def smallest_tail_constant(u: GridFunction, region: np.ndarray, t_list, eps: float) -> float:
    """Infimum of ``C`` with ``|{u >= C u(0) t} cap region| <= |region| t^-eps`` for all ``t``.

    ``|region|`` is the continuum ball measure passed via the region's node count.
    """
    dom = u.domain
    u0 = float(u.values[_origin(dom)])
    vals = np.sort(u.values[region])[::-1]
    total = len(vals) * dom.cell
    best = 0.0
    for t in t_list:
        allowed = int(math.floor(total * t**-eps / dom.cell + 1e-9))
        if allowed < len(vals):
            best = max(best, float(vals[allowed]) / (u0 * t))
    return best


def run_weak_harnack(cfg: ExperimentConfig, u: GridFunction | None = None) -> RunResult:
    """Dyadic decay of ``|B_1/2 \\ A_{2^k}|`` for a non-negative function on ``B_4``.

    The member is shifted by its minimum over ``B_4`` and divided by
    ``C_wh u(0)``.  Sources are taken in ``B_{1/2 - 5 rho_k}`` with
    ``rho_k = c0 2^(-(k+1)/(2 n lam))`` and slides must stay in
    ``B_{1/2 - rho_k}``; gains are counted in ``B_1/2`` only.
    """
    n, lam = cfg.n, cfg.lam
    c0 = 2.0 ** (-30 * n) if cfg.paper_constants else cfg.c0
    c = lemma_constant(n, lam)
    factor = 1 - c / 2
    eps = c / 4
    if cfg.paper_constants:
        log2C = 64 * n * n * lam
    elif cfg.C_wh is not None:
        log2C = math.log2(cfg.C_wh)
    else:
        log2C = math.log2(desk_harnack_constant(n, lam, c0, cfg.kmax))
    raw = _member(cfg, 4.0, u)
    dom = raw.domain
    shifted = GridFunction(dom, raw.values - raw.values.min())
    u0 = float(shifted.values[_origin(dom)])
    if u0 <= 0:
        raise ValueError("the shifted member vanishes at the origin")
    w = GridFunction(dom, shifted.values / u0 * 2.0**-log2C)
    cache = EnvelopeCache(w)
    half = dom.ball_mask(0.5, open_ball=True) & dom.interior
    Bh = ball_volume(n, 0.5)
    audits: list[Audit] = []

    growth = check_growth(shifted, lam)
    for g in growth:
        audits.append(Audit("growth", -1, g.inf, g.bound, g.passed, f"x0={g.x0} rho={g.rho}"))

    def bad_of(a):
        return float(np.count_nonzero(half & ~cache(a).contact.mask)) * dom.cell

    ks = list(range(cfg.kmax + 1))
    bads, cases, F_meas, E_ok = [], [], [], []
    centers = sub_lattice(n)
    for k in ks:
        a = 2.0**k
        rho = harnack_rho(k, n, lam, c0)
        A = cache(a).contact.mask
        for x0 in centers:
            m = dom.ball_mask(rho, x0)
            if np.any(m):
                inf = float(w.values[m].min()) * 2.0**-k
                audits.append(Audit("iterated_growth", k, inf, rho**2, inf <= rho**2,
                                    f"x0={tuple(float(x) for x in x0)}"))
        incl = int(np.count_nonzero(half & A & (w.values > a)))
        audits.append(Audit("inclusion", k, incl, 0, incl == 0))
        bad = bad_of(a)
        Fk = half & ~A & dom.ball_mask(0.5 - 5 * rho, open_ball=True)
        Fm = float(np.count_nonzero(Fk)) * dom.cell
        bads.append(bad)
        F_meas.append(Fm)
        if Fm >= bad / 2:
            cases.append("case1")
            rep = measure_estimate(w, a, lam, F=Fk, restrict=half, cache=cache,
                                   check_new_contact=False,
                                   interior_mask=dom.ball_mask(0.5 - rho, open_ball=True))
            E_ok.append(rep.precondition)
            audits.append(Audit("vertex_locality", k, rep.interior_violations, 0,
                                rep.interior_violations == 0))
            if rep.precondition:
                audits.append(_bump_audit(k, rep, dom.cell))
            nxt = bad_of(2 * a)
            if bad > 0:
                audits.append(Audit("case1_ratio", k, nxt / bad, factor + SLACK,
                                    nxt / bad <= factor + SLACK))
        else:
            cases.append("case2")
            E_ok.append(True)
            lim = 20 * n * rho * Bh * (1 + SLACK)
            audits.append(Audit("case2_bound", k, bad, lim, bad <= lim))
        audits.append(Audit("decay_bound", k, bad, factor**k * Bh * (1 + SLACK),
                            bad <= factor**k * Bh * (1 + SLACK)))
    audits = _monotone_audit(bads) + audits

    # tail statement on the shifted member, at the run's constant
    region = dom.ball_mask(0.5, open_ball=True)
    bounds = []
    for t in HARNACK_T:
        level = 2.0**log2C * u0 * t
        lhs = float(np.count_nonzero(region & (shifted.values >= level))) * dom.cell
        rhs = Bh * t**-eps
        bounds.append(BoundRow(float(t), lhs, rhs, lhs <= rhs))
        audits.append(Audit("tail_bound", -1, lhs, rhs, lhs <= rhs, f"t={t}"))
    records = _records(ks, bads, cases, F_meas, E_ok)
    notes = {
        "c0": c0,
        "log2_C_wh": log2C,
        "u0": u0,
        "smallest_tail_constant": smallest_tail_constant(shifted, region, HARNACK_T, eps),
        "vacuous": not any(bads),
    }
    return RunResult(records, _safe_fit(records, eps), audits, bounds, growth, notes)


# -- barrier -----------------------------------------------------------------


def check_barrier(n: int, lam: float, h: float, r_match: float = 0.25, r_max: float = 3.0,
                  tol: float = 0.05) -> dict:
    """Discrete ``M^-`` of the radial barrier against its closed form.

    With ``p = n lam`` the barrier ``(r^-p - 2^-p)/(1 - 2^-p)`` has
    ``M^- = p (1 + lam) r^(-p-2) / (1 - 2^-p)`` away from the pole.
    Positivity is checked on ``4h <= r <= r_max`` and the relative match on
    ``r_match <= r <= r_max``.
    """
    dom = make_ball_domain(n, 4.0, h)
    p = PucciParams(lam, n)
    u = gallery("barrier", p, dom)
    r = dom.rel_radius
    sel = dom.interior & (r >= 4 * h - 1e-12) & (r <= r_max)
    nodes, H = hessian_field(u, np.flatnonzero(sel))
    m = pucci_minus(H, p)
    q = n * lam
    exact = q * (1 + lam) * r[nodes] ** (-q - 2) / (1 - 2.0**-q)
    far = r[nodes] >= r_match
    rel = np.abs(m[far] / exact[far] - 1)
    return {
        "positive": bool(np.all(m > 0)),
        "min_value": float(m.min()),
        "max_rel_error": float(rel.max()),
        "passed": bool(np.all(m > 0) and rel.max() <= tol),
    }


# -- theorem statements on opening fields ------------------------------------


def check_theorem_bound(theta: ThetaField, region, C: float, t_list, eps: float, budget: float,
                        norm: float | None = None) -> list[BoundRow]:
    """``|{theta > C ||u|| t} cap region| <= budget t^-eps`` for each ``t``.

    ``norm`` defaults to the sup norm of the field's source function.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if any(t < 2 for t in t_list):
        raise ValueError("t must be at least 2")
    if norm is None:
        norm = theta.source.v.sup_norm if theta.source is not None else 1.0
    rows = []
    for t in t_list:
        lhs = theta.tail_measure(C * norm * t, region)
        rhs = budget * t**-eps
        rows.append(BoundRow(float(t), lhs, rhs, lhs <= rhs))
    return rows


def audit_interior_theorem(u: GridFunction, lam: float, t_list=T_LIST,
                           cache: EnvelopeCache | None = None) -> list[BoundRow]:
    """Opening tail in ``B_1/2`` against ``|B_2| t^-eps`` at level ``64 ||u|| t``."""
    n = u.domain.n
    region = u.domain.ball_mask(0.5, open_ball=True)
    th = ThetaField.lazy(u, region, cache)
    eps = lemma_constant(n, lam) / 2
    return check_theorem_bound(th, region, 64.0, t_list, eps, ball_volume(n, 2.0))


def audit_global_theorem(u: GridFunction, lam: float, t_list=T_LIST,
                         cache: EnvelopeCache | None = None) -> list[BoundRow]:
    """Opening tail in all of ``B_1`` against ``|B_1| t^-eps`` at level ``2^(10n) ||u|| t``."""
    n = u.domain.n
    th = ThetaField.lazy(u, None, cache)
    eps = lemma_constant(n, lam) / 4
    return check_theorem_bound(th, None, 2.0 ** (10 * n), t_list, eps, ball_volume(n, 1.0))


# -- sweep -------------------------------------------------------------------


SWEEP_HEADER = ["lambda", "eps_emp", "eps_theory", "residual"]


def _sweep_row(cfg: ExperimentConfig, lam: float) -> list:
    res = run_interior_decay(cfg.with_(lam=float(lam), gallery="ass_block"))
    f = res.fit
    return [float(lam), f.eps_emp, f.eps_theory, f.residual]


def sweep_lambda(cfg: ExperimentConfig, lam_list, workers: int | None = None) -> list[list]:
    """Interior decay exponent against ``lam`` on the building-block member.

    The last row, labelled ``loglog_slope``, holds the fitted slope of
    ``log2 eps_emp`` against ``log2 lam`` next to the slope ``1 - n`` of the
    theoretical exponent.
    """
    lam_list = [float(x) for x in lam_list]
    if any(not 1 <= x <= 64 for x in lam_list):
        raise ValueError("lam values must lie in [1, 64]")
    workers = cfg.workers if workers is None else workers
    if workers > 1 and len(lam_list) > 1:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=workers)(delayed(_sweep_row)(cfg, x) for x in lam_list)
    else:
        rows = [_sweep_row(cfg, x) for x in lam_list]
    good = [(r[0], r[1]) for r in rows if np.isfinite(r[1]) and r[1] > 0]
    if len(good) >= 2:
        slope, resid = _line_fit([math.log2(x) for x, _ in good], [math.log2(e) for _, e in good])
    else:
        slope, resid = math.nan, math.nan
    rows.append(["loglog_slope", slope, float(1 - cfg.n), resid])
    return rows


# -- output ------------------------------------------------------------------


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(x) for x in r])
    return path


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return x


def write_decay(path, records) -> Path:
    return write_csv(path, DECAY_HEADER, [r.row() for r in records])


def write_bounds(path, rows) -> Path:
    return write_csv(path, BOUND_HEADER, [r.row() for r in rows])


def write_failures(path, audits) -> Path:
    return write_csv(path, FAILURE_HEADER,
                     [[a.name, a.k, float(a.lhs), float(a.rhs), a.detail] for a in audits if not a.passed])


def write_theta(path, th: ThetaField) -> Path:
    dom = th.domain
    nodes = np.flatnonzero(th.computed)
    X = dom.coords[nodes]
    rows = [list(map(float, X[i])) + [float(th.values[j])] for i, j in enumerate(nodes)]
    return write_csv(path, [f"x{i + 1}" for i in range(dom.n)] + ["theta"], rows)


def write_decay_svg(records, path, title: str = "") -> Path | None:
    """Log-scale decay plot; returns ``None`` when no bad measure is positive."""
    pts = [(r.k, math.log2(r.bad_measure)) for r in records if r.bad_measure > 0]
    if not pts:
        return None
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-")
    ax.set_xlabel("k")
    ax.set_ylabel("log2 bad_measure")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    plt.rcParams["svg.hashsalt"] = "slidelab"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


def gallery_audit_members(n: int) -> list[str]:
    return default_supersolutions(n)
