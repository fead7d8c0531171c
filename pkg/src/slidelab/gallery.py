"""Explicit test functions: cones, barrier, building block, paraboloids,
radial fundamental supersolutions and solver-generated random supersolutions.

Members are addressed by strings such as ``"cone"``, ``"barrier(0.5,0)"``,
``"paraboloid(-1,0,0,0)"`` or ``"random_solved(3)"``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from slidelab.geometry import GridDomain, GridFunction, make_ball_domain
from slidelab.pucci import PucciParams

__all__ = [
    "GalleryEntry",
    "GALLERY",
    "parse_name",
    "gallery",
    "describe",
    "default_supersolutions",
    "is_supersolution",
]

_CALL = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?\s*$")


@dataclass(frozen=True)
class GalleryEntry:
    name: str
    doc: str
    build: Callable
    supersolution: Callable[[int, tuple], bool]


def parse_name(text: str) -> tuple[str, tuple[float, ...]]:
    """Split ``"name(a, b, ...)"`` into the name and a tuple of floats."""
    m = _CALL.match(text)
    if not m:
        raise ValueError(f"cannot parse gallery member {text!r}")
    name, args = m.group(1), m.group(2)
    if args is None or not args.strip():
        return name, ()
    try:
        return name, tuple(float(a) for a in args.split(","))
    except ValueError as exc:
        raise ValueError(f"bad arguments in {text!r}") from exc


def _point(args: tuple, n: int, what: str) -> np.ndarray:
    if not args:
        return np.zeros(n)
    if len(args) != n:
        raise ValueError(f"{what} needs {n} coordinates, got {len(args)}")
    return np.asarray(args, dtype=float)


def _cone(x, p, dom, args):
    return 1.0 - np.linalg.norm(x, axis=1)


def _neg_cone(x, p, dom, args):
    return -np.linalg.norm(x, axis=1)


def _barrier(x, p, dom, args):
    x0 = _point(args, dom.n, "barrier")
    q = dom.n * p.lam
    r = np.maximum(np.linalg.norm(x - x0, axis=1), dom.h / 2)
    return (r**-q - 2.0**-q) / (1 - 2.0**-q)


def _ass_block(x, p, dom, args):
    head = (x[:, :-1] ** 2).sum(axis=1)
    return np.minimum(p.lam * head - x[:, -1] ** 2 - 1.0, 0.0)


def _paraboloid(x, p, dom, args):
    n = dom.n
    if len(args) != n + 2:
        raise ValueError(f"paraboloid needs a, {n} slope entries and b")
    a, y, b = args[0], np.asarray(args[1:-1]), args[-1]
    return 0.5 * a * (x * x).sum(axis=1) + x @ y + b


def critical_exponent(n: int, lam: float) -> float:
    return lam * (n - 1) - 1


def radial_profile(r, n: int, lam: float):
    """Radial supersolution with ``M^- = 0`` away from the pole."""
    q = critical_exponent(n, lam)
    if q > 0:
        return r**-q
    if q == 0:
        return -np.log(r / 8)
    return -(r ** (-q))


def _fundamental(x, p, dom, args):
    x0 = _point(args, dom.n, "fundamental")
    r = np.maximum(np.linalg.norm(x - x0, axis=1), dom.h / 2)
    return radial_profile(r, dom.n, p.lam)


def _smooth_data(seed: int, n: int):
    """Random smooth boundary data: affine part, harmonic quadratics, low cosines."""
    rng = np.random.default_rng(seed)
    lin = rng.normal(size=n)
    harm = rng.normal(size=(n, n))
    harm = 0.5 * (harm + harm.T)
    harm -= np.trace(harm) / n * np.eye(n)
    freq = rng.normal(size=(3, n)) * 2.0
    phase = rng.uniform(0, 2 * np.pi, size=3)

    def g(x):
        val = x @ lin + np.einsum("ki,ij,kj->k", x, harm, x)
        return val + 0.5 * np.cos(x @ freq.T + phase).sum(axis=1)

    return g


@lru_cache(maxsize=32)
def _solved(seed: int, lam: float, n: int, h: float, radius: float, center: tuple, band: int):
    from slidelab.solver import solve_pucci_dirichlet

    dom = GridDomain(n, h, radius, center, band)
    g = _smooth_data(seed, n)
    return solve_pucci_dirichlet(dom, lambda x: g(x - np.asarray(center)), PucciParams(lam, n)).values


def _random_solved(x, p, dom, args):
    seed = int(args[0]) if args else 0
    vals = _solved(seed, float(p.lam), dom.n, dom.h, dom.radius, tuple(dom.center), dom.band)
    return vals.copy()


def _always(n, args):
    return True


GALLERY: dict[str, GalleryEntry] = {
    e.name: e for e in [
        GalleryEntry("cone", "1 - |x|", _cone, _always),
        GalleryEntry("neg_cone", "-|x|", _neg_cone, _always),
        GalleryEntry("barrier", "(|x-x0|^-p - 2^-p)/(1 - 2^-p), p = n lam; a subsolution "
                     "away from x0, capped at |x-x0| = h/2", _barrier, lambda n, a: False),
        GalleryEntry("ass_block", "min(lam |x'|^2 - x_n^2 - 1, 0); a supersolution for n <= 2",
                     _ass_block, lambda n, a: n <= 2),
        GalleryEntry("paraboloid", "(a/2)|x|^2 + y.x + b; a supersolution iff a <= 0",
                     _paraboloid, lambda n, a: bool(a) and a[0] <= 0),
        GalleryEntry("fundamental", "radial r^-q, q = lam(n-1) - 1 (-log(r/8) when q = 0), "
                     "capped at r = h/2", _fundamental, _always),
        GalleryEntry("random_solved", "solution of the monotone Pucci scheme with random "
                     "smooth Dirichlet data", _random_solved, _always),
    ]
}


def gallery(name: str, p: PucciParams, dom: GridDomain) -> GridFunction:
    """Sample the named member on ``dom`` (coordinates relative to the origin)."""
    key, args = parse_name(name)
    if key not in GALLERY:
        raise KeyError(f"unknown gallery member {key!r}; known: {', '.join(GALLERY)}")
    if p.n != dom.n:
        raise ValueError("parameter dimension does not match the domain")
    vals = GALLERY[key].build(dom.coords, p, dom, args)
    return GridFunction(dom, vals)


def is_supersolution(name: str, n: int) -> bool:
    key, args = parse_name(name)
    return GALLERY[key].supersolution(n, args)


def describe() -> list[tuple[str, str]]:
    return [(e.name, e.doc) for e in GALLERY.values()]


def default_supersolutions(n: int) -> list[str]:
    """The supersolution members used by the audits in dimension ``n``."""
    zero = ",".join(["0"] * n)
    tilt = ",".join(["1"] + ["0.5"] * (n - 1))
    pole = ",".join(["0.3"] + ["0.2"] * (n - 1))
    names = ["cone", "neg_cone", f"paraboloid(-1,{zero},0)", f"paraboloid(0,{tilt},0)",
             f"fundamental({pole})", "random_solved(0)"]
    if n <= 2:
        names.insert(2, "ass_block")
    return names


def sample_on_ball(name: str, lam: float, n: int, radius: float, h: float) -> GridFunction:
    return gallery(name, PucciParams(lam, n), make_ball_domain(n, radius, h))
