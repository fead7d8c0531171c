"""Command-line entry point: ``slidelab <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from slidelab import experiments as ex
from slidelab.envelope import a_envelope, theta
from slidelab.gallery import describe, gallery
from slidelab.geometry import make_ball_domain
from slidelab.pucci import PucciParams
from slidelab.sliding import measure_estimate

log = logging.getLogger("slidelab")

OVERRIDES = ("gallery", "n", "h", "lam", "kmax", "R", "c0", "C_wh", "seed", "out", "workers")


def _number(s: str) -> float:
    return ex.eval_number(s)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="flat YAML file with ExperimentConfig keys")
    p.add_argument("--gallery", help="gallery member, e.g. cone or fundamental(0.3,0.2)")
    p.add_argument("--n", type=int)
    p.add_argument("--h", type=_number, help="grid spacing, fractions such as 1/128 allowed")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--kmax", type=int)
    p.add_argument("--R", type=float)
    p.add_argument("--c0", type=_number)
    p.add_argument("--C-wh", dest="C_wh", type=_number)
    p.add_argument("--paper-constants", action="store_true", default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--svg", action="store_true", default=None)
    p.add_argument("--workers", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slidelab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gallery", help="list or sample gallery members")
    g.add_argument("action", choices=["list", "dump"])
    _common(g)

    e = sub.add_parser("envelope", help="a-convex envelope and contact set of a member on B_1")
    e.add_argument("--a", type=float, default=1.0)
    _common(e)

    t = sub.add_parser("theta", help="opening field on B_1 and its tail audit")
    t.add_argument("--rel-tol", type=float, default=0.05)
    _common(t)

    m = sub.add_parser("measure-lemma", help="sliding measure estimate at several openings")
    m.add_argument("--a", type=float, nargs="+", default=[1.0, 2.0, 4.0, 8.0])
    _common(m)

    for name, text in [("decay-interior", "interior dyadic decay"),
                       ("decay-global", "global dyadic decay with the boundary dichotomy"),
                       ("weak-harnack", "weak Harnack iteration and growth audit")]:
        _common(sub.add_parser(name, help=text))

    s = sub.add_parser("sweep", help="decay exponent against lambda")
    s.add_argument("--lambdas", type=float, nargs="+", default=[1.0, 2.0, 4.0, 8.0, 16.0])
    _common(s)
    return parser


def load_config(args) -> ex.ExperimentConfig:
    over = {k: getattr(args, k, None) for k in OVERRIDES}
    for flag in ("paper_constants", "svg"):
        if getattr(args, flag, None):
            over[flag] = True
    if args.config is not None:
        return ex.ExperimentConfig.from_file(args.config, **over)
    return ex.ExperimentConfig.from_mapping({k: v for k, v in over.items() if v is not None})


def _member_name(cfg: ex.ExperimentConfig) -> str:
    return f"random_solved({cfg.seed})" if cfg.gallery.strip() == "random_solved" else cfg.gallery


def _sample(cfg: ex.ExperimentConfig, radius: float = 1.0):
    dom = make_ball_domain(cfg.n, radius, cfg.h)
    return gallery(_member_name(cfg), PucciParams(cfg.lam, cfg.n), dom)


def _coords(dom) -> list[str]:
    return [f"x{i + 1}" for i in range(dom.n)]


def cmd_gallery(args, cfg, out: Path):
    if args.action == "list":
        for name, doc in describe():
            print(f"{name:14s} {doc}")
        return []
    u = _sample(cfg)
    rows = [list(map(float, x)) + [float(v)] for x, v in zip(u.domain.coords, u.values)]
    print(ex.write_csv(out / "gallery.csv", _coords(u.domain) + ["value"], rows))
    return []


def cmd_envelope(args, cfg, out: Path):
    u = _sample(cfg)
    e = a_envelope(u, args.a)
    dom = u.domain
    rows = [list(map(float, dom.coords[i])) + [float(u.values[i]), float(e.gamma.values[i]),
                                                 bool(e.contact.mask[i])] for i in range(dom.size)]
    print(ex.write_csv(out / "envelope.csv", _coords(dom) + ["v", "gamma", "contact"], rows))
    print(f"contact measure {e.contact.measure:.6g} of {dom.cell * np.count_nonzero(dom.interior):.6g}")
    return []


def cmd_theta(args, cfg, out: Path):
    u = _sample(cfg)
    th = theta(u, rel_tol=args.rel_tol)
    print(ex.write_theta(out / "theta.csv", th))
    rows = ex.audit_interior_theorem(u, cfg.lam, cache=th.source)
    ex.write_bounds(out / "bound.csv", rows)
    for r in rows:
        print(f"t={r.t:g} lhs={r.lhs_measure:.6g} rhs={r.rhs_budget:.6g} pass={r.passed}")
    return [ex.Audit("theorem_tail", -1, r.lhs_measure, r.rhs_budget, r.passed, f"t={r.t:g}")
            for r in rows]


def cmd_measure(args, cfg, out: Path):
    u = _sample(cfg)
    from slidelab.envelope import EnvelopeCache

    cache = EnvelopeCache(u)
    head = ["a", "F_measure", "E_measure", "V_measure", "gain_measure", "bound", "pass",
            "interior_violations", "new_contact_A0"]
    rows, audits = [], []
    for a in args.a:
        rep = measure_estimate(u, a, cfg.lam, prune=True, cache=cache)
        rows.append([rep.a, rep.F_measure, rep.E_measure, rep.V_measure, rep.gain_measure,
                     rep.bound, rep.passed, rep.interior_violations, rep.new_contact_A0])
        audits.append(ex.Audit("lemma_bound", -1, rep.gain_measure, rep.bound * (1 - rep.slack),
                               rep.passed, f"a={a:g}"))
        audits.append(ex.Audit("new_contact_A0", -1, rep.new_contact_A0, 0,
                               rep.new_contact_A0 == 0, f"a={a:g}"))
        print(f"a={a:g} |F|={rep.F_measure:.6g} gain={rep.gain_measure:.6g} "
              f"bound={rep.bound:.6g} pass={rep.passed}")
    ex.write_csv(out / "measure.csv", head, rows)
    return audits


def _decay(run, args, cfg, out: Path, radius: float):
    u = _sample(cfg, radius) if _member_name(cfg) != cfg.gallery else None
    res = run(cfg, u)
    print(ex.write_decay(out / "decay.csv", res.records))
    if res.bounds:
        ex.write_bounds(out / "bound.csv", res.bounds)
    if res.growth:
        ex.write_csv(out / "growth.csv", ["x0", "rho", "inf", "bound", "pass"],
                     [[" ".join(map(repr, g.x0)), g.rho, g.inf, g.bound, g.passed] for g in res.growth])
    if cfg.svg:
        ex.write_decay_svg(res.records, out / "decay.svg", f"{args.command} {cfg.gallery}")
    f = res.fit
    print(f"eps_emp={f.eps_emp:.6g} eps_theory={f.eps_theory:.6g} residual={f.residual:.3g}")
    for k, v in res.notes.items():
        print(f"{k}: {v}")
    return res.audits


def cmd_sweep(args, cfg, out: Path):
    rows = ex.sweep_lambda(cfg, args.lambdas)
    print(ex.write_csv(out / "sweep.csv", ex.SWEEP_HEADER, rows))
    audits = []
    for lam, eps, theory, _ in rows[:-1]:
        audits.append(ex.Audit("eps_floor", -1, eps, theory, bool(eps >= theory), f"lambda={lam:g}"))
    return audits


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except (ValueError, OSError) as exc:
        print(f"slidelab: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    started = time.perf_counter()
    try:
        if args.command == "gallery":
            audits = cmd_gallery(args, cfg, out)
        elif args.command == "envelope":
            audits = cmd_envelope(args, cfg, out)
        elif args.command == "theta":
            audits = cmd_theta(args, cfg, out)
        elif args.command == "measure-lemma":
            audits = cmd_measure(args, cfg, out)
        elif args.command == "decay-interior":
            audits = _decay(ex.run_interior_decay, args, cfg, out, 1.0)
        elif args.command == "decay-global":
            audits = _decay(ex.run_global_decay, args, cfg, out, 1.0)
        elif args.command == "weak-harnack":
            audits = _decay(ex.run_weak_harnack, args, cfg, out, 4.0)
        else:
            audits = cmd_sweep(args, cfg, out)
    except (ex.GeometryError, ValueError, KeyError) as exc:
        ex.write_csv(out / "failures.csv", ex.FAILURE_HEADER, [["error", -1, "", "", str(exc)]])
        print(f"slidelab: {exc}", file=sys.stderr)
        return 2
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - started)
    failed = [a for a in audits if not a.passed]
    if failed:
        ex.write_failures(out / "failures.csv", audits)
        print(f"{len(failed)} of {len(audits)} audits failed; see {out / 'failures.csv'}")
        return 1
    if audits:
        print(f"all {len(audits)} audits passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
