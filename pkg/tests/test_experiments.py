import csv
import math

import numpy as np
import pytest

from slidelab import cli
from slidelab.envelope import ThetaField
from slidelab.experiments import (
    BOUND_HEADER,
    DECAY_HEADER,
    SWEEP_HEADER,
    DecayRecord,
    ExperimentConfig,
    _normalized_inner,
    _Truncated,
    check_growth,
    check_theorem_bound,
    desk_harnack_constant,
    eval_number,
    fit_epsilon,
    run_global_decay,
    run_interior_decay,
    run_weak_harnack,
    smallest_tail_constant,
    sub_lattice,
    write_csv,
    write_decay,
)
from slidelab.geometry import GridFunction, ball_volume, make_ball_domain
from slidelab.sliding import lemma_constant


def recs(bads):
    return [DecayRecord(k, 2.0**k, b, math.nan, "interior", 0.0, True) for k, b in enumerate(bads)]


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_config_validation_and_fractions():
    assert eval_number("1/128") == pytest.approx(1 / 128)
    with pytest.raises(ValueError):
        ExperimentConfig(kmax=0)
    with pytest.raises(ValueError):
        ExperimentConfig(R=1.0)
    with pytest.raises(ValueError):
        ExperimentConfig(c0=0.2)
    with pytest.raises(ValueError):
        ExperimentConfig.from_mapping({"lambda_": 2})


def test_config_from_file(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text("gallery: ass_block\nh: 1/64\nlam: 2\nkmax: 3\nsvg: yes\n")
    cfg = ExperimentConfig.from_file(p, kmax=5)
    assert (cfg.gallery, cfg.h, cfg.lam, cfg.kmax, cfg.svg) == ("ass_block", 1 / 64, 2.0, 5, True)
    p.write_text("gallery: cone\nbogus: 1\n")
    with pytest.raises(ValueError, match="bogus"):
        ExperimentConfig.from_file(p)
    p.write_text("gallery: {nested: 1}\n")
    with pytest.raises(ValueError):
        ExperimentConfig.from_file(p)


def test_fit_epsilon_examples():
    f = fit_epsilon(recs([2.0**-k for k in range(6)]))
    assert f.eps_emp == pytest.approx(1.0) and f.residual == pytest.approx(0.0, abs=1e-12)
    f = fit_epsilon(recs([3 * 0.8**k for k in range(6)]))
    assert f.eps_emp == pytest.approx(-math.log2(0.8))
    assert fit_epsilon(recs([0.0] * 4)).eps_emp == math.inf
    with pytest.raises(ValueError):
        fit_epsilon(recs([1.0, 0.5, 0.0, 0.0]))
    # growth is clipped to zero
    assert fit_epsilon(recs([1.0, 2.0, 4.0])).eps_emp == 0.0


def test_theorem_bound_examples():
    d = make_ball_domain(2, 1.0, 1 / 32)
    th = ThetaField(d, np.zeros(d.size), np.ones(d.size), 0.05, d.interior.copy())
    rows = check_theorem_bound(th, None, 64, [2, 4, 8], 0.1, ball_volume(2, 2.0), norm=1.0)
    assert all(r.passed and r.lhs_measure == 0 for r in rows)
    eps = lemma_constant(2, 1.0) / 2
    assert eps == pytest.approx(1 / 16)
    assert ball_volume(2, 2.0) * 2**-eps == pytest.approx(4 * math.pi * 2 ** (-1 / 16))
    with pytest.raises(ValueError):
        check_theorem_bound(th, None, 64, [1], 0.1, 1.0)
    with pytest.raises(ValueError):
        check_theorem_bound(th, None, 64, [2], 0.0, 1.0)


def test_growth_with_constant_function():
    d = make_ball_domain(2, 4.0, 1 / 16)
    rows = check_growth(GridFunction(d, np.ones(d.size)), 2.0)
    assert len(rows) == 27
    assert all(r.passed and r.inf == 1.0 for r in rows)
    assert len(sub_lattice(1)) == len(sub_lattice(3)) == 9


def test_growth_fails_for_non_supersolution():
    d = make_ball_domain(2, 4.0, 1 / 16)
    # a deep well at the origin is not a supersolution
    rows = check_growth(GridFunction(d, 1e-3 + d.rel_radius**2), 1.0)
    assert not all(r.passed for r in rows)


def test_desk_harnack_constant():
    assert desk_harnack_constant(2, 1.0, 1 / 16, 6) == pytest.approx(2.0**18)


def test_smallest_tail_constant():
    d = make_ball_domain(2, 1.0, 1 / 16)
    u = GridFunction(d, np.ones(d.size))
    region = d.ball_mask(0.5, open_ball=True)
    # a constant function exceeds C u(0) t only when C t <= 1
    assert smallest_tail_constant(u, region, (2, 4), 0.1) == pytest.approx(0.5)


def test_csv_formats(tmp_path):
    p = write_csv(tmp_path / "x.csv", ["a", "b", "c"], [[1.5, math.inf, True], [0.1, 2, False]])
    assert read_csv(p) == [["a", "b", "c"], ["1.5", "inf", "true"], ["0.1", "2", "false"]]
    p = write_decay(tmp_path / "decay.csv", recs([1.0, 0.5]))
    assert read_csv(p)[0] == DECAY_HEADER


def test_convex_member_bad_set_sits_on_extension_kink():
    # the cut-off extension is the only source of non-contact for convex input
    for g in ("paraboloid(1,0,0,0)", "paraboloid(0,1,0.5,0)"):
        cfg = ExperimentConfig(gallery=g, h=1 / 32)
        tr = _Truncated(_normalized_inner(cfg), 2.5, 8.0)
        dom = tr.u.domain
        for a in (1.0, 2.0, 4.0):
            bad = tr.watch & ~tr.cache(a).contact.mask
            assert np.all(dom.rel_radius[bad] >= 0.5)


def test_interior_decay_coarse_cone():
    res = run_interior_decay(ExperimentConfig(h=1 / 32, kmax=4))
    bads = [r.bad_measure for r in res.records]
    assert res.passed
    assert all(b1 <= b0 for b0, b1 in zip(bads, bads[1:]))
    assert all(0 <= r.ratio <= 1 for r in res.records[1:])
    assert res.fit.eps_emp >= 1 / 16


def test_global_decay_case_two():
    d = make_ball_domain(2, 1.0, 1 / 32)
    u = GridFunction(d, np.minimum(1.0, 20 * (1 - d.rel_radius)))
    res = run_global_decay(ExperimentConfig(h=1 / 32, kmax=4), u=u)
    assert res.passed
    assert res.records[0].case == "case2"
    case2 = [a for a in res.audits if a.name == "case2_bound"]
    assert case2 and all(a.passed for a in case2)


def test_global_decay_rejects_wrong_domain():
    d = make_ball_domain(2, 2.0, 1 / 16)
    with pytest.raises(ValueError):
        run_global_decay(ExperimentConfig(h=1 / 16), u=GridFunction(d, np.zeros(d.size)))


def test_weak_harnack_coarse():
    res = run_weak_harnack(ExperimentConfig(gallery="cone", h=1 / 16, kmax=3))
    assert res.passed
    assert len(res.growth) == 27 and all(g.passed for g in res.growth)
    assert [b.t for b in res.bounds] == [2.0, 4.0, 8.0]
    assert res.notes["log2_C_wh"] == pytest.approx(math.log2(desk_harnack_constant(2, 1.0, 1 / 16, 3)))


def test_cli_gallery_and_decay(tmp_path, capsys):
    assert cli.main(["gallery", "list"]) == 0
    assert "cone" in capsys.readouterr().out
    out = tmp_path / "o"
    assert cli.main(["gallery", "dump", "--gallery", "ass_block", "--h", "1/16", "--out", str(out)]) == 0
    assert read_csv(out / "gallery.csv")[0] == ["x1", "x2", "value"]
    code = cli.main(["decay-interior", "--h", "1/32", "--kmax", "3", "--out", str(out), "--svg"])
    assert code == 0
    assert read_csv(out / "decay.csv")[0] == DECAY_HEADER
    assert (out / "decay.svg").exists()


def test_cli_theta_and_measure(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["theta", "--h", "1/32", "--out", str(out)]) == 0
    rows = read_csv(out / "theta.csv")
    assert rows[0] == ["x1", "x2", "theta"]
    assert read_csv(out / "bound.csv")[0] == BOUND_HEADER
    assert cli.main(["measure-lemma", "--h", "1/32", "--a", "1", "2", "--out", str(out)]) == 0
    assert (out / "measure.csv").exists()


def test_cli_config_errors_exit_two(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("nonsense: 3\n")
    assert cli.main(["decay-interior", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_cli_failure_writes_failures_csv(tmp_path):
    out = tmp_path / "o"
    # with a normalising constant of one the iterated growth bound cannot hold
    code = cli.main(["weak-harnack", "--gallery", "fundamental(0.3,0.2)", "--lambda", "2",
                     "--h", "1/16", "--kmax", "2", "--C-wh", "1", "--out", str(out)])
    assert code == 1
    rows = read_csv(out / "failures.csv")
    assert rows[0] == ["audit", "k", "lhs", "rhs", "detail"]
    assert any(r[0] == "iterated_growth" for r in rows[1:])


def test_cli_sweep_is_deterministic(tmp_path):
    outs = []
    for w in (1, 2):
        out = tmp_path / f"w{w}"
        cli.main(["sweep", "--h", "1/16", "--kmax", "3", "--lambdas", "1", "2",
                  "--workers", str(w), "--out", str(out)])
        outs.append((out / "sweep.csv").read_bytes())
    assert outs[0] == outs[1]
    rows = read_csv(tmp_path / "w1" / "sweep.csv")
    assert rows[0] == SWEEP_HEADER
    assert rows[-1][0] == "loglog_slope"
