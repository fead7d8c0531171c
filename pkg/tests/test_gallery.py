import numpy as np
import pytest

from slidelab.gallery import (
    GALLERY,
    default_supersolutions,
    describe,
    gallery,
    is_supersolution,
    parse_name,
)
from slidelab.geometry import make_ball_domain
from slidelab.pucci import (
    PucciParams,
    check_supersolution,
    gallery as pucci_gallery,
    hessian_field,
    sym_eigvalsh,
)


def test_parse_name():
    assert parse_name("cone") == ("cone", ())
    assert parse_name(" barrier(0.5, -1) ") == ("barrier", (0.5, -1.0))
    with pytest.raises(ValueError):
        parse_name("cone(x)")
    with pytest.raises(ValueError):
        parse_name("1cone")


def test_unknown_member():
    d = make_ball_domain(2, 1.0, 1 / 16)
    with pytest.raises(KeyError):
        gallery("banana", PucciParams(1.0, 2), d)


def test_describe_lists_every_member():
    assert [n for n, _ in describe()] == list(GALLERY)


def test_pucci_module_reexport():
    d = make_ball_domain(2, 1.0, 1 / 16)
    p = PucciParams(1.0, 2)
    assert np.array_equal(pucci_gallery("cone", p, d).values, gallery("cone", p, d).values)


def test_barrier_values():
    d = make_ball_domain(2, 4.0, 1 / 16)
    p = PucciParams(2.0, 2)
    w = gallery("barrier", p, d)
    r = d.rel_radius
    on_unit = np.isclose(r, 1.0)
    assert np.allclose(w.values[on_unit], 1.0)
    assert np.all(w.values[r > 3.99] < 0)
    assert np.all(w.values[(r < 1) & (r > 0)] > 1)
    assert not is_supersolution("barrier", 2)


def test_ass_block_and_paraboloid():
    d = make_ball_domain(2, 1.0, 1 / 16)
    for lam in (1.0, 3.0):
        v = gallery("ass_block", PucciParams(lam, 2), d)
        assert v.values[np.argmin(d.rel_radius)] == -1
    assert is_supersolution("ass_block", 2) and not is_supersolution("ass_block", 3)
    assert is_supersolution("paraboloid(-1,0,0,0)", 2)
    assert not is_supersolution("paraboloid(1,0,0,0)", 2)
    with pytest.raises(ValueError):
        gallery("paraboloid(1,0)", PucciParams(1.0, 2), d)


def test_random_solved_is_deterministic():
    d = make_ball_domain(2, 1.0, 1 / 32)
    p = PucciParams(2.0, 2)
    a = gallery("random_solved(3)", p, d)
    b = gallery("random_solved(3)", p, d)
    c = gallery("random_solved(4)", p, d)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("lam", [1.0, 2.0, 4.0])
def test_supersolution_members_pass_checker(n, lam):
    h = {1: 1 / 256, 2: 1 / 64, 3: 1 / 16}[n]
    d = make_ball_domain(n, 1.0, h)
    p = PucciParams(lam, n)
    for name in default_supersolutions(n):
        if name.startswith("fundamental") and n > 1:
            continue
        u = gallery(name, p, d)
        tau = 10 * h * max(u.osc, 1.0)
        rep = check_supersolution(u, p, tau=tau)
        assert rep.ok, (name, rep)


def test_ass_block_fails_in_three_dimensions():
    d = make_ball_domain(3, 1.0, 1 / 16)
    p = PucciParams(4.0, 3)
    rep = check_supersolution(gallery("ass_block", p, d), p, tau=0.1)
    assert not rep.ok


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("lam", [1.0, 2.0, 4.0])
def test_fundamental_residual_is_truncation_error(n, lam):
    # an exact radial solution: the discrete residual may have either sign,
    # but stays within second-order truncation of the local curvature
    h = {2: 1 / 64, 3: 1 / 16}[n]
    d = make_ball_domain(n, 1.0, h)
    pole = np.array([0.3] + [0.2] * (n - 1))
    u = gallery("fundamental(" + ",".join(map(str, pole)) + ")", PucciParams(lam, n), d)
    r = np.linalg.norm(d.coords - pole, axis=1)
    nodes, H = hessian_field(u, np.flatnonzero(d.interior & (r >= 4 * h)))
    ev = sym_eigvalsh(H)
    m = np.where(ev > 0, ev, 0).sum(1) + lam * np.where(ev < 0, ev, 0).sum(1)
    scale = np.abs(ev).max(1) * (h / r[nodes]) ** 2
    assert np.all(m <= 16 * scale)
