import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import minus_pucci_dense
from slidelab.geometry import GridFunction, make_ball_domain
from slidelab.pucci import (
    PucciParams,
    SymMatrix,
    check_supersolution,
    discrete_hessian,
    pucci_minus,
    pucci_plus,
    sym_eigvalsh,
)
from slidelab.solver import ConvergenceError, frames, scheme_residual, solve_pucci_dirichlet

entries = st.floats(-10, 10, allow_nan=False)


def sym(n):
    return arrays(float, (n, n), elements=entries).map(lambda a: 0.5 * (a + a.T))


def test_operator_examples():
    p2 = PucciParams(2.0, 2)
    assert pucci_minus(np.eye(2), PucciParams(5.0, 2)) == pytest.approx(2)
    assert pucci_minus(np.diag([1.0, -1.0]), p2) == pytest.approx(-1)
    assert pucci_minus(np.zeros((2, 2)), p2) == 0
    assert pucci_plus(np.diag([1.0, -1.0]), p2) == pytest.approx(1)
    assert pucci_plus(np.eye(2), PucciParams(3.0, 2)) == pytest.approx(6)


def test_params_validation():
    with pytest.raises(ValueError):
        PucciParams(0.5, 2)
    with pytest.raises(ValueError):
        PucciParams(1.0, 4)


@given(st.sampled_from([1, 2, 3]).flatmap(sym))
def test_closed_form_eigenvalues(N):
    assert np.allclose(sym_eigvalsh(N), np.linalg.eigvalsh(N), atol=1e-9 * (1 + np.abs(N).max()))


@given(sym(3), st.floats(1, 8))
def test_minus_matches_dense_and_plus_is_dual(N, lam):
    p = PucciParams(lam, 3)
    assert pucci_minus(N, p) == pytest.approx(minus_pucci_dense(N, lam), abs=1e-8)
    assert pucci_plus(N, p) == -pucci_minus(-N, p)
    assert pucci_plus(N, p) >= pucci_minus(N, p) - 1e-12


@given(sym(2), sym(2), st.floats(1, 8), st.floats(0, 5))
def test_homogeneity_and_superadditivity(A, B, lam, t):
    p = PucciParams(lam, 2)
    assert pucci_minus(t * A, p) == pytest.approx(t * pucci_minus(A, p), abs=1e-9)
    assert pucci_minus(A + B, p) >= pucci_minus(A, p) + pucci_minus(B, p) - 1e-9


def test_symmatrix_storage():
    S = SymMatrix.from_array([[1.0, 2.0], [2.0, 3.0]])
    assert np.array_equal(S.to_array(), S.to_array().T)
    assert np.allclose((S + (-S)).to_array(), 0)


def test_discrete_hessian_examples():
    d = make_ball_domain(2, 1.0, 1 / 16)
    mid = int(np.argmin(np.linalg.norm(d.coords - [0.25, -0.125], axis=1)))
    q = GridFunction.sample(d, lambda x: -0.75 * (x**2).sum(1) + x @ [0.3, 2.0] + 4)
    assert np.allclose(discrete_hessian(q, mid).to_array(), -1.5 * np.eye(2), atol=1e-9)
    xy = GridFunction.sample(d, lambda x: x[:, 0] * x[:, 1])
    assert np.allclose(discrete_hessian(xy, mid).to_array(), [[0, 1], [1, 0]], atol=1e-9)
    edge = int(np.flatnonzero(d.boundary)[0])
    with pytest.raises(ValueError):
        discrete_hessian(q, edge)


def test_discrete_hessian_of_quartic():
    d = make_ball_domain(2, 1.0, 1 / 128)
    u = GridFunction.sample(d, lambda x: ((x**2).sum(1)) ** 2)
    node = int(np.argmin(np.linalg.norm(d.coords - [0.5, 0.0], axis=1)))
    H = discrete_hessian(u, node).to_array()
    assert abs(H[0, 0] - 3) < 1e-3 and abs(H[1, 1] - 1) < 1e-3


def test_supersolution_checker_examples():
    d = make_ball_domain(2, 1.0, 1 / 128)
    p = PucciParams(1.0, 2)
    cone = GridFunction(d, 1 - d.rel_radius)
    assert check_supersolution(cone, p, tau=10 * d.h).violating == 0
    bowl = GridFunction.sample(d, lambda x: 0.5 * (x**2).sum(1))
    rep = check_supersolution(bowl, p, tau=1.0)
    assert rep.violating == rep.checked
    assert rep.max_violation == pytest.approx(2.0)
    flat = GridFunction.sample(d, lambda x: 3 * x[:, 0] - x[:, 1])
    assert check_supersolution(flat, p, tau=0.0).ok


def test_min_of_supersolutions_is_checked():
    d = make_ball_domain(2, 1.0, 1 / 64)
    p = PucciParams(2.0, 2)
    u = GridFunction(d, np.minimum(1 - d.rel_radius, 0.5 - 0.3 * d.coords[:, 0]))
    assert check_supersolution(u, p, tau=10 * d.h).ok


def test_frames_need_enough_directions():
    assert len(frames(2, 4)) == 1
    assert len(frames(2, 8)) == 2
    with pytest.raises(ValueError):
        frames(2, 3)


@pytest.mark.parametrize("lam", [1.0, 2.0, 4.0])
def test_solver_examples(lam):
    d = make_ball_domain(2, 1.0, 1 / 32)
    p = PucciParams(lam, 2)
    u = solve_pucci_dirichlet(d, lambda x: np.full(len(x), 2.5), p)
    assert np.allclose(u.values, 2.5)
    g = lambda x: np.sin(3 * x[:, 0]) + x[:, 1] ** 2 - 0.5 * x[:, 0] * x[:, 1]
    u, info = solve_pucci_dirichlet(d, g, p, return_info=True)
    gb = g(d.coords)[d.boundary]
    assert gb.min() - 1e-9 <= u.values.min() and u.values.max() <= gb.max() + 1e-9
    assert np.abs(scheme_residual(u, p)).max() < 1e-8
    osc = np.ptp(gb)
    assert check_supersolution(u, p, tau=10 * d.h * osc).ok


def test_solver_affine_exact_for_lambda_one():
    d = make_ball_domain(2, 1.0, 1 / 32)
    u = solve_pucci_dirichlet(d, lambda x: x[:, 0], PucciParams(1.0, 2))
    assert np.allclose(u.values, d.coords[:, 0], atol=1e-9)


def test_fixed_point_agrees_with_policy_iteration():
    d = make_ball_domain(2, 1.0, 1 / 8)
    p = PucciParams(2.0, 2)
    g = lambda x: x[:, 0] ** 2 - x[:, 1]
    a = solve_pucci_dirichlet(d, g, p)
    b = solve_pucci_dirichlet(d, g, p, method="fixed_point", tol=1e-12)
    assert np.allclose(a.values, b.values, atol=1e-8)


def test_solver_reports_non_convergence():
    d = make_ball_domain(2, 1.0, 1 / 16)
    with pytest.raises(ConvergenceError):
        solve_pucci_dirichlet(d, lambda x: x[:, 0] ** 2, PucciParams(3.0, 2),
                              method="fixed_point", max_iter=3)
