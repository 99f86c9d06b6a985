import numpy as np
import pytest
import scipy.sparse as sp

from ddfem.assembly import BlockState, BoundaryData, FourFieldSpaces
from ddfem.bench import _fe_problem, inflation_mesh
from ddfem.exact import ExactInflation2D
from ddfem.materials import C1, Material
from ddfem.solver import (
    ContinuationError,
    NewtonConfig,
    SolverFailure,
    continuation_solve,
    newton_solve,
    solve_linear,
)


def test_solve_identity():
    b = np.arange(5, dtype=float)
    assert np.allclose(solve_linear(sp.identity(5, format="csc"), b), b)


def test_solve_matches_dense_oracle():
    rng = np.random.default_rng(11)
    M = rng.normal(size=(50, 50))
    A = M @ M.T + 50 * np.eye(50)  # SPD
    b = rng.normal(size=50)
    dense = np.linalg.solve(A, b)
    x = solve_linear(sp.csc_matrix(A), b)
    assert np.linalg.norm(x - dense) / np.linalg.norm(dense) < 1e-10


def test_solve_singular_raises():
    A = sp.csc_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SolverFailure):
        solve_linear(A, np.array([1.0, 0.0]))


def test_solve_relative_residual_contract():
    spaces = FourFieldSpaces(inflation_mesh(4), 1)
    from ddfem.assembly import linearised_system

    system = linearised_system(spaces, Material(mu=1.0, constraint=C1),
                               BoundaryData())
    x = solve_linear(system)
    rel = np.linalg.norm(system.matrix @ x - system.rhs) / np.linalg.norm(system.rhs)
    assert rel <= 1e-10


def test_newton_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(tol=0.0)
    with pytest.raises(ValueError):
        NewtonConfig(continuation=(0.5, 0.25, 1.0))
    with pytest.raises(ValueError):
        NewtonConfig(continuation=(0.5,))


def _toy_linear_problem(A, b):
    A = sp.csc_matrix(A)

    def residual(x):
        return A @ x - b

    def system(x):
        from ddfem.assembly import SparseSystem

        return SparseSystem(matrix=A, rhs=-(A @ x - b))

    return residual, system


def test_newton_one_iteration_on_linear_problem():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(20, 20))
    A = M @ M.T + 20 * np.eye(20)
    b = rng.normal(size=20)
    residual, system = _toy_linear_problem(A, b)
    x, report = newton_solve(residual, system, rng.normal(size=20))
    assert report.converged
    assert report.iterations == 1
    assert np.allclose(A @ x, b)


def test_newton_deterministic():
    spaces = FourFieldSpaces(inflation_mesh(3), 1)
    material = Material(mu=1.0, constraint=C1)
    exact = ExactInflation2D(1.8)
    res_fn, sys_fn, prep = _fe_problem(spaces, material, BoundaryData(ubar=exact.u))
    x0 = prep(np.zeros(spaces.n_dofs))
    x1, rep1 = newton_solve(res_fn, sys_fn, x0)
    x2, rep2 = newton_solve(res_fn, sys_fn, x0)
    assert np.array_equal(x1, x2)
    assert rep1.residuals == rep2.residuals
    assert rep1.step_lengths == rep2.step_lengths


def test_newton_superlinear_tail():
    """Loose quadratic-convergence check on the last iterations."""
    spaces = FourFieldSpaces(inflation_mesh(4), 1)
    material = Material(mu=1.0, constraint=C1)
    exact = ExactInflation2D(1.5)
    res_fn, sys_fn, prep = _fe_problem(spaces, material, BoundaryData(ubar=exact.u))
    x, report = newton_solve(res_fn, sys_fn, prep(np.zeros(spaces.n_dofs)))
    assert report.converged
    resids = [r for r in report.residuals if r > 1e-14]
    tail = resids[-3:]
    for a, b in zip(tail, tail[1:]):
        assert b <= 50.0 * a**1.5


def test_newton_constrained_dofs_never_move():
    mesh = inflation_mesh(3)
    spaces = FourFieldSpaces(mesh, 1)
    material = Material(mu=1.0, constraint=C1)
    exact = ExactInflation2D(1.5)
    from ddfem.bench import _exact_boundary_traction

    bc = BoundaryData(ubar=exact.u, tbar=_exact_boundary_traction(exact))
    res_fn, sys_fn, prep = _fe_problem(spaces, material, bc)
    x0 = prep(np.zeros(spaces.n_dofs))
    cons = spaces.constrained_rows()
    before = x0[cons].copy()
    x, report = newton_solve(res_fn, sys_fn, x0)
    assert report.converged
    assert np.array_equal(x[cons], before)


def test_single_factor_continuation_equals_newton():
    spaces = FourFieldSpaces(inflation_mesh(3), 1)
    material = Material(mu=1.0, constraint=C1)
    exact = ExactInflation2D(1.6)

    def factory(factor):
        lam_eff = 1.0 + factor * 0.6
        return _fe_problem(spaces, material,
                           BoundaryData(ubar=ExactInflation2D(lam_eff).u))

    x_cont, rep = continuation_solve(factory, np.zeros(spaces.n_dofs),
                                     NewtonConfig(continuation=(1.0,)))
    res_fn, sys_fn, prep = factory(1.0)
    x_newton, _ = newton_solve(res_fn, sys_fn, prep(np.zeros(spaces.n_dofs)))
    assert np.allclose(x_cont, x_newton)
    assert len(rep.steps) == 1


def test_continuation_reports_failing_factor():
    def factory(factor):
        def residual(x):
            return np.array([np.nan])

        def system(x):
            from ddfem.assembly import SparseSystem

            return SparseSystem(matrix=sp.identity(1, format="csc"),
                                rhs=np.array([1.0]))

        return residual, system, None

    with pytest.raises(ContinuationError) as err:
        continuation_solve(factory, np.zeros(1),
                           NewtonConfig(continuation=(0.5, 1.0), max_iter=3),
                           max_bisections=2)
    # the load step is bisected before giving up; the reported factor is
    # the smallest increment that still failed
    assert 0 < err.value.load_factor <= 0.5
