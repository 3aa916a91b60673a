import numpy as np
import pytest
import scipy.sparse as sp

from stagpoly.assembly import assemble_system
from stagpoly.problems import example1
from stagpoly.solver import (
    NotSPDError,
    SolverError,
    solve_cg,
    solve_direct,
    solve_system,
)

from conftest import subtriangulate

RNG = np.random.default_rng(11)


def random_spd(n, seed=0):
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((n, n))
    return Q @ Q.T + n * np.eye(n)


def wg_system(mesh, k=0):
    prob = example1()
    sub = subtriangulate(mesh)
    return assemble_system(mesh, sub, k, prob.coeff, prob.f, prob.bc)


# ---------------------------------------------------------------------------
# conjugate gradient

def test_cg_matches_dense():
    A = random_spd(40, seed=1)
    b = RNG.standard_normal(40)
    x, report = solve_cg(A, b, tol=1e-12)
    assert report.converged
    assert np.abs(x - np.linalg.solve(A, b)).max() < 1e-8


def test_cg_sparse_input():
    A = sp.csr_matrix(random_spd(30, seed=2))
    b = RNG.standard_normal(30)
    x, report = solve_cg(A, b, tol=1e-12)
    assert np.abs(A @ x - b).max() < 1e-9


def test_cg_report_fields():
    A = random_spd(25, seed=3)
    b = RNG.standard_normal(25)
    x, report = solve_cg(A, b, tol=1e-10)
    assert report.method == "cg"
    assert report.n == 25
    assert report.iterations == len(report.residual_history) - 1
    assert report.residual <= 1e-10 * np.linalg.norm(b)


def test_cg_zero_rhs():
    A = random_spd(10, seed=4)
    x, report = solve_cg(A, np.zeros(10))
    assert np.array_equal(x, np.zeros(10))
    assert report.iterations == 0


def test_cg_indefinite_raises():
    A = np.diag([1.0, -1.0, 2.0])
    with pytest.raises(NotSPDError):
        solve_cg(A, np.array([1.0, 1.0, 1.0]), precond="none")


def test_cg_nonpositive_diagonal_raises():
    A = np.diag([1.0, 0.0, 2.0])
    with pytest.raises(NotSPDError):
        solve_cg(A, np.ones(3))


def test_cg_maxiter_exhausted():
    A = random_spd(60, seed=5)
    with pytest.raises(SolverError, match="converge"):
        solve_cg(A, RNG.standard_normal(60), tol=1e-14, maxiter=2)


def test_cg_unknown_preconditioner():
    with pytest.raises(SolverError):
        solve_cg(np.eye(3), np.ones(3), precond="ilu")


def test_cg_warm_start():
    A = random_spd(20, seed=6)
    b = RNG.standard_normal(20)
    x_exact = np.linalg.solve(A, b)
    x, report = solve_cg(A, b, tol=1e-10, x0=x_exact)
    assert report.iterations == 0


# ---------------------------------------------------------------------------
# direct solver

def test_direct_matches_dense():
    A = random_spd(35, seed=7)
    b = RNG.standard_normal(35)
    x, report = solve_direct(A, b)
    assert report.method == "direct"
    assert np.abs(x - np.linalg.solve(A, b)).max() < 1e-10


def test_direct_singular_raises():
    A = np.zeros((3, 3))
    with pytest.raises(SolverError):
        solve_direct(A, np.ones(3))


def test_direct_indefinite_raises():
    A = np.diag([1.0, -1.0])
    with pytest.raises(SolverError):
        solve_direct(A, np.ones(2))


# ---------------------------------------------------------------------------
# assembled systems: condensed and full paths agree

def test_solve_system_condensed_vs_full(tri4):
    system = wg_system(tri4)
    x_c, rep_c = solve_system(system, method="direct", condense=True)
    x_f, rep_f = solve_system(system, method="direct", condense=False)
    assert rep_c.condensed and not rep_f.condensed
    assert np.abs(x_c - x_f).max() < 1e-10


def test_solve_system_cg_vs_direct(squares4):
    system = wg_system(squares4)
    x_cg, rep = solve_cg_path = solve_system(system, method="cg", tol=1e-12)
    x_d, _ = solve_system(system, method="direct")
    assert rep.method == "cg"
    assert np.abs(x_cg - x_d).max() < 1e-8


def test_solve_system_auto_picks_direct(tri4):
    system = wg_system(tri4)
    _, report = solve_system(system, method="auto")
    assert report.method == "direct"  # 24 interior faces after condensation


def test_solve_system_auto_threshold(tri4):
    system = wg_system(tri4)
    _, report = solve_system(system, method="auto", direct_threshold=1)
    assert report.method == "cg"


def test_solve_system_unknown_method(tri4):
    with pytest.raises(SolverError):
        solve_system(wg_system(tri4), method="multigrid")


def test_solution_satisfies_full_equations(tri4):
    system = wg_system(tri4)
    dofs, _ = solve_system(system, method="direct")
    resid = system.A_full @ dofs - system.b_full
    free_scale = max(1.0, np.abs(system.b_full).max())
    assert np.abs(resid[system.free]).max() < 1e-11 * free_scale
