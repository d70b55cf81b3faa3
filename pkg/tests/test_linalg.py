import numpy as np
import pytest
import scipy.sparse as sp

from hodgewave.assembly import build_constraint_systems
from hodgewave.calculus import Penalties
from hodgewave.fespace import FESpace
from hodgewave.linalg import (
    BlockJacobi,
    DirectSolver,
    LinearSolveError,
    NotSPDError,
    SparseMatrix,
    contiguous_blocks,
    solve_general,
    solve_spd,
    spmv,
)
from hodgewave.mesh import build_mesh


def _random_spd(n, rng, density=0.1):
    B = sp.random(n, n, density=density, random_state=np.random.RandomState(int(rng.integers(1 << 30))))
    return (B @ B.T + n * sp.identity(n)).tocsr()


def test_spmv_identity(rng):
    x = rng.standard_normal(7)
    assert np.array_equal(spmv(SparseMatrix.identity(7), x), x)


def test_spmv_diagonal():
    A = SparseMatrix.from_dense([[2.0, 0.0], [0.0, 3.0]])
    assert np.array_equal(A @ np.ones(2), [2.0, 3.0])


def test_spmv_dense_oracle(rng):
    D = rng.standard_normal((50, 50)) * (rng.random((50, 50)) < 0.2)
    A = SparseMatrix.from_dense(D)
    x = rng.standard_normal(50)
    assert np.abs(spmv(A, x) - D @ x).max() <= 1e-13


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError):
        spmv(SparseMatrix.identity(3), np.ones(4))


def test_csr_columns_sorted(rng):
    A = SparseMatrix.from_scipy(sp.random(30, 30, density=0.3, random_state=3, format="coo"))
    for i in range(30):
        cols = A.indices[A.indptr[i] : A.indptr[i + 1]]
        assert np.all(np.diff(cols) > 0)


def test_inconsistent_csr_rejected():
    with pytest.raises(ValueError):
        SparseMatrix([0, 1], [0, 1], [1.0], (1, 2))


def test_cg_two_by_two():
    A = SparseMatrix.from_dense([[4.0, 1.0], [1.0, 3.0]])
    x, info = solve_spd(A, np.array([1.0, 2.0]))
    assert np.allclose(x, [1 / 11, 7 / 11], atol=1e-15)
    assert info.residual <= 1e-13


def test_cg_identity_one_iteration(rng):
    b = rng.standard_normal(12)
    x, info = solve_spd(SparseMatrix.identity(12), b)
    assert info.iterations == 1
    assert np.allclose(x, b, rtol=0, atol=1e-15)


def test_cg_zero_rhs():
    x, info = solve_spd(SparseMatrix.identity(3), np.zeros(3))
    assert np.all(x == 0) and info.iterations == 0


def test_cg_iteration_bound(rng):
    A = SparseMatrix.from_scipy(_random_spd(80, rng))
    b = rng.standard_normal(80)
    x, info = solve_spd(A, b)
    assert info.iterations <= 3 * 80
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-13


def test_cg_detects_indefinite():
    A = SparseMatrix.from_dense([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(NotSPDError):
        solve_spd(A, np.array([1.0, 1.0]))


def test_cg_maxit_reports_residual(rng):
    A = SparseMatrix.from_scipy(_random_spd(60, rng))
    with pytest.raises(LinearSolveError) as exc:
        solve_spd(A, rng.standard_normal(60), maxit=2)
    assert 0 < exc.value.residual < np.inf
    assert "relative residual" in str(exc.value)


def test_preconditioned_and_plain_agree(rng):
    S = _random_spd(60, rng)
    A = SparseMatrix.from_scipy(S)
    b = rng.standard_normal(60)
    pc = BlockJacobi(A, contiguous_blocks([6] * 10))
    x1, _ = solve_spd(A, b)
    x2, i2 = solve_spd(A, b, precond=pc)
    assert np.linalg.norm(x1 - x2) / np.linalg.norm(x1) <= 10 * 1e-13 * np.linalg.cond(S.toarray())


def test_block_jacobi_exact_on_block_diagonal(rng):
    blocks = [rng.standard_normal((3, 3)) + 4 * np.eye(3) for _ in range(4)]
    D = sp.block_diag(blocks).toarray()
    pc = BlockJacobi(SparseMatrix.from_dense(D), contiguous_blocks([3] * 4))
    r = rng.standard_normal(12)
    assert np.allclose(D @ pc(r), r, atol=1e-13)


def test_gmres_nonsymmetric(rng):
    n = 70
    S = (sp.random(n, n, density=0.1, random_state=4) + 5 * sp.identity(n)).tocsr()
    A = SparseMatrix.from_scipy(S)
    b = rng.standard_normal(n)
    for restart in (5, 60):
        x, info = solve_general(A, b, restart=restart)
        assert np.linalg.norm(S @ x - b) / np.linalg.norm(b) <= 1e-13
    x2, _ = solve_general(A, b, precond=BlockJacobi(A, contiguous_blocks([7] * 10)))
    assert np.linalg.norm(x - x2) <= 1e-11 * np.linalg.norm(x)


def test_gmres_maxit(rng):
    S = (sp.random(40, 40, density=0.3, random_state=5) + sp.identity(40)).tocsr()
    with pytest.raises(LinearSolveError):
        solve_general(SparseMatrix.from_scipy(S), rng.standard_normal(40), maxit=1, restart=1)


def test_direct_solver(rng):
    S = (sp.random(40, 40, density=0.2, random_state=6) + 3 * sp.identity(40)).tocsr()
    ds = DirectSolver(S)
    b = rng.standard_normal(40)
    x = ds.solve(b)
    assert ds.last_residual <= 1e-13
    assert np.linalg.norm(S @ x - b) / np.linalg.norm(b) <= 1e-13


def test_direct_solver_singular():
    with pytest.raises(LinearSolveError):
        DirectSolver(sp.csr_matrix(np.zeros((3, 3))))


def test_sigma_system_two_elements(rng):
    m = build_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])
    cs = build_constraint_systems(FESpace(m, 2), Penalties(-1.0, 1.0))
    A = SparseMatrix.from_scipy(-cs.A_sigma)
    assert A.is_symmetric()
    b = rng.standard_normal(A.shape[0])
    x, info = solve_spd(A, b)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-13


def test_solves_deterministic(rng):
    A = SparseMatrix.from_scipy(_random_spd(50, rng))
    b = rng.standard_normal(50)
    assert np.array_equal(solve_spd(A, b)[0], solve_spd(A, b)[0])
    assert np.array_equal(solve_general(A, b)[0], solve_general(A, b)[0])
