import numpy as np
import pytest

from gapseg import backend
from gapseg.sparse_linalg import (
    CsrMatrix,
    EigenPairs,
    LanczosError,
    cg_solve,
    csr_from_coo,
    csr_submatrix,
    lanczos_lowest,
    spmv,
)


def dense_to_csr(D: np.ndarray, symmetric=False) -> CsrMatrix:
    rows, cols = np.nonzero(D)
    return csr_from_coo(rows, cols, D[rows, cols], D.shape, symmetric=symmetric)


def random_laplacian(n, rng, degree=4) -> np.ndarray:
    """Dense Laplacian of a random weighted graph (possibly disconnected)."""
    W = np.zeros((n, n))
    for i in range(n):
        js = rng.choice(n - 1, size=min(degree, n - 1), replace=False)
        js = np.where(js >= i, js + 1, js)
        W[i, js] = rng.random(js.size)
    W = (W + W.T) / 2
    return np.diag(W.sum(axis=1)) - W


def test_csr_identity_round_trip():
    eye = np.eye(4)
    A = dense_to_csr(eye)
    assert np.array_equal(A.to_dense(), eye)
    assert A.nnz == 4


def test_csr_from_coo_sums_duplicates():
    A = csr_from_coo([0, 0, 1], [1, 1, 0], [2.0, 3.0, 1.0], (2, 2))
    assert A.to_dense().tolist() == [[0.0, 5.0], [1.0, 0.0]]


def test_csr_validation():
    with pytest.raises(ValueError, match="row_ptr"):
        CsrMatrix(2, 2, np.array([0, 1]), np.array([0]), np.array([1.0]))
    with pytest.raises(ValueError, match="out of bounds"):
        CsrMatrix(1, 1, np.array([0, 1]), np.array([3]), np.array([1.0]))
    with pytest.raises(ValueError, match="strictly increasing"):
        CsrMatrix(
            1, 3, np.array([0, 2]), np.array([1, 1]), np.array([1.0, 2.0])
        )


def test_csr_diagonal():
    D = np.array([[2.0, 1.0], [0.0, 5.0]])
    assert dense_to_csr(D).diagonal().tolist() == [2.0, 5.0]


def test_csr_submatrix():
    rng = np.random.default_rng(0)
    D = (rng.random((7, 7)) < 0.4) * rng.random((7, 7))
    A = dense_to_csr(D)
    rows = np.array([1, 3, 4])
    cols = np.array([0, 2, 5, 6])
    sub = csr_submatrix(A, rows, cols)
    assert np.array_equal(sub.to_dense(), D[np.ix_(rows, cols)])


def test_spmv_identity():
    x = np.array([3.0, -1.0, 7.5])
    assert np.array_equal(spmv(dense_to_csr(np.eye(3)), x), x)


def test_spmv_permutation():
    A = dense_to_csr(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert spmv(A, np.array([3.0, 5.0])).tolist() == [5.0, 3.0]


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError):
        spmv(dense_to_csr(np.eye(3)), np.ones(4))


@pytest.mark.parametrize("use_numba", [False, True])
def test_spmv_dense_oracle(use_numba, monkeypatch):
    if use_numba and not backend.HAS_NUMBA:
        pytest.skip("numba not installed")
    monkeypatch.setattr(backend, "USE_NUMBA", use_numba)
    rng = np.random.default_rng(42)
    D = (rng.random((50, 50)) < 0.15) * rng.standard_normal((50, 50))
    A = dense_to_csr(D)
    x = rng.standard_normal(50)
    assert np.max(np.abs(spmv(A, x) - D @ x)) <= 1e-12


def test_spmv_handles_empty_rows():
    D = np.zeros((4, 4))
    D[1, 2] = 3.0
    out = spmv(dense_to_csr(D), np.array([1.0, 1.0, 2.0, 1.0]))
    assert out.tolist() == [0.0, 6.0, 0.0, 0.0]


def test_spmv_deterministic():
    rng = np.random.default_rng(3)
    D = (rng.random((30, 30)) < 0.3) * rng.standard_normal((30, 30))
    A = dense_to_csr(D)
    x = rng.standard_normal(30)
    a = spmv(A, x)
    b = spmv(A, x)
    assert np.array_equal(a, b)


def test_cg_identity_one_iteration():
    b = np.array([1.0, -2.0, 0.5])
    result = cg_solve(dense_to_csr(np.eye(3)), b)
    assert result.converged
    assert result.iterations <= 1
    assert np.allclose(result.x, b, atol=1e-14)


def test_cg_hand_case():
    A = dense_to_csr(np.array([[2.0, 1.0], [1.0, 2.0]]))
    result = cg_solve(A, np.array([3.0, 3.0]))
    assert result.converged
    assert np.allclose(result.x, [1.0, 1.0], atol=1e-10)


def test_cg_random_spd_dense_oracle():
    rng = np.random.default_rng(7)
    L = random_laplacian(100, rng) + 0.1 * np.eye(100)
    b = rng.standard_normal(100)
    result = cg_solve(dense_to_csr(L), b, tol=1e-12)
    assert result.converged
    expected = np.linalg.solve(L, b)
    assert np.max(np.abs(result.x - expected)) <= 1e-6


def test_cg_preconditioned_residual_monotone():
    rng = np.random.default_rng(11)
    for trial in range(10):
        L = random_laplacian(60, rng) + 0.1 * np.eye(60)
        b = rng.standard_normal(60)
        result = cg_solve(dense_to_csr(L), b, tol=1e-10)
        norms = np.array(result.residual_norms)
        assert norms.size >= 2, f"trial {trial}"
        assert np.all(np.diff(norms) <= 0.0), f"trial {trial}"
        # the reported sequence tracks actual progress down to convergence
        assert norms[-1] <= 1e-8 * norms[0]


def test_cg_nonconvergence_reported():
    rng = np.random.default_rng(5)
    L = random_laplacian(80, rng) + 1e-6 * np.eye(80)
    b = rng.standard_normal(80)
    result = cg_solve(dense_to_csr(L), b, tol=1e-14, max_iter=2)
    assert not result.converged
    assert result.iterations == 2
    assert result.residual > 0


def test_cg_jacobi_rejects_bad_diagonal():
    A = csr_from_coo([0, 1], [1, 0], [1.0, 1.0], (2, 2))  # zero diagonal
    with pytest.raises(ValueError, match="diagonal"):
        cg_solve(A, np.ones(2))


def test_cg_zero_rhs():
    A = dense_to_csr(np.eye(3) * 2.0)
    result = cg_solve(A, np.zeros(3))
    assert result.converged
    assert result.iterations == 0
    assert np.array_equal(result.x, np.zeros(3))


def test_cg_warm_start_converges_faster():
    rng = np.random.default_rng(9)
    L = random_laplacian(100, rng) + 0.1 * np.eye(100)
    A = dense_to_csr(L)
    b = rng.standard_normal(100)
    cold = cg_solve(A, b, tol=1e-10)
    x_star = cold.x
    warm = cg_solve(A, b, tol=1e-10, x0=x_star + 1e-8 * rng.standard_normal(100))
    assert warm.converged
    assert warm.iterations < cold.iterations


def test_lanczos_diagonal():
    eig = lanczos_lowest(dense_to_csr(np.diag([1.0, 2.0, 3.0])), m=2, seed=1)
    assert np.allclose(eig.eigenvalues, [1.0, 2.0], atol=1e-10)
    assert abs(abs(eig.eigenvectors[0, 0]) - 1.0) < 1e-8
    assert abs(abs(eig.eigenvectors[1, 1]) - 1.0) < 1e-8


def test_lanczos_path_graph_null_vector():
    # path graph 0-1-2-3 with unit weights
    D = np.array(
        [
            [1.0, -1.0, 0.0, 0.0],
            [-1.0, 2.0, -1.0, 0.0],
            [0.0, -1.0, 2.0, -1.0],
            [0.0, 0.0, -1.0, 1.0],
        ]
    )
    eig = lanczos_lowest(dense_to_csr(D, symmetric=True), m=1, seed=0)
    assert abs(eig.eigenvalues[0]) <= 1e-10
    v = eig.eigenvectors[:, 0]
    assert np.allclose(np.abs(v), 0.5, atol=1e-8)


def test_lanczos_dense_oracle_60():
    rng = np.random.default_rng(13)
    M = rng.standard_normal((60, 60))
    A = M @ M.T  # symmetric PSD
    eig = lanczos_lowest(dense_to_csr(A, symmetric=True), m=10, tol=1e-9, seed=2)
    expected = np.linalg.eigvalsh(A)[:10]
    assert np.max(np.abs(eig.eigenvalues - expected)) <= 1e-8


def test_lanczos_invariants():
    rng = np.random.default_rng(21)
    M = rng.standard_normal((40, 40))
    A = M @ M.T
    Acsr = dense_to_csr(A, symmetric=True)
    eig = lanczos_lowest(Acsr, m=6, seed=3)
    V = eig.eigenvectors
    assert np.max(np.abs(V.T @ V - np.eye(6))) <= 1e-8
    assert np.all(np.diff(eig.eigenvalues) >= 0)
    for i in range(6):
        resid = np.linalg.norm(spmv(Acsr, V[:, i]) - eig.eigenvalues[i] * V[:, i])
        assert resid <= 1e-6 * max(1.0, eig.eigenvalues[i])


def test_lanczos_full_spectrum_small():
    rng = np.random.default_rng(31)
    M = rng.standard_normal((12, 12))
    A = M @ M.T
    eig = lanczos_lowest(dense_to_csr(A, symmetric=True), m=12, seed=4)
    assert np.allclose(eig.eigenvalues, np.linalg.eigvalsh(A), atol=1e-8)


def test_lanczos_degenerate_spectrum_restart():
    # identity has a single eigenvalue: Krylov space collapses immediately
    eig = lanczos_lowest(dense_to_csr(np.eye(8)), m=3, seed=5)
    assert np.allclose(eig.eigenvalues, 1.0, atol=1e-10)
    V = eig.eigenvectors
    assert np.max(np.abs(V.T @ V - np.eye(3))) <= 1e-8


def test_lanczos_nonconvergence_raises():
    rng = np.random.default_rng(17)
    M = rng.standard_normal((40, 40))
    A = M @ M.T
    with pytest.raises(LanczosError) as err:
        lanczos_lowest(dense_to_csr(A), m=10, tol=1e-14, max_basis=12, seed=6)
    assert err.value.best_residuals.shape == (10,)


def test_lanczos_bad_m():
    with pytest.raises(ValueError):
        lanczos_lowest(dense_to_csr(np.eye(3)), m=0)
    with pytest.raises(ValueError):
        lanczos_lowest(dense_to_csr(np.eye(3)), m=4)


def test_eigenpairs_validation():
    with pytest.raises(ValueError, match="ascending"):
        EigenPairs(np.array([2.0, 1.0]), np.eye(2))
