import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp

from hodgewave import _kernels
from hodgewave.fespace import FESpace
from hodgewave.mesh import build_periodic_rect_mesh
from hodgewave.nonlinearity import CUBIC, LINEAR, ZERO, get_nonlinearity

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


@pytest.fixture(scope="module")
def space3():
    return FESpace(build_periodic_rect_mesh(3, 2, 1.0, 1.0), 3)


@needs_numba
@pytest.mark.parametrize("nl", [CUBIC, LINEAR])
def test_backends_agree(space3, nl):
    u = np.random.default_rng(0).standard_normal(space3.layout.n_vector)
    for fn in ("load", "energy"):
        a = getattr(nl, fn)(space3, u, backend="numba")
        b = getattr(nl, fn)(space3, u, backend="numpy")
        assert np.allclose(a, b, rtol=1e-13, atol=1e-13)
    J1 = nl.jacobian(space3, u, backend="numba").toarray()
    J2 = nl.jacobian(space3, u, backend="numpy").toarray()
    assert np.abs(J1 - J2).max() <= 1e-12


@needs_numba
def test_csr_backends_agree(rng):
    A = sp.random(40, 30, density=0.2, random_state=1, format="csr")
    A.sort_indices()
    x = rng.standard_normal(30)
    a = _kernels.csr_matvec(A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data, x, backend="numba")
    b = _kernels.csr_matvec(A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data, x, backend="numpy")
    assert np.allclose(a, b, rtol=1e-14, atol=1e-14)
    assert np.allclose(a, A @ x, rtol=1e-14, atol=1e-14)


def test_csr_empty_rows():
    indptr = np.array([0, 0, 2, 2], dtype=np.int64)
    indices = np.array([0, 2], dtype=np.int64)
    y = _kernels.csr_matvec(indptr, indices, np.array([1.0, 2.0]), np.array([1.0, 5.0, 3.0]), backend="numpy")
    assert np.array_equal(y, [0.0, 7.0, 0.0])


def test_cubic_load_matches_pointwise(space3):
    # constant field: (f(u), phi_0 e_c) = f_c * sqrt(2) * |K| * ... via the mass of the constant mode
    c = np.array([0.3, -0.4])
    from hodgewave.fespace import l2_project

    u = l2_project(lambda x, y: np.stack([0 * x + c[0], 0 * x + c[1]], -1), space3, 1)
    f = CUBIC.f(c)
    ref = np.repeat(space3.mesh.det, 2 * space3.layout.d0) * l2_project(
        lambda x, y: np.stack([0 * x + f[0], 0 * x + f[1]], -1), space3, 1
    )
    assert np.abs(CUBIC.load(space3, u) - ref).max() <= 1e-13
    m = c @ c
    assert CUBIC.energy(space3, u) == pytest.approx(0.5 * m - 0.25 * m * m, rel=1e-13)


def test_jacobian_is_derivative_of_load(space3, rng):
    u = 0.5 * rng.standard_normal(space3.layout.n_vector)
    du = rng.standard_normal(space3.layout.n_vector)
    h = 1e-6
    fd = (CUBIC.load(space3, u + h * du) - CUBIC.load(space3, u - h * du)) / (2 * h)
    assert np.abs(CUBIC.jacobian(space3, u) @ du - fd).max() <= 1e-7


def test_zero_nonlinearity(space3):
    u = np.ones(space3.layout.n_vector)
    assert np.all(ZERO.load(space3, u) == 0.0)
    assert ZERO.energy(space3, u) == 0.0
    assert ZERO.jacobian(space3, u).nnz == 0


def test_pointwise_df():
    u = np.array([0.3, 0.7])
    h = 1e-7
    J = np.stack([(CUBIC.f(u + h * e) - CUBIC.f(u - h * e)) / (2 * h) for e in np.eye(2)], axis=1)
    assert np.allclose(CUBIC.df(u), J, atol=1e-8)


def test_get_nonlinearity():
    assert get_nonlinearity("cubic") is CUBIC
    with pytest.raises(ValueError):
        get_nonlinearity("sine")


def test_no_numba_flag_selects_numpy():
    env = dict(os.environ, HODGEWAVE_NO_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from hodgewave import _kernels; print(_kernels.BACKEND)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "numpy"
