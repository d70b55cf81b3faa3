"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--degree 3] [--n 10 20 40] [--repeat 20]

Both backends are called explicitly, so the HODGEWAVE_NO_NUMBA flag does not
matter here.  Results are also checked for agreement.
"""

import argparse
import time

import numpy as np

from hodgewave import _kernels
from hodgewave.fespace import FESpace
from hodgewave.linalg import SparseMatrix
from hodgewave.mesh import build_periodic_rect_mesh
from hodgewave.calculus import Penalties
from hodgewave.assembly import build_operators


def best_of(fn, repeat):
    fn()  # warm-up (jit compilation for numba)
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return min(ts)


def bench(n, degree, repeat):
    mesh = build_periodic_rect_mesh(n, n, 1.0, 1.0)
    V = FESpace(mesh, degree)
    rng = np.random.default_rng(0)
    U = V.vector_coeffs(rng.standard_normal(V.layout.n_vector))
    args = (_kernels.CUBIC, V.phi_nl, V.nl_quad.weights, mesh.det, U)
    ops = build_operators(V, Penalties(-1.0, 1.0))
    A = SparseMatrix.from_scipy(ops.Ett_a0)
    x = rng.standard_normal(A.shape[1])

    cases = {
        "nl_load": lambda b: _kernels.nl_load(*args, backend=b),
        "nl_jac": lambda b: _kernels.nl_jac(*args, backend=b),
        "nl_energy": lambda b: _kernels.nl_energy(*args, backend=b),
        "csr_matvec": lambda b: _kernels.csr_matvec(A.indptr, A.indices, A.data, x, backend=b),
    }
    rows = []
    for name, fn in cases.items():
        t_np = best_of(lambda: fn("numpy"), repeat)
        if _kernels.HAVE_NUMBA:
            t_nb = best_of(lambda: fn("numba"), repeat)
            diff = np.max(np.abs(np.asarray(fn("numba")) - np.asarray(fn("numpy"))))
        else:
            t_nb, diff = float("nan"), float("nan")
        rows.append((name, mesh.n_elements, t_np, t_nb, diff))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--degree", type=int, default=3)
    ap.add_argument("--n", type=int, nargs="+", default=[10, 20, 40])
    ap.add_argument("--repeat", type=int, default=20)
    a = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        print("numba not available; timing the numpy path only")
    print(f"{'kernel':12s} {'elements':>8s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s} {'max diff':>9s}")
    for n in a.n:
        for name, ne, t_np, t_nb, diff in bench(n, a.degree, a.repeat):
            print(f"{name:12s} {ne:8d} {1e3 * t_np:11.3f} {1e3 * t_nb:11.3f} {t_np / t_nb:8.1f} {diff:9.1e}")


if __name__ == "__main__":
    main()
