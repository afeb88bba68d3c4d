# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the cascade forward pass.

Both functions mirror :mod:`nmzi._pykernels` exactly; the import-time
selection lives in :mod:`nmzi.kernels`.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()


def evolve(const double[:, :, ::1] vecs,
           const double[:, ::1] vals,
           const double complex[:, ::1] state,
           const double[::1] theta,
           const double[::1] linear_phi,
           const double[::1] kerr_phi):
    """Run a padded sector state through a cascade of elements.

    ``state[n, k]`` is the amplitude of ``|k>_A |n-k>_B``.  Each element is a
    beam splitter (applied in the eigenbasis ``vecs[n]`` of its generator)
    followed by the linear + Kerr phase on Path A.
    """
    cdef Py_ssize_t m = state.shape[0]
    cdef Py_ssize_t n_el = theta.shape[0]
    cdef Py_ssize_t e, n, k, j, w
    cdef double ang
    cdef double complex acc

    out_arr = np.array(state, dtype=np.complex128, order="C", copy=True)
    cdef double complex[:, ::1] x = out_arr
    cdef double complex[::1] tmp = np.empty(m, dtype=np.complex128)
    cdef double complex[::1] phase = np.empty(m, dtype=np.complex128)
    # generator eigenvalues are the integers -n, -n+2, ..., n
    cdef double complex[::1] spin = np.empty(2 * m - 1, dtype=np.complex128)
    cdef long[:, ::1] ivals = np.rint(vals).astype(np.int_)

    with nogil:
        for e in range(n_el):
            for k in range(m):
                ang = linear_phi[e] * k + kerr_phi[e] * k * (k - 1)
                phase[k] = cos(ang) + 1j * sin(ang)
            for w in range(2 * m - 1):
                ang = theta[e] * (w - (m - 1))
                spin[w] = cos(ang) + 1j * sin(ang)
            for n in range(m):
                for j in range(n + 1):
                    acc = 0
                    for k in range(n + 1):
                        acc = acc + vecs[n, k, j] * x[n, k]
                    tmp[j] = acc * spin[ivals[n, j] + m - 1]
                for k in range(n + 1):
                    acc = 0
                    for j in range(n + 1):
                        acc = acc + vecs[n, k, j] * tmp[j]
                    x[n, k] = acc * phase[k]
    return out_arr


def mode_a_density(const double complex[:, ::1] state):
    """Reduced density matrix of Path A from a padded sector state."""
    cdef Py_ssize_t m = state.shape[0]
    cdef Py_ssize_t p, r, q
    cdef double complex acc
    rho_arr = np.zeros((m, m), dtype=np.complex128)
    cdef double complex[:, ::1] rho = rho_arr

    with nogil:
        for p in range(m):
            for r in range(p, m):
                acc = 0
                # sector of |p>_A|q>_B is p + q; both must fit under the cutoff
                for q in range(m - r):
                    acc = acc + state[p + q, p] * state[r + q, r].conjugate()
                rho[p, r] = acc
                rho[r, p] = acc.conjugate()
    return rho_arr
