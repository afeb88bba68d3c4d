"""Pure numpy fallback for the compiled cascade kernels.

Same signatures and layouts as ``_ckernels``: ``state[n, k]`` is the
amplitude of ``|k>_A |n-k>_B`` with unused slots (``k > n``) held at zero.
"""
import numpy as np


def evolve(vecs, vals, state, theta, linear_phi, kerr_phi):
    vecs = np.asarray(vecs, dtype=float)
    vecs_t = np.ascontiguousarray(vecs.transpose(0, 2, 1))
    x = np.array(state, dtype=complex, copy=True)
    k = np.arange(x.shape[0])
    for t, lp, kp in zip(theta, linear_phi, kerr_phi):
        y = np.einsum("njk,nk->nj", vecs_t, x)
        y *= np.exp(1j * t * vals)
        x = np.einsum("nkj,nj->nk", vecs, y)
        x *= np.exp(1j * (lp * k + kp * k * (k - 1)))
    return x


def mode_a_density(state):
    state = np.asarray(state, dtype=complex)
    m = state.shape[0]
    # psi[p, q] = amplitude of |p>_A |q>_B, zero beyond the cutoff
    p, q = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    inside = p + q < m
    psi = np.zeros((m, m), dtype=complex)
    psi[inside] = state[(p + q)[inside], p[inside]]
    return psi @ psi.conj().T
