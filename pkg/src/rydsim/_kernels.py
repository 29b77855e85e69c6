"""Numba kernels for matrix-free Hamiltonian action on bitstring vectors.

Basis convention: basis index b is a bitstring, bit i set means site i
is in the excited (up) state.  The drive term couples b to b ^ (1 << i)
with amplitude omega/2; everything else is diagonal.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def apply_real_diag(psi, diag, omega_half, nbits, out):
    """out = H psi with real diagonal (Hermitian case)."""
    dim = psi.shape[0]
    for b in range(dim):
        acc = diag[b] * psi[b]
        for i in range(nbits):
            acc += omega_half * psi[b ^ (1 << i)]
        out[b] = acc
    return out


@njit(cache=True)
def apply_complex_diag(psi, diag, omega_half, nbits, out):
    """out = H psi with complex diagonal (non-Hermitian effective case)."""
    dim = psi.shape[0]
    for b in range(dim):
        acc = diag[b] * psi[b]
        for i in range(nbits):
            acc += omega_half * psi[b ^ (1 << i)]
        out[b] = acc
    return out


@njit(cache=True)
def interaction_diagonal_kernel(pair_i, pair_j, u, nbits, out):
    """Diagonal interaction energy sum(U_ij) over pairs set in b."""
    dim = out.shape[0]
    npairs = pair_i.shape[0]
    for b in range(dim):
        acc = 0.0
        for p in range(npairs):
            if (b >> pair_i[p]) & 1 and (b >> pair_j[p]) & 1:
                acc += u[p]
        out[b] = acc
    return out
