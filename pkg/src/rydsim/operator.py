"""Couplings and the driven Ising Hamiltonian in the bitstring basis.

The Hamiltonian (hbar = 1, angular units) is

    H = sum_i [ (omega/2) sigma_x_i - delta n_i ] + sum_{i<j} U_ij n_i n_j

with n_i = |up><up|_i.  In the bitstring basis (bit i of index b set
means site i up) the interaction and detuning terms are diagonal and
the drive couples b to b ^ (1 << i).  The matrix-free kernels in
``_kernels`` exploit exactly that structure.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh

from . import _kernels
from .lattice import LatticeGeometry, nearest_neighbor_pairs

MAX_SITES = 24  # 2**24 amplitudes; beyond this the dense vector no longer fits

_popcount_cache: dict[int, np.ndarray] = {}
_occupancy_cache: dict[int, np.ndarray] = {}


def popcounts(n: int) -> np.ndarray:
    """Number of set bits for every basis index of an n-site register."""
    if n not in _popcount_cache:
        v = np.arange(1 << n, dtype=np.uint32)
        v = v - ((v >> 1) & 0x55555555)
        v = (v & 0x33333333) + ((v >> 2) & 0x33333333)
        v = (v + (v >> 4)) & 0x0F0F0F0F
        _popcount_cache[n] = ((v * 0x01010101) >> 24).astype(np.float64)
    return _popcount_cache[n]


def occupancy_matrix(n: int) -> np.ndarray:
    """(2**n, n) float matrix of bit values, column i = occupation of site i."""
    if n not in _occupancy_cache:
        idx = np.arange(1 << n, dtype=np.uint32)
        bits = ((idx[:, None] >> np.arange(n, dtype=np.uint32)[None, :]) & 1)
        mat = bits.astype(np.float64)
        if n <= 16:
            _occupancy_cache[n] = mat
        else:
            return mat
    return _occupancy_cache[n]


@dataclass
class CouplingMap:
    """Pairwise interaction strengths U_ij in rad/us."""

    n_sites: int
    pair_i: np.ndarray
    pair_j: np.ndarray
    u: np.ndarray
    mode: str = "full"
    _diag: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_pairs(self) -> int:
        return len(self.u)

    def matrix(self) -> np.ndarray:
        """Symmetric (n, n) coupling matrix with zero diagonal."""
        m = np.zeros((self.n_sites, self.n_sites))
        m[self.pair_i, self.pair_j] = self.u
        m[self.pair_j, self.pair_i] = self.u
        return m

    def interaction_diagonal(self) -> np.ndarray:
        """sum_{i<j in b} U_ij for every basis index b (cached)."""
        if self._diag is None:
            if self.n_sites > MAX_SITES:
                raise ValueError(f"register too large ({self.n_sites} sites)")
            out = np.empty(1 << self.n_sites)
            _kernels.interaction_diagonal_kernel(
                self.pair_i.astype(np.int64), self.pair_j.astype(np.int64),
                self.u.astype(np.float64), self.n_sites, out)
            self._diag = out
        return self._diag

    def scaled(self, factor: float) -> "CouplingMap":
        return CouplingMap(self.n_sites, self.pair_i.copy(), self.pair_j.copy(),
                           self.u * factor, self.mode)


def build_couplings(geometry: LatticeGeometry,
                    mode: str = "full",
                    c6: float | None = None,
                    u_nn: float | None = None,
                    u_z: float | None = None,
                    u_w: float | None = None) -> CouplingMap:
    """Interaction map for a geometry, in rad/us.

    mode "full": van der Waals tails, U_ij = c6 / r_ij**6 for every pair,
    with r_ij the (minimal-image) distance in um.  Pass either ``c6``
    (rad/us * um**6) or ``u_nn``, the coupling at the undistorted
    nearest-neighbour spacing, from which c6 = u_nn * a**6.

    mode "nn": nearest-neighbour bonds only.  Bonds with a vertical
    component (dl != 0) get ``u_z``, horizontal bonds (dl == 0) get
    ``u_w``; passing ``u_nn`` sets both.
    """
    n = geometry.n_sites
    if mode == "full":
        if c6 is None:
            if u_nn is None:
                raise ValueError("full mode needs c6 or u_nn")
            c6 = u_nn * geometry.spacing_um ** 6
        dist = geometry.distance_matrix()
        iu, ju = np.triu_indices(n, k=1)
        r = dist[iu, ju]
        if np.any(r <= 0):
            raise ValueError("coincident sites in geometry")
        return CouplingMap(n, iu.astype(np.int64), ju.astype(np.int64),
                           c6 / r ** 6, "full")
    if mode == "nn":
        if u_nn is not None:
            u_z = u_w = u_nn
        if u_z is None or u_w is None:
            raise ValueError("nn mode needs u_z and u_w (or u_nn)")
        bonds = nearest_neighbor_pairs(geometry)
        if not bonds:
            raise ValueError("geometry has no nearest-neighbour bonds")
        pi = np.array([b[0] for b in bonds], dtype=np.int64)
        pj = np.array([b[1] for b in bonds], dtype=np.int64)
        u = np.array([u_z if b[3] != 0 else u_w for b in bonds])
        return CouplingMap(n, pi, pj, u, "nn")
    raise ValueError(f"unknown coupling mode {mode!r}")


class HamiltonianView:
    """H at fixed drive values, applied matrix-free.

    ``delta_site`` optionally adds independent per-site detuning shifts
    (used by the stochastic-detuning unravelling of dephasing).
    """

    def __init__(self, couplings: CouplingMap, omega: float, delta: float,
                 delta_site: np.ndarray | None = None):
        self.couplings = couplings
        self.omega = float(omega)
        self.delta = float(delta)
        self.n = couplings.n_sites
        self.dim = 1 << self.n
        diag = couplings.interaction_diagonal() - delta * popcounts(self.n)
        if delta_site is not None:
            occ = occupancy_matrix(self.n)
            diag = diag - occ @ np.asarray(delta_site, dtype=np.float64)
        self.diag = np.ascontiguousarray(diag, dtype=np.float64)

    def apply(self, psi: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        if out is None:
            out = np.empty_like(psi)
        _kernels.apply_real_diag(psi, self.diag, 0.5 * self.omega, self.n, out)
        return out

    def to_dense(self) -> np.ndarray:
        h = np.diag(self.diag.astype(complex))
        idx = np.arange(self.dim)
        for i in range(self.n):
            h[idx, idx ^ (1 << i)] += 0.5 * self.omega
        return h

    def to_sparse(self) -> sp.csr_matrix:
        idx = np.arange(self.dim)
        rows = [idx]
        cols = [idx]
        vals = [self.diag.astype(complex)]
        for i in range(self.n):
            rows.append(idx)
            cols.append(idx ^ (1 << i))
            vals.append(np.full(self.dim, 0.5 * self.omega, dtype=complex))
        return sp.csr_matrix((np.concatenate(vals),
                              (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.dim, self.dim))


def apply_hamiltonian(view: HamiltonianView, psi: np.ndarray) -> np.ndarray:
    return view.apply(psi)


def spectrum_at(couplings: CouplingMap, omega: float, delta: float,
                n_levels: int | None = None,
                return_vectors: bool = False):
    """Lowest eigenvalues (and optionally vectors) of H at fixed drive.

    Dense diagonalization below 2**12 states, Lanczos (scipy eigsh)
    above, where ``n_levels`` must then be given.
    """
    view = HamiltonianView(couplings, omega, delta)
    if view.dim <= (1 << 12):
        h = view.to_dense()
        vals, vecs = eigh(h)
        if n_levels is not None:
            vals, vecs = vals[:n_levels], vecs[:, :n_levels]
        return (vals, vecs) if return_vectors else vals
    if n_levels is None:
        raise ValueError("n_levels required for large registers")
    from scipy.sparse.linalg import eigsh
    vals, vecs = eigsh(view.to_sparse(), k=n_levels, which="SA")
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    return (vals, vecs) if return_vectors else vals


def state_site_density(psi: np.ndarray, n: int) -> np.ndarray:
    """<n_i> for every site, from a normalized state vector."""
    p = np.abs(psi) ** 2
    return p @ occupancy_matrix(n)


def state_pair_moments(psi: np.ndarray, n: int) -> np.ndarray:
    """(n, n) matrix of <n_i n_j>; diagonal holds <n_i>."""
    p = np.abs(psi) ** 2
    occ = occupancy_matrix(n)
    return (occ * p[:, None]).T @ occ


def probabilities_site_density(p: np.ndarray, n: int) -> np.ndarray:
    """<n_i> from a basis probability vector (state populations)."""
    return np.asarray(p, dtype=np.float64) @ occupancy_matrix(n)


def probabilities_pair_moments(p: np.ndarray, n: int) -> np.ndarray:
    occ = occupancy_matrix(n)
    return (occ * np.asarray(p, dtype=np.float64)[:, None]).T @ occ


def write_couplings_csv(couplings: CouplingMap) -> str:
    """Interchange CSV with header i,j,U_radpus, one row per stored pair."""
    buf = io.StringIO()
    buf.write("i,j,U_radpus\n")
    for i, j, u in zip(couplings.pair_i, couplings.pair_j, couplings.u):
        buf.write(f"{int(i)},{int(j)},{u:.12g}\n")
    return buf.getvalue()


def read_couplings_csv(text: str, n_sites: int, mode: str = "full") -> CouplingMap:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "i,j,U_radpus":
        raise ValueError("coupling CSV must start with header i,j,U_radpus")
    pi, pj, u = [], [], []
    for ln in lines[1:]:
        a, b, c = ln.split(",")
        i, j = int(a), int(b)
        if not (0 <= i < n_sites and 0 <= j < n_sites) or i == j:
            raise ValueError(f"bad pair ({i}, {j})")
        pi.append(min(i, j))
        pj.append(max(i, j))
        u.append(float(c))
    return CouplingMap(n_sites, np.array(pi, dtype=np.int64),
                       np.array(pj, dtype=np.int64), np.array(u), mode)
