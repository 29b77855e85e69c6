"""Independent reference implementations used only by the tests.

Each oracle deliberately takes a different route from the package code
it checks: path counting walks an explicit graph breadth-first,
classical minima come from configuration enumeration, and the dense
propagator oracle uses scipy's expm on the assembled matrix.
"""

from collections import deque
from fractions import Fraction

import numpy as np
import scipy.linalg

from rydsim.lattice import nearest_neighbor_pairs
from rydsim.operator import HamiltonianView


def bfs_path_counts(kind: str, radius: int):
    """dist and shortest-path counts from the origin on an explicit grid.

    Returns {(k, l): (distance, count)} for all nodes within
    ``radius`` hops, by BFS layering plus the standard DP: the count of
    a node is the sum of counts of its predecessors one layer closer.
    """
    if kind == "chain":
        steps = [(1, 0), (-1, 0)]
    elif kind == "square":
        steps = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    elif kind == "triangular":
        steps = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)]
    else:
        raise ValueError(kind)
    dist = {(0, 0): 0}
    count = {(0, 0): 1}
    queue = deque([(0, 0)])
    while queue:
        node = queue.popleft()
        if dist[node] >= radius:
            continue
        for dk, dl in steps:
            nxt = (node[0] + dk, node[1] + dl)
            if nxt not in dist:
                dist[nxt] = dist[node] + 1
                count[nxt] = 0
                queue.append(nxt)
            if dist[nxt] == dist[node] + 1:
                count[nxt] += count[node]
    return {node: (dist[node], count[node]) for node in dist}


def brute_classical_table(geometry, u_z, u_w):
    """{B: (min bond energy, degeneracy)} by enumerating configurations."""
    bonds = nearest_neighbor_pairs(geometry)
    n = geometry.n_sites
    b = np.arange(1 << n, dtype=np.int64)
    cz = np.zeros_like(b)
    cw = np.zeros_like(b)
    for i, j, dk, dl in bonds:
        hit = (b >> i) & (b >> j) & 1
        if dl != 0:
            cz += hit
        else:
            cw += hit
    pop = np.zeros_like(b)
    for k in range(n):
        pop += (b >> k) & 1
    out = {}
    u_z = Fraction(u_z)
    u_w = u_z if u_w is None else Fraction(u_w)
    for up in range(n + 1):
        sel = np.flatnonzero(pop == up)
        energies = [u_z * int(cz[i]) + u_w * int(cw[i]) for i in sel]
        mn = min(energies)
        out[up] = (mn, sum(1 for e in energies if e == mn))
    return out


def expm_evolution(schedule, couplings, n_steps, psi0):
    """Piecewise-constant evolution via scipy.linalg.expm on dense H."""
    psi = psi0.astype(np.complex128).copy()
    bounds = np.linspace(0.0, schedule.t_total, n_steps + 1)
    for t0, t1 in zip(bounds[:-1], bounds[1:]):
        omega, delta = schedule.interval_average(t0, t1)
        h = HamiltonianView(couplings, omega, delta).to_dense()
        psi = scipy.linalg.expm(-1j * (t1 - t0) * h) @ psi
    return psi
