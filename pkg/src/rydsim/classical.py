"""Classical nearest-neighbour Ising ground sets and density diagrams.

With the drive off, the Hamiltonian is a classical lattice-gas energy

    E(config) = sum_bonds U_b n_i n_j - x * sum_i n_i,

where x plays the role of the detuning in coupling units.  This module
finds exact ground states as a function of x: for every up-count B it
computes the minimum bond energy A(B) and its degeneracy with a
row-transfer dynamic program over row states, then treats the family of
lines A(B) - x B exactly (rational arithmetic), so plateau boundaries
of the density curve come out as exact fractions, not floating-point
crossings.

Bond weights follow the anisotropy convention used elsewhere: bonds
within a row (dl = 0) carry ``u_w``, bonds linking consecutive rows
(dl != 0, including the triangular diagonal) carry ``u_z``.  Weights
must be simple rationals; floats are accepted when they are within
1e-9 of a fraction with denominator <= 2**16 (so 1/3 computed in
floating point is fine, an arbitrary irrational is not).

Geometries are decomposed into rows of constant l (chains are columns
of single-site rows).  Periodic boundaries close both the rows and the
row sequence; periodic axes need length >= 3 so no bond is duplicated.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lcm

import numpy as np

from .lattice import LatticeGeometry
from .operator import CouplingMap

_INF = 1 << 62
_DEN_LIMIT = 1 << 16


def _as_fraction(value, name: str) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, float):
        fr = Fraction(value).limit_denominator(_DEN_LIMIT)
        if abs(float(fr) - value) <= 1e-9 * max(1.0, abs(value)):
            return fr
        raise ValueError(
            f"{name}={value!r} is not close to a simple rational; pass a "
            f"Fraction (or rescale units) for exact classical diagrams")
    raise TypeError(f"{name} must be a number or Fraction")


def _weights_from_couplings(geometry: LatticeGeometry,
                            couplings: CouplingMap) -> tuple[Fraction, Fraction]:
    if couplings.mode != "nn":
        raise ValueError("classical diagrams need nearest-neighbour couplings")
    from .lattice import nearest_neighbor_pairs
    bonds = nearest_neighbor_pairs(geometry)
    if len(bonds) != couplings.n_pairs:
        raise ValueError("coupling map does not match the geometry's bond list")
    u_w = u_z = None
    lut = {(min(i, j), max(i, j)): u for i, j, u
           in zip(couplings.pair_i, couplings.pair_j, couplings.u)}
    for i, j, dk, dl in bonds:
        u = lut[(i, j)]
        if dl == 0:
            u_w = u
        else:
            u_z = u
    if u_w is None:
        u_w = u_z
    if u_z is None:
        u_z = u_w
    return _as_fraction(u_z, "u_z"), _as_fraction(u_w, "u_w")


@dataclass(frozen=True)
class _RowModel:
    """Integer-scaled row decomposition of a lattice-gas energy."""

    width: int
    n_rows: int
    periodic_rows: bool       # wrap within a row (k axis)
    periodic_cols: bool       # wrap the row sequence (l axis)
    diagonal: bool            # triangular extra inter-row bond
    w_in: int                 # scaled in-row bond weight
    w_z: int                  # scaled inter-row bond weight
    denom: int

    @property
    def n_sites(self) -> int:
        return self.width * self.n_rows


def _row_model(geometry: LatticeGeometry, u_z: Fraction, u_w: Fraction) -> _RowModel:
    denom = lcm(u_z.denominator, u_w.denominator)
    w_z = int(u_z * denom)
    w_in = int(u_w * denom)
    periodic = geometry.boundary == "periodic"
    if geometry.kind == "chain":
        (n,) = geometry.dimensions
        if periodic and n < 3:
            raise ValueError("periodic axes need length >= 3")
        # single-site rows stacked along the chain; the chain bond is
        # an in-row bond by the dl = 0 convention
        return _RowModel(1, n, False, periodic, False, 0, w_in, denom)
    lk, ll = geometry.dimensions
    if periodic and (lk < 3 or ll < 3):
        raise ValueError("periodic axes need length >= 3")
    if lk > 10:
        raise ValueError("row width above 10 is not supported by the transfer DP")
    diagonal = geometry.kind == "triangular"
    return _RowModel(lk, ll, periodic, periodic, diagonal, w_in, w_z, denom)


def _row_popcounts(width: int) -> np.ndarray:
    s = np.arange(1 << width, dtype=np.int64)
    out = np.zeros_like(s)
    for b in range(width):
        out += (s >> b) & 1
    return out


def _in_row_energy(model: _RowModel) -> np.ndarray:
    s = np.arange(1 << model.width, dtype=np.int64)
    e = np.zeros_like(s)
    for k in range(model.width - 1):
        e += ((s >> k) & (s >> (k + 1)) & 1) * model.w_in
    if model.periodic_rows and model.width >= 3:
        e += ((s >> (model.width - 1)) & s & 1) * model.w_in
    return e


def _inter_row_energy(model: _RowModel) -> np.ndarray:
    """(S, S) scaled bond energy between lower-row state s and upper s'."""
    w = model.width
    s = np.arange(1 << w, dtype=np.int64)
    pop = _row_popcounts(w)
    overlap = pop[s[:, None] & s[None, :]]
    e = overlap * model.w_z
    if model.diagonal:
        rolled = s >> 1
        if model.periodic_rows:
            rolled = rolled | ((s & 1) << (w - 1))
        e = e + pop[rolled[:, None] & s[None, :]] * model.w_z
    return e


def _transfer_tables(model: _RowModel, first_state: int | None = None):
    """Row DP; returns per-row tables V[l][s, B] (scaled ints) and counts."""
    s_dim = 1 << model.width
    n = model.n_sites
    pop = _row_popcounts(model.width)
    in_row = _in_row_energy(model)
    inter = _inter_row_energy(model)

    v = np.full((s_dim, n + 1), _INF, dtype=np.int64)
    c = np.zeros((s_dim, n + 1), dtype=np.int64)
    states0 = range(s_dim) if first_state is None else (first_state,)
    for s0 in states0:
        v[s0, pop[s0]] = in_row[s0]
        c[s0, pop[s0]] = 1
    tables_v = [v]
    tables_c = [c]
    for _ in range(1, model.n_rows):
        v_prev, c_prev = tables_v[-1], tables_c[-1]
        v = np.full((s_dim, n + 1), _INF, dtype=np.int64)
        c = np.zeros((s_dim, n + 1), dtype=np.int64)
        for s_new in range(s_dim):
            cand = v_prev + inter[:, s_new][:, None]
            m = cand.min(axis=0)
            reach = m < _INF // 2
            cnt = np.where(cand == m[None, :], c_prev, 0).sum(axis=0)
            p = pop[s_new]
            upto = n + 1 - p
            v[s_new, p:] = np.where(reach[:upto], m[:upto] + in_row[s_new], _INF)
            c[s_new, p:] = np.where(reach[:upto], cnt[:upto], 0)
        tables_v.append(v)
        tables_c.append(c)
    return tables_v, tables_c, pop, in_row, inter


def _resolve_weights(geometry, u_z, u_w, couplings) -> tuple[Fraction, Fraction]:
    if couplings is not None:
        return _weights_from_couplings(geometry, couplings)
    u_z_f = _as_fraction(u_z, "u_z")
    u_w_f = _as_fraction(u_w if u_w is not None else u_z, "u_w")
    return u_z_f, u_w_f


def _enumeration_arrays(geometry: LatticeGeometry, u_z: Fraction, u_w: Fraction):
    """Exact scaled energies of every configuration; only for N <= 20."""
    from .lattice import nearest_neighbor_pairs
    n = geometry.n_sites
    if n > 20:
        raise ValueError("geometry too large for exhaustive enumeration")
    denom = lcm(u_z.denominator, u_w.denominator)
    w_z = int(u_z * denom)
    w_in = int(u_w * denom)
    b = np.arange(1 << n, dtype=np.int64)
    e = np.zeros_like(b)
    for i, j, dk, dl in nearest_neighbor_pairs(geometry):
        e += ((b >> i) & (b >> j) & 1) * (w_z if dl != 0 else w_in)
    pop = np.zeros_like(b)
    for k in range(n):
        pop += (b >> k) & 1
    return e, pop, denom


def minimum_energy_table(geometry: LatticeGeometry,
                         u_z=1, u_w=None,
                         couplings: CouplingMap | None = None) -> list[tuple[int, Fraction, int]]:
    """(B, A(B), count) for every reachable up-count B.

    A(B) is the minimum total bond energy among configurations with
    exactly B sites up; count is the number of configurations attaining
    it.  Periodic column closure is handled by anchoring the first row.
    Geometries too wide for the row DP fall back to exhaustive
    enumeration when N <= 20.
    """
    u_z_f, u_w_f = _resolve_weights(geometry, u_z, u_w, couplings)
    try:
        model = _row_model(geometry, u_z_f, u_w_f)
    except ValueError:
        if geometry.n_sites > 20:
            raise
        e, pop, denom = _enumeration_arrays(geometry, u_z_f, u_w_f)
        out = []
        for b in range(geometry.n_sites + 1):
            sel = pop == b
            a = int(e[sel].min())
            out.append((b, Fraction(a, denom), int((e[sel] == a).sum())))
        return out
    n = model.n_sites

    best = np.full(n + 1, _INF, dtype=np.int64)
    count = np.zeros(n + 1, dtype=np.int64)

    def absorb(v_final: np.ndarray, c_final: np.ndarray) -> None:
        nonlocal best, count
        m = v_final.min(axis=0)
        cnt = np.where(v_final == m[None, :], c_final, 0).sum(axis=0)
        lower = m < best
        equal = m == best
        count = np.where(lower, cnt, count + np.where(equal, cnt, 0))
        best = np.minimum(best, m)

    if model.periodic_cols and model.n_rows > 1:
        s_dim = 1 << model.width
        for s0 in range(s_dim):
            tv, tc, pop, _, inter = _transfer_tables(model, first_state=s0)
            close = inter[:, s0][:, None]
            v_final = np.where(tv[-1] < _INF // 2, tv[-1] + close, _INF)
            absorb(v_final, tc[-1])
    else:
        tv, tc, *_ = _transfer_tables(model)
        absorb(tv[-1], tc[-1])

    out = []
    for b in range(n + 1):
        if best[b] < _INF // 2:
            out.append((b, Fraction(int(best[b]), model.denom), int(count[b])))
    return out


# ---------------------------------------------------------------------------
# ground sets at fixed x

@dataclass
class ClassicalGroundSet:
    """Exact ground configurations of the lattice gas at one x."""

    x: Fraction
    energy: Fraction              # total energy including the -x B term
    degeneracy: int
    density: Fraction             # mean up density over the ground set
    up_counts: tuple[int, ...]    # B values participating (ties at boundaries)
    configurations: list[int]     # bitstring representatives (capped)
    truncated: bool               # True when the cap cut enumeration short


def _enumerate_configs(model: _RowModel, target_b: int, target_a_scaled: int,
                       cap: int) -> tuple[list[int], bool]:
    """Backtrack the DP for configurations with (B, A) at the optimum."""
    out: list[int] = []
    truncated = False

    def walk(tables_v, pop, in_row, inter, row, state, b_rem, e_rem, suffix):
        nonlocal truncated
        if len(out) >= cap:
            truncated = True
            return
        if row == 0:
            out.append(suffix | state)
            return
        v_prev = tables_v[row - 1]
        for s_prev in range(v_prev.shape[0]):
            e_here = inter[s_prev, state] + in_row[state]
            b_prev = b_rem - pop[state]
            if b_prev < 0:
                continue
            if v_prev[s_prev, b_prev] + e_here == e_rem:
                walk(tables_v, pop, in_row, inter, row - 1, s_prev,
                     b_prev, e_rem - e_here, suffix | (state << (row * model.width)))
                if truncated:
                    return

    if model.periodic_cols and model.n_rows > 1:
        s_dim = 1 << model.width
        for s0 in range(s_dim):
            tv, _, pop, in_row, inter = _transfer_tables(model, first_state=s0)
            v_last = tv[-1]
            for s_last in range(s_dim):
                total = v_last[s_last, target_b]
                if total >= _INF // 2:
                    continue
                if total + inter[s_last, s0] == target_a_scaled:
                    walk(tv, pop, in_row, inter, model.n_rows - 1, s_last,
                         target_b, total, 0)
                    if truncated:
                        return out, truncated
    else:
        tv, _, pop, in_row, inter = _transfer_tables(model)
        v_last = tv[-1]
        for s_last in range(v_last.shape[0]):
            if v_last[s_last, target_b] == target_a_scaled:
                walk(tv, pop, in_row, inter, model.n_rows - 1, s_last,
                     target_b, target_a_scaled, 0)
                if truncated:
                    break
    return out, truncated


def classical_ground_states(geometry: LatticeGeometry,
                            x,
                            u_z=1, u_w=None,
                            couplings: CouplingMap | None = None,
                            max_configs: int = 100_000) -> ClassicalGroundSet:
    """Exact ground set at detuning x (same units as the couplings).

    Comparisons are exact rational arithmetic, so a boundary x returns
    the union of the plateaus meeting there.  Representative
    configurations are enumerated by DP backtracking up to
    ``max_configs``; the ``truncated`` flag records whether the cap was
    hit (degeneracy stays exact either way).
    """
    x_f = _as_fraction(x, "x")
    table = minimum_energy_table(geometry, u_z, u_w, couplings)
    u_z_f, u_w_f = _resolve_weights(geometry, u_z, u_w, couplings)

    energies = [(a - x_f * b, b, a, cnt) for b, a, cnt in table]
    e_min = min(e for e, *_ in energies)
    ties = [(b, a, cnt) for e, b, a, cnt in energies if e == e_min]
    degeneracy = sum(cnt for _, _, cnt in ties)
    n = geometry.n_sites
    density = Fraction(sum(b * cnt for b, _, cnt in ties), n * degeneracy)

    configs: list[int] = []
    try:
        model = _row_model(geometry, u_z_f, u_w_f)
    except ValueError:
        e, pop, denom = _enumeration_arrays(geometry, u_z_f, u_w_f)
        for b, a, _ in ties:
            hits = np.nonzero((pop == b) & (e == int(a * denom)))[0]
            room = max_configs - len(configs)
            configs.extend(int(h) for h in hits[:room])
            if len(hits) > room:
                break
    else:
        for b, a, _ in ties:
            got, trunc = _enumerate_configs(model, b, int(a * model.denom),
                                            max_configs - len(configs))
            configs.extend(got)
            if trunc:
                break
    truncated = len(configs) < degeneracy
    if not truncated and len(configs) != degeneracy:
        raise AssertionError("backtracking disagrees with DP degeneracy")
    return ClassicalGroundSet(x_f, e_min, degeneracy, density,
                              tuple(b for b, _, _ in ties), configs, truncated)


# ---------------------------------------------------------------------------
# density curve and plateaus

@dataclass
class Plateau:
    x_lo: Fraction | None        # None = unbounded below
    x_hi: Fraction | None        # None = unbounded above
    density: Fraction
    degeneracy: int
    up_count: int


def classical_plateaus(geometry: LatticeGeometry,
                       u_z=1, u_w=None,
                       couplings: CouplingMap | None = None) -> list[Plateau]:
    """Exact density plateaus of the ground state as x sweeps the line.

    The lower envelope of the lines A(B) - x B is computed with exact
    rational intersections; consecutive envelope pieces have strictly
    increasing B, so the density staircase is monotone.
    """
    table = minimum_energy_table(geometry, u_z, u_w, couplings)
    n = geometry.n_sites
    # hull of lines y = A - x B, slopes -B strictly decreasing with B
    hull: list[tuple[int, Fraction, int]] = []   # (B, A, count)
    cuts: list[Fraction] = []                    # x where piece i ends
    for b, a, cnt in table:                      # B ascending
        while hull:
            b0, a0, _ = hull[-1]
            x_cross = Fraction(a - a0, b - b0)
            if cuts and x_cross <= cuts[-1]:
                hull.pop()
                cuts.pop()
            else:
                cuts.append(x_cross)
                break
        hull.append((b, a, cnt))
    out = []
    for i, (b, a, cnt) in enumerate(hull):
        x_lo = cuts[i - 1] if i > 0 else None
        x_hi = cuts[i] if i < len(cuts) else None
        out.append(Plateau(x_lo, x_hi, Fraction(b, n), cnt, b))
    return out


def classical_density_curve(geometry: LatticeGeometry,
                            x_grid=None,
                            u_z=1, u_w=None,
                            couplings: CouplingMap | None = None):
    """Ground density vs x: exact plateaus, or evaluated on a grid.

    Without a grid this returns the exact ``Plateau`` list.  With a
    grid it returns (x, density, degeneracy) rows, where boundary
    points show the merged tie degeneracy.
    """
    if x_grid is None:
        return classical_plateaus(geometry, u_z, u_w, couplings)
    table = minimum_energy_table(geometry, u_z, u_w, couplings)
    n = geometry.n_sites
    rows = []
    for x in x_grid:
        x_f = _as_fraction(x, "x")
        energies = [(a - x_f * b, b, cnt) for b, a, cnt in table]
        e_min = min(e for e, *_ in energies)
        ties = [(b, cnt) for e, b, cnt in energies if e == e_min]
        deg = sum(cnt for _, cnt in ties)
        density = Fraction(sum(b * cnt for b, cnt in ties), n * deg)
        rows.append((x_f, density, deg))
    return rows


def plateaus_to_csv(plateaus: list[Plateau]) -> str:
    lines = ["x_lo,x_hi,density,degeneracy"]
    for p in plateaus:
        lo = "-inf" if p.x_lo is None else repr(float(p.x_lo))
        hi = "inf" if p.x_hi is None else repr(float(p.x_hi))
        lines.append(f"{lo},{hi},{float(p.density)!r},{p.degeneracy}")
    return "\n".join(lines) + "\n"


def configurations_to_text(configurations: list[int], n_sites: int) -> str:
    """One bitstring per line, character position = site index."""
    lines = ["".join("1" if (c >> i) & 1 else "0" for i in range(n_sites))
             for c in configurations]
    return "\n".join(lines) + "\n"


def classical_mixture_g2(ground_set: ClassicalGroundSet,
                         geometry: LatticeGeometry,
                         max_shell: int = 4,
                         symmetrization: str | None = None):
    """Connected correlations of the uniform mixture over the ground set.

    Exact when the configuration list is complete; with a truncated
    list this is the mixture over the enumerated subset only.
    """
    from .measure import g2_connected
    if not ground_set.configurations:
        raise ValueError("ground set carries no representative configurations")
    return g2_connected(ground_set.configurations, geometry, max_shell,
                        symmetrization)
