"""Observables: connected correlations, Neel structure factor,
correlation length, sublattice histograms, light-cone crossings, shot
sampling and detection errors.

Connected correlations are estimated per displacement class,

    g2(class) = (1/N_c) * sum_{(i,j) in class} ( <n_i n_j> - <n_i><n_j> ),

with the sum over the class's ordered site pairs.  Sources can be
exact (state vectors, density operators, explicit configuration
mixtures), trajectory ensembles (statistical errors by delete-one
jackknife over trajectories), or measured shot sets (jackknife over
shots).  The jackknife handles the nonlinearity of the product of
means; for the plain mean it reduces to the usual standard error.

Detection errors flip a measured 0 to 1 with probability epsilon and 1
to 0 with probability epsilon_prime, independently per site.  For the
occupation expectation this is n -> n + epsilon (1 - n) -
epsilon_prime n; since the flips are independent between sites, every
connected pair correlation simply scales by (1 - epsilon -
epsilon_prime)**2, which is how exact sources incorporate them.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .lattice import (DisplacementClass, LatticeGeometry, displacement_classes,
                      graph_distance)
from .openquantum import DensityOperator, TrajectoryEnsemble
from .operator import (occupancy_matrix, popcounts, probabilities_pair_moments,
                       probabilities_site_density, state_pair_moments,
                       state_site_density)


# ---------------------------------------------------------------------------
# shots

@dataclass
class ShotSet:
    """Binary site readouts, one row per shot, column i = site i."""

    shots: np.ndarray
    n_sites: int
    epsilon: float = 0.0
    epsilon_prime: float = 0.0
    seed: int | None = None

    @property
    def n_shots(self) -> int:
        return self.shots.shape[0]

    def to_text(self) -> str:
        rows = ["".join("1" if b else "0" for b in row) for row in self.shots]
        return "\n".join(rows) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ShotSet":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("no shots in input")
        n = len(lines[0])
        rows = []
        for ln in lines:
            if len(ln) != n or set(ln) - {"0", "1"}:
                raise ValueError(f"malformed shot line {ln!r}")
            rows.append([int(c) for c in ln])
        return cls(np.array(rows, dtype=np.uint8), n)


def _source_probabilities(source, n: int) -> np.ndarray:
    """Basis populations of an exact source."""
    if isinstance(source, DensityOperator):
        return source.probabilities()
    if isinstance(source, TrajectoryEnsemble):
        return source.probabilities()
    arr = np.asarray(source)
    if arr.ndim == 1 and arr.shape[0] == (1 << n):
        if np.iscomplexobj(arr):
            return np.abs(arr) ** 2
        p = arr.astype(float)
        if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-8:
            raise ValueError("probability vector must be normalized and non-negative")
        return np.clip(p, 0.0, None)
    raise TypeError("unsupported exact source for sampling")


def sample_shots(source,
                 n_shots: int,
                 seed: int,
                 n_sites: int | None = None,
                 geometry: LatticeGeometry | None = None,
                 epsilon: float = 0.0,
                 epsilon_prime: float = 0.0) -> ShotSet:
    """Draw projective occupation readouts, then apply detection flips.

    ``source`` may be a state vector, a basis probability vector, a
    DensityOperator, a TrajectoryEnsemble (its final-snapshot mixture),
    or a list of basis configurations (sampled uniformly).  Detection
    errors flip each readout bit independently: 0 -> 1 with probability
    ``epsilon`` and 1 -> 0 with probability ``epsilon_prime``.
    """
    if not 0 <= epsilon < 1 or not 0 <= epsilon_prime < 1:
        raise ValueError("detection error rates must lie in [0, 1)")
    if geometry is not None:
        n_sites = geometry.n_sites
    rng = np.random.default_rng(seed)
    if isinstance(source, (list, tuple)):
        if n_sites is None:
            raise ValueError("n_sites (or geometry) required for configuration lists")
        configs = np.asarray(source, dtype=np.int64)
        idx = configs[rng.integers(0, len(configs), size=n_shots)]
        n = n_sites
    else:
        if n_sites is None:
            if isinstance(source, (DensityOperator, TrajectoryEnsemble)):
                n_sites = source.n if isinstance(source, DensityOperator) else source.n_sites
            else:
                n_sites = int(np.round(np.log2(len(np.asarray(source)))))
        n = n_sites
        p = _source_probabilities(source, n)
        p = p / p.sum()
        idx = rng.choice(1 << n, size=n_shots, p=p)
    bits = ((idx[:, None] >> np.arange(n)[None, :]) & 1).astype(np.uint8)
    if epsilon > 0 or epsilon_prime > 0:
        u = rng.random(bits.shape)
        flip = np.where(bits == 0, u < epsilon, u < epsilon_prime)
        bits = bits ^ flip.astype(np.uint8)
    return ShotSet(bits, n, epsilon, epsilon_prime, seed)


def apply_detection_to_density(mu: np.ndarray, epsilon: float,
                               epsilon_prime: float) -> np.ndarray:
    """Expected measured occupation given true occupation expectations."""
    mu = np.asarray(mu, dtype=float)
    return mu + epsilon * (1.0 - mu) - epsilon_prime * mu


# ---------------------------------------------------------------------------
# connected correlations

@dataclass
class ClassCorrelation:
    vectors: tuple[tuple[int, int], ...]
    shell: int
    g2: float
    stderr: float
    n_pairs: int

    @property
    def representative(self) -> tuple[int, int]:
        return self.vectors[0]


@dataclass
class CorrelationMap:
    kind: str
    symmetrization: str | None
    max_shell: int
    entries: list[ClassCorrelation]

    def by_vector(self, d: tuple[int, int]) -> ClassCorrelation:
        for e in self.entries:
            if d in e.vectors:
                return e
        raise KeyError(f"no class contains displacement {d}")

    def shells(self) -> list[int]:
        return sorted({e.shell for e in self.entries})

    def shell_average(self, m: int) -> tuple[float, float]:
        """Pair-weighted average of g2 over classes at graph distance m."""
        es = [e for e in self.entries if e.shell == m]
        if not es:
            raise KeyError(f"no classes at shell {m}")
        w = np.array([e.n_pairs for e in es], dtype=float)
        w /= w.sum()
        val = float(np.sum(w * [e.g2 for e in es]))
        err = float(np.sqrt(np.sum((w * [e.stderr for e in es]) ** 2)))
        return val, err

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("k,l,m,g2,stderr,pairs\n")
        for e in self.entries:
            k, l = e.representative
            buf.write(f"{k},{l},{e.shell},{e.g2:.10g},{e.stderr:.6g},{e.n_pairs}\n")
        return buf.getvalue()


def _configs_moments(configs, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact moments of a uniform mixture over basis configurations."""
    c = np.asarray(configs, dtype=np.int64)
    bits = ((c[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
    mu = bits.mean(axis=0)
    pm = bits.T @ bits / len(c)
    return mu, pm


def _exact_moments(source, n: int):
    if isinstance(source, DensityOperator):
        return source.site_density(), source.pair_moments()
    if isinstance(source, (list, tuple)):
        return _configs_moments(source, n)
    arr = np.asarray(source)
    if arr.ndim == 1 and np.iscomplexobj(arr):
        return state_site_density(arr, n), state_pair_moments(arr, n)
    if arr.ndim == 1:
        p = arr.astype(float)
        return (probabilities_site_density(p, n),
                probabilities_pair_moments(p, n))
    raise TypeError("unsupported source for correlation analysis")


def _jackknife_class(site: np.ndarray, pair: np.ndarray,
                     idx_i: np.ndarray, idx_j: np.ndarray) -> tuple[float, float]:
    """Plug-in g2 and delete-one jackknife error for one class.

    ``site`` is (T, n) per-sample occupations (or per-trajectory
    expectations); ``pair`` is (T, n_pairs) of per-sample products (or
    expectations) already gathered on the class pairs.
    """
    t_n = site.shape[0]
    a = pair.mean(axis=1)                     # per-sample class-avg product
    mu_sum = site.sum(axis=0)
    a_sum = a.sum()
    g2_full = a.mean() - float(
        np.mean(site.mean(axis=0)[idx_i] * site.mean(axis=0)[idx_j]))
    if t_n < 2:
        return g2_full, 0.0
    mu_del = (mu_sum[None, :] - site) / (t_n - 1)          # (T, n)
    q = np.mean(mu_del[:, idx_i] * mu_del[:, idx_j], axis=1)
    g2_del = (a_sum - a) / (t_n - 1) - q
    se = float(np.sqrt((t_n - 1) / t_n * np.sum((g2_del - g2_del.mean()) ** 2)))
    return g2_full, se


def g2_connected(source,
                 geometry: LatticeGeometry,
                 max_shell: int = 4,
                 symmetrization: str | None = None,
                 snap: int = -1,
                 epsilon: float = 0.0,
                 epsilon_prime: float = 0.0) -> CorrelationMap:
    """Connected density correlations per displacement class.

    Sources: state vector, basis probability vector, DensityOperator,
    configuration list (uniform mixture), TrajectoryEnsemble (jackknife
    over trajectories, snapshot ``snap``), or ShotSet (jackknife over
    shots).  For exact sources, detection errors enter analytically as
    the scale factor (1 - epsilon - epsilon_prime)**2; shot sets carry
    their flips in the data already.
    """
    classes = displacement_classes(geometry, max_shell, symmetrization)
    if symmetrization is None:
        from .lattice import default_symmetrization
        symmetrization = default_symmetrization(geometry.kind)
    n = geometry.n_sites
    scale = (1.0 - epsilon - epsilon_prime) ** 2

    entries = []
    if isinstance(source, TrajectoryEnsemble):
        site = source.site_density[:, snap, :]
        pairm = source.pair_moments[:, snap, :, :]
        for c in classes:
            ii = np.array([p[0] for p in c.pairs])
            jj = np.array([p[1] for p in c.pairs])
            g2, se = _jackknife_class(site, pairm[:, ii, jj], ii, jj)
            entries.append(ClassCorrelation(c.vectors, c.shell, scale * g2,
                                            scale * se, c.n_pairs))
    elif isinstance(source, ShotSet):
        if source.n_sites != n:
            raise ValueError("shot width does not match geometry")
        x = source.shots.astype(np.float64)
        for c in classes:
            ii = np.array([p[0] for p in c.pairs])
            jj = np.array([p[1] for p in c.pairs])
            g2, se = _jackknife_class(x, x[:, ii] * x[:, jj], ii, jj)
            entries.append(ClassCorrelation(c.vectors, c.shell, g2, se, c.n_pairs))
    else:
        mu, pm = _exact_moments(source, n)
        for c in classes:
            ii = np.array([p[0] for p in c.pairs])
            jj = np.array([p[1] for p in c.pairs])
            g2 = float(np.mean(pm[ii, jj] - mu[ii] * mu[jj]))
            entries.append(ClassCorrelation(c.vectors, c.shell, scale * g2,
                                            0.0, c.n_pairs))
    return CorrelationMap(geometry.kind, symmetrization, max_shell, entries)


# ---------------------------------------------------------------------------
# derived quantities

def neel_structure_factor(corr: CorrelationMap,
                          max_shell: int | None = None) -> tuple[float, float]:
    """S = 4 * sum over displacement vectors of (-1)^(|k|+|l|) g2(k, l).

    The (0, 0) term is excluded and vectors are truncated at graph
    distance ``max_shell`` (default: the map's own cutoff).  Every
    vector of a class carries the class estimate; errors are combined
    in quadrature across classes, which ignores cross-class sampling
    correlations.
    """
    if max_shell is None:
        max_shell = corr.max_shell
    total = 0.0
    var = 0.0
    for e in corr.entries:
        if e.shell > max_shell:
            continue
        w = sum((-1) ** (abs(k) + abs(l)) for k, l in e.vectors)
        total += w * e.g2
        var += (w * e.stderr) ** 2
    return 4.0 * total, 4.0 * float(np.sqrt(var))


@dataclass
class CorrelationFit:
    xi: float
    stderr: float
    shells: np.ndarray
    log_values: np.ndarray


def fit_correlation_length(corr: CorrelationMap,
                           min_shells: int = 2) -> CorrelationFit:
    """Correlation length from the staggered shell averages.

    Fits log of (-1)^m * (shell average of g2) linearly in m; shells
    where the staggered value is not positive are dropped.  Raises
    ValueError when fewer than ``min_shells`` usable shells remain.
    """
    ms, ys, ws = [], [], []
    for m in corr.shells():
        val, err = corr.shell_average(m)
        y = (-1) ** m * val
        if y <= 0:
            continue
        ms.append(m)
        ys.append(np.log(y))
        ws.append(1.0 if err == 0 else min(y / err, 1e6) ** 2)
    if len(ms) < min_shells:
        raise ValueError("insufficient staggered signal to fit a correlation length")
    ms = np.array(ms, dtype=float)
    ys = np.array(ys)
    ws = np.array(ws)
    w_sum = ws.sum()
    mbar = (ws * ms).sum() / w_sum
    ybar = (ws * ys).sum() / w_sum
    sxx = (ws * (ms - mbar) ** 2).sum()
    slope = (ws * (ms - mbar) * (ys - ybar)).sum() / sxx
    if slope >= 0:
        raise ValueError("correlations do not decay with distance")
    resid = ys - (ybar + slope * (ms - mbar))
    dof = max(len(ms) - 2, 1)
    slope_var = (ws * resid ** 2).sum() / dof / sxx
    xi = -1.0 / slope
    return CorrelationFit(xi, float(np.sqrt(slope_var)) * xi ** 2,
                          ms, ys)


# ---------------------------------------------------------------------------
# sublattice histograms

def sublattice_partition(geometry: LatticeGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Checkerboard split by (k + l) parity; triangular arrays have none."""
    if geometry.kind == "triangular":
        raise ValueError("the triangular lattice is not bipartite")
    coords = geometry.coords()
    parity = (coords[:, 0] + coords[:, 1]) % 2
    return np.flatnonzero(parity == 0), np.flatnonzero(parity == 1)


def neel_configs(geometry: LatticeGeometry) -> tuple[int, int]:
    """The two checkerboard bitstrings (even sublattice up, odd up)."""
    a_idx, b_idx = sublattice_partition(geometry)
    b_even = int(np.sum(1 << a_idx.astype(object)))
    b_odd = int(np.sum(1 << b_idx.astype(object)))
    return b_even, b_odd


def sublattice_histogram(source, geometry: LatticeGeometry,
                         partition=None) -> np.ndarray:
    """Joint probability table of sublattice up-counts (n_A, n_B).

    Accepts the same sources as ``g2_connected`` minus trajectory
    jackknife detail (the ensemble's mixture populations are used).
    Shape is (|A| + 1, |B| + 1) and entries sum to 1.
    """
    n = geometry.n_sites
    if partition is None:
        partition = sublattice_partition(geometry)
    a_idx, b_idx = partition
    hist = np.zeros((len(a_idx) + 1, len(b_idx) + 1))
    if isinstance(source, ShotSet):
        na = source.shots[:, a_idx].sum(axis=1)
        nb = source.shots[:, b_idx].sum(axis=1)
        np.add.at(hist, (na, nb), 1.0)
        return hist / source.n_shots
    if isinstance(source, (list, tuple)):
        c = np.asarray(source, dtype=np.int64)
        bits = ((c[:, None] >> np.arange(n)[None, :]) & 1)
        na = bits[:, a_idx].sum(axis=1)
        nb = bits[:, b_idx].sum(axis=1)
        np.add.at(hist, (na, nb), 1.0)
        return hist / len(c)
    p = _source_probabilities(source, n)
    idx = np.arange(1 << n)
    mask_a = int(np.sum(1 << a_idx.astype(object)))
    mask_b = int(np.sum(1 << b_idx.astype(object)))
    pop = popcounts(n).astype(int)
    na = pop[idx & mask_a]
    nb = pop[idx & mask_b]
    np.add.at(hist, (na, nb), p)
    return hist


def baseline_histogram(density: float, n_a: int, n_b: int) -> np.ndarray:
    """Product of independent binomials at one mean density."""
    pa = binom.pmf(np.arange(n_a + 1), n_a, density)
    pb = binom.pmf(np.arange(n_b + 1), n_b, density)
    return np.outer(pa, pb)


def histogram_to_csv(hist: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("n_A,n_B,probability\n")
    for a in range(hist.shape[0]):
        for b in range(hist.shape[1]):
            buf.write(f"{a},{b},{hist[a, b]:.10g}\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# light cone

def staggered_shell_series(maps: list[CorrelationMap]) -> dict[int, np.ndarray]:
    """(-1)^m * shell-averaged g2, per shell, across a list of snapshots."""
    shells = maps[0].shells()
    return {m: np.array([(-1) ** m * cm.shell_average(m)[0] for cm in maps])
            for m in shells}


def lightcone_crossings(times: np.ndarray,
                        series: dict[int, np.ndarray],
                        threshold: float = 0.2,
                        normalization: dict[int, float] | None = None) -> dict[int, float | None]:
    """First time each shell's normalized signal rises through a threshold.

    ``normalization`` supplies per-shell scales (peak of a reference
    run); by default each series is normalized to its own maximum.  The
    crossing is linearly interpolated between samples; shells that
    never reach the threshold map to None.
    """
    times = np.asarray(times, dtype=float)
    out: dict[int, float | None] = {}
    for m, y in series.items():
        y = np.asarray(y, dtype=float)
        scale = (normalization or {}).get(m, np.max(y) if np.max(y) > 0 else 1.0)
        yn = y / scale
        t_cross = None
        if yn[0] >= threshold:
            t_cross = float(times[0])
        else:
            above = np.flatnonzero(yn >= threshold)
            if len(above):
                k = above[0]
                y0, y1 = yn[k - 1], yn[k]
                frac = (threshold - y0) / (y1 - y0)
                t_cross = float(times[k - 1] + frac * (times[k] - times[k - 1]))
        out[m] = t_cross
    return out
