"""Dephasing dynamics: direct master-equation integration and Monte
Carlo wave-function unravellings.

The noise model is uncorrelated dephasing of each site in the
occupation basis, with jump operators sqrt(gamma) n_i:

    d rho / dt = -i [H, rho]
                 + gamma * sum_i ( n_i rho n_i - (n_i rho + rho n_i) / 2 ).

Because every n_i is diagonal, the dissipator acts elementwise on the
density matrix: rho_{bb'} decays at rate (gamma/2) * hamming(b, b'),
where hamming counts the sites whose occupation differs between the two
bitstrings.  Populations are untouched by the dissipator alone; a
single-site coherence decays as exp(-gamma t / 2).  Both facts anchor
the cross-checks between the integrators below.

Three stochastic unravellings are provided:

* ``first-order``: the textbook scheme.  Each propagation interval is
  split into substeps small enough that the total jump probability per
  substep stays below a safety bound; each substep either jumps or
  advances with the non-Hermitian effective Hamiltonian and
  renormalizes.
* ``norm-threshold``: waiting-time sampling.  The state evolves whole
  intervals under H_eff while its squared norm decays; when the norm
  crosses a pre-drawn uniform threshold, the jump time is located
  inside the interval by log-linear interpolation plus two refinement
  probes, the channel is drawn proportional to gamma <n_i>, and a fresh
  threshold is drawn.
* ``detuning-noise``: a jump-free unravelling.  Each interval every
  site receives an independent Gaussian detuning shift with variance
  gamma / dt; averaging the resulting unitary trajectories reproduces
  the dephasing map on that interval exactly, so the only systematic
  error is the same piecewise-constant one the coherent integrator
  already makes.  Trajectories stay normalized and Hermitian Lanczos
  applies, which makes this the cheapest route for large registers.

Trajectories are processed interval-major: each interval's propagator
is diagonalized once (small registers) and applied to all trajectories
as a single matrix product.  Every trajectory owns an independent
generator spawned from the master seed, so results do not depend on the
batching or on ``n_workers``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig, eigh, expm

from . import _kernels
from .operator import (CouplingMap, HamiltonianView, occupancy_matrix,
                       popcounts, probabilities_pair_moments,
                       probabilities_site_density)
from .propagate import (EvolutionConfig, NumericalError, _snap_indices,
                        all_down_state, krylov_expm_apply)
from .schedule import RampSchedule

DENSE_DIM_CUTOFF = 512  # up to here interval propagators are eigendecomposed once
MCWF_METHODS = ("norm-threshold", "first-order", "detuning-noise")


@dataclass(frozen=True)
class DephasingModel:
    """Uniform single-site dephasing rate in rad/us."""

    gamma: float

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    @classmethod
    def from_rate_over_u(cls, ratio: float, u: float) -> "DephasingModel":
        """Build from the dimensionless ratio (hbar gamma / U) and U in rad/us."""
        return cls(ratio * u)


# ---------------------------------------------------------------------------
# direct master-equation integration

@dataclass
class DensityOperator:
    matrix: np.ndarray
    time: float
    n: int

    def probabilities(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    def site_density(self) -> np.ndarray:
        return probabilities_site_density(self.probabilities(), self.n)

    def pair_moments(self) -> np.ndarray:
        return probabilities_pair_moments(self.probabilities(), self.n)

    def validate(self, atol: float = 1e-8) -> None:
        tr = np.trace(self.matrix)
        if abs(tr - 1.0) > atol:
            raise NumericalError(f"trace drifted to {tr}")
        if np.max(np.abs(self.matrix - self.matrix.conj().T)) > atol:
            raise NumericalError("density matrix lost hermiticity")
        w = np.linalg.eigvalsh(self.matrix)
        if w.min() < -atol:
            raise NumericalError(f"negative population {w.min()}")


def _hamming_matrix(n: int) -> np.ndarray:
    pop = popcounts(n)
    idx = np.arange(1 << n)
    return pop[idx[:, None] ^ idx[None, :]]


def evolve_master(schedule: RampSchedule,
                  couplings: CouplingMap,
                  dephasing: DephasingModel,
                  config: EvolutionConfig = EvolutionConfig(),
                  rho0: np.ndarray | None = None,
                  snapshot_times=None,
                  substep_target: float = 0.02) -> list[DensityOperator]:
    """Dense Lindblad integration (RK4 on the full density matrix).

    Uses the same piecewise-constant drive intervals as the coherent
    integrator; within each interval the generator is constant and RK4
    substeps are sized so (generator scale) * dt stays near
    ``substep_target``.  Registers are limited to 8 sites.
    """
    n = couplings.n_sites
    if n > 8:
        raise ValueError("direct master integration limited to 8 sites")
    dim = 1 << n
    if rho0 is None:
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
    else:
        rho = np.asarray(rho0, dtype=complex).copy()
        if rho.shape != (dim, dim):
            raise ValueError("rho0 has wrong shape")
    gamma = dephasing.gamma
    decay = 0.5 * gamma * _hamming_matrix(n)
    dt = schedule.t_total / config.n_steps
    wanted = _snap_indices(snapshot_times, config.n_steps, dt) if snapshot_times is not None else []
    if config.n_steps not in wanted:
        wanted.append(config.n_steps)
    wanted_set = set(wanted)

    out: list[DensityOperator] = []
    if 0 in wanted_set:
        out.append(DensityOperator(rho.copy(), 0.0, n))
    for step in range(config.n_steps):
        omega, delta = schedule.interval_average(step * dt, (step + 1) * dt)
        view = HamiltonianView(couplings, omega, delta)
        h = view.to_dense()
        scale = np.max(np.abs(view.diag)) + 0.5 * n * omega + 0.5 * gamma * n
        n_sub = max(2, int(np.ceil(dt * scale / substep_target)))
        h_sub = dt / n_sub

        def rhs(r):
            return -1j * (h @ r - r @ h) - decay * r

        for _ in range(n_sub):
            k1 = rhs(rho)
            k2 = rhs(rho + 0.5 * h_sub * k1)
            k3 = rhs(rho + 0.5 * h_sub * k2)
            k4 = rhs(rho + h_sub * k3)
            rho = rho + (h_sub / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step + 1 in wanted_set:
            out.append(DensityOperator(rho.copy(), (step + 1) * dt, n))
    return out


# ---------------------------------------------------------------------------
# interval propagators

class _DensePropagator:
    """exp(-i A tau) precomputed by eigendecomposition, any tau."""

    def __init__(self, a: np.ndarray, hermitian: bool):
        if hermitian:
            lam, v = eigh(a)
            self.lam = lam.astype(complex)
            self.v = v.astype(complex)
            self.vinv = v.conj().T.astype(complex)
        else:
            lam, v = eig(a)
            self.lam = lam
            self.v = v
            self.vinv = np.linalg.inv(v)
        self._mat_tau: float | None = None
        self._mat: np.ndarray | None = None

    def advance(self, psi: np.ndarray, tau: float) -> np.ndarray:
        return self.v @ (np.exp(-1j * tau * self.lam) * (self.vinv @ psi))

    def matrix(self, tau: float) -> np.ndarray:
        if self._mat_tau != tau:
            self._mat = (self.v * np.exp(-1j * tau * self.lam)) @ self.vinv
            self._mat_tau = tau
        return self._mat

    def advance_many(self, states: np.ndarray, tau: float) -> np.ndarray:
        return states @ self.matrix(tau).T


class _EffectiveView:
    """Matrix-free H_eff = H - i (gamma/2) sum_i n_i."""

    def __init__(self, couplings: CouplingMap, omega: float, delta: float, gamma: float):
        self.n = couplings.n_sites
        self.dim = 1 << self.n
        self.omega = omega
        pop = popcounts(self.n)
        self.diag = (couplings.interaction_diagonal() - delta * pop
                     - 0.5j * gamma * pop).astype(complex)

    def apply(self, psi: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        if out is None:
            out = np.empty_like(psi)
        _kernels.apply_complex_diag(psi, self.diag, 0.5 * self.omega, self.n, out)
        return out

    def to_dense(self) -> np.ndarray:
        h = np.diag(self.diag)
        idx = np.arange(self.dim)
        for i in range(self.n):
            h[idx, idx ^ (1 << i)] += 0.5 * self.omega
        return h


def arnoldi_expm_apply(view, psi: np.ndarray, dt: float, tol: float = 1e-10,
                       m_max: int = 30, _depth: int = 0) -> np.ndarray:
    """exp(-i A dt) psi for non-Hermitian A, full Gram-Schmidt Arnoldi."""
    beta0 = np.linalg.norm(psi)
    if beta0 == 0.0:
        return psi.copy()
    dim = psi.shape[0]
    m_cap = min(m_max, dim)
    vs = np.empty((m_cap + 1, dim), dtype=complex)
    hs = np.zeros((m_cap + 1, m_cap), dtype=complex)
    vs[0] = psi / beta0
    for m in range(m_cap):
        w = view.apply(vs[m])
        for k in range(m + 1):
            hs[k, m] = np.vdot(vs[k], w)
            w -= hs[k, m] * vs[k]
        b = np.linalg.norm(w)
        hs[m + 1, m] = b
        if m >= 2 or b < 1e-13:
            phi = expm(-1j * dt * hs[:m + 1, :m + 1])[:, 0]
            if b * abs(dt) * abs(phi[m]) < tol or b < 1e-13:
                return beta0 * (phi @ vs[:m + 1])
        if b < 1e-13:
            break
        vs[m + 1] = w / b
    if _depth >= 12:
        raise NumericalError("Arnoldi propagation failed to converge")
    half = arnoldi_expm_apply(view, psi, 0.5 * dt, tol, m_max, _depth + 1)
    return arnoldi_expm_apply(view, half, 0.5 * dt, tol, m_max, _depth + 1)


class _KrylovEffective:
    """Arnoldi-based interval propagator for large registers."""

    def __init__(self, view: _EffectiveView, tol: float, m_max: int):
        self.view = view
        self.tol = tol
        self.m_max = m_max

    def advance(self, psi: np.ndarray, tau: float) -> np.ndarray:
        return arnoldi_expm_apply(self.view, psi, tau, self.tol, self.m_max)

    def advance_many(self, states: np.ndarray, tau: float) -> np.ndarray:
        return np.stack([self.advance(states[t], tau)
                         for t in range(states.shape[0])])


def _interval_drives(schedule: RampSchedule, n_steps: int) -> list[tuple[float, float]]:
    dt = schedule.t_total / n_steps
    return [schedule.interval_average(s * dt, (s + 1) * dt) for s in range(n_steps)]


def _effective_propagator(couplings, omega, delta, gamma, config):
    view = _EffectiveView(couplings, omega, delta, gamma)
    if view.dim <= DENSE_DIM_CUTOFF:
        return _DensePropagator(view.to_dense(), hermitian=False)
    return _KrylovEffective(view, config.krylov_tol, config.krylov_max_dim)


# ---------------------------------------------------------------------------
# trajectory ensembles

@dataclass
class TrajectoryEnsemble:
    """Per-trajectory snapshot moments plus mixture probabilities."""

    times: np.ndarray                 # (n_snap,)
    site_density: np.ndarray          # (n_traj, n_snap, n)
    pair_moments: np.ndarray          # (n_traj, n_snap, n, n)
    mean_probabilities: np.ndarray    # (n_snap, dim), average of |psi|^2
    n_jumps: np.ndarray               # (n_traj,)
    method: str
    gamma: float
    seed: int
    states: list | None = None        # optional [traj][snap] state vectors

    @property
    def n_traj(self) -> int:
        return self.site_density.shape[0]

    @property
    def n_sites(self) -> int:
        return self.site_density.shape[2]

    def site_density_mean(self, snap: int = -1) -> np.ndarray:
        return self.site_density[:, snap, :].mean(axis=0)

    def site_density_stderr(self, snap: int = -1) -> np.ndarray:
        x = self.site_density[:, snap, :]
        return x.std(axis=0, ddof=1) / np.sqrt(self.n_traj)

    def pair_moments_mean(self, snap: int = -1) -> np.ndarray:
        return self.pair_moments[:, snap, :, :].mean(axis=0)

    def pair_moments_stderr(self, snap: int = -1) -> np.ndarray:
        x = self.pair_moments[:, snap, :, :]
        return x.std(axis=0, ddof=1) / np.sqrt(self.n_traj)

    def probabilities(self, snap: int = -1) -> np.ndarray:
        return self.mean_probabilities[snap]


def _draw_jump_site(weights: np.ndarray, u: float) -> int:
    c = np.cumsum(weights)
    total = c[-1]
    if total <= 0:
        raise NumericalError("jump requested but all channel weights vanish")
    return int(min(np.searchsorted(c, u * total, side="right"), len(weights) - 1))


def _locate_jump(prop, psi: np.ndarray, dt: float, s0: float, s1: float,
                 r: float, refinements: int = 2):
    """Find tau in (0, dt] where the squared norm crosses r.

    Starts from log-linear interpolation (exact if the decay were a
    single exponential) and polishes with bracketed log-linear updates,
    each costing one partial propagation from the interval start.
    """
    lo, hi = 0.0, dt
    s_lo, s_hi = s0, s1
    tau = dt * np.log(s0 / r) / np.log(s0 / s1)
    psi_tau = None
    for _ in range(refinements):
        tau = min(max(tau, lo + 1e-6 * dt), hi - 1e-6 * dt)
        psi_tau = prop.advance(psi, tau)
        s = float(np.linalg.norm(psi_tau) ** 2)
        if s >= r:
            lo, s_lo = tau, s
        else:
            hi, s_hi = tau, s
        if s_lo <= r or s_hi >= r or s_lo == s_hi:
            break
        tau = lo + (hi - lo) * np.log(s_lo / r) / np.log(s_lo / s_hi)
    if psi_tau is None:
        psi_tau = prop.advance(psi, tau)
    return tau, psi_tau


class _NormThresholdStepper:
    def __init__(self, n_traj, dim, occ, gamma):
        self.occ = occ
        self.r = None
        self.jumps = np.zeros(n_traj, dtype=np.int64)

    def start(self, rngs):
        self.r = np.array([rng.random() for rng in rngs])

    def step(self, states, prop, dt, rngs):
        phi = prop.advance_many(states, dt)
        norms2 = np.einsum("td,td->t", phi.conj(), phi).real
        ok = norms2 >= self.r
        states[ok] = phi[ok]
        for t in np.flatnonzero(~ok):
            states[t] = self._resolve_jumps(states[t], prop, dt, rngs[t], t)
        return states

    def _resolve_jumps(self, psi, prop, dt, rng, t):
        remaining = dt
        while True:
            phi = prop.advance(psi, remaining)
            s1 = float(np.linalg.norm(phi) ** 2)
            if s1 >= self.r[t]:
                return phi
            s0 = float(np.linalg.norm(psi) ** 2)
            tau, psi_tau = _locate_jump(prop, psi, remaining, s0, s1, self.r[t])
            weights = (np.abs(psi_tau) ** 2) @ self.occ
            site = _draw_jump_site(weights, rng.random())
            psi = psi_tau * self.occ[:, site].astype(complex)
            nrm = np.linalg.norm(psi)
            if nrm == 0:
                raise NumericalError("jump annihilated the state")
            psi /= nrm
            self.jumps[t] += 1
            self.r[t] = rng.random()
            remaining -= tau
            if remaining <= 1e-12 * dt:
                return psi

    def normalized(self, states):
        nrm = np.sqrt(np.einsum("td,td->t", states.conj(), states).real)
        return states / nrm[:, None]


class _FirstOrderStepper:
    def __init__(self, n_traj, dim, occ, gamma, max_jump_prob):
        self.occ = occ
        self.gamma = gamma
        self.max_jump_prob = max_jump_prob
        self.jumps = np.zeros(n_traj, dtype=np.int64)

    def substeps(self, dt, n_sites):
        scale = max(self.gamma * n_sites, 1e-12)
        return max(1, int(np.ceil(dt * scale / self.max_jump_prob)))

    def step(self, states, prop, dt, rngs):
        n_sub = self.substeps(dt, self.occ.shape[1])
        dt_sub = dt / n_sub
        u = np.stack([rng.random(n_sub) for rng in rngs])
        for s in range(n_sub):
            p = np.abs(states) ** 2
            weights = (self.gamma * dt_sub) * (p @ self.occ)
            p_tot = weights.sum(axis=1)
            if np.any(p_tot > 2.0 * self.max_jump_prob):
                raise NumericalError(
                    "jump probability per substep exceeds the safety bound; "
                    "decrease the substep size")
            jumpers = np.flatnonzero(u[:, s] < p_tot)
            phi = prop.advance_many(states, dt_sub)
            nrm = np.sqrt(np.einsum("td,td->t", phi.conj(), phi).real)
            phi /= nrm[:, None]
            for t in jumpers:
                site = _draw_jump_site(weights[t], rngs[t].random())
                v = states[t] * self.occ[:, site].astype(complex)
                n_v = np.linalg.norm(v)
                if n_v == 0:
                    raise NumericalError("jump annihilated the state")
                phi[t] = v / n_v
                self.jumps[t] += 1
            states = phi
        return states

    def start(self, rngs):
        pass

    def normalized(self, states):
        return states


def _run_batch(args, seed_seqs) -> dict:
    (schedule, couplings, gamma, config, method, psi0, snap_idx,
     max_jump_prob, store_states) = args
    n = couplings.n_sites
    dim = 1 << n
    n_traj = len(seed_seqs)
    occ = occupancy_matrix(n)
    rngs = [np.random.default_rng(s) for s in seed_seqs]
    drives = _interval_drives(schedule, config.n_steps)
    dt = schedule.t_total / config.n_steps
    snap_set = set(snap_idx)
    snap_pos = {s: i for i, s in enumerate(snap_idx)}

    n_snap = len(snap_idx)
    site = np.zeros((n_traj, n_snap, n))
    pair = np.zeros((n_traj, n_snap, n, n))
    probs = np.zeros((n_snap, dim))
    states_out = [[None] * n_snap for _ in range(n_traj)] if store_states else None

    def collect(step_index: int, normalized: np.ndarray) -> None:
        k = snap_pos[step_index]
        p = np.abs(normalized) ** 2
        site[:, k, :] = p @ occ
        for t in range(n_traj):
            pair[t, k] = (occ * p[t][:, None]).T @ occ
        probs[k] += p.sum(axis=0)
        if store_states:
            for t in range(n_traj):
                states_out[t][k] = normalized[t].copy()

    states = np.tile(psi0, (n_traj, 1))

    if method == "detuning-noise":
        jumps = np.zeros(n_traj, dtype=np.int64)
        sigma = np.sqrt(gamma / dt)
        if 0 in snap_set:
            collect(0, states)
        for step, (omega, delta) in enumerate(drives):
            for t in range(n_traj):
                eta = rngs[t].normal(0.0, sigma, size=n)
                view = HamiltonianView(couplings, omega, delta, delta_site=eta)
                if dim <= DENSE_DIM_CUTOFF:
                    states[t] = _DensePropagator(view.to_dense(), True).advance(states[t], dt)
                else:
                    states[t] = krylov_expm_apply(view, states[t], dt,
                                                  config.krylov_tol,
                                                  config.krylov_max_dim)
            if step + 1 in snap_set:
                nrm = np.sqrt(np.einsum("td,td->t", states.conj(), states).real)
                collect(step + 1, states / nrm[:, None])
    else:
        stepper = (_NormThresholdStepper(n_traj, dim, occ, gamma)
                   if method == "norm-threshold"
                   else _FirstOrderStepper(n_traj, dim, occ, gamma, max_jump_prob))
        stepper.start(rngs)
        if 0 in snap_set:
            collect(0, states)
        for step, (omega, delta) in enumerate(drives):
            prop = _effective_propagator(couplings, omega, delta, gamma, config)
            states = stepper.step(states, prop, dt, rngs)
            if step + 1 in snap_set:
                collect(step + 1, stepper.normalized(states))
        jumps = stepper.jumps

    out = {"site": site, "pair": pair, "probs": probs, "jumps": jumps}
    if store_states:
        out["states"] = states_out
    return out


def _run_batch_star(packed):
    return _run_batch(*packed)


def evolve_mcwf(schedule: RampSchedule,
                couplings: CouplingMap,
                dephasing: DephasingModel,
                n_traj: int,
                seed: int,
                config: EvolutionConfig = EvolutionConfig(),
                snapshot_times=None,
                method: str = "norm-threshold",
                psi0: np.ndarray | None = None,
                max_jump_prob: float = 0.05,
                store_states: bool = False,
                n_workers: int = 1) -> TrajectoryEnsemble:
    """Stochastic unravelling of the dephasing master equation.

    Trajectory t draws its generator from ``SeedSequence(seed).spawn``
    child t, so results are reproducible for fixed (seed, n_traj,
    method, n_steps) and independent of ``n_workers``.  Snapshot data
    are the first and second occupation moments of each trajectory;
    ``mean_probabilities`` accumulates the mixture's basis populations,
    which is all any diagonal observable needs.
    """
    if method not in MCWF_METHODS:
        raise ValueError(f"unknown trajectory method {method!r}")
    if n_traj < 1:
        raise ValueError("n_traj must be positive")
    n = couplings.n_sites
    dim = 1 << n
    if psi0 is None:
        psi0 = all_down_state(n)
    else:
        psi0 = np.asarray(psi0, dtype=complex)
        if psi0.shape != (dim,):
            raise ValueError("initial state has wrong dimension")

    dt = schedule.t_total / config.n_steps
    snap_idx = (_snap_indices(snapshot_times, config.n_steps, dt)
                if snapshot_times is not None else [])
    if config.n_steps not in snap_idx:
        snap_idx.append(config.n_steps)
    snap_idx = sorted(set(snap_idx))
    times = np.array([i * dt for i in snap_idx])

    seeds = np.random.SeedSequence(seed).spawn(n_traj)
    args = (schedule, couplings, dephasing.gamma, config, method, psi0,
            snap_idx, max_jump_prob, store_states)

    if n_workers <= 1:
        batches = [_run_batch(args, seeds)]
        bounds = [(0, n_traj)]
    else:
        n_batches = min(n_workers * 4, n_traj)
        cuts = np.linspace(0, n_traj, n_batches + 1).astype(int)
        bounds = [(cuts[i], cuts[i + 1]) for i in range(n_batches) if cuts[i] < cuts[i + 1]]
        import concurrent.futures as cf
        with cf.ProcessPoolExecutor(max_workers=n_workers) as ex:
            batches = list(ex.map(_run_batch_star,
                                  [(args, seeds[lo:hi]) for lo, hi in bounds]))

    n_snap = len(snap_idx)
    site = np.empty((n_traj, n_snap, n))
    pair = np.empty((n_traj, n_snap, n, n))
    probs = np.zeros((n_snap, dim))
    jumps = np.empty(n_traj, dtype=np.int64)
    states = [None] * n_traj if store_states else None
    for (lo, hi), res in zip(bounds, batches):
        site[lo:hi] = res["site"]
        pair[lo:hi] = res["pair"]
        probs += res["probs"]
        jumps[lo:hi] = res["jumps"]
        if store_states:
            states[lo:hi] = res["states"]
    probs /= n_traj
    return TrajectoryEnsemble(times, site, pair, probs, jumps, method,
                              dephasing.gamma, seed, states)
