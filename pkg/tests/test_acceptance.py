"""Acceptance gate: the ten package-level checks, one verdict line each.

Each test computes its quantities, records a PASS/FAIL line through
``conftest.record_criterion`` (echoed in the terminal summary), then
asserts.  Numbers quoted in the lines are the measured values, so a red
criterion still documents how far off it landed.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

import conftest
from conftest import GAMMA_OVER_U, U_MHZ
from oracles import bfs_path_counts, brute_classical_table
from rydsim.classical import classical_plateaus, minimum_energy_table
from rydsim.lattice import (build_lattice, count_shortest_paths,
                            graph_distance)
from rydsim.measure import (apply_detection_to_density, g2_connected,
                            lightcone_crossings, neel_configs,
                            neel_structure_factor, sample_shots,
                            staggered_shell_series)
from rydsim.openquantum import (MCWF_METHODS, DephasingModel, evolve_master,
                                evolve_mcwf)
from rydsim.operator import build_couplings
from rydsim.propagate import EvolutionConfig, evolve_unitary
from rydsim.schedule import MHZ_TO_RADPUS, RampSchedule, build_ramp
from rydsim.shorttime import AveragedDrive, verify_scaling


U_RADPUS = U_MHZ * MHZ_TO_RADPUS


def afm_ramp(t_sweep=0.44, t_rise=0.25, t_fall=0.25):
    return build_ramp(1.8, -6.0, 4.5, t_rise, t_sweep, t_fall)


def neel_superposition(geometry):
    even, odd = neel_configs(geometry)
    psi = np.zeros(1 << geometry.n_sites, dtype=np.complex128)
    psi[even] = psi[odd] = 1 / math.sqrt(2)
    return psi


def test_criterion_01_mcwf_vs_lindblad(chain3):
    """All three unravellings against direct Lindblad integration."""
    cpl = build_couplings(chain3, mode="nn", u_nn=U_RADPUS)
    sched = afm_ramp()
    deph = DephasingModel(GAMMA_OVER_U * U_RADPUS)
    cfg = EvolutionConfig(n_steps=200)
    rho = evolve_master(sched, cpl, deph, config=cfg)[-1]
    mu_ref = rho.site_density()
    g2_ref = g2_connected(rho, chain3).by_vector((1, 0)).g2

    worst = 0.0
    for k, method in enumerate(MCWF_METHODS):
        ens = evolve_mcwf(sched, cpl, deph, n_traj=1280, seed=101 + k,
                          config=cfg, method=method)
        pull_mu = np.max(np.abs(ens.site_density_mean() - mu_ref)
                         / np.maximum(ens.site_density_stderr(), 1e-4))
        cls = g2_connected(ens, chain3).by_vector((1, 0))
        pull_g2 = abs(cls.g2 - g2_ref) / max(cls.stderr, 1e-4)
        worst = max(worst, float(pull_mu), float(pull_g2))
    ok = worst < 3.0
    detail = (f"3-site chain, 1280 trajectories per method "
              f"({', '.join(MCWF_METHODS)}); worst density/NN-g2 pull "
              f"{worst:.2f} standard errors (bound 3)")
    assert conftest.record_criterion(1, ok, detail), detail


def test_criterion_02_krylov_vs_dense():
    g = build_lattice("chain", (8,))
    cpl = build_couplings(g, mode="nn", u_nn=U_RADPUS)
    sched = afm_ramp()
    kry = evolve_unitary(sched, cpl,
                         config=EvolutionConfig(n_steps=200))[-1].state
    den = evolve_unitary(sched, cpl, config=EvolutionConfig(
        n_steps=200, expm_backend="dense"))[-1].state
    dist = float(np.linalg.norm(kry - den))
    drift = abs(float(np.linalg.norm(kry)) - 1.0)
    ok = dist < 1e-8 and drift < 1e-9
    detail = (f"8-site chain full ramp: |psi_krylov - psi_dense| = "
              f"{dist:.2e} (bound 1e-8), norm drift {drift:.2e} "
              f"(bound 1e-9)")
    assert conftest.record_criterion(2, ok, detail), detail


def test_criterion_03_shorttime_law(chain3):
    drive = AveragedDrive(1.0, 0.0, 1.0, 1.0, 0.0)
    fit1 = verify_scaling(chain3, drive, 1, [0.04, 0.06, 0.09, 0.13, 0.18])
    fit2 = verify_scaling(chain3, drive, 2, [0.13, 0.17, 0.22, 0.29, 0.38])
    ok = (abs(fit1.exponent - 6) < 0.05 and abs(fit2.exponent - 10) < 0.2
          and abs(fit1.coefficient_ratio - 1) < 0.05
          and abs(fit2.coefficient_ratio - 1) < 0.05)
    detail = (f"NN chain, constant averaged drive: exponents "
              f"{fit1.exponent:.4f} (6 +- 0.05), {fit2.exponent:.4f} "
              f"(10 +- 0.2); coefficient ratios {fit1.coefficient_ratio:.4f},"
              f" {fit2.coefficient_ratio:.4f} (within 5%)")
    assert conftest.record_criterion(3, ok, detail), detail


def test_criterion_04_path_embedding():
    mismatches = 0
    checked = 0
    for kind in ("square", "triangular"):
        for (k, l), (dist, count) in bfs_path_counts(kind, 5).items():
            checked += 1
            if (graph_distance(kind, (k, l)) != dist
                    or count_shortest_paths(kind, (k, l)) != count):
                mismatches += 1

    g = build_lattice("square", (3, 3))
    cpl = build_couplings(g, mode="nn", u_nn=1.0)
    cfg = EvolutionConfig(n_steps=8, expm_backend="dense")
    ratios = []
    for t in (0.30, 0.20, 0.14):
        sched = RampSchedule(1.0, 0.0, 0.0, 0.0, t, 0.0)
        cmap = g2_connected(evolve_unitary(sched, cpl, config=cfg)[-1].state,
                            g, max_shell=2)
        ratios.append(cmap.by_vector((1, 1)).g2 / cmap.by_vector((2, 0)).g2)
    errs = [abs(r - 2) for r in ratios]
    ok = (mismatches == 0 and errs == sorted(errs, reverse=True)
          and errs[-1] < 0.05)
    detail = (f"closed-form path counts match BFS-DP on {checked} "
              f"displacements (m <= 5, square+triangular); square ED "
              f"g2(1,1)/g2(2,0) -> {ratios[-1]:.4f} at T=0.14 "
              f"(2 expected, approach {[f'{r:.3f}' for r in ratios]})")
    assert conftest.record_criterion(4, ok, detail), detail


def test_criterion_05_classical_diagram():
    sq = classical_plateaus(build_lattice("square", (4, 4),
                                          boundary="periodic"))
    sq_ok = ([p.density for p in sq] == [0, Fraction(1, 2), 1]
             and sq[1].x_lo == 0 and sq[1].x_hi == 4)

    tri = classical_plateaus(build_lattice("triangular", (3, 3),
                                           boundary="periodic"))
    by_d = {p.density: p for p in tri}
    tri_ok = (Fraction(1, 3) in by_d and Fraction(2, 3) in by_d
              and by_d[Fraction(1, 3)].x_lo == 0
              and by_d[Fraction(1, 3)].x_hi == 3
              and by_d[Fraction(2, 3)].x_lo == 3
              and by_d[Fraction(2, 3)].x_hi == 6)

    def count_in_window(plats, lo, hi):
        return sum(1 for p in plats
                   if (p.x_hi is None or p.x_hi > lo)
                   and (p.x_lo is None or p.x_lo < hi))

    open66 = count_in_window(
        classical_plateaus(build_lattice("square", (6, 6))), 0, 4)
    per66 = count_in_window(
        classical_plateaus(build_lattice("square", (6, 6),
                                         boundary="periodic")), 0, 4)

    cases = []
    for n in range(2, 17):
        cases.append(("chain", (n,), "open"))
    for n in range(3, 17):
        cases.append(("chain", (n,), "periodic"))
    for rows in range(2, 9):
        for cols in range(rows, 9):
            if rows * cols > 16:
                continue
            for kind in ("square", "triangular"):
                cases.append((kind, (rows, cols), "open"))
                if rows >= 3 and cols >= 3:
                    cases.append((kind, (rows, cols), "periodic"))
    bad = []
    for kind, dims, boundary in cases:
        geo = build_lattice(kind, dims, boundary=boundary)
        table = {b: (a, c) for b, a, c in minimum_energy_table(geo)}
        if table != brute_classical_table(geo, 1, None):
            bad.append((kind, dims, boundary))

    ok = sq_ok and tri_ok and open66 > per66 and not bad
    detail = (f"periodic square plateaus {[str(p.density) for p in sq]} on "
              f"x in [0,4]; triangular thirds at (0,3)/(3,6); open 6x6 has "
              f"{open66} plateaus vs periodic {per66} on (0,4); transfer DP "
              f"== brute force on {len(cases)} geometries (N <= 16), "
              f"{len(bad)} mismatches")
    assert conftest.record_criterion(5, ok, detail), detail


def test_criterion_06_correlator_identities(square44):
    corr = g2_connected(neel_superposition(square44), square44)
    even_ok = all(abs(e.g2 - 0.25 * (-1) ** (sum(map(abs, e.vectors[0])) % 2))
                  < 1e-12 for e in corr.entries)

    g55 = build_lattice("square", (5, 5))
    even, _ = neel_configs(g55)
    single = g2_connected([even], g55)
    zero_ok = all(abs(e.g2) < 1e-12 for e in single.entries)
    bits = np.array([(even >> s) & 1 for s in range(25)], dtype=float)
    coords = g55.coords()
    stagger_ok = np.all(bits == (coords[:, 0] + coords[:, 1] + 1) % 2)

    g66 = build_lattice("square", (6, 6))
    s66, _ = neel_structure_factor(g2_connected(list(neel_configs(g66)),
                                                g66, max_shell=4))
    s_ok = abs(s66 - 40.0) < 1e-9

    ok = bool(even_ok and zero_ok and stagger_ok and s_ok)
    detail = (f"4x4 Neel superposition g2 = (-1)^m/4 on every class; "
              f"5x5 single Neel g2 == 0 with staggered density; "
              f"6x6 S_Neel = {s66:.9f} (40 expected, cutoff 4)")
    assert conftest.record_criterion(6, ok, detail), detail


@pytest.mark.slow
def test_criterion_07_lightcone(square44):
    cpl = build_couplings(square44, mode="nn", u_nn=U_RADPUS)
    sched = afm_ramp()
    times = np.linspace(0.0, sched.t_total, 48)
    snaps = evolve_unitary(sched, cpl, config=EvolutionConfig(n_steps=192),
                           snapshot_times=times)
    t_snap = np.array([s.time for s in snaps])
    maps = [g2_connected(s.state, square44) for s in snaps]
    series = staggered_shell_series(maps)
    cross = lightcone_crossings(t_snap, series, threshold=0.2)
    t1, t2, t3 = cross[1], cross[2], cross[3]
    ordered = (t1 is not None and t2 is not None and t3 is not None
               and t1 < t2 < t3)
    ref = {1: 0.64, 2: 0.71, 3: 0.79}
    band = {m: (cross[m] is not None and abs(cross[m] - ref[m]) <= 0.15)
            for m in ref}
    detail = (f"4x4 ramp, 0.2-threshold crossings t1={t1:.3f} t2={t2:.3f} "
              f"t3={t3:.3f} us strictly ordered; soft +-0.15 us band vs "
              f"6x6 experiment refs 0.64/0.71/0.79: "
              f"{['hit' if band[m] else 'miss' for m in (1, 2, 3)]} "
              f"(band logged only)")
    assert conftest.record_criterion(7, ordered, detail), detail


@pytest.mark.slow
def test_criterion_08_dephasing_peak(square44):
    cpl = build_couplings(square44, mode="nn", u_nn=U_RADPUS)
    deph = DephasingModel(GAMMA_OVER_U * U_RADPUS)
    cfg = EvolutionConfig(n_steps=200)
    sweeps = (0.1, 0.45, 0.8, 1.15, 1.3)
    t_tot, s_unit, s_deph = [], [], []
    for ts in sweeps:
        sched = afm_ramp(t_sweep=ts)
        t_tot.append(sched.t_total)
        psi = evolve_unitary(sched, cpl, config=cfg)[-1].state
        s_unit.append(neel_structure_factor(g2_connected(psi, square44))[0])
        ens = evolve_mcwf(sched, cpl, deph, n_traj=48, seed=20240815,
                          config=cfg, method="detuning-noise")
        s_deph.append(neel_structure_factor(g2_connected(ens, square44))[0])

    peak = int(np.argmax(s_deph))
    interior = 0 < peak < len(sweeps) - 1
    in_window = 0.7 <= t_tot[peak] <= 1.5
    drop = 1.0 - s_deph[-1] / s_deph[peak]
    decays = drop >= 0.10
    unit_monotone = all(b >= a * (1 - 1e-3)
                        for a, b in zip(s_unit, s_unit[1:]))
    ok = interior and in_window and decays and unit_monotone
    detail = (f"gamma/U = {GAMMA_OVER_U}: dephased S_Neel over t_tot "
              f"{[f'{t:.2f}' for t in t_tot]} us = "
              f"{[f'{s:.2f}' for s in s_deph]}, peak at "
              f"{t_tot[peak]:.2f} us (window [0.7, 1.5]), drop by 1.8 us "
              f"{100 * drop:.0f}% (>= 10%); unitary curve "
              f"{[f'{s:.2f}' for s in s_unit]} non-decreasing: "
              f"{unit_monotone}")
    assert conftest.record_criterion(8, ok, detail), detail


def test_criterion_09_convergence_and_tail(square44):
    nn = build_couplings(square44, mode="nn", u_nn=U_RADPUS)
    sched = afm_ramp()

    def s_of(couplings, n_steps):
        psi = evolve_unitary(sched, couplings,
                             config=EvolutionConfig(n_steps=n_steps))[-1].state
        return psi, neel_structure_factor(g2_connected(psi, square44))[0]

    psi200, s200 = s_of(nn, 200)
    _, s400 = s_of(nn, 400)
    ds_abs = abs(s400 - s200)
    ds_rel = ds_abs / abs(s200)
    conv_ok = ds_rel < 1e-4  # relative reading; see the decisions ledger

    # Tail check compares the correlation observables; site densities and
    # S shift far more (see the decisions ledger) and are logged only.
    full = build_couplings(square44, mode="full", u_nn=U_RADPUS)
    psi_full, s_full = s_of(full, 200)
    from rydsim.operator import state_site_density
    d_mu = float(np.max(np.abs(state_site_density(psi200, 16)
                               - state_site_density(psi_full, 16))))
    g_nn = g2_connected(psi200, square44)
    g_fu = g2_connected(psi_full, square44)
    d_g2 = max(abs(a.g2 - b.g2) for a, b in zip(g_nn.entries, g_fu.entries))
    tail_ok = d_g2 < 0.02

    ok = conv_ok and tail_ok
    detail = (f"S_Neel(200)={s200:.4f}: doubling n_steps moves it by "
              f"{ds_abs:.2e} abs / {ds_rel:.2e} rel (rel bound 1e-4); "
              f"NN vs full-vdW: max |d g2| {d_g2:.4f} over all classes "
              f"(bound 0.02); logged: max |d density| {d_mu:.4f}, "
              f"S shift {abs(s_full - s200):.3f}")
    assert conftest.record_criterion(9, ok, detail), detail


def test_criterion_10_measurement_model(square33):
    psi = neel_superposition(square33)
    exact = g2_connected(psi, square33)
    shots = sample_shots(psi, 100_000, seed=17, geometry=square33)
    sampled = g2_connected(shots, square33)
    pull = max(abs(a.g2 - b.g2) / max(b.stderr, 1e-4)
               for a, b in zip(exact.entries, sampled.entries))

    rng = np.random.default_rng(23)
    p = rng.random(4)
    amps = [np.array([math.sqrt(1 - q), math.sqrt(q)]) for q in p]
    prod = amps[0]
    for a in amps[1:]:
        prod = np.kron(a, prod)
    eps, epsp = 0.07, 0.13
    det = sample_shots(prod.astype(np.complex128), 100_000, seed=29,
                       n_sites=4, epsilon=eps, epsilon_prime=epsp)
    mu_meas = det.shots.mean(axis=0)
    mu_pred = apply_detection_to_density(p, eps, epsp)
    se = np.sqrt(mu_pred * (1 - mu_pred) / det.n_shots)
    det_pull = float(np.max(np.abs(mu_meas - mu_pred) / se))

    ok = pull < 4.0 and det_pull < 4.0
    detail = (f"1e5 shots: worst sampled-g2 pull {pull:.2f} SE (bound 4); "
              f"detection identity n + eps(1-n) - eps'n on a product "
              f"state: worst pull {det_pull:.2f} SE (bound 4)")
    assert conftest.record_criterion(10, ok, detail), detail
