"""Leading-order short-time predictions for connected correlations.

For a constant-drive evolution from the all-down state, the connected
correlator of two sites at graph distance m first appears at order
T^(2+4m): building correlation over m bonds costs one interaction
vertex and two drive vertices per bond, plus the two drive endpoints.
The m = 1..3 coefficients are hard-coded exact rationals; an ED
harness refits the exponent and the coefficient against the same
formulas, so a transcription slip shows up as a test failure rather
than a silent bias.

Lattice embedding enters as a multiplicity: every shortest bond path
between the two sites contributes the same leading term, so the
prediction scales with ``lattice.count_shortest_paths``.  A linear
detuning sweep enters only through its time average
delta_avg = (delta_0 + delta_final)/2, which for a linear ramp makes
the averaged Hamiltonian independent of the duration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .lattice import LatticeGeometry, count_shortest_paths, graph_distance
from .measure import g2_connected
from .operator import build_couplings
from .propagate import EvolutionConfig, evolve_unitary
from .schedule import RampSchedule

NUMERICAL_FLOOR = 1e-14

# polynomial coefficient of U^pu * delta_avg^pd in the leading g2 term,
# one table per graph distance m; the full prediction is
#   paths * poly(U, delta) * Omega^(2+2m) * T^(2+4m)
_COEFFS: dict[int, tuple[tuple[int, int, Fraction], ...]] = {
    1: ((2, 0, Fraction(-1, 288)),
        (1, 1, Fraction(3, 288))),
    2: ((4, 0, Fraction(77, 2419200)),
        (3, 1, Fraction(-340, 2419200)),
        (2, 2, Fraction(375, 2419200))),
    3: ((6, 0, Fraction(-4279, 26824089600)),
        (5, 1, Fraction(24766, 26824089600)),
        (4, 2, Fraction(-46725, 26824089600)),
        (3, 3, Fraction(28350, 26824089600))),
}


@dataclass(frozen=True)
class AveragedDrive:
    """Constant drive standing in for a sweep at short times.

    omega and delta_avg in rad/us, couplings in rad/us, duration in us.
    Exact (Fraction) field values propagate through the predictions.
    """

    omega: float
    delta_avg: float
    u_z: float
    u_w: float
    duration: float

    @property
    def u(self):
        if self.u_z != self.u_w:
            raise ValueError("anisotropic couplings have no single U")
        return self.u_z


def average_hamiltonian(schedule: RampSchedule, u_z, u_w=None) -> AveragedDrive:
    """Averaged constant drive of a sweep-only schedule.

    Couplings and omega pass through unchanged; delta is replaced by
    its time average over the sweep.  Schedules with rise or fall
    segments change omega over their support and are rejected: the
    expansion assumes a constant transverse drive.
    """
    if schedule.t_rise != 0.0 or schedule.t_fall != 0.0:
        raise ValueError("averaging assumes constant omega: rise/fall "
                         "segments must be absent")
    delta_avg = (schedule.delta0 + schedule.delta_final) / 2
    if u_w is None:
        u_w = u_z
    return AveragedDrive(schedule.omega_max, delta_avg, u_z, u_w,
                         schedule.t_total)


@dataclass(frozen=True)
class LeadingPrediction:
    m: int
    value: float                  # paths * coeff * Omega^(2+2m) * T^(2+4m)
    coefficient: object           # poly(U, delta); Fraction when inputs are exact
    path_multiplicity: int
    omega_power: int
    t_power: int


def predict_g2_leading(m: int, drive: AveragedDrive,
                       path_multiplicity: int = 1,
                       vector: tuple[int, int] | None = None) -> LeadingPrediction:
    """Leading g2 term at graph distance m for the averaged drive.

    With anisotropic couplings only m = 1 is available, substituting
    the bond's own coupling: ``vector`` selects it (l != 0 crosses
    rows, so u_z; otherwise u_w).  The sign alternates with m for
    delta_avg = 0, U > 0.
    """
    if m not in _COEFFS:
        raise ValueError(f"no closed-form coefficient for m={m}")
    if drive.u_z != drive.u_w:
        if m != 1:
            raise ValueError("anisotropic couplings supported only at m=1")
        if vector is None:
            raise ValueError("anisotropic m=1 needs the displacement vector "
                             "to pick the bond coupling")
        u = drive.u_z if vector[1] != 0 else drive.u_w
    else:
        u = drive.u_z
    d = drive.delta_avg
    coeff = sum(c * u ** pu * d ** pd for pu, pd, c in _COEFFS[m])
    omega_power = 2 + 2 * m
    t_power = 2 + 4 * m
    value = (path_multiplicity * coeff * drive.omega ** omega_power
             * drive.duration ** t_power)
    # arithmetic stays polymorphic: exact inputs give exact values
    return LeadingPrediction(m, value, coeff, path_multiplicity,
                             omega_power, t_power)


# ---------------------------------------------------------------------------
# ED verification

@dataclass
class ScalingPoint:
    t: float
    g2_measured: float
    g2_predicted: float

    @property
    def ratio(self) -> float:
        return self.g2_measured / self.g2_predicted


@dataclass
class ScalingFit:
    m: int
    vector: tuple[int, int]
    exponent: float
    coefficient_ratio: float      # measured/predicted at the smallest usable T
    points: list[ScalingPoint]


def verify_scaling(geometry: LatticeGeometry, drive: AveragedDrive,
                   m: int, t_grid, vector: tuple[int, int] | None = None,
                   config: EvolutionConfig | None = None) -> ScalingFit:
    """Fit the T-exponent of the exact g2 against the predicted law.

    Evolves the all-down state under the constant averaged drive for
    each duration in ``t_grid`` (NN couplings), measures the class g2
    of ``vector`` (default (m, 0)), and fits log|g2| vs log T.  Points
    below the numerical floor are discarded; fewer than 4 usable
    points is an error.
    """
    if vector is None:
        vector = (m, 0)
    if graph_distance(geometry.kind, vector) != m:
        raise ValueError(f"vector {vector} is not at graph distance {m}")
    couplings = build_couplings(geometry, mode="nn", u_z=drive.u_z,
                                u_w=drive.u_w)
    # dense propagation: the krylov residual tolerance sits above the
    # 1e-14 floor and would contaminate the smallest usable points
    config = config or EvolutionConfig(n_steps=8, expm_backend="dense")
    paths = count_shortest_paths(geometry.kind, vector)

    points = []
    for t in sorted(float(t) for t in t_grid):
        sched = RampSchedule(omega_max=drive.omega, delta0=drive.delta_avg,
                             delta_final=drive.delta_avg, t_rise=0.0,
                             t_sweep=t, t_fall=0.0)
        snaps = evolve_unitary(sched, couplings, config=config)
        cmap = g2_connected(snaps[-1].state, geometry, max_shell=max(
            m, abs(vector[0]) + abs(vector[1])))
        entry = cmap.by_vector(vector)
        pred = predict_g2_leading(
            m, AveragedDrive(drive.omega, drive.delta_avg, drive.u_z,
                             drive.u_w, t),
            path_multiplicity=paths, vector=vector)
        if abs(entry.g2) >= NUMERICAL_FLOOR:
            points.append(ScalingPoint(t, entry.g2, pred.value))
    if len(points) < 4:
        raise ValueError(f"only {len(points)} grid points above the "
                         f"numerical floor; need at least 4")
    logs_t = np.log([p.t for p in points])
    logs_g = np.log([abs(p.g2_measured) for p in points])
    slope, _ = np.polyfit(logs_t, logs_g, 1)
    return ScalingFit(m, vector, float(slope), points[0].ratio, points)


def scaling_report_csv(fits: list[ScalingFit]) -> str:
    lines = ["m,k,l,T,g2_measured,g2_predicted,ratio"]
    for f in fits:
        k, l = f.vector
        for p in f.points:
            lines.append(f"{f.m},{k},{l},{p.t!r},{p.g2_measured!r},"
                         f"{p.g2_predicted!r},{p.ratio!r}")
    return "\n".join(lines) + "\n"
