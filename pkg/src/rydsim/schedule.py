"""Drive schedules: linear rise, linear detuning sweep, linear fall.

All schedule objects store angular frequencies in rad/us and times in
us.  Builder functions accept laboratory units (MHz, meaning the
quantity divided by 2*pi) and convert on the way in.

The protocol has three consecutive linear segments:

1. rise:  Omega goes 0 -> omega_max over t_rise while delta stays at
   delta0 (a large negative value, so the all-down state tracks the
   ground state),
2. sweep: delta goes delta0 -> delta_final over t_sweep at full drive,
3. fall:  Omega returns to 0 over t_fall while delta stays at
   delta_final.

Degenerate segments (zero duration) are allowed; evaluation at a
boundary takes the right limit, so a sweep-only schedule starts at full
drive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi
MHZ_TO_RADPUS = TWO_PI  # 1 MHz of f = omega/2pi equals 2pi rad/us


@dataclass(frozen=True)
class RampSchedule:
    """Piecewise-linear drive, angular units (rad/us) and times in us."""

    omega_max: float
    delta0: float
    delta_final: float
    t_rise: float
    t_sweep: float
    t_fall: float

    def __post_init__(self) -> None:
        if min(self.t_rise, self.t_sweep, self.t_fall) < 0:
            raise ValueError("segment durations must be non-negative")
        if self.t_total <= 0:
            raise ValueError("schedule must have positive total duration")
        if self.omega_max < 0:
            raise ValueError("omega_max must be non-negative")

    @property
    def t_total(self) -> float:
        return self.t_rise + self.t_sweep + self.t_fall

    @property
    def segment_boundaries(self) -> tuple[float, float, float, float]:
        return (0.0, self.t_rise, self.t_rise + self.t_sweep, self.t_total)

    def evaluate(self, t: float) -> tuple[float, float]:
        """Instantaneous (omega, delta) at time t in [0, t_total]."""
        if t < -1e-9 or t > self.t_total + 1e-9:
            raise ValueError(f"t={t} outside schedule [0, {self.t_total}]")
        t = min(max(t, 0.0), self.t_total)
        if self.t_rise > 0 and t <= self.t_rise:
            return self.omega_max * (t / self.t_rise), self.delta0
        t_sw_end = self.t_rise + self.t_sweep
        if self.t_sweep > 0 and t <= t_sw_end:
            s = (t - self.t_rise) / self.t_sweep
            return self.omega_max, self.delta0 + s * (self.delta_final - self.delta0)
        if self.t_fall > 0 and t > t_sw_end:
            s = (t - t_sw_end) / self.t_fall
            return self.omega_max * (1.0 - s), self.delta_final
        # Right limits for degenerate segments.
        if t <= self.t_rise:
            return self.omega_max, self.delta0
        return self.omega_max, self.delta_final

    def interval_average(self, t0: float, t1: float) -> tuple[float, float]:
        """Endpoint-averaged (omega, delta) over [t0, t1].

        This is the drive assigned to one piecewise-constant propagation
        interval; the Hamiltonian is affine in both parameters, so
        averaging the endpoint Hamiltonians is the same as averaging the
        parameters.
        """
        w0, d0 = self.evaluate(t0)
        w1, d1 = self.evaluate(t1)
        return 0.5 * (w0 + w1), 0.5 * (d0 + d1)

    def truncated(self, t_stop: float) -> "RampSchedule":
        """The same protocol halted at t_stop (drive switched off there).

        Useful for stop-and-measure traces.  Diagonal observables are
        frozen once the drive is off, so measuring the truncated
        protocol at its end equals snapshotting the full ramp at
        t_stop.
        """
        if not 0 < t_stop <= self.t_total + 1e-9:
            raise ValueError("t_stop must lie inside the schedule")
        r = min(self.t_rise, t_stop)
        s = min(self.t_sweep, t_stop - r)
        f = min(self.t_fall, t_stop - r - s)
        _, d_stop = self.evaluate(t_stop)
        return RampSchedule(self.omega_max, self.delta0, d_stop, r, s, f)


def build_ramp(omega_max_mhz: float,
               delta0_mhz: float,
               delta_final_mhz: float,
               t_rise: float,
               t_sweep: float,
               t_fall: float) -> RampSchedule:
    """Build a schedule from MHz drive values and segment durations in us."""
    return RampSchedule(
        omega_max=omega_max_mhz * MHZ_TO_RADPUS,
        delta0=delta0_mhz * MHZ_TO_RADPUS,
        delta_final=delta_final_mhz * MHZ_TO_RADPUS,
        t_rise=t_rise,
        t_sweep=t_sweep,
        t_fall=t_fall,
    )


def sweep_duration_for_rate(delta0_mhz: float,
                            delta_final_mhz: float,
                            rate_mhz_per_us: float = 10.0) -> float:
    """Sweep time that keeps the detuning rate fixed (default 10 MHz/us)."""
    if rate_mhz_per_us <= 0:
        raise ValueError("sweep rate must be positive")
    return abs(delta_final_mhz - delta0_mhz) / rate_mhz_per_us
