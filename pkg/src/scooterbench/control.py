"""Throttle-by-wire actuator and the adaptive PI velocity controller."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

CONTROL_RATE_HZ = 20.0
SETTLE_WINDOW_S = 5.0
SETTLE_BAND_KMH = 0.2


@dataclass
class TbwActuator:
    """Stepper-driven throttle valve modelled as a first-order lag.

    The valve settles to 95 % of a step within response_time, so the lag
    time constant is response_time / 3.  Positions are % of full open.
    The finite sensing accuracy shows up as quantization of the reported
    position, not of the true one.
    """

    position_pct: float = 0.0
    response_time_s: float = 0.06
    accuracy: float = 0.9963

    def __post_init__(self):
        if not (0.0 <= self.position_pct <= 100.0):
            raise DomainError("actuator position must be within [0, 100] %")
        if self.response_time_s <= 0:
            raise DomainError("response time must be positive")

    @property
    def reported_position_pct(self) -> float:
        step = 2.0 * (1.0 - self.accuracy) * 100.0
        if step <= 0:
            return self.position_pct
        return round(self.position_pct / step) * step

    def step(self, command_pct: float, dt_s: float) -> float:
        """Advance the valve toward the command over dt; returns new position."""
        if not (0.0 <= command_pct <= 100.0):
            raise DomainError("throttle command must be within [0, 100] %")
        if dt_s <= 0:
            raise DomainError("dt must be positive")
        tau = self.response_time_s / 3.0
        alpha = 1.0 - np.exp(-dt_s / tau)
        self.position_pct = float(np.clip(self.position_pct + alpha * (command_pct - self.position_pct), 0.0, 100.0))
        return self.position_pct


def actuator_step(actuator: TbwActuator, command_pct: float, dt_s: float) -> float:
    return actuator.step(command_pct, dt_s)


@dataclass
class PiController:
    """PI velocity controller with conditional anti-windup and gain scheduling.

    gain_schedule maps an error-magnitude threshold to a (kp, ki) pair; the
    first row whose threshold exceeds |error| wins, the last row is the
    catch-all.  Output and command units are throttle %.
    """

    kp: float = 12.0
    ki: float = 10.0
    setpoint_kmh: float = 48.7
    output_min: float = 0.0
    output_max: float = 100.0
    integrator: float = 0.0
    # (|error| upper bound km/h, kp, ki); last bound should be inf
    gain_schedule: tuple = ((0.5, 8.0, 5.0), (float("inf"), 12.0, 10.0))

    def _gains(self, abs_error: float) -> tuple[float, float]:
        for bound, kp, ki in self.gain_schedule:
            if abs_error < bound:
                return kp, ki
        return self.kp, self.ki

    def step(self, v_meas_kmh: float, dt_s: float) -> float:
        """One control update; returns the clamped throttle command."""
        if dt_s <= 0:
            raise DomainError("dt must be positive")
        error = self.setpoint_kmh - v_meas_kmh
        kp, ki = self._gains(abs(error))
        raw = kp * error + self.integrator
        output = float(np.clip(raw, self.output_min, self.output_max))
        saturated_high = raw >= self.output_max and error > 0
        saturated_low = raw <= self.output_min and error < 0
        if not (saturated_high or saturated_low):
            self.integrator += ki * error * dt_s
        return output

    def reset(self, integrator: float = 0.0) -> None:
        self.integrator = integrator


def pi_step(ctrl: PiController, v_meas_kmh: float, dt_s: float) -> float:
    return ctrl.step(v_meas_kmh, dt_s)


def settle_detect(
    history_kmh,
    rate_hz: float = CONTROL_RATE_HZ,
    window_s: float = SETTLE_WINDOW_S,
    band_kmh: float = SETTLE_BAND_KMH,
) -> bool:
    """True once the trailing window of velocity samples fits inside the band.

    Needs at least window_s of history at the stated rate; otherwise False.
    """
    values = np.asarray(history_kmh, dtype=float)
    need = int(round(window_s * rate_hz)) + 1
    if values.size < need:
        return False
    window = values[-need:]
    return float(window.max() - window.min()) <= band_kmh
