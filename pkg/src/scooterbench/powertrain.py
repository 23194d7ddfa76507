"""50 cc four-stroke engine behind a CVT, with two speed-restriction strategies.

The ignition-retard strategy (code "OR") rides at wide-open throttle and
delays the spark once top speed is reached; the velocity-control strategy
(code "VC") keeps the spark at optimum and limits the throttle instead.
Cylinder pressure over one 720 degree cycle is synthesized from slider-crank
geometry, a polytropic motored baseline and a Wiebe heat-release profile
integrated through the single-zone first law.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigError, DomainError, ValidationError

R_AIR = 287.0          # J/(kg K)
SAMPLES_PER_REV = 1024
CYCLE_SAMPLES = 2 * SAMPLES_PER_REV
CRANK_GRID_DEG = np.linspace(-360.0, 360.0, CYCLE_SAMPLES, endpoint=False)
LAUNCH_FORCE_LIMIT_N = 500.0  # static cap so v -> 0 never divides away


class Strategy(str, enum.Enum):
    """Speed-restriction strategy selector."""

    IGNITION_RETARD = "OR"
    VELOCITY_CONTROL = "VC"

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ConfigError(f"unknown strategy {text!r}, expected 'or' or 'vc'") from None


@dataclass(frozen=True)
class EngineCalibration:
    """Geometry plus the phenomenological maps that close the engine model.

    Map tables are tuples of (x, y) pairs, interpolated linearly and clamped
    at the ends.  The shipped defaults are produced by the factory
    calibration in config.py; the raw dataclass defaults here are only a
    sane starting point.
    """

    displacement_m3: float = 49.9e-6
    compression_ratio: float = 10.0
    bore_m: float = 0.039
    stroke_m: float = 0.0418
    conrod_m: float = 0.084
    max_engine_speed_rpm: float = 8000.0
    idle_speed_rpm: float = 1800.0

    # CVT: vehicle speed (km/h) -> engine speed (rpm), monotone
    speed_map: tuple = ((0.0, 1800.0), (15.0, 4200.0), (30.0, 6200.0), (48.7, 7500.0), (55.0, 8000.0))

    # spark advance for best torque, degrees BTDC over rpm
    mbt_map: tuple = ((1800.0, 12.0), (4000.0, 16.0), (7500.0, 24.0), (8000.0, 24.0))

    # throttle (%) -> volumetric-efficiency fraction at reference conditions
    ve_throttle_map: tuple = ((0.0, 0.0), (16.0, 0.326735), (26.0, 0.425109), (45.0, 0.530784), (50.0, 0.573975), (100.0, 0.696852))
    idle_airflow_kgh: float = 0.8

    mechanical_efficiency: float = 0.82
    # motoring drag torque (N m) over rpm, reflected to the wheel through the CVT
    engine_brake_torque_map: tuple = ((1800.0, 0.30), (7500.0, 1.081785), (8000.0, 1.150362))

    wiebe_a: float = 5.0
    wiebe_m: float = 2.0
    burn_duration_base_deg: float = 54.0
    burn_duration_retard_gain: float = 0.1   # extra degrees of burn per degree of retard
    heat_release_fraction: float = 0.654673      # share of fuel energy released in-cylinder at MBT
    heat_release_retard_slope: float = 0.002 # fractional loss per degree of retard
    polytropic_exponent: float = 1.32
    intake_temp_k: float = 340.0
    exhaust_backpressure_bar: float = 1.02

    lhv_fuel_j_per_kg: float = 44.0e6
    fuel_density_kg_per_l: float = 0.75
    stoich_afr: float = 14.7
    ambient_air_density_kgm3: float = 1.232

    # mixture bias observed per strategy (dimensionless lambda); the retard
    # strategy reads richer only while the restriction is actually retarding
    lambda_bias_or: float = 0.985
    lambda_bias_vc: float = 0.992
    lambda_blend_offset_deg: float = 20.5

    # injector duty reference: fuel flow (kg/h) that reads as 100 %
    injector_ref_fuel_kgh: float = 0.720954

    # retard law: surplus-power fraction -> degrees of retard
    retard_map: tuple = ((0.0, 0.0), (0.312563, 20.5), (1.093153, 29.75))
    retard_ramp_kmh: float = 0.5     # retard fades in over this band below the limit
    # factory overspeed limiter: heat release ramps out above the speed limit
    limiter_start_over_kmh: float = 0.1
    limiter_span_kmh: float = 0.4

    cycle_noise_sigma: float = 0.02  # cycle-to-cycle heat-release scatter

    # thermal model constants
    exhaust_floor_c: float = 120.0
    exhaust_per_fuel_c: float = 671.02442  # deg C per kg/h of fuel
    exhaust_per_retard_c: float = 14.634146  # deg C per degree of retard
    cylinder_base_c: float = 60.0
    cylinder_per_fuel_c: float = 55.0
    cylinder_per_retard_c: float = 0.35
    combustion_base_k: float = 2400.0
    combustion_per_retard_k: float = 19.5
    combustion_per_fuel_k: float = 80.0       # around the reference fuel flow
    combustion_ref_fuel_kgh: float = 0.720954
    combustion_min_k: float = 1520.0
    combustion_max_k: float = 2980.0

    def __post_init__(self):
        if not (45e-6 <= self.displacement_m3 <= 55e-6):
            raise ConfigError("displacement must be within 10 % of 50e-6 m^3")
        if self.compression_ratio <= 1.0:
            raise ConfigError("compression ratio must exceed 1")
        if not (0.0 < self.mechanical_efficiency <= 1.0):
            raise ConfigError("mechanical efficiency must be in (0, 1]")
        for _, adv in self.mbt_map:
            if not (6.0 <= adv <= 40.0):
                raise ConfigError("best-torque advance must stay within [6, 40] deg BTDC")

    def lambda_for(self, strategy: Strategy, ignition_offset_deg: float = 0.0) -> float:
        """Mixture ratio at an operating point.

        Both systems share the injection control; the rich shift of the
        retard strategy scales with how far the timing is actually pulled,
        so the two coincide once no restriction is active.
        """
        if strategy is Strategy.VELOCITY_CONTROL:
            return self.lambda_bias_vc
        frac = min(1.0, max(0.0, ignition_offset_deg / self.lambda_blend_offset_deg))
        return self.lambda_bias_vc - frac * (self.lambda_bias_vc - self.lambda_bias_or)

    @cached_property
    def clearance_volume_m3(self) -> float:
        return self.displacement_m3 / (self.compression_ratio - 1.0)

    @cached_property
    def _volume_grid(self) -> np.ndarray:
        return cylinder_volume(self, CRANK_GRID_DEG)

    @cached_property
    def _closed_slice(self) -> slice:
        # closed part of the cycle: BDC before firing TDC to BDC after
        lo = int(np.searchsorted(CRANK_GRID_DEG, -180.0))
        hi = int(np.searchsorted(CRANK_GRID_DEG, 180.0))
        return slice(lo, hi + 1)


@dataclass
class EngineState:
    """One static operating point of the engine."""

    throttle_pct: float
    engine_speed_rpm: float
    ignition_offset_deg: float = 0.0    # retard from best-torque timing, >= 0
    air_flow_kgh: float = 0.0
    fuel_flow_kgh: float = 0.0
    lambda_ratio: float = 1.0
    injector_duty_pct: float = 0.0
    cylinder_temp_c: float = 0.0
    exhaust_temp_c: float = 0.0
    combustion_temp_k: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.throttle_pct <= 100.0):
            raise ValidationError("throttle must be within [0, 100] %")
        if self.engine_speed_rpm < 0:
            raise ValidationError("engine speed must be non-negative")
        if self.ignition_offset_deg < 0:
            raise ValidationError("ignition offset is a retard and must be >= 0")
        if self.lambda_ratio <= 0:
            raise ValidationError("lambda must be positive")
        if self.fuel_flow_kgh < 0:
            raise ValidationError("fuel flow must be non-negative")


@dataclass(frozen=True)
class PressureTrace:
    """Cylinder pressure over one cycle on the fixed 2048-point crank grid."""

    crank_angle_deg: np.ndarray
    pressure_bar: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pressure_bar, dtype=float)
        a = np.asarray(self.crank_angle_deg, dtype=float)
        if a.shape != (CYCLE_SAMPLES,) or p.shape != (CYCLE_SAMPLES,):
            raise ValidationError(f"trace must hold exactly {CYCLE_SAMPLES} samples")
        if np.any(p <= 0):
            raise ValidationError("pressure must be positive everywhere")
        object.__setattr__(self, "crank_angle_deg", a)
        object.__setattr__(self, "pressure_bar", p)

    def to_csv(self, path) -> None:
        data = np.column_stack([self.crank_angle_deg, self.pressure_bar])
        np.savetxt(path, data, delimiter=",", header="crank_deg,pressure_bar", comments="", fmt="%.9g")


def _interp_map(table: tuple, x: float) -> float:
    xs = np.array([p[0] for p in table], dtype=float)
    ys = np.array([p[1] for p in table], dtype=float)
    return float(np.interp(x, xs, ys))


def cvt_engine_speed(calib: EngineCalibration, v_kmh: float) -> float:
    """Engine speed behind the CVT at road speed v, clamped to the redline."""
    if v_kmh < 0:
        raise DomainError("velocity must be non-negative")
    return min(_interp_map(calib.speed_map, v_kmh), calib.max_engine_speed_rpm)


def volumetric_efficiency(calib: EngineCalibration, throttle_pct: float, rpm: float) -> float:
    """Effective VE fraction including the idle-bypass share."""
    swept = calib.displacement_m3 * (rpm / 2.0) * 60.0 * calib.ambient_air_density_kgm3
    if swept <= 0.0:
        return 0.0
    return calib.idle_airflow_kgh / swept + _interp_map(calib.ve_throttle_map, throttle_pct)


def air_mass_flow(calib: EngineCalibration, throttle_pct: float, rpm: float) -> float:
    """Aspirated air in kg/h: displacement * (rpm/2) * density * VE."""
    if not (0.0 <= throttle_pct <= 100.0):
        raise DomainError("throttle must be within [0, 100] %")
    if rpm < 0:
        raise DomainError("engine speed must be non-negative")
    swept = calib.displacement_m3 * (rpm / 2.0) * 60.0 * calib.ambient_air_density_kgm3
    return swept * volumetric_efficiency(calib, throttle_pct, rpm)


def injection_for_lambda(
    calib: EngineCalibration, air_flow_kgh: float, lambda_target: float
) -> tuple[float, float]:
    """Fuel flow (kg/h) and injector duty (%) that hold the requested lambda."""
    if lambda_target <= 0:
        raise DomainError("lambda target must be positive")
    if not (0.8 <= lambda_target <= 1.2):
        raise DomainError("lambda target must lie within [0.8, 1.2]")
    if air_flow_kgh < 0:
        raise DomainError("air flow must be non-negative")
    fuel = air_flow_kgh / (calib.stoich_afr * lambda_target)
    duty = 100.0 * fuel / calib.injector_ref_fuel_kgh
    return fuel, duty


def restriction_ignition_offset(
    calib: EngineCalibration,
    strategy: Strategy,
    v_kmh: float,
    v_limit_kmh: float,
    load_demand: float,
) -> float:
    """Spark retard in degrees commanded by the restriction.

    load_demand is the fraction of the available top-speed power the current
    road load requires; the surplus (1 - load_demand) drives the retard.
    Velocity control never retards.  The retard fades in linearly over the
    last retard_ramp_kmh below the speed limit so the force-speed curve
    stays continuous.
    """
    if v_kmh < 0:
        raise DomainError("velocity must be non-negative")
    if not isinstance(strategy, Strategy):
        raise ConfigError(f"unknown strategy {strategy!r}")
    if strategy is Strategy.VELOCITY_CONTROL:
        return 0.0
    ramp_lo = v_limit_kmh - calib.retard_ramp_kmh
    if v_kmh <= ramp_lo:
        return 0.0
    ramp = min(1.0, (v_kmh - ramp_lo) / calib.retard_ramp_kmh)
    surplus = max(0.0, 1.0 - load_demand)
    return ramp * _interp_map(calib.retard_map, surplus)


def overspeed_heat_factor(calib: EngineCalibration, v_kmh: float, v_limit_kmh: float) -> float:
    """Hard-limiter multiplier on heat release above the speed limit (1 -> 0)."""
    start = v_limit_kmh + calib.limiter_start_over_kmh
    if v_kmh <= start:
        return 1.0
    return max(0.0, 1.0 - (v_kmh - start) / calib.limiter_span_kmh)


def mbt_advance(calib: EngineCalibration, rpm: float) -> float:
    return _interp_map(calib.mbt_map, rpm)


def cylinder_volume(calib: EngineCalibration, theta_deg) -> np.ndarray:
    """Instantaneous cylinder volume from slider-crank geometry (m^3)."""
    theta = np.deg2rad(np.asarray(theta_deg, dtype=float))
    crank = calib.stroke_m / 2.0
    rod = calib.conrod_m
    piston_from_tdc = rod + crank - crank * np.cos(theta) - np.sqrt(rod**2 - (crank * np.sin(theta)) ** 2)
    area = math.pi * calib.bore_m**2 / 4.0
    return calib.clearance_volume_m3 + area * piston_from_tdc


def wiebe_burn_fraction(
    calib: EngineCalibration, theta_deg, theta_ign_deg: float, burn_duration_deg: float
) -> np.ndarray:
    """Cumulative burned mass fraction of the Wiebe profile."""
    u = (np.asarray(theta_deg, dtype=float) - theta_ign_deg) / burn_duration_deg
    u = np.clip(u, 0.0, None)
    return 1.0 - np.exp(-calib.wiebe_a * u ** (calib.wiebe_m + 1.0))


def fuel_mass_per_cycle_kg(calib: EngineCalibration, fuel_flow_kgh: float, rpm: float) -> float:
    cycles_per_hour = rpm * 30.0  # rpm/2 cycles per minute
    if cycles_per_hour <= 0:
        return 0.0
    return fuel_flow_kgh / cycles_per_hour


def synthesize_pressure_trace(
    calib: EngineCalibration, state: EngineState, heat_scale: float = 1.0
) -> PressureTrace:
    """Build the cylinder pressure trace for one cycle at a static point.

    The closed part of the cycle solves d(p V^g)/dtheta = (g-1) Q' V^(g-1)
    exactly (trapezoid cumulative integral); with zero heat this collapses
    to the symmetric polytropic motored trace.  Gas exchange strokes are
    modelled as exponential blends between manifold levels, which keeps the
    trace continuous and closes the cycle at the +/-360 ends.
    """
    rpm = max(state.engine_speed_rpm, calib.idle_speed_rpm)
    gamma = calib.polytropic_exponent
    volumes = calib._volume_grid
    closed = calib._closed_slice
    v_closed = volumes[closed]
    theta_closed = CRANK_GRID_DEG[closed]

    # trapped charge sets the pressure at intake valve close (BDC)
    air_per_cycle = state.air_flow_kgh / (rpm * 30.0)
    charge_kg = max(air_per_cycle, 1e-9)
    p_ivc_pa = charge_kg * R_AIR * calib.intake_temp_k / v_closed[0]
    p_exh_pa = calib.exhaust_backpressure_bar * 1e5

    # heat release
    fuel_cycle = fuel_mass_per_cycle_kg(calib, state.fuel_flow_kgh, rpm)
    offset = state.ignition_offset_deg
    release_fraction = max(
        0.05, calib.heat_release_fraction - calib.heat_release_retard_slope * offset
    )
    q_total = fuel_cycle * calib.lhv_fuel_j_per_kg * release_fraction * heat_scale
    advance = mbt_advance(calib, rpm) - offset
    theta_ign = -advance
    burn_duration = calib.burn_duration_base_deg + calib.burn_duration_retard_gain * offset

    if q_total > 0.0:
        u = np.clip((theta_closed - theta_ign) / burn_duration, 0.0, None)
        exponent = calib.wiebe_m + 1.0
        dxdtheta = (
            calib.wiebe_a * exponent * u ** calib.wiebe_m
            * np.exp(-calib.wiebe_a * u ** exponent) / burn_duration
        )
        dq = q_total * dxdtheta
    else:
        dq = np.zeros_like(theta_closed)

    # d(p V^g)/dtheta = (g - 1) * dQ/dtheta * V^(g-1)
    v_pow_g = v_closed**gamma
    integrand = (gamma - 1.0) * dq * v_closed ** (gamma - 1.0)
    pv_g = p_ivc_pa * v_pow_g[0] + np.concatenate(
        ([0.0], cumulative_trapezoid(integrand, theta_closed))
    )
    p_closed = pv_g / v_pow_g

    pressure = np.empty(CYCLE_SAMPLES)
    # intake stroke: relax from exhaust backpressure to the trapped level
    intake = slice(0, closed.start + 1)
    theta_int = CRANK_GRID_DEG[intake]
    pressure[intake] = p_ivc_pa + (p_exh_pa - p_ivc_pa) * np.exp(-(theta_int + 360.0) / 25.0)
    pressure[closed] = p_closed
    # exhaust stroke: blowdown decay toward backpressure
    exhaust = slice(closed.stop - 1, CYCLE_SAMPLES)
    theta_exh = CRANK_GRID_DEG[exhaust]
    pressure[exhaust] = p_exh_pa + (p_closed[-1] - p_exh_pa) * np.exp(-(theta_exh - 180.0) / 20.0)

    return PressureTrace(CRANK_GRID_DEG.copy(), pressure / 1e5)


def imep(trace: PressureTrace, calib: EngineCalibration) -> float:
    """Net indicated mean effective pressure (bar) over the full 720 degrees."""
    volumes = calib._volume_grid
    # close the loop by wrapping back to the first sample
    p = np.append(trace.pressure_bar, trace.pressure_bar[0]) * 1e5
    v = np.append(volumes, volumes[0])
    work = np.trapezoid(p, v)
    return work / calib.displacement_m3 / 1e5


def peak_pressure(trace: PressureTrace) -> tuple[float, float]:
    """Peak pressure (bar) and the crank angle (deg) where it occurs."""
    idx = int(np.argmax(trace.pressure_bar))
    return float(trace.pressure_bar[idx]), float(trace.crank_angle_deg[idx])


def indicated_power(imep_bar: float, engine_speed_rpm: float, calib: EngineCalibration) -> float:
    """Indicated power in W; one power stroke every two revolutions."""
    if imep_bar < 0:
        raise DomainError("imep must be non-negative")
    return imep_bar * 1e5 * calib.displacement_m3 * (engine_speed_rpm / 60.0) / 2.0


def engine_brake_force(calib: EngineCalibration, rpm: float, v_ms: float) -> float:
    """Motoring drag reflected to the wheel through the CVT (N)."""
    torque = _interp_map(calib.engine_brake_torque_map, rpm)
    omega = rpm * 2.0 * math.pi / 60.0
    if v_ms <= 0.05:
        return LAUNCH_FORCE_LIMIT_N
    return min(torque * omega / v_ms, LAUNCH_FORCE_LIMIT_N)


def tractive_force(
    calib: EngineCalibration, state: EngineState, trace: PressureTrace, v_kmh: float
) -> float:
    """Net wheel force: mechanical-efficiency-scaled indicated power over v,
    minus the reflected motoring drag.  Capped by a static launch limit."""
    power = indicated_power(max(imep(trace, calib), 0.0), state.engine_speed_rpm, calib)
    v_ms = v_kmh / 3.6
    if v_ms <= 0.05:
        return min(LAUNCH_FORCE_LIMIT_N, calib.mechanical_efficiency * power / 0.05)
    force = calib.mechanical_efficiency * power / v_ms - engine_brake_force(calib, state.engine_speed_rpm, v_ms)
    return float(np.clip(force, -LAUNCH_FORCE_LIMIT_N, LAUNCH_FORCE_LIMIT_N))


def thermal_model(calib: EngineCalibration, state: EngineState) -> tuple[float, float, float]:
    """Cylinder-wall temp (C), exhaust-manifold temp (C), burned-zone proxy (K).

    Late combustion dumps enthalpy into the exhaust, so the manifold
    temperature rises with retard; the burned-zone proxy moves the other
    way because a short, early burn converts the same energy faster.
    """
    fuel = state.fuel_flow_kgh
    offset = state.ignition_offset_deg
    if fuel <= 0.0:
        exhaust_c = calib.exhaust_floor_c
    else:
        exhaust_c = calib.exhaust_floor_c + calib.exhaust_per_fuel_c * fuel + calib.exhaust_per_retard_c * offset
    cylinder_c = calib.cylinder_base_c + calib.cylinder_per_fuel_c * fuel + calib.cylinder_per_retard_c * offset
    combustion_k = (
        calib.combustion_base_k
        - calib.combustion_per_retard_k * offset
        + calib.combustion_per_fuel_k * (fuel - calib.combustion_ref_fuel_kgh)
    )
    combustion_k = float(np.clip(combustion_k, calib.combustion_min_k, calib.combustion_max_k))
    return cylinder_c, exhaust_c, combustion_k


def operating_state(
    calib: EngineCalibration,
    strategy: Strategy,
    throttle_pct: float,
    v_kmh: float,
    v_limit_kmh: float,
    load_demand: float,
) -> EngineState:
    """Assemble the full static engine state for one operating point."""
    rpm = cvt_engine_speed(calib, v_kmh)
    offset = restriction_ignition_offset(calib, strategy, v_kmh, v_limit_kmh, load_demand)
    air = air_mass_flow(calib, throttle_pct, rpm)
    lam = calib.lambda_for(strategy, offset)
    fuel, duty = injection_for_lambda(calib, air, lam)
    state = EngineState(
        throttle_pct=throttle_pct,
        engine_speed_rpm=rpm,
        ignition_offset_deg=offset,
        air_flow_kgh=air,
        fuel_flow_kgh=fuel,
        lambda_ratio=lam,
        injector_duty_pct=duty,
    )
    cyl, exh, comb = thermal_model(calib, state)
    state.cylinder_temp_c = cyl
    state.exhaust_temp_c = exh
    state.combustion_temp_k = comb
    return state
