"""Experiment drivers: coast-down identification, gradient sweep, road-vs-dyno.

The dynamometer is modelled as the identical road-load polynomial plus the
grade term; the coast-down validation showed road/dyno parity, so a separate
roller model would add nothing observable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import daq, plots
from .config import BenchConfig
from .control import PiController, TbwActuator, settle_detect
from .emissions import (
    EmissionRecord,
    GasComposition,
    catalyst_convert,
    efm_measure,
    engine_out_concentrations,
    euro5_check,
    exhaust_mass_flow_components,
    exhaust_volume_flow,
    gas_temperature_k,
    improvement_factors,
    per_km_volume,
    ppm_to_mg_per_km,
)
from .errors import ConfigError, SimulationError, ValidationError
from .powertrain import (
    EngineState,
    Strategy,
    cvt_engine_speed,
    imep,
    indicated_power,
    operating_state,
    overspeed_heat_factor,
    peak_pressure,
    synthesize_pressure_trace,
    tractive_force,
)
from .vehicle import (
    PathTimeSeries,
    ResistanceCurve,
    add_velocity_noise,
    average_opposite_runs,
    derive_aero_rolling,
    fit_resistance,
    grade_force,
    mean_square_velocity,
    resistance_force,
    simulate_coast_down,
    standardize_series,
)

DEFAULT_GRADES = tuple(float(round(g, 3)) + 0.0 for g in list(np.arange(-0.08, 0.0001, 0.01)) + [0.005, 0.01, 0.015, 0.02])
FEEDFORWARD_FRACTION = 0.85   # deliberately imperfect preload; the PI trims the rest


@dataclass(frozen=True)
class SweepConfig:
    """Gradient sweep protocol settings."""

    grades: tuple = DEFAULT_GRADES
    strategy: str = "both"          # "or" | "vc" | "both"
    v_limit_kmh: float = 48.7
    seed: int = 42
    settle_timeout_s: float = 60.0
    log_duration_s: float = 10.0

    def __post_init__(self):
        for g in self.grades:
            if not (-0.08 - 1e-9 <= g <= 0.02 + 1e-9):
                raise ConfigError(f"grade {g} outside the supported [-0.08, 0.02] range")
        if self.strategy not in ("or", "vc", "both"):
            raise ConfigError("strategy must be 'or', 'vc' or 'both'")

    @property
    def strategies(self) -> tuple:
        if self.strategy == "both":
            return (Strategy.IGNITION_RETARD, Strategy.VELOCITY_CONTROL)
        return (Strategy.parse(self.strategy),)


@dataclass
class OperatingPoint:
    """Everything captured at one (grade, strategy) sweep point."""

    grade: float
    strategy: Strategy
    settled: bool
    settled_at_s: float
    v_mean_kmh: float
    throttle_mean_pct: float
    throttle_reported_pct: float
    state: EngineState
    imep_bar: float
    max_avg_pressure_bar: float
    peak_angle_deg: float
    indicated_power_w: float
    record: EmissionRecord
    bundle: daq.LogBundle
    seed: int


@dataclass
class SweepReport:
    points: list
    improvement_table: dict        # grade -> {quantity: factor}
    invalid_flags: list            # (grade, strategy code, reason)
    config_seed: int

    def point(self, grade: float, strategy: Strategy) -> OperatingPoint:
        for p in self.points:
            if abs(p.grade - grade) < 1e-9 and p.strategy is strategy:
                return p
        raise KeyError(f"no point at grade={grade} strategy={strategy}")


@dataclass(frozen=True)
class CoastdownResult:
    curve: ResistanceCurve
    drag_coeff_derived: float
    rolling_coeff_derived: float
    drag_coeff_configured: float
    rolling_coeff_configured: float
    residual_rms_n: float
    samples_used: int
    clamped: tuple
    note: str


def _point_seed(master: int, grade: float, strategy: Strategy) -> int:
    key = (int(master), int(round(grade * 10000)) + 10000, 1 if strategy is Strategy.IGNITION_RETARD else 2)
    return int(np.random.SeedSequence(key).generate_state(1)[0])


class DynoPlant:
    """Closed-loop vehicle-plus-engine simulation on the roller dynamometer."""

    def __init__(self, cfg: BenchConfig, strategy: Strategy, grade: float,
                 setpoint_kmh: float | None = None, v_limit_kmh: float | None = None):
        self.cfg = cfg
        self.strategy = strategy
        self.grade = grade
        ctl = cfg.controller
        self.dt = 1.0 / ctl.control_rate_hz
        self.v_limit = v_limit_kmh if v_limit_kmh is not None else ctl.v_limit_kmh
        self.setpoint = setpoint_kmh if setpoint_kmh is not None else ctl.setpoint_kmh
        self.f_grade = grade_force(cfg.vehicle, grade)
        full = resistance_force(cfg.curve, self.v_limit) + grade_force(cfg.vehicle, ctl.retard_full_load_grade)
        self.load_demand = (resistance_force(cfg.curve, self.v_limit) + self.f_grade) / full

        self.controller = ctl.make_controller()
        self.controller.setpoint_kmh = self.setpoint
        if strategy is Strategy.VELOCITY_CONTROL:
            ff = FEEDFORWARD_FRACTION * self.equilibrium_throttle()
            self.controller.reset(integrator=ff)
            self.actuator = ctl.make_actuator(position_pct=ff)
            self.v_kmh = self.setpoint
        else:
            self.actuator = ctl.make_actuator(position_pct=100.0)
            self.v_kmh = self.v_limit - 0.5
        self.time_s = 0.0
        self.v_history = [self.v_kmh]
        self.last_state: EngineState | None = None
        self.last_command = self.actuator.position_pct

    def wheel_force(self, throttle_pct: float, v_kmh: float):
        state = operating_state(self.cfg.engine, self.strategy, throttle_pct, v_kmh,
                                self.v_limit, self.load_demand)
        heat = 1.0
        if self.strategy is Strategy.IGNITION_RETARD:
            heat = overspeed_heat_factor(self.cfg.engine, v_kmh, self.v_limit)
        trace = synthesize_pressure_trace(self.cfg.engine, state, heat_scale=heat)
        return tractive_force(self.cfg.engine, state, trace, v_kmh), state

    def equilibrium_throttle(self) -> float:
        """Throttle that balances the load at the setpoint (feedforward aid)."""
        need = resistance_force(self.cfg.curve, self.setpoint) + self.f_grade

        def gap(throttle):
            force, _ = self.wheel_force(throttle, self.setpoint)
            return force - need

        if gap(0.0) >= 0.0:
            return 0.0
        if gap(100.0) <= 0.0:
            return 100.0
        return brentq(gap, 0.0, 100.0, xtol=1e-4)

    def step(self) -> None:
        if self.strategy is Strategy.VELOCITY_CONTROL:
            self.last_command = self.controller.step(self.v_kmh, self.dt)
            self.actuator.step(self.last_command, self.dt)
            throttle = self.actuator.position_pct
        else:
            self.last_command = 100.0
            throttle = 100.0
        force, state = self.wheel_force(throttle, self.v_kmh)
        self.last_state = state
        net = force - resistance_force(self.cfg.curve, self.v_kmh) - self.f_grade
        accel = net / self.cfg.vehicle.effective_mass_kg
        self.v_kmh = max(0.0, self.v_kmh + accel * self.dt * 3.6)
        self.time_s += self.dt
        self.v_history.append(self.v_kmh)

    def run_to_settle(self, timeout_s: float, band_kmh: float) -> tuple[bool, float]:
        """Advance until the velocity trace is flat inside the band.

        Velocity control additionally has to sit on its setpoint; a flat
        trace away from it only means the integrator is still winding.
        """
        ctl = self.cfg.controller
        while self.time_s < timeout_s:
            self.step()
            if settle_detect(self.v_history, ctl.control_rate_hz, ctl.settle_window_s, band_kmh):
                if self.strategy is not Strategy.VELOCITY_CONTROL:
                    return True, self.time_s
                on_target = abs(self.v_kmh - self.setpoint) <= 0.5 * band_kmh
                # power-limited: pinned at full (or closed) throttle counts as steady
                saturated = (self.last_command >= ctl.output_max - 1e-9 and self.v_kmh < self.setpoint) or (
                    self.last_command <= ctl.output_min + 1e-9 and self.v_kmh > self.setpoint)
                if on_target or saturated:
                    return True, self.time_s
        return False, self.time_s

    @property
    def throttle_pct(self) -> float:
        return 100.0 if self.strategy is Strategy.IGNITION_RETARD else self.actuator.position_pct

    @property
    def throttle_reported_pct(self) -> float:
        return 100.0 if self.strategy is Strategy.IGNITION_RETARD else self.actuator.reported_position_pct


def _capture_point(cfg: BenchConfig, plant: DynoPlant, sweep: SweepConfig,
                   settled: bool, settled_at: float, seed: int) -> OperatingPoint:
    ctl = cfg.controller
    rate = ctl.control_rate_hz
    n_can = int(round(sweep.log_duration_s * rate))
    seq = np.random.SeedSequence(seed)
    rng_cycles, rng_efm = [np.random.default_rng(s) for s in seq.spawn(2)]

    names = ("v_set_kmh", "v_kmh", "throttle_set_pct", "throttle_pct", "injector_duty_pct",
             "lambda", "o2_pct", "cyl_temp_c", "exh_temp_c",
             "ctrl_setpoint_kmh", "ctrl_error_kmh", "ctrl_output_pct", "ctrl_integrator_pct")
    rows = {name: np.empty(n_can) for name in names}
    v_sum = 0.0
    throttle_sum = 0.0
    reported_sum = 0.0

    for i in range(n_can):
        plant.step()
        state = plant.last_state
        v_sum += plant.v_kmh
        throttle_sum += plant.throttle_pct
        reported_sum += plant.throttle_reported_pct
        # tailpipe O2 for the 20 Hz log
        raw = engine_out_concentrations(state.lambda_ratio, state.combustion_temp_k, cfg.emissions)
        tail = catalyst_convert(raw, state.lambda_ratio, cfg.emissions)
        rows["v_set_kmh"][i] = plant.setpoint
        rows["v_kmh"][i] = plant.v_kmh
        rows["throttle_set_pct"][i] = plant.last_command
        rows["throttle_pct"][i] = plant.throttle_reported_pct
        rows["injector_duty_pct"][i] = state.injector_duty_pct
        rows["lambda"][i] = state.lambda_ratio
        rows["o2_pct"][i] = tail.o2_pct
        rows["cyl_temp_c"][i] = state.cylinder_temp_c
        rows["exh_temp_c"][i] = state.exhaust_temp_c
        rows["ctrl_setpoint_kmh"][i] = plant.controller.setpoint_kmh
        rows["ctrl_error_kmh"][i] = plant.controller.setpoint_kmh - plant.v_kmh
        rows["ctrl_output_pct"][i] = plant.last_command
        rows["ctrl_integrator_pct"][i] = plant.controller.integrator

    v_mean = v_sum / n_can
    throttle_mean = throttle_sum / n_can
    reported_mean = reported_sum / n_can

    # steady-state engine point at the window means
    state = operating_state(cfg.engine, plant.strategy, throttle_mean, v_mean,
                            plant.v_limit, plant.load_demand)
    heat_cut = 1.0
    if plant.strategy is Strategy.IGNITION_RETARD:
        heat_cut = overspeed_heat_factor(cfg.engine, v_mean, plant.v_limit)
    sigma = cfg.engine.cycle_noise_sigma
    cycles = [
        synthesize_pressure_trace(cfg.engine, state,
                                  heat_scale=heat_cut * (1.0 + sigma * float(rng_cycles.standard_normal())))
        for _ in range(daq.PRESSURE_CYCLES)
    ]

    # 10 Hz raw emission channels, standardized to 1 Hz inside the bundle
    n_raw = int(round(sweep.log_duration_s * daq.EMISSION_RAW_RATE_HZ))
    t_raw = (np.arange(n_raw) + 1.0) / daq.EMISSION_RAW_RATE_HZ
    true_flow = exhaust_mass_flow_components(state.air_flow_kgh, state.fuel_flow_kgh)
    readings = [efm_measure(cfg.efm, true_flow, rng_efm) for _ in range(n_raw)]
    raw = engine_out_concentrations(state.lambda_ratio, state.combustion_temp_k, cfg.emissions)
    tail = catalyst_convert(raw, state.lambda_ratio, cfg.emissions)
    emission_channels = [
        daq.Channel("massflow_kgh", daq.EMISSION_RAW_RATE_HZ, t_raw,
                    np.array([r.reading_kgh for r in readings])),
        daq.Channel("co_ppm", daq.EMISSION_RAW_RATE_HZ, t_raw, np.full(n_raw, tail.co_ppm)),
        daq.Channel("co2_pct", daq.EMISSION_RAW_RATE_HZ, t_raw, np.full(n_raw, tail.co2_pct)),
        daq.Channel("hc_ppm", daq.EMISSION_RAW_RATE_HZ, t_raw, np.full(n_raw, tail.hc_ppm)),
        daq.Channel("nox_ppm", daq.EMISSION_RAW_RATE_HZ, t_raw, np.full(n_raw, tail.nox_ppm)),
        daq.Channel("o2_pct", daq.EMISSION_RAW_RATE_HZ, t_raw, np.full(n_raw, tail.o2_pct)),
    ]

    t_can = (np.arange(n_can) + 1.0) / rate
    can_channels = [daq.Channel(name, rate, t_can, rows[name]) for name in names]
    meta = {
        "grade": f"{plant.grade:.4f}",
        "strategy": plant.strategy.value,
        "seed": str(seed),
        "settled_at_s": f"{settled_at:.2f}",
        "settled": str(settled),
    }
    bundle = None
    if settled:
        bundle = daq.log_operating_point(can_channels, emission_channels, cycles,
                                         sweep.log_duration_s, settled, meta)
        mean_trace = bundle.pressure.mean
    else:
        mean_trace = daq.ensemble_average(cycles).mean
    imep_bar = imep(mean_trace, cfg.engine)
    peak_bar, peak_angle = peak_pressure(mean_trace)
    power_w = indicated_power(max(imep_bar, 0.0), state.engine_speed_rpm, cfg.engine)

    mean_reading = float(np.mean([r.reading_kgh for r in readings]))
    efm_flag = replace(readings[0], reading_kgh=mean_reading,
                       valid=mean_reading >= cfg.efm.plausibility_floor_kgh,
                       in_range=all(r.in_range for r in readings))
    gas_k = gas_temperature_k(cfg.emissions, state.exhaust_temp_c)
    mass_gps = true_flow / 3.6
    vol_flow = exhaust_volume_flow(mass_gps, gas_k, cfg.emissions.ambient_pressure_pa,
                                   cfg.emissions.molar_mass_exhaust)
    vd = per_km_volume(vol_flow, v_mean)
    per_km = {
        "co": ppm_to_mg_per_km(tail.co_ppm, vd, gas_k, cfg.emissions.ambient_pressure_pa,
                               cfg.emissions.molar_mass_co),
        "co2": ppm_to_mg_per_km(tail.co2_pct * 1e4, vd, gas_k, cfg.emissions.ambient_pressure_pa,
                                cfg.emissions.molar_mass_co2),
        "hc": ppm_to_mg_per_km(tail.hc_ppm, vd, gas_k, cfg.emissions.ambient_pressure_pa,
                               cfg.emissions.molar_mass_hc),
        "nox": ppm_to_mg_per_km(tail.nox_ppm, vd, gas_k, cfg.emissions.ambient_pressure_pa,
                                cfg.emissions.molar_mass_nox),
    }
    record = EmissionRecord(
        grade=plant.grade, strategy=plant.strategy, mass_flow_gps=mass_gps,
        exhaust_temp_k=gas_k, composition=tail, v_kmh=v_mean, per_km=per_km,
        volume_flow_m3h=vol_flow, raw_composition=raw, efm=efm_flag,
    )
    return OperatingPoint(
        grade=plant.grade, strategy=plant.strategy, settled=settled, settled_at_s=settled_at,
        v_mean_kmh=v_mean, throttle_mean_pct=throttle_mean, throttle_reported_pct=reported_mean,
        state=state, imep_bar=imep_bar, max_avg_pressure_bar=peak_bar, peak_angle_deg=peak_angle,
        indicated_power_w=power_w, record=record, bundle=bundle, seed=seed,
    )


def run_dyno_sweep(cfg: BenchConfig, sweep: SweepConfig) -> SweepReport:
    """Approach every (grade, strategy) point statically and capture it."""
    points = []
    flags = []
    for grade in sweep.grades:
        for strategy in sweep.strategies:
            seed = _point_seed(sweep.seed, grade, strategy)
            plant = DynoPlant(cfg, strategy, grade, v_limit_kmh=sweep.v_limit_kmh)
            band = (cfg.controller.settle_band_kmh if strategy is Strategy.VELOCITY_CONTROL
                    else cfg.controller.or_settle_band_kmh)
            settled, at = plant.run_to_settle(sweep.settle_timeout_s, band)
            if not settled:
                flags.append((grade, strategy.value, "settle timeout"))
            point = _capture_point(cfg, plant, sweep, settled, at, seed)
            if not point.record.efm.usable:
                flags.append((grade, strategy.value, "EFM below plausibility floor"
                              if point.record.efm.valid is False else "EFM out of range"))
            points.append(point)

    table = {}
    for grade in sweep.grades:
        try:
            p_or = next(p for p in points if abs(p.grade - grade) < 1e-9
                        and p.strategy is Strategy.IGNITION_RETARD)
            p_vc = next(p for p in points if abs(p.grade - grade) < 1e-9
                        and p.strategy is Strategy.VELOCITY_CONTROL)
        except StopIteration:
            continue
        if not (p_or.settled and p_vc.settled):
            continue
        if not (p_or.record.efm.usable and p_vc.record.efm.usable):
            continue
        table[grade] = improvement_factors(p_or.record, p_vc.record)
    return SweepReport(points=points, improvement_table=table, invalid_flags=flags,
                       config_seed=sweep.seed)


RECORD_HEADER = ("grade,strategy,massflow_gps,exh_temp_K,co_ppm,co2_pct,hc_ppm,nox_ppm,o2_pct,"
                 "v_kmh,co_mgkm,co2_gkm,hc_mgkm,nox_mgkm,volflow_m3h")


def _record_row(rec: EmissionRecord) -> str:
    c = rec.composition
    vals = [rec.grade, rec.strategy.value, rec.mass_flow_gps, rec.exhaust_temp_k,
            c.co_ppm, c.co2_pct, c.hc_ppm, c.nox_ppm, c.o2_pct, rec.v_kmh,
            rec.per_km["co"], rec.per_km["co2"] / 1000.0, rec.per_km["hc"], rec.per_km["nox"],
            rec.volume_flow_m3h]
    return ",".join(v if isinstance(v, str) else f"{v:.9g}" for v in vals)


def grade_label(grade: float) -> str:
    sign = "m" if grade < 0 else "p"
    return f"{sign}{abs(grade) * 100:04.1f}".replace(".", "_")


def emit_report(report: SweepReport, out_dir, fmt: str = "csv") -> list:
    """Write the sweep output tree; byte-stable for a fixed seed."""
    if fmt != "csv":
        raise ConfigError(f"unsupported report format {fmt!r}")
    if not report.points:
        raise ValidationError("refusing to emit an empty report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "sweep_records.csv"
    with open(path, "w") as fh:
        fh.write(RECORD_HEADER + "\n")
        for p in report.points:
            fh.write(_record_row(p.record) + "\n")
    written.append(path)

    path = out / "engine_points.csv"
    with open(path, "w") as fh:
        fh.write("grade,strategy,ignition_offset_deg,imep_bar,max_avg_pressure_bar,indicated_power_w\n")
        for p in report.points:
            fh.write(f"{p.grade:.9g},{p.strategy.value},{p.state.ignition_offset_deg:.9g},"
                     f"{p.imep_bar:.9g},{p.max_avg_pressure_bar:.9g},{p.indicated_power_w:.9g}\n")
    written.append(path)

    path = out / "improvements.csv"
    with open(path, "w") as fh:
        fh.write("grade,mass_flow,co,co2,nox,hc\n")
        for grade in sorted(report.improvement_table):
            f = report.improvement_table[grade]
            fh.write(f"{grade:.9g},{f['mass_flow_gps']:.9g},{f['co_ppm']:.9g},"
                     f"{f['co2_pct']:.9g},{f['nox_ppm']:.9g},{f['hc_ppm']:.9g}\n")
    written.append(path)

    path = out / "per_km.csv"
    with open(path, "w") as fh:
        fh.write("grade,strategy,volflow_m3h,vd_m3km,co2_gkm,co_mgkm,hc_mgkm,nox_mgkm,"
                 "co_verdict,hc_verdict,nox_verdict\n")
        for p in report.points:
            rec = p.record
            verdicts = euro5_check(rec.per_km)
            vd = per_km_volume(rec.volume_flow_m3h, rec.v_kmh)
            fh.write(f"{rec.grade:.9g},{rec.strategy.value},{rec.volume_flow_m3h:.9g},{vd:.9g},"
                     f"{rec.per_km['co2'] / 1000.0:.9g},{rec.per_km['co']:.9g},"
                     f"{rec.per_km['hc']:.9g},{rec.per_km['nox']:.9g},"
                     f"{verdicts['co']},{verdicts['hc']},{verdicts['nox']}\n")
    written.append(path)

    path = out / "invalid_flags.csv"
    with open(path, "w") as fh:
        fh.write("grade,strategy,reason\n")
        for grade, strat, reason in report.invalid_flags:
            fh.write(f"{grade:.9g},{strat},{reason}\n")
    written.append(path)

    channels = out / "channels"
    for p in report.points:
        if p.bundle is None:
            continue
        bundle_dir = channels / f"{grade_label(p.grade)}_{p.strategy.value.lower()}"
        p.bundle.write(bundle_dir)
        written.append(bundle_dir)

    figures = out / "figures"
    figures.mkdir(exist_ok=True)
    plots.save_sweep_figure(report.points, figures / "sweep_summary.png")
    plots.save_emissions_figure(report.points, figures / "emissions.png")
    level = [p for p in report.points if abs(p.grade) < 1e-9 and p.bundle is not None]
    if level:
        plots.save_pressure_figure(level, figures / "pressure_level_ground.png")
    written.append(figures)
    return written


FIT_STANDARDIZE_HZ = 4.0   # noisy measurements are block-averaged to this rate


def run_coastdown(cfg: BenchConfig, out_dir=None, v0_kmh: float = 45.0,
                  grade_split: float = 0.0, noise_frac: float = 0.0,
                  seed: int = 0, dt_s: float = 0.01) -> CoastdownResult:
    """Two opposite runs, averaged, fitted, and reduced to (c_w, f_R).

    The regression uses the measured mean-square velocity of the two runs,
    which cancels the divergence term a pointwise average picks up under a
    quadratic load.  Noisy measurements are standardized to a coarse grid
    first; differentiating raw high-rate noise would swamp the fit.
    """
    run_a = simulate_coast_down(cfg.vehicle, cfg.curve, v0_kmh, grade=grade_split, dt_s=dt_s)
    run_b = simulate_coast_down(cfg.vehicle, cfg.curve, v0_kmh, grade=-grade_split, dt_s=dt_s)
    if noise_frac > 0.0:
        rng = np.random.default_rng(seed)
        run_a = add_velocity_noise(run_a, noise_frac, rng)
        run_b = add_velocity_noise(run_b, noise_frac, rng)
    averaged = average_opposite_runs(run_a, run_b)
    msq = mean_square_velocity(run_a, run_b)
    fit_input = averaged
    if noise_frac > 0.0:
        fit_input = standardize_series(averaged, FIT_STANDARDIZE_HZ)
        block = len(averaged) // len(fit_input)
        n = len(fit_input) * block
        msq = msq[:n].reshape(-1, block).mean(axis=1)
    fit = fit_resistance(fit_input, cfg.vehicle, squared_velocity=msq)
    cw, fr = derive_aero_rolling(fit.curve, cfg.vehicle)
    note = (f"derived c_w {cw:.3f} / f_R {fr:.4f} differ from the configured "
            f"{cfg.vehicle.drag_coeff:.3f} / {cfg.vehicle.rolling_coeff:.4f}; "
            "the fitted road-load polynomial is authoritative for the bench")
    result = CoastdownResult(
        curve=fit.curve, drag_coeff_derived=cw, rolling_coeff_derived=fr,
        drag_coeff_configured=cfg.vehicle.drag_coeff,
        rolling_coeff_configured=cfg.vehicle.rolling_coeff,
        residual_rms_n=fit.residual_rms_n, samples_used=fit.samples_used,
        clamped=fit.clamped, note=note,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        averaged.to_csv(out / "coastdown_averaged.csv")
        run_a.to_csv(out / "coastdown_run_a.csv")
        run_b.to_csv(out / "coastdown_run_b.csv")
        with open(out / "coastdown_report.csv", "w") as fh:
            fh.write("quad_coeff,const_coeff,drag_coeff_derived,rolling_coeff_derived,"
                     "drag_coeff_configured,rolling_coeff_configured,residual_rms_n,"
                     "samples_used,clamped,note\n")
            fh.write(f"{result.curve.quad_coeff:.9g},{result.curve.const_coeff:.9g},"
                     f"{cw:.9g},{fr:.9g},{cfg.vehicle.drag_coeff:.9g},"
                     f"{cfg.vehicle.rolling_coeff:.9g},{fit.residual_rms_n:.9g},"
                     f"{fit.samples_used},{'|'.join(fit.clamped)},\"{note}\"\n")
        plots.save_coastdown_figure(averaged, fit.curve, cfg.vehicle,
                                    out / "coastdown_fit.png")
    return result


def run_road_vs_dyno(cfg: BenchConfig, out_dir=None,
                     speeds_kmh: tuple = (25.0, 35.0, 45.0),
                     hold_s: float = 5.0) -> list:
    """Steady cruise throttle on the road load versus the dynamometer load.

    Both load models are the identical polynomial by design, so the columns
    should agree to within the actuator's reporting resolution.
    """
    rows = []
    for v in speeds_kmh:
        row = {"velocity_kmh": v}
        for kind in ("road", "dyno"):
            plant = DynoPlant(cfg, Strategy.VELOCITY_CONTROL, 0.0, setpoint_kmh=v)
            settled, _ = plant.run_to_settle(cfg.controller.settle_timeout_s,
                                             cfg.controller.settle_band_kmh)
            if not settled:
                raise SimulationError(f"cruise at {v} km/h did not settle on the {kind} load")
            n = int(round(hold_s * cfg.controller.control_rate_hz))
            reported = []
            for _ in range(n):
                plant.step()
                reported.append(plant.throttle_reported_pct)
            row[f"tvp_{kind}_pct"] = float(np.mean(reported))
        rows.append(row)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "road_vs_dyno.csv", "w") as fh:
            fh.write("velocity_kmh,tvp_road_pct,tvp_dyno_pct\n")
            for row in rows:
                fh.write(f"{row['velocity_kmh']:.9g},{row['tvp_road_pct']:.9g},"
                         f"{row['tvp_dyno_pct']:.9g}\n")
    return rows
