"""Longitudinal point-mass model, road-load polynomial and coast-down identification.

Velocities are km/h at every public interface; internal integration runs in
m/s.  The road load is the usual quadratic polynomial F(v) = a*v^2 + c with
the quadratic coefficient expressed in N per (km/h)^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ConfigError, FitError, ValidationError

GRAVITY = 9.81  # m/s^2
MS_PER_KMH = 1.0 / 3.6

COAST_STOP_KMH = 1.0     # coast-down runs end once the vehicle is this slow
COAST_MAX_TIME_S = 600.0


@dataclass(frozen=True)
class VehicleParams:
    """Static vehicle data used by the load model and the fits.

    tyre_pressure_bar is recorded for the test protocol only; no model term
    depends on it.
    """

    frontal_area_m2: float = 0.78
    tyre_pressure_bar: float = 2.3
    inertia_factor: float = 1.04       # rotating-mass factor on the vehicle mass
    mass_scooter_kg: float = 99.0
    mass_rider_kg: float = 80.0
    air_density_kgm3: float = 1.232
    drag_coeff: float = 0.7
    rolling_coeff: float = 0.031

    def __post_init__(self):
        if self.mass_scooter_kg <= 0 or self.mass_rider_kg <= 0:
            raise ConfigError("vehicle masses must be positive")
        if self.frontal_area_m2 <= 0:
            raise ConfigError("frontal area must be positive")
        if self.air_density_kgm3 <= 0:
            raise ConfigError("air density must be positive")
        if self.inertia_factor < 1.0:
            raise ConfigError("inertia factor must be >= 1")

    @property
    def total_mass_kg(self) -> float:
        return self.mass_scooter_kg + self.mass_rider_kg

    @property
    def effective_mass_kg(self) -> float:
        """Translating-equivalent mass including rotating parts."""
        return self.inertia_factor * self.total_mass_kg


@dataclass(frozen=True)
class ResistanceCurve:
    """Road load F(v) = quad_coeff * v^2 + const_coeff, v in km/h, F in N."""

    quad_coeff: float
    const_coeff: float

    def __post_init__(self):
        if self.quad_coeff < 0 or self.const_coeff < 0:
            raise ConfigError("resistance coefficients must be non-negative")


@dataclass(frozen=True)
class PathTimeSeries:
    """Sampled trajectory of one run: time (s), velocity (km/h), distance (m)."""

    time_s: np.ndarray
    velocity_kmh: np.ndarray
    distance_m: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.time_s, dtype=float)
        v = np.asarray(self.velocity_kmh, dtype=float)
        s = np.asarray(self.distance_m, dtype=float)
        if not (t.shape == v.shape == s.shape) or t.ndim != 1:
            raise ValidationError("time, velocity and distance must be 1-d arrays of equal length")
        if t.size >= 2 and np.any(np.diff(t) <= 0):
            raise ValidationError("time must be strictly increasing")
        if np.any(v < 0):
            raise ValidationError("velocity must be non-negative")
        if s.size >= 2 and np.any(np.diff(s) < -1e-9):
            raise ValidationError("distance must be non-decreasing")
        object.__setattr__(self, "time_s", t)
        object.__setattr__(self, "velocity_kmh", v)
        object.__setattr__(self, "distance_m", s)

    def __len__(self) -> int:
        return self.time_s.size

    def to_csv(self, path) -> None:
        header = "time_s,velocity_kmh,distance_m"
        data = np.column_stack([self.time_s, self.velocity_kmh, self.distance_m])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.9g")

    @classmethod
    def from_csv(cls, path) -> "PathTimeSeries":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2])


@dataclass(frozen=True)
class ResistanceFit:
    """Least-squares identification result, including clamp diagnostics."""

    curve: ResistanceCurve
    clamped: tuple[str, ...]
    residual_rms_n: float
    samples_used: int


def resistance_force(curve: ResistanceCurve, v_kmh: float) -> float:
    """Road-load force in N at velocity v (km/h)."""
    v = np.asarray(v_kmh, dtype=float)
    if np.any(v < 0):
        raise DomainError("velocity must be non-negative")
    force = curve.quad_coeff * v * v + curve.const_coeff
    return float(force) if np.isscalar(v_kmh) or v.ndim == 0 else force


def grade_force(params: VehicleParams, grade: float) -> float:
    """Gravity component along the road for a grade given as rise/run.

    Positive means resisting (uphill).  Uses the exact sin(atan(g)) rather
    than the small-angle form.
    """
    if abs(grade) >= 0.5:
        raise DomainError("grade magnitude must be below 0.5")
    return params.total_mass_kg * GRAVITY * math.sin(math.atan(grade))


def simulate_coast_down(
    params: VehicleParams,
    curve: ResistanceCurve,
    v0_kmh: float,
    grade: float = 0.0,
    dt_s: float = 0.01,
) -> PathTimeSeries:
    """Integrate an unpowered deceleration from v0 until ~stand-still.

    Classic RK4 at a fixed step.  The run ends when velocity drops to
    1 km/h or after 600 s, whichever comes first.
    """
    if not (0.0 < dt_s <= 0.1):
        raise ConfigError("dt must be in (0, 0.1] s")
    if v0_kmh <= 0:
        raise DomainError("initial velocity must be positive")

    m_eff = params.effective_mass_kg
    f_grade = grade_force(params, grade)

    def accel(v_ms: float) -> float:
        v_kmh = max(v_ms, 0.0) / MS_PER_KMH
        return -(resistance_force(curve, v_kmh) + f_grade) / m_eff

    times = [0.0]
    vels = [v0_kmh]
    dists = [0.0]
    t = 0.0
    v = v0_kmh * MS_PER_KMH
    s = 0.0
    while v > COAST_STOP_KMH * MS_PER_KMH and t < COAST_MAX_TIME_S:
        # RK4 on the state (v, s)
        k1v = accel(v)
        k1s = v
        k2v = accel(v + 0.5 * dt_s * k1v)
        k2s = v + 0.5 * dt_s * k1v
        k3v = accel(v + 0.5 * dt_s * k2v)
        k3s = v + 0.5 * dt_s * k2v
        k4v = accel(v + dt_s * k3v)
        k4s = v + dt_s * k3v
        v = v + dt_s / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        s = s + dt_s / 6.0 * (k1s + 2 * k2s + 2 * k3s + k4s)
        t = t + dt_s
        v = max(v, 0.0)
        times.append(t)
        vels.append(v / MS_PER_KMH)
        dists.append(s)
    return PathTimeSeries(np.array(times), np.array(vels), np.array(dists))


def _common_grid(run_a: PathTimeSeries, run_b: PathTimeSeries):
    if abs(run_a.velocity_kmh[0] - run_b.velocity_kmh[0]) > 1.0:
        raise ValidationError("runs must start within 1 km/h of the same velocity")
    t_end = min(run_a.time_s[-1], run_b.time_s[-1])
    mask = run_a.time_s <= t_end + 1e-12
    t = run_a.time_s[mask]
    v_a = run_a.velocity_kmh[mask]
    s_a = run_a.distance_m[mask]
    v_b = np.interp(t, run_b.time_s, run_b.velocity_kmh)
    s_b = np.interp(t, run_b.time_s, run_b.distance_m)
    return t, v_a, v_b, s_a, s_b


def average_opposite_runs(run_a: PathTimeSeries, run_b: PathTimeSeries) -> PathTimeSeries:
    """Average two runs driven in opposite directions on the same stretch.

    Both channels are resampled onto run_a's time grid (clipped to the
    common duration) and averaged pointwise, which cancels a constant
    grade to first order.
    """
    t, v_a, v_b, s_a, s_b = _common_grid(run_a, run_b)
    return PathTimeSeries(t, 0.5 * (v_a + v_b), 0.5 * (s_a + s_b))


def mean_square_velocity(run_a: PathTimeSeries, run_b: PathTimeSeries) -> np.ndarray:
    """(v_a^2 + v_b^2)/2 on the averaged series' grid.

    The pointwise run average under a quadratic load sees the mean of the
    squares, not the square of the mean; regressing against this channel
    removes that divergence term exactly.
    """
    _, v_a, v_b, _, _ = _common_grid(run_a, run_b)
    return 0.5 * (v_a * v_a + v_b * v_b)


def standardize_series(series: PathTimeSeries, target_rate_hz: float) -> PathTimeSeries:
    """Block-average a fine series down to the given rate (timestamped at centers)."""
    if len(series) < 2:
        return series
    dt = float(series.time_s[1] - series.time_s[0])
    block = max(1, int(round(1.0 / (target_rate_hz * dt))))
    if block == 1:
        return series
    n = (len(series) // block) * block
    if n < 2 * block:
        return series
    shape = (-1, block)
    return PathTimeSeries(
        series.time_s[:n].reshape(shape).mean(axis=1),
        series.velocity_kmh[:n].reshape(shape).mean(axis=1),
        series.distance_m[:n].reshape(shape).mean(axis=1),
    )


def fit_resistance(
    series: PathTimeSeries, params: VehicleParams, squared_velocity: np.ndarray | None = None
) -> ResistanceFit:
    """Identify (quad_coeff, const_coeff) from a coast-down trajectory.

    Acceleration is estimated by central differences on the velocity
    channel (endpoints dropped), converted to force through the effective
    mass, and regressed against (v^2, 1) by ordinary least squares.
    Negative coefficients are clamped to zero and reported.

    squared_velocity optionally replaces the v^2 regressor (same grid as
    the series); an averaged opposite-run pair should pass its measured
    mean-square channel here, see mean_square_velocity.
    """
    if len(series) < 20:
        raise FitError("need at least 20 samples for a resistance fit")
    v_kmh = series.velocity_kmh
    span = float(v_kmh.max() - v_kmh.min())
    if span < 15.0 - 1e-9:
        raise FitError(f"velocity span {span:.1f} km/h is too small (need >= 15)")

    t = series.time_s
    v_ms = v_kmh * MS_PER_KMH
    accel = (v_ms[2:] - v_ms[:-2]) / (t[2:] - t[:-2])
    if squared_velocity is None:
        v_sq = (v_kmh * v_kmh)[1:-1]
    else:
        squared_velocity = np.asarray(squared_velocity, dtype=float)
        if squared_velocity.shape != v_kmh.shape:
            raise ValidationError("squared_velocity must match the series grid")
        v_sq = squared_velocity[1:-1]
    force = -params.effective_mass_kg * accel

    design = np.column_stack([v_sq, np.ones_like(v_sq)])
    coeffs, *_ = np.linalg.lstsq(design, force, rcond=None)
    quad, const = float(coeffs[0]), float(coeffs[1])

    clamped = []
    if quad < 0:
        quad, clamped = 0.0, clamped + ["quad_coeff"]
    if const < 0:
        const, clamped = 0.0, clamped + ["const_coeff"]
    residual = force - (quad * v_sq + const)
    return ResistanceFit(
        curve=ResistanceCurve(quad, const),
        clamped=tuple(clamped),
        residual_rms_n=float(np.sqrt(np.mean(residual**2))),
        samples_used=v_sq.size,
    )


def fit_resistance_curve(series: PathTimeSeries, params: VehicleParams) -> ResistanceCurve:
    return fit_resistance(series, params).curve


def derive_aero_rolling(curve: ResistanceCurve, params: VehicleParams) -> tuple[float, float]:
    """Back out (drag coefficient, rolling coefficient) from a fitted curve.

    The quadratic term carries km/h units, hence the 3.6^2 factor.
    """
    c_w = 2.0 * curve.quad_coeff * 3.6**2 / (params.air_density_kgm3 * params.frontal_area_m2)
    f_r = curve.const_coeff / (params.total_mass_kg * GRAVITY)
    return c_w, f_r


def curve_from_aero_rolling(c_w: float, f_r: float, params: VehicleParams) -> ResistanceCurve:
    """Algebraic inverse of derive_aero_rolling."""
    quad = 0.5 * params.air_density_kgm3 * c_w * params.frontal_area_m2 / 3.6**2
    const = f_r * params.total_mass_kg * GRAVITY
    return ResistanceCurve(quad, const)


def add_velocity_noise(
    series: PathTimeSeries, sigma_frac: float, rng: np.random.Generator
) -> PathTimeSeries:
    """Apply multiplicative Gaussian noise to the velocity channel.

    The first sample is the capture trigger at the known start speed and is
    left untouched, so opposite runs still pair up.
    """
    factor = 1.0 + sigma_frac * rng.standard_normal(len(series))
    factor[0] = 1.0
    noisy = series.velocity_kmh * factor
    return PathTimeSeries(series.time_s, np.clip(noisy, 0.0, None), series.distance_m)
