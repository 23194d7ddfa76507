"""Multi-rate channel capture, crank-tick processing and cycle averaging."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ValidationError
from .powertrain import CYCLE_SAMPLES, PressureTrace

CAN_RATE_HZ = 20.0
EMISSION_RAW_RATE_HZ = 10.0
PRESSURE_CYCLES = 60
ENCODER_RESOLUTION = 1024

# narrowband sensor: high voltage is rich; anchored at 0.45 V = stoichiometric
DEFAULT_LAMBDA_TABLE = (
    (0.0, 1.10),
    (0.10, 1.05),
    (0.30, 1.02),
    (0.45, 1.00),
    (0.60, 0.99),
    (0.80, 0.97),
    (1.00, 0.90),
)


@dataclass(frozen=True)
class Channel:
    """One uniformly sampled logging channel."""

    name: str
    rate_hz: float
    time_s: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.time_s, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValidationError("channel time and values must be 1-d arrays of equal length")
        if t.size >= 2:
            dt = np.diff(t)
            if np.any(dt <= 0):
                raise ValidationError("channel time must be strictly increasing")
            if np.any(np.abs(dt - 1.0 / self.rate_hz) > 1e-9):
                raise ValidationError(f"channel '{self.name}' is not uniform at {self.rate_hz} Hz")
        object.__setattr__(self, "time_s", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.time_s.size


@dataclass(frozen=True)
class CrankTickStream:
    """Timestamps of encoder edges, one per angular step."""

    ticks_s: np.ndarray
    resolution: int = ENCODER_RESOLUTION

    def __post_init__(self):
        t = np.asarray(self.ticks_s, dtype=float)
        if t.ndim != 1:
            raise ValidationError("ticks must form a 1-d array")
        if t.size >= 2 and np.any(np.diff(t) <= 0):
            raise ValidationError("tick intervals must be positive")
        if self.resolution != ENCODER_RESOLUTION:
            raise ValidationError(f"encoder resolution must be {ENCODER_RESOLUTION}")
        object.__setattr__(self, "ticks_s", t)


def min_sampling_rate(resolution: int, engine_speed_rpm: float) -> float:
    """Nyquist-minimum DAQ rate to resolve every encoder step (Hz)."""
    if resolution <= 0 or engine_speed_rpm < 0:
        raise DomainError("resolution must be positive and speed non-negative")
    tick_rate = resolution * engine_speed_rpm / 60.0
    return 2.0 * tick_rate


def engine_speed_from_ticks(stream: CrankTickStream, window_s: float) -> float:
    """Engine speed (rpm) from the ticks falling inside the trailing window."""
    if window_s <= 0:
        raise DomainError("window must be positive")
    ticks = stream.ticks_s
    if ticks.size == 0:
        return 0.0
    t_end = ticks[-1]
    inside = ticks[ticks >= t_end - window_s]
    if inside.size < 2:
        return 0.0
    elapsed = inside[-1] - inside[0]
    if elapsed <= 0:
        return 0.0
    return 60.0 * (inside.size - 1) / (elapsed * stream.resolution)


def lambda_lookup(voltage_v: float, table=DEFAULT_LAMBDA_TABLE) -> tuple[float, bool]:
    """Monotone-decreasing interpolation of the sensor voltage to lambda.

    Returns (lambda, clamped); out-of-domain voltages are clamped to the
    table ends and flagged.
    """
    volts = np.array([p[0] for p in table], dtype=float)
    lams = np.array([p[1] for p in table], dtype=float)
    clamped = bool(voltage_v < volts[0] or voltage_v > volts[-1])
    value = float(np.interp(np.clip(voltage_v, volts[0], volts[-1]), volts, lams))
    return value, clamped


@dataclass(frozen=True)
class EnsembleStats:
    """Pointwise mean trace and spread of a stack of pressure cycles."""

    mean: PressureTrace
    std_bar: np.ndarray
    count: int


def ensemble_average(traces: list, n: int | None = None) -> EnsembleStats:
    """Average TDC-aligned cycles pointwise; also reports the per-point std.

    All traces must share the fixed crank grid.  Alignment is by index:
    synthesized cycles are already phased to TDC.
    """
    if not traces:
        raise ValidationError("need at least one trace to average")
    if n is not None and n != len(traces):
        raise ValidationError(f"declared cycle count {n} != {len(traces)} traces given")
    grid = traces[0].crank_angle_deg
    for tr in traces[1:]:
        if not np.array_equal(tr.crank_angle_deg, grid):
            raise ValidationError("traces use mixed crank grids")
    stack = np.vstack([tr.pressure_bar for tr in traces])
    mean = stack.mean(axis=0)
    std = stack.std(axis=0, ddof=0)
    return EnsembleStats(mean=PressureTrace(grid.copy(), mean), std_bar=std, count=len(traces))


def decimate_to_1hz(raw: Channel) -> Channel:
    """Reduce a 10 Hz channel to 1 Hz block means stamped at block end."""
    if abs(raw.rate_hz - EMISSION_RAW_RATE_HZ) > 1e-9:
        raise ValidationError(f"decimation expects a {EMISSION_RAW_RATE_HZ:.0f} Hz input channel")
    block = int(EMISSION_RAW_RATE_HZ)
    n_blocks = len(raw) // block
    if n_blocks == 0:
        raise ValidationError("need at least one full second of samples")
    values = raw.values[: n_blocks * block].reshape(n_blocks, block).mean(axis=1)
    times = raw.time_s[block - 1 :: block][:n_blocks]
    return Channel(name=raw.name, rate_hz=1.0, time_s=times, values=values)


@dataclass(frozen=True)
class LogBundle:
    """Everything captured at one settled operating point."""

    can_channels: tuple          # Channel objects at 20 Hz
    emission_channels: tuple     # Channel objects at 1 Hz
    pressure: EnsembleStats
    meta: dict                   # grade, strategy, seed, settled_at_s, ...

    def write(self, directory) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        _write_channels_csv(out / "can_20hz.csv", self.can_channels)
        _write_channels_csv(out / "emissions_1hz.csv", self.emission_channels)
        self.pressure.mean.to_csv(out / "pressure_mean.csv")
        np.savetxt(
            out / "pressure_std.csv",
            np.column_stack([self.pressure.mean.crank_angle_deg, self.std_bar]),
            delimiter=",", header="crank_deg,pressure_std_bar", comments="", fmt="%.9g",
        )
        with open(out / "meta.txt", "w") as fh:
            for key in sorted(self.meta):
                fh.write(f"{key}={self.meta[key]}\n")

    @property
    def std_bar(self) -> np.ndarray:
        return self.pressure.std_bar


def _write_channels_csv(path, channels) -> None:
    if not channels:
        raise ValidationError("cannot write an empty channel group")
    base = channels[0].time_s
    for ch in channels:
        if len(ch) != len(base):
            raise ValidationError("channel group lengths differ")
    header = "time_s," + ",".join(ch.name for ch in channels)
    data = np.column_stack([base] + [ch.values for ch in channels])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.9g")


def log_operating_point(
    can_channels: list,
    emission_raw_channels: list,
    pressure_cycles: list,
    duration_s: float,
    settled: bool,
    meta: dict,
) -> LogBundle:
    """Bundle one static point: 20 Hz CAN set, 1 Hz emissions, cycle ensemble.

    Refuses unsettled points.  The emission channels come in at the 10 Hz raw
    rate and are standardized to 1 Hz here.
    """
    if not settled:
        raise ValidationError("operating point is not settled; refusing to log")
    expected_can = int(round(duration_s * CAN_RATE_HZ))
    for ch in can_channels:
        if abs(ch.rate_hz - CAN_RATE_HZ) > 1e-9:
            raise ValidationError(f"CAN channel '{ch.name}' must run at {CAN_RATE_HZ:.0f} Hz")
        if len(ch) != expected_can:
            raise ValidationError(
                f"CAN channel '{ch.name}' holds {len(ch)} samples, expected {expected_can}"
            )
    emission_1hz = tuple(decimate_to_1hz(ch) for ch in emission_raw_channels)
    stats = ensemble_average(pressure_cycles, len(pressure_cycles))
    return LogBundle(
        can_channels=tuple(can_channels),
        emission_channels=emission_1hz,
        pressure=stats,
        meta=dict(meta),
    )
