"""Config file handling: `key = value` sections mapped onto the calibration types.

The shipped default.cfg mirrors the dataclass defaults exactly; loading with
no path gives the factory calibration.  Map-valued fields serialize as
comma-separated `x:y` pairs.
"""

from __future__ import annotations

import configparser
import importlib.resources
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .control import PiController, TbwActuator
from .emissions import CatalystCurve, EfmModel, EmissionCalibration
from .errors import ConfigError
from .powertrain import EngineCalibration
from .vehicle import ResistanceCurve, VehicleParams

DEFAULT_RESOURCE = "default.cfg"


@dataclass(frozen=True)
class ControllerConfig:
    """Velocity-control loop and test-protocol knobs."""

    kp: float = 12.0
    ki: float = 10.0
    setpoint_kmh: float = 48.7
    output_min: float = 0.0
    output_max: float = 100.0
    gain_schedule: tuple = ((0.5, 8.0, 5.0), (math.inf, 12.0, 10.0))
    actuator_response_s: float = 0.06
    actuator_accuracy: float = 0.9963
    control_rate_hz: float = 20.0
    settle_window_s: float = 5.0
    settle_band_kmh: float = 0.2
    or_settle_band_kmh: float = 0.5   # the retard strategy fluctuates; wider band
    settle_timeout_s: float = 60.0
    log_duration_s: float = 10.0
    v_limit_kmh: float = 48.7
    retard_full_load_grade: float = 0.02

    def make_controller(self) -> PiController:
        return PiController(
            kp=self.kp, ki=self.ki, setpoint_kmh=self.setpoint_kmh,
            output_min=self.output_min, output_max=self.output_max,
            gain_schedule=self.gain_schedule,
        )

    def make_actuator(self, position_pct: float = 0.0) -> TbwActuator:
        return TbwActuator(
            position_pct=position_pct,
            response_time_s=self.actuator_response_s,
            accuracy=self.actuator_accuracy,
        )


@dataclass(frozen=True)
class BenchConfig:
    """Everything one experiment run needs."""

    vehicle: VehicleParams = VehicleParams()
    curve: ResistanceCurve = ResistanceCurve(0.015, 41.65)
    engine: EngineCalibration = EngineCalibration()
    controller: ControllerConfig = ControllerConfig()
    emissions: EmissionCalibration = EmissionCalibration()
    efm: EfmModel = EfmModel()


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_fmt_pair(item) for item in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _fmt_pair(item) -> str:
    if isinstance(item, tuple):
        return ":".join(_fmt_scalar(x) for x in item)
    return _fmt_scalar(item)


def _fmt_scalar(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _parse_pairs(text: str) -> tuple:
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = [p.strip() for p in chunk.split(":")]
        pairs.append(tuple(_parse_float(p) for p in parts))
    if not pairs:
        raise ConfigError(f"empty map value: {text!r}")
    return tuple(pairs)


def _parse_euro5(text: str) -> tuple:
    out = []
    for chunk in text.split(","):
        name, _, limit = chunk.strip().partition(":")
        if not limit:
            raise ConfigError(f"bad limit entry {chunk!r}")
        out.append((name.strip(), _parse_float(limit)))
    return tuple(out)


def _parse_curve(text: str) -> CatalystCurve:
    parts = [p.strip() for p in text.split(":")]
    if len(parts) != 5 or parts[4] not in ("rising", "falling"):
        raise ConfigError(f"catalyst curve must be lo:hi:center:width:rising|falling, got {text!r}")
    lo, hi, center, width = (_parse_float(p) for p in parts[:4])
    return CatalystCurve(lo, hi, center, width, rising=(parts[4] == "rising"))


def _fmt_curve(curve: CatalystCurve) -> str:
    kind = "rising" if curve.rising else "falling"
    return f"{curve.low!r}:{curve.high!r}:{curve.center!r}:{curve.width!r}:{kind}"


_VEHICLE_EXTRA = ("resistance_quad", "resistance_const")
_SKIP_ENGINE = ()
_CURVE_FIELDS = ("co_curve", "hc_curve", "nox_curve")


def _section_from_dataclass(obj) -> dict:
    out = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, CatalystCurve):
            out[f.name] = _fmt_curve(value)
        elif f.name == "euro5_limits_mgkm":
            out[f.name] = ", ".join(f"{k}:{_fmt_scalar(v)}" for k, v in value)
        else:
            out[f.name] = _fmt(value)
    return out


def _dataclass_from_section(cls, section, defaults):
    kwargs = {}
    for f in fields(defaults):
        if f.name not in section:
            continue
        raw = section[f.name]
        current = getattr(defaults, f.name)
        if f.name in _CURVE_FIELDS:
            kwargs[f.name] = _parse_curve(raw)
        elif f.name == "euro5_limits_mgkm":
            kwargs[f.name] = _parse_euro5(raw)
        elif isinstance(current, tuple):
            kwargs[f.name] = _parse_pairs(raw)
        elif isinstance(current, float):
            kwargs[f.name] = _parse_float(raw)
        elif isinstance(current, int):
            kwargs[f.name] = int(_parse_float(raw))
        else:
            kwargs[f.name] = raw
    unknown = set(section) - {f.name for f in fields(defaults)} - set(_VEHICLE_EXTRA)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in section [{_section_name(cls)}]")
    try:
        return replace(defaults, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{_section_name(cls)}] values: {exc}") from exc


_SECTIONS = {
    VehicleParams: "vehicle",
    EngineCalibration: "engine",
    ControllerConfig: "controller",
    EmissionCalibration: "emissions",
    EfmModel: "efm",
}


def _section_name(cls) -> str:
    return _SECTIONS.get(cls, cls.__name__.lower())


def save_config(cfg: BenchConfig, path) -> None:
    parser = configparser.ConfigParser()
    parser["vehicle"] = _section_from_dataclass(cfg.vehicle)
    parser["vehicle"]["resistance_quad"] = repr(cfg.curve.quad_coeff)
    parser["vehicle"]["resistance_const"] = repr(cfg.curve.const_coeff)
    parser["engine"] = _section_from_dataclass(cfg.engine)
    parser["controller"] = _section_from_dataclass(cfg.controller)
    parser["emissions"] = _section_from_dataclass(cfg.emissions)
    parser["efm"] = _section_from_dataclass(cfg.efm)
    with open(path, "w") as fh:
        parser.write(fh)


def load_config(path=None) -> BenchConfig:
    """Load a bench configuration; None gives the packaged defaults."""
    parser = configparser.ConfigParser()
    if path is None:
        text = importlib.resources.files("scooterbench").joinpath(DEFAULT_RESOURCE).read_text()
        parser.read_string(text)
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc

    expected = {"vehicle", "engine", "controller", "emissions", "efm"}
    unknown = set(parser.sections()) - expected
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    def section(name):
        return dict(parser[name]) if parser.has_section(name) else {}

    veh_section = section("vehicle")
    quad = _parse_float(veh_section.pop("resistance_quad", "0.015"))
    const = _parse_float(veh_section.pop("resistance_const", "41.65"))
    try:
        curve = ResistanceCurve(quad, const)
    except Exception as exc:
        raise ConfigError(f"invalid resistance curve: {exc}") from exc
    vehicle = _dataclass_from_section(VehicleParams, veh_section, VehicleParams())
    engine = _dataclass_from_section(EngineCalibration, section("engine"), EngineCalibration())
    controller = _dataclass_from_section(ControllerConfig, section("controller"), ControllerConfig())
    emis = _dataclass_from_section(EmissionCalibration, section("emissions"), EmissionCalibration())
    efm = _dataclass_from_section(EfmModel, section("efm"), EfmModel())
    return BenchConfig(vehicle=vehicle, curve=curve, engine=engine,
                       controller=controller, emissions=emis, efm=efm)
