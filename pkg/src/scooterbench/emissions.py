"""Exhaust flow, raw-gas formation, three-way catalyst and per-km accounting.

Concentrations follow the instrument conventions: CO, HC and NOx in ppm,
CO2 and O2 in volume percent.  HC is counted on a propane basis, NOx on an
NO2 mass basis.  The raw-gas model is phenomenological: smooth logistic and
Arrhenius-flavoured terms whose constants are solved by the factory
calibration so that the stock level-ground operating points land on the
reference tailpipe measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError
from .powertrain import Strategy

R_GAS = 8.314462618          # J/(mol K)
POLLUTANT_SUM_LIMIT_PCT = 2.0


@dataclass(frozen=True)
class GasComposition:
    """Volumetric exhaust composition at one operating point."""

    co_ppm: float
    co2_pct: float
    hc_ppm: float
    nox_ppm: float
    o2_pct: float

    def __post_init__(self):
        for name in ("co_ppm", "co2_pct", "hc_ppm", "nox_ppm", "o2_pct"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        if self.co2_pct > 20.0:
            raise ValidationError("co2_pct above 20 % is not a plausible exhaust")
        if self.pollutant_sum_pct > POLLUTANT_SUM_LIMIT_PCT:
            raise ValidationError("pollutants exceed 2 % of the exhaust volume")

    @property
    def pollutant_sum_pct(self) -> float:
        return (self.co_ppm + self.hc_ppm + self.nox_ppm) * 1e-4

    def carbon_pct(self, hc_carbon_number: float = 3.0) -> float:
        """Total carbon as volume percent of CO2 equivalents."""
        return self.co2_pct + self.co_ppm * 1e-4 + hc_carbon_number * self.hc_ppm * 1e-4


@dataclass(frozen=True)
class EfmModel:
    """Differential-pressure exhaust flow meter with a plausibility floor."""

    range_min_kgh: float = 12.5
    range_max_kgh: float = 900.0
    plausibility_floor_kgh: float = 7.9
    noise_rms_kgh: float = 0.1

    def __post_init__(self):
        if not (self.plausibility_floor_kgh < self.range_min_kgh < self.range_max_kgh):
            raise ValidationError("EFM requires floor < range_min < range_max")


@dataclass(frozen=True)
class EfmReading:
    reading_kgh: float
    valid: bool       # above the plausibility floor
    in_range: bool    # inside the instrument range (reading clamped otherwise)

    @property
    def usable(self) -> bool:
        return self.valid and self.in_range


@dataclass(frozen=True)
class CatalystCurve:
    """Logistic conversion-efficiency curve over lambda for one species.

    rising=True gives oxidation behaviour (poor rich, good lean); False gives
    reduction behaviour (good rich, collapsing lean).
    """

    low: float
    high: float
    center: float
    width: float
    rising: bool = True

    def __call__(self, lam: float) -> float:
        s = 1.0 / (1.0 + math.exp(-(lam - self.center) / self.width))
        if self.rising:
            return self.low + (self.high - self.low) * s
        return self.high - (self.high - self.low) * s


@dataclass(frozen=True)
class EmissionCalibration:
    """Raw-gas constants, catalyst curves and gas-equation bookkeeping."""

    # total carbon in the exhaust, volume % of CO2 equivalents, linear in lambda
    carbon_total_base_pct: float = 12.410104
    carbon_total_slope_pct: float = 0.338471  # per (lambda - 0.99) * 100

    # raw CO / HC: amplitude at (lambda = 0.99, T = 2200 K), exponential slopes
    co_amp_ppm: float = 17874.74177
    co_lambda_slope: float = 0.34           # per (lambda - 0.99) * 100
    co_temp_slope: float = 0.299937            # per (T - 2200)/100
    co_cap_ppm: float = 17000.0
    hc_amp_ppm: float = 57.27321
    hc_lambda_slope: float = 0.15
    hc_temp_slope: float = 0.049218
    hc_cap_ppm: float = 800.0

    # raw NOx: Arrhenius-like in temperature, mildly peaking slightly lean
    nox_amp_ppm: float = 493.7035
    nox_theta: float = 6.48999                  # on (2200/T - 1)
    nox_lambda_slope: float = 0.30          # per (lambda - 0.99) * 100
    nox_lean_peak_lambda: float = 1.05
    nox_lean_width: float = 0.03
    nox_cap_ppm: float = 2200.0

    # raw O2, volume percent, linear in lambda
    o2_base_pct: float = 1.317121              # at lambda = 0.99
    o2_slope_pct: float = 0.309377            # per (lambda - 0.99) * 100

    co_curve: CatalystCurve = CatalystCurve(0.55, 0.97, 0.9845, 0.0028, rising=True)
    hc_curve: CatalystCurve = CatalystCurve(0.875, 0.940, 0.988, 0.004, rising=True)
    nox_curve: CatalystCurve = CatalystCurve(0.30, 0.970, 1.0065, 0.0022, rising=False)

    hc_carbon_number: float = 3.0
    molar_mass_co: float = 0.028
    molar_mass_co2: float = 0.044
    molar_mass_hc: float = 0.044            # propane
    molar_mass_nox: float = 0.046           # NO2 basis
    molar_mass_exhaust: float = 0.02838     # from the 71/14/13 N2/CO2/H2O split

    ambient_pressure_pa: float = 101325.0
    gas_temp_floor_k: float = 393.15
    gas_temp_coupling: float = 0.1164027

    euro5_limits_mgkm: tuple = (("co", 1000.0), ("hc", 100.0), ("nox", 60.0))

    def euro5_limit(self, pollutant: str) -> float:
        return dict(self.euro5_limits_mgkm)[pollutant]


@dataclass(frozen=True)
class EmissionRecord:
    """Tailpipe result for one (grade, strategy) operating point."""

    grade: float
    strategy: Strategy
    mass_flow_gps: float
    exhaust_temp_k: float
    composition: GasComposition
    v_kmh: float
    per_km: dict
    volume_flow_m3h: float
    raw_composition: GasComposition | None = None
    efm: EfmReading | None = None

    def __post_init__(self):
        if self.mass_flow_gps < 0:
            raise ValidationError("mass flow must be non-negative")
        if any(v < 0 for v in self.per_km.values()):
            raise ValidationError("per-km values must be non-negative")


def exhaust_mass_flow_eq2(
    fuel_con_lph: float, fuel_density_kgl: float, lam: float, stoich_afr: float = 14.7
) -> float:
    """Exhaust mass flow (kg/h) estimated from fuel consumption alone."""
    if fuel_con_lph < 0 or fuel_density_kgl < 0 or lam < 0:
        raise DomainError("inputs must be non-negative")
    return (fuel_con_lph * fuel_density_kgl) * (1.0 + stoich_afr * lam)


def exhaust_mass_flow_components(air_flow_kgh: float, fuel_flow_kgh: float) -> float:
    """Exhaust mass flow as the sum of aspirated air and injected fuel."""
    if air_flow_kgh < 0 or fuel_flow_kgh < 0:
        raise DomainError("inputs must be non-negative")
    return air_flow_kgh + fuel_flow_kgh


def efm_measure(model: EfmModel, true_flow_kgh: float, rng: np.random.Generator) -> EfmReading:
    """Simulated flow-meter sample: seeded Gaussian noise plus range handling."""
    if true_flow_kgh < 0:
        raise DomainError("flow must be non-negative")
    reading = true_flow_kgh + model.noise_rms_kgh * float(rng.standard_normal())
    in_range = reading <= model.range_max_kgh
    reading = min(reading, model.range_max_kgh)
    reading = max(reading, 0.0)
    valid = reading >= model.plausibility_floor_kgh
    return EfmReading(reading_kgh=reading, valid=valid, in_range=in_range)


def _soft_cap(value: float, cap: float) -> float:
    """Smooth saturation that preserves strict monotonicity below the cap."""
    return cap * (1.0 - math.exp(-value / cap))


def invert_soft_cap(target: float, cap: float) -> float:
    if not (0.0 <= target < cap):
        raise DomainError("target must lie below the cap")
    return -cap * math.log(1.0 - target / cap)


def engine_out_concentrations(
    lam: float, combustion_temp_k: float, calib: EmissionCalibration
) -> GasComposition:
    """Raw (pre-catalyst) gas composition at one operating point."""
    if not (0.9 <= lam <= 1.1):
        raise DomainError("lambda must lie within [0.9, 1.1]")
    if not (1500.0 <= combustion_temp_k <= 3000.0):
        raise DomainError("combustion temperature must lie within [1500, 3000] K")
    dl = (lam - 0.99) * 100.0
    dt = (combustion_temp_k - 2200.0) / 100.0

    co = _soft_cap(calib.co_amp_ppm * math.exp(-calib.co_lambda_slope * dl - calib.co_temp_slope * dt),
                   calib.co_cap_ppm)
    hc = _soft_cap(calib.hc_amp_ppm * math.exp(-calib.hc_lambda_slope * dl - calib.hc_temp_slope * dt),
                   calib.hc_cap_ppm)
    lean_fall = math.exp(-(max(0.0, lam - calib.nox_lean_peak_lambda) / calib.nox_lean_width) ** 2)
    nox = _soft_cap(
        calib.nox_amp_ppm
        * math.exp(-calib.nox_theta * (2200.0 / combustion_temp_k - 1.0))
        * math.exp(calib.nox_lambda_slope * dl) * lean_fall,
        calib.nox_cap_ppm,
    )
    carbon_total = calib.carbon_total_base_pct - calib.carbon_total_slope_pct * dl
    co2 = carbon_total - co * 1e-4 - calib.hc_carbon_number * hc * 1e-4
    o2 = max(0.0, calib.o2_base_pct + calib.o2_slope_pct * dl)
    return GasComposition(co_ppm=co, co2_pct=co2, hc_ppm=hc, nox_ppm=nox, o2_pct=o2)


def catalyst_efficiencies(calib: EmissionCalibration, lam: float) -> dict:
    return {
        "co": calib.co_curve(lam),
        "hc": calib.hc_curve(lam),
        "nox": calib.nox_curve(lam),
    }


def catalyst_convert(
    raw: GasComposition,
    lam: float,
    calib: EmissionCalibration,
    efficiencies: dict | None = None,
) -> GasComposition:
    """Push raw gas through the three-way converter.

    Oxidised CO/HC carbon is credited to CO2 (carbon is conserved); O2 is
    consumed by oxidation and partially released by NOx reduction.
    """
    if not (0.9 <= lam <= 1.1):
        raise DomainError("lambda must lie within [0.9, 1.1]")
    eff = efficiencies if efficiencies is not None else catalyst_efficiencies(calib, lam)
    co_out = raw.co_ppm * (1.0 - eff["co"])
    hc_out = raw.hc_ppm * (1.0 - eff["hc"])
    nox_out = raw.nox_ppm * (1.0 - eff["nox"])

    d_co_pct = (raw.co_ppm - co_out) * 1e-4
    d_hc_pct = (raw.hc_ppm - hc_out) * 1e-4
    d_nox_pct = (raw.nox_ppm - nox_out) * 1e-4
    co2_out = raw.co2_pct + d_co_pct + calib.hc_carbon_number * d_hc_pct
    # 0.5 O2 per CO, 5 O2 per propane molecule, 0.5 O2 back per NO2 reduced
    o2_out = max(0.0, raw.o2_pct - 0.5 * d_co_pct - 5.0 * d_hc_pct + 0.5 * d_nox_pct)
    return GasComposition(co_ppm=co_out, co2_pct=co2_out, hc_ppm=hc_out, nox_ppm=nox_out, o2_pct=o2_out)


def gas_temperature_k(calib: EmissionCalibration, manifold_temp_c: float) -> float:
    """Gas temperature at the flow meter, cooled down from the manifold."""
    manifold_k = manifold_temp_c + 273.15
    return calib.gas_temp_floor_k + calib.gas_temp_coupling * max(0.0, manifold_k - calib.gas_temp_floor_k)


def exhaust_volume_flow(
    mass_flow_gps: float, temp_k: float, pressure_pa: float, molar_mass_kgmol: float
) -> float:
    """Ideal-gas volume flow in m^3/h for a given mass flow in g/s."""
    if temp_k <= 0 or pressure_pa <= 0 or molar_mass_kgmol <= 0:
        raise DomainError("temperature, pressure and molar mass must be positive")
    if mass_flow_gps < 0:
        raise DomainError("mass flow must be non-negative")
    mass_kgh = mass_flow_gps * 3.6
    return (mass_kgh / molar_mass_kgmol) * R_GAS * temp_k / pressure_pa


def per_km_volume(volume_flow_m3h: float, v_kmh: float) -> float:
    """Distance-specific exhaust volume in m^3/km."""
    if v_kmh <= 0:
        raise DomainError("distance-specific volume requires motion (v > 0)")
    return volume_flow_m3h / v_kmh


def ppm_to_mg_per_km(
    conc_ppm: float, vd_m3km: float, temp_k: float, pressure_pa: float, molar_mass_kgmol: float
) -> float:
    """Convert a volumetric concentration to emitted mass per km driven."""
    if temp_k <= 0:
        raise DomainError("temperature must be positive")
    if pressure_pa <= 0 or molar_mass_kgmol <= 0 or vd_m3km < 0 or conc_ppm < 0:
        raise DomainError("inputs must be positive")
    species_m3km = conc_ppm * 1e-6 * vd_m3km
    density = pressure_pa * molar_mass_kgmol / (R_GAS * temp_k)
    return species_m3km * density * 1e6   # kg -> mg


def euro5_check(per_km_mgkm: dict, calib: EmissionCalibration | None = None) -> dict:
    """Verdict per limited pollutant; limits are inclusive."""
    calib = calib or EmissionCalibration()
    limits = dict(calib.euro5_limits_mgkm)
    missing = [k for k in limits if k not in per_km_mgkm]
    if missing:
        raise ValidationError(f"per-km map lacks required pollutants: {missing}")
    return {k: ("pass" if per_km_mgkm[k] <= limit else "fail") for k, limit in limits.items()}


IMPROVEMENT_QUANTITIES = ("mass_flow_gps", "co_ppm", "co2_pct", "nox_ppm", "hc_ppm")


def improvement_factors(or_rec: EmissionRecord, vc_rec: EmissionRecord) -> dict:
    """Ratios in the reference table's sign convention.

    A positive factor OR/VC means the velocity control improved the
    quantity; a degradation is reported as -(VC/OR).  Division by zero is
    flagged as an infinite improvement.
    """
    if abs(or_rec.grade - vc_rec.grade) > 1e-9:
        raise ValidationError("records must share the same grade")
    if abs(or_rec.v_kmh - vc_rec.v_kmh) > 2.5:
        raise ValidationError("records must be taken at comparable speeds")

    def pick(rec: EmissionRecord, name: str) -> float:
        if name == "mass_flow_gps":
            return rec.mass_flow_gps
        return getattr(rec.composition, name)

    factors = {}
    for name in IMPROVEMENT_QUANTITIES:
        a, b = pick(or_rec, name), pick(vc_rec, name)
        if b <= a:
            factors[name] = math.inf if b == 0 else a / b
        else:
            factors[name] = -math.inf if a == 0 else -(b / a)
    return factors
