"""Rebuild derived tables and figures from a previously written sweep tree."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .emissions import (
    EmissionCalibration,
    EmissionRecord,
    GasComposition,
    euro5_check,
    improvement_factors,
    per_km_volume,
)
from .errors import ConfigError, ValidationError
from .powertrain import Strategy


def load_records(records_csv) -> list:
    """Read sweep_records.csv rows back into EmissionRecord objects."""
    path = Path(records_csv)
    if not path.exists():
        raise ConfigError(f"missing records file: {path}")
    records = []
    with open(path) as fh:
        for row in csv.DictReader(fh):
            comp = GasComposition(
                co_ppm=float(row["co_ppm"]), co2_pct=float(row["co2_pct"]),
                hc_ppm=float(row["hc_ppm"]), nox_ppm=float(row["nox_ppm"]),
                o2_pct=float(row["o2_pct"]),
            )
            records.append(EmissionRecord(
                grade=float(row["grade"]), strategy=Strategy(row["strategy"]),
                mass_flow_gps=float(row["massflow_gps"]), exhaust_temp_k=float(row["exh_temp_K"]),
                composition=comp, v_kmh=float(row["v_kmh"]),
                per_km={"co": float(row["co_mgkm"]), "co2": float(row["co2_gkm"]) * 1000.0,
                        "hc": float(row["hc_mgkm"]), "nox": float(row["nox_mgkm"])},
                volume_flow_m3h=float(row["volflow_m3h"]),
            ))
    if not records:
        raise ValidationError("records file holds no rows")
    return records


def _load_flags(flags_csv) -> set:
    flagged = set()
    path = Path(flags_csv)
    if not path.exists():
        return flagged
    with open(path) as fh:
        for row in csv.DictReader(fh):
            flagged.add((round(float(row["grade"]), 6), row["strategy"]))
    return flagged


def regenerate_report(in_dir, fmt: str = "csv") -> list:
    """Recompute improvements.csv and per_km.csv from the stored records."""
    if fmt != "csv":
        raise ConfigError(f"unsupported report format {fmt!r}")
    base = Path(in_dir)
    records = load_records(base / "sweep_records.csv")
    flagged = _load_flags(base / "invalid_flags.csv")
    written = []

    by_grade = {}
    for rec in records:
        by_grade.setdefault(round(rec.grade, 6), {})[rec.strategy] = rec

    path = base / "improvements.csv"
    with open(path, "w") as fh:
        fh.write("grade,mass_flow,co,co2,nox,hc\n")
        for grade in sorted(by_grade):
            pair = by_grade[grade]
            if len(pair) != 2:
                continue
            if any((grade, s.value) in flagged for s in pair):
                continue
            f = improvement_factors(pair[Strategy.IGNITION_RETARD], pair[Strategy.VELOCITY_CONTROL])
            fh.write(f"{grade:.9g},{f['mass_flow_gps']:.9g},{f['co_ppm']:.9g},"
                     f"{f['co2_pct']:.9g},{f['nox_ppm']:.9g},{f['hc_ppm']:.9g}\n")
    written.append(path)

    path = base / "per_km.csv"
    with open(path, "w") as fh:
        fh.write("grade,strategy,volflow_m3h,vd_m3km,co2_gkm,co_mgkm,hc_mgkm,nox_mgkm,"
                 "co_verdict,hc_verdict,nox_verdict\n")
        for rec in records:
            verdicts = euro5_check(rec.per_km)
            vd = per_km_volume(rec.volume_flow_m3h, rec.v_kmh)
            fh.write(f"{rec.grade:.9g},{rec.strategy.value},{rec.volume_flow_m3h:.9g},{vd:.9g},"
                     f"{rec.per_km['co2'] / 1000.0:.9g},{rec.per_km['co']:.9g},"
                     f"{rec.per_km['hc']:.9g},{rec.per_km['nox']:.9g},"
                     f"{verdicts['co']},{verdicts['hc']},{verdicts['nox']}\n")
    written.append(path)
    return written
