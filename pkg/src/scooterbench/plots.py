"""Report figures, rendered headless next to the delimited output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 110
_PNG_META = {"Software": None}  # keep output byte-stable across runs

_STRAT_STYLE = {"OR": dict(color="tab:red", marker="o"), "VC": dict(color="tab:blue", marker="s")}


def _save(fig, path):
    fig.savefig(path, dpi=DPI, metadata=_PNG_META)
    plt.close(fig)


def save_coastdown_figure(series, fitted_curve, params, path) -> None:
    """Measured velocity decay and the force identified from it."""
    from .vehicle import resistance_force

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.plot(series.time_s, series.velocity_kmh, lw=1.0, color="tab:blue")
    ax1.set_xlabel("time [s]")
    ax1.set_ylabel("velocity [km/h]")
    ax1.set_title("averaged coast-down")
    ax1.grid(alpha=0.3)

    v = np.linspace(0.0, max(series.velocity_kmh.max(), 1.0), 200)
    ax2.plot(v, resistance_force(fitted_curve, v), color="tab:orange",
             label=f"fit: {fitted_curve.quad_coeff:.4g} v$^2$ + {fitted_curve.const_coeff:.4g}")
    ax2.set_xlabel("velocity [km/h]")
    ax2.set_ylabel("road load [N]")
    ax2.set_title("identified resistance")
    ax2.legend(fontsize=8)
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def save_pressure_figure(level_points, path) -> None:
    """Ensemble-mean cylinder pressure for the level-ground operating points."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for point in level_points:
        trace = point.bundle.pressure.mean
        style = _STRAT_STYLE[point.strategy.value]
        ax.plot(trace.crank_angle_deg, trace.pressure_bar, lw=1.2,
                color=style["color"], label=f"{point.strategy.value}, retard {point.state.ignition_offset_deg:.1f} deg")
    ax.set_xlim(-120, 160)
    ax.set_xlabel("crank angle [deg, TDC = 0]")
    ax.set_ylabel("cylinder pressure [bar]")
    ax.set_title("level-ground averaged pressure (60 cycles)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def _per_strategy(points, getter):
    out = {}
    for p in points:
        out.setdefault(p.strategy.value, []).append((p.grade, getter(p)))
    return {k: np.array(sorted(v)) for k, v in out.items()}


def save_sweep_figure(points, path) -> None:
    """Velocity, throttle, injector duty and temperatures over the grade grid."""
    panels = [
        ("velocity [km/h]", lambda p: p.v_mean_kmh),
        ("throttle [%]", lambda p: p.throttle_mean_pct),
        ("injector duty [%]", lambda p: p.state.injector_duty_pct),
        ("ignition retard [deg]", lambda p: p.state.ignition_offset_deg),
        ("exhaust temp [C]", lambda p: p.state.exhaust_temp_c),
        ("indicated power [W]", lambda p: p.indicated_power_w),
    ]
    fig, axes = plt.subplots(3, 2, figsize=(9, 9), sharex=True)
    for ax, (label, getter) in zip(axes.flat, panels):
        for strat, data in _per_strategy(points, getter).items():
            style = _STRAT_STYLE[strat]
            ax.plot(data[:, 0] * 100, data[:, 1], lw=1.0, ms=3.5, label=strat, **style)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("grade [%]")
    axes[0, 0].legend(fontsize=8)
    fig.suptitle("gradient sweep at top speed")
    fig.tight_layout()
    _save(fig, path)


def save_emissions_figure(points, path) -> None:
    """Mass flow and tailpipe composition over the grade grid."""
    panels = [
        ("mass flow [g/s]", lambda p: p.record.mass_flow_gps),
        ("CO [ppm]", lambda p: p.record.composition.co_ppm),
        ("CO2 [%]", lambda p: p.record.composition.co2_pct),
        ("NOx [ppm]", lambda p: p.record.composition.nox_ppm),
        ("HC [ppm]", lambda p: p.record.composition.hc_ppm),
        ("O2 [%]", lambda p: p.record.composition.o2_pct),
    ]
    fig, axes = plt.subplots(3, 2, figsize=(9, 9), sharex=True)
    for ax, (label, getter) in zip(axes.flat, panels):
        for strat, data in _per_strategy(points, getter).items():
            style = _STRAT_STYLE[strat]
            ax.plot(data[:, 0] * 100, data[:, 1], lw=1.0, ms=3.5, label=strat, **style)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("grade [%]")
    axes[0, 0].legend(fontsize=8)
    fig.suptitle("exhaust measurement over the gradient sweep")
    fig.tight_layout()
    _save(fig, path)
