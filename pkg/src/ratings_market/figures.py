"""Built-in demonstration figures: curve data plus rendered panels.

Three presets exercise the model's qualitative regimes: (1) the G-submarket
payoff curve, monotone versus hump-shaped; (2) the clearing/indifference
curve crossing, unique versus multiple; (3) the indifference curve's branch
structure with the probe band that supports discriminatory splits. Each
figure writes its curve samples as CSV (the data of record, 17 significant
digits) with a JSON sidecar of parameters, and renders a PNG of each panel
alongside.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import BracketFailure, MarketParams, ModelError
from .equilibrium import (
    bi_curve,
    branch_band,
    discriminatory_mass_interval,
    mc_curve,
    solve_nondiscriminatory,
)
from .mechanics import _payoff_g, k_threshold, payoff_increasing_interval

CURVE_SAMPLES = 512

# Preset parameter families for the three figures.
_FIG1_BASE = dict(delta=0.1, alpha=0.1, u_high=2.0, u_low=1.0, price=1.0, buyer_mass=1.0)
_FIG1_PANELS = (("left", 0.7682), ("right", 0.8828))
_FIG2_BASE = dict(delta=1.0, alpha=0.1, u_high=2.0, u_low=1.0, price=1.0, buyer_mass=1.0)
_FIG2_PANELS = (("left", 0.8682), ("right", 0.9121))
_FIG2_LEFT_MASS = 1.0
_FIG3_PARAMS = dict(
    delta=0.2, alpha=0.5, u_high=3.0, u_low=1.0, price=1.5, k=0.8204, buyer_mass=1.0
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.17g}"


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(cell) for cell in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _params_dict(params: MarketParams) -> dict:
    return {
        "delta": params.delta,
        "alpha": params.alpha,
        "u_high": params.u_high,
        "u_low": params.u_low,
        "price": params.price,
        "k": params.k,
        "buyer_mass": params.buyer_mass,
    }


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _payoff_panel(out_dir: Path, panel: str, params: MarketParams) -> list[Path]:
    lam = np.geomspace(0.05, 50.0, CURVE_SAMPLES)
    payoff = _payoff_g(lam, params)
    csv_path = out_dir / f"figure1_{panel}.csv"
    write_csv(csv_path, ["lambda_g", "payoff_g"], zip(lam, payoff))

    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(lam, payoff, lw=1.6)
    ax.set_xscale("log")
    interval = payoff_increasing_interval(params)
    if interval is not None:
        for x in interval:
            ax.axvline(x, ls=":", color="gray", lw=1.0)
    ax.set_xlabel("queue ratio in submarket G")
    ax.set_ylabel("buyer payoff")
    ax.set_title(f"G payoff, k={params.k:g}")
    fig.tight_layout()
    png_path = out_dir / f"figure1_{panel}.png"
    _save(fig, png_path)
    return [csv_path, png_path]


def pick_multi_crossing_mass(params: MarketParams) -> float:
    """Deterministic buyer endowment at which the curves cross three times."""
    hits = []
    for mass in np.geomspace(0.2, 5.0, 121):
        if len(solve_nondiscriminatory(replace(params, buyer_mass=float(mass)))) >= 3:
            hits.append(float(mass))
    if not hits:
        raise ModelError("no endowment with three curve crossings in the sweep range")
    return hits[len(hits) // 2]


def _crossing_panel(out_dir: Path, panel: str, params: MarketParams, mass: float) -> list[Path]:
    lam = np.geomspace(0.02, 20.0, CURVE_SAMPLES)
    bi_vals: list[float | None] = []
    mc_vals: list[float | None] = []
    for x in lam:
        try:
            bi_vals.append(bi_curve(float(x), params))
        except BracketFailure:
            bi_vals.append(None)
        try:
            mc_vals.append(mc_curve(float(x), mass, params))
        except BracketFailure:
            mc_vals.append(None)
    csv_path = out_dir / f"figure2_{panel}.csv"
    write_csv(
        csv_path,
        ["lambda_g", "lambda_b_indifference", "lambda_b_clearing"],
        zip(lam, bi_vals, mc_vals),
    )

    solutions = solve_nondiscriminatory(replace(params, buyer_mass=mass))
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    bi_arr = np.array([np.nan if v is None else v for v in bi_vals])
    mc_arr = np.array([np.nan if v is None else v for v in mc_vals])
    ax.plot(lam, bi_arr, lw=1.6, label="indifference")
    ax.plot(lam, mc_arr, lw=1.6, ls="--", label="market clearing")
    for eq in solutions:
        ax.plot([eq.lambda_g], [eq.lambda_b], "ko", ms=5)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("queue ratio in submarket G")
    ax.set_ylabel("queue ratio in submarket B")
    ax.set_title(f"Curve crossing, k={params.k:g}, Q={mass:g}")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    png_path = out_dir / f"figure2_{panel}.png"
    _save(fig, png_path)
    return [csv_path, png_path]


def _branch_panel(out_dir: Path, params: MarketParams) -> list[Path]:
    band = branch_band(params)
    lam = np.geomspace(0.005, 50.0, CURVE_SAMPLES)
    rows = []
    bi_arr = np.empty(lam.shape)
    for i, x in enumerate(lam):
        value = bi_curve(float(x), params)
        bi_arr[i] = value
        branch = 1 if x <= band.lambda_g_lo else (2 if x <= band.lambda_g_hi else 3)
        rows.append((x, value, branch, band.lambda_b_lo, band.lambda_b_hi))
    csv_path = out_dir / "figure3.csv"
    write_csv(
        csv_path,
        ["lambda_g", "lambda_b_indifference", "branch", "lambda_b_band_lo", "lambda_b_band_hi"],
        rows,
    )

    fig, ax = plt.subplots(figsize=(5.6, 3.4))
    ax.plot(lam, bi_arr, lw=1.6)
    ax.axhline(band.lambda_b_lo, ls=":", color="gray", lw=1.0)
    ax.axhline(band.lambda_b_hi, ls=":", color="gray", lw=1.0)
    ax.axvline(band.lambda_g_lo, ls=":", color="tab:red", lw=1.0)
    ax.axvline(band.lambda_g_hi, ls=":", color="tab:red", lw=1.0)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("queue ratio in submarket G")
    ax.set_ylabel("indifferent queue ratio in submarket B")
    ax.set_title(f"Branch band, k={params.k:g}")
    fig.tight_layout()
    png_path = out_dir / "figure3.png"
    _save(fig, png_path)
    return [csv_path, png_path]


def figure_data(figure_id: int, out_dir: Path) -> list[Path]:
    """Write the CSV, metadata, and PNG files for one preset figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if figure_id == 1:
        meta: dict = {"panels": {}}
        for panel, k in _FIG1_PANELS:
            params = MarketParams(k=k, **_FIG1_BASE)
            written += _payoff_panel(out_dir, panel, params)
            interval = payoff_increasing_interval(params)
            meta["panels"][panel] = {
                "params": _params_dict(params),
                "k_threshold": k_threshold(params),
                "increasing_interval": list(interval) if interval else None,
            }
        meta_path = out_dir / "figure1_meta.json"
        write_json(meta_path, meta)
        written.append(meta_path)
    elif figure_id == 2:
        meta = {"panels": {}}
        for panel, k in _FIG2_PANELS:
            params = MarketParams(k=k, **_FIG2_BASE)
            mass = _FIG2_LEFT_MASS if panel == "left" else pick_multi_crossing_mass(params)
            written += _crossing_panel(out_dir, panel, params, mass)
            solutions = solve_nondiscriminatory(replace(params, buyer_mass=mass))
            meta["panels"][panel] = {
                "params": _params_dict(replace(params, buyer_mass=mass)),
                "k_threshold": k_threshold(params),
                "equilibria": [
                    {"lambda_g": eq.lambda_g, "lambda_b": eq.lambda_b} for eq in solutions
                ],
            }
        meta_path = out_dir / "figure2_meta.json"
        write_json(meta_path, meta)
        written.append(meta_path)
    elif figure_id == 3:
        params = MarketParams(**_FIG3_PARAMS)
        written += _branch_panel(out_dir, params)
        band = branch_band(params)
        meta = {
            "params": _params_dict(params),
            "k_threshold": k_threshold(params),
            "band": {
                "lambda_g_lo": band.lambda_g_lo,
                "lambda_g_hi": band.lambda_g_hi,
                "lambda_b_lo": band.lambda_b_lo,
                "lambda_b_hi": band.lambda_b_hi,
                "payoff_min": band.payoff_min,
                "payoff_max": band.payoff_max,
            },
            "mass_interval": list(discriminatory_mass_interval(params) or ()) or None,
        }
        meta_path = out_dir / "figure3_meta.json"
        write_json(meta_path, meta)
        written.append(meta_path)
    else:
        raise ValueError(f"unknown figure id {figure_id}; expected 1, 2, or 3")
    return written
