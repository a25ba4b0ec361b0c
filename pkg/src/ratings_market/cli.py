"""Command-line surface: solve, thresholds, scan, figure-data, simulate.

The only module that touches files. Configs are flat ``name = value`` text
(``#`` comments) or JSON, sniffed by extension. All outputs are
byte-deterministic given the config, seed, and package version: JSON is
sorted-key with round-trip floats, CSV carries 17 significant digits.

Exit codes: 0 success, 2 input error (the message names the violated
bound), 3 model-regime error (for example a buyer mass at which the
uniqueness restriction behind the stability analysis fails).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    Equilibrium,
    EquilibriumKind,
    MarketParams,
    ModelError,
    MultipleEquilibria,
    QueuePair,
    SteadyState,
    ViolatedBound,
    validate_params,
)
from .dynamics import integrate_flows, simulate_population, trajectory_rows
from .equilibrium import (
    discriminatory_mass_interval,
    enumerate_discriminatory,
    no_trade,
    rating_quality_interval,
    solve_nondiscriminatory,
)
from .figures import figure_data, write_csv, write_json
from .mechanics import (
    beliefs,
    buyer_payoff_slope,
    k_threshold,
    participation_threshold,
    payoff_increasing_interval,
    steady_state,
)
from .stability import classify_stability, find_stable_discriminatory


class ConfigError(ModelError):
    """The config file could not be parsed into a parameter record."""


def load_config(path: str | Path) -> MarketParams:
    """Read a flat key=value or JSON config into validated parameters."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            record = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"invalid JSON in {path}: {err}") from None
        if not isinstance(record, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
    else:
        record = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'name = value', got {raw!r}")
            name, _, value = line.partition("=")
            record[name.strip()] = value.strip()
    return validate_params(record)


def _queue_entry(pair: QueuePair, params: MarketParams) -> dict:
    mu = beliefs(pair, params)
    return {
        "lambda_g": pair.lambda_g,
        "lambda_b": pair.lambda_b,
        "mu_g": mu.mu_g,
        "mu_b": mu.mu_b,
    }


def _equilibrium_entry(eq: Equilibrium, params: MarketParams) -> dict:
    entry = {
        "kind": eq.kind.value,
        "group1": _queue_entry(eq.queues.group1, params),
        "group2": _queue_entry(eq.queues.group2, params),
        "buyer_payoff": eq.buyer_payoff,
        "buyer_split": list(eq.buyer_split),
        "stability": eq.stability.value,
    }
    if eq.kind is not EquilibriumKind.NO_TRADE:
        report = classify_stability(eq, params)
        entry["stability"] = report.verdict.value
        entry["stability_criterion"] = report.criterion_value
        entry["payoff_slopes"] = {
            "group1": report.u_prime_q1.value,
            "group2": report.u_prime_q2.value,
        }
        if report.u_prime_q1.kinked or report.u_prime_q2.kinked:
            entry["payoff_slopes_one_sided"] = {
                "group1": [report.u_prime_q1.backward, report.u_prime_q1.forward],
                "group2": [report.u_prime_q2.backward, report.u_prime_q2.forward],
            }
    return entry


def _params_entry(params: MarketParams) -> dict:
    return {
        "delta": params.delta,
        "alpha": params.alpha,
        "u_high": params.u_high,
        "u_low": params.u_low,
        "price": params.price,
        "k": params.k,
        "buyer_mass": params.buyer_mass,
    }


def cmd_solve(args) -> int:
    params = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    equilibria = solve_nondiscriminatory(params)
    if equilibria[0].kind is not EquilibriumKind.NO_TRADE:
        equilibria = equilibria + enumerate_discriminatory(params)
    report = {
        "version": __version__,
        "params": _params_entry(params),
        "no_trade": no_trade(params),
        "equilibria": [_equilibrium_entry(eq, params) for eq in equilibria],
    }
    path = out_dir / "solve.json"
    write_json(path, report)
    print(f"wrote {path} ({len(equilibria)} equilibria)")
    return 0


def _threshold_entry(value, reason: str | None = None) -> dict:
    if value is None:
        return {"value": None, "reason": reason or "undefined"}
    return {"value": value}


def cmd_thresholds(args) -> int:
    params = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report: dict = {
        "version": __version__,
        "params": _params_entry(params),
        "no_trade": no_trade(params),
        "participation_threshold": _threshold_entry(participation_threshold(params)),
    }
    monotone_reason = "u_G monotone (k <= k_threshold)"
    if no_trade(params):
        reason = "no trade: (u_high + u_low)/2 <= price"
        report["k_threshold"] = _threshold_entry(None, reason)
        report["payoff_increasing_interval"] = _threshold_entry(None, reason)
        report["buyer_mass_interval"] = _threshold_entry(None, reason)
        report["rating_quality_interval"] = _threshold_entry(None, reason)
    else:
        report["k_threshold"] = _threshold_entry(k_threshold(params))
        interval = payoff_increasing_interval(params)
        report["payoff_increasing_interval"] = _threshold_entry(
            list(interval) if interval else None, monotone_reason
        )
        mass_interval = discriminatory_mass_interval(params)
        report["buyer_mass_interval"] = _threshold_entry(
            list(mass_interval) if mass_interval else None, monotone_reason
        )
        if params.buyer_mass <= 0:
            report["rating_quality_interval"] = _threshold_entry(None, "buyer_mass is 0")
        else:
            quality = rating_quality_interval(params)
            report["rating_quality_interval"] = _threshold_entry(
                list(quality) if quality else None, monotone_reason
            )
    path = out_dir / "thresholds.json"
    write_json(path, report)
    print(f"wrote {path}")
    return 0


_SCAN_AXES = ("k", "Q", "beta")


def parse_grid_spec(spec: str) -> list[tuple[str, np.ndarray]]:
    """Parse 'axis=start:stop:count[:log]', one or two comma-separated axes."""
    axes = []
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if "=" not in chunk:
            raise ConfigError(f"bad axis spec {chunk!r}: expected name=start:stop:count")
        name, _, rest = chunk.partition("=")
        name = name.strip()
        if name not in _SCAN_AXES:
            raise ConfigError(f"unknown scan axis {name!r}; expected one of {_SCAN_AXES}")
        parts = rest.split(":")
        if len(parts) not in (3, 4):
            raise ConfigError(f"bad axis range {rest!r}: expected start:stop:count[:log]")
        try:
            start, stop = float(parts[0]), float(parts[1])
            count = int(parts[2])
        except ValueError:
            raise ConfigError(f"bad axis range {rest!r}: non-numeric bounds") from None
        if count < 1:
            raise ConfigError(f"axis {name}: count must be >= 1, got {count}")
        log = len(parts) == 4
        if log and parts[3] != "log":
            raise ConfigError(f"bad axis suffix {parts[3]!r}: only 'log' is supported")
        if log and (start <= 0 or stop <= 0):
            raise ConfigError(f"axis {name}: log spacing needs positive bounds")
        if count == 1:
            values = np.array([start])
        elif log:
            values = np.geomspace(start, stop, count)
        else:
            values = np.linspace(start, stop, count)
        axes.append((name, values))
    if not 1 <= len(axes) <= 2:
        raise ConfigError(f"expected one or two scan axes, got {len(axes)}")
    if len(axes) == 2 and axes[0][0] == axes[1][0]:
        raise ConfigError(f"scan axes must differ, got {axes[0][0]!r} twice")
    return axes


def _apply_axis(params: MarketParams, name: str, value: float) -> MarketParams:
    if name == "k":
        return replace(params, k=float(value))
    if name == "Q":
        return replace(params, buyer_mass=float(value))
    # Rating quality beta = alpha/delta, realized without leaving alpha's
    # (0, 1] bound: push alpha up to its cap, then slow delta down.
    alpha = min(1.0, float(value) * params.delta)
    return replace(params, alpha=alpha, delta=alpha / float(value))


_SCAN_HEADER = [
    "delta", "alpha", "u_high", "u_low", "price", "k", "buyer_mass", "beta",
    "no_trade", "n_nondiscriminatory", "n_discriminatory",
    "n_stable_nondiscriminatory", "n_unstable_nondiscriminatory",
    "stable_discriminatory_found", "regime_error",
    "k_threshold", "lambda_g_lo", "lambda_g_hi",
    "q_lo", "q_hi", "beta_lo", "beta_hi",
]


def _scan_row(params: MarketParams) -> list:
    row: list = [
        params.delta, params.alpha, params.u_high, params.u_low, params.price,
        params.k, params.buyer_mass, params.rating_quality,
    ]
    if no_trade(params):
        return row + [1, 0, 0, 0, 0, 0, 0, None, None, None, None, None, None, None]
    nd = solve_nondiscriminatory(params)
    nd = [eq for eq in nd if eq.kind is EquilibriumKind.NON_DISCRIMINATORY]
    disc = enumerate_discriminatory(params)
    # The split-robustness verdict for a non-discriminatory equilibrium is
    # equivalent to the G payoff falling at its queue; the slope test keeps
    # sweeps cheap and free of the uniqueness restriction.
    stable = sum(1 for eq in nd if buyer_payoff_slope("G", eq.lambda_g, params) <= 0)
    stable_disc: int | None = 0
    regime_error = 0
    if disc:
        try:
            found = find_stable_discriminatory(params.buyer_mass, params)
            stable_disc = int(found is not None)
        except MultipleEquilibria:
            stable_disc = None
            regime_error = 1
    row += [0, len(nd), len(disc), stable, len(nd) - stable, stable_disc, regime_error]
    row.append(k_threshold(params))
    interval = payoff_increasing_interval(params)
    row += list(interval) if interval else [None, None]
    mass_interval = discriminatory_mass_interval(params)
    row += list(mass_interval) if mass_interval else [None, None]
    quality = rating_quality_interval(params) if params.buyer_mass > 0 else None
    row += list(quality) if quality else [None, None]
    return row


def cmd_scan(args) -> int:
    params = load_config(args.config)
    axes = parse_grid_spec(args.grid)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    if len(axes) == 1:
        name, values = axes[0]
        for value in values:
            rows.append(_scan_row(_apply_axis(params, name, value)))
    else:
        (name_a, values_a), (name_b, values_b) = axes
        for va in values_a:
            for vb in values_b:
                rows.append(_scan_row(_apply_axis(_apply_axis(params, name_a, va), name_b, vb)))
    path = out_dir / "scan.csv"
    write_csv(path, _SCAN_HEADER, rows)
    print(f"wrote {path} ({len(rows)} rows)")

    if len(axes) == 1 and len(rows) > 1:
        import matplotlib.pyplot as plt

        name, values = axes[0]
        counts = [row[10] for row in rows]
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        ax.step(values, counts, where="mid")
        if values.min() > 0 and values.max() / max(values.min(), 1e-300) > 50:
            ax.set_xscale("log")
        ax.set_xlabel(name)
        ax.set_ylabel("discriminatory equilibria")
        fig.tight_layout()
        png = out_dir / "scan.png"
        fig.savefig(png, dpi=150)
        plt.close(fig)
        print(f"wrote {png}")
    return 0


def cmd_figure_data(args) -> int:
    written = figure_data(args.figure, Path(args.out))
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_simulate(args) -> int:
    params = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.lambda_g is not None or args.lambda_b is not None:
        if args.lambda_g is None or args.lambda_b is None:
            raise ConfigError("pass both --lambda-g and --lambda-b or neither")
        queues = QueuePair(args.lambda_g, args.lambda_b)
    else:
        solutions = solve_nondiscriminatory(params)
        if solutions[0].kind is EquilibriumKind.NO_TRADE:
            raise ConfigError(
                "no-trade regime: pass --lambda-g/--lambda-b to pick the queues"
            )
        queues = solutions[0].queues.group1

    horizon = args.horizon if args.horizon is not None else 200.0 / params.delta
    start = SteadyState(0.25, 0.25, 0.25, 0.25, seller_mass=1.0)
    trajectory = integrate_flows(start, queues, params, horizon)
    closed = steady_state(queues, params)
    sample = simulate_population(args.sellers, queues, params, horizon, args.seed)

    csv_path = out_dir / "trajectory.csv"
    write_csv(csv_path, ["time", "p_hg", "p_lg", "p_hb", "p_lb"], trajectory_rows(trajectory))
    gaps = [
        abs(e - c)
        for e, c in zip(sample.state.as_tuple(), closed.as_tuple())
    ]
    report = {
        "version": __version__,
        "params": _params_entry(params),
        "queues": {"lambda_g": queues.lambda_g, "lambda_b": queues.lambda_b},
        "seed": args.seed,
        "sellers": args.sellers,
        "horizon": horizon,
        "closed_form": dict(zip(("p_hg", "p_lg", "p_hb", "p_lb"), closed.as_tuple())),
        "empirical": dict(zip(("p_hg", "p_lg", "p_hb", "p_lb"), sample.state.as_tuple())),
        "std_errors": dict(zip(("p_hg", "p_lg", "p_hb", "p_lb"), sample.std_errors)),
        "batch_count": sample.batch_count,
        "within_3_std_errors": all(
            gap <= 3.0 * se for gap, se in zip(gaps, sample.std_errors)
        ),
        "ode_terminal": dict(
            zip(("p_hg", "p_lg", "p_hb", "p_lb"), trajectory.terminal.as_tuple())
        ),
        "ode_terminal_residual": trajectory.terminal_residual,
    }
    json_path = out_dir / "simulate.json"
    write_json(json_path, report)
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ratings-market",
        description="Numerical laboratory for a ratings-guided matching market",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="classify every equilibrium of a config")
    p.add_argument("--config", required=True, help="market parameter file")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("thresholds", help="report every analytic threshold")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("scan", help="sweep k, Q, or beta and tabulate regimes")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", required=True, help="axis spec, e.g. 'Q=0.1:10:25:log'")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("figure-data", help="emit a preset figure's curve data")
    p.add_argument("--figure", type=int, required=True, help="figure id: 1, 2, or 3")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_figure_data)

    p = sub.add_parser("simulate", help="run the flow + population oracles")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sellers", type=int, default=10_000)
    p.add_argument("--horizon", type=float, default=None, help="default 200/delta")
    p.add_argument("--lambda-g", type=float, default=None, dest="lambda_g")
    p.add_argument("--lambda-b", type=float, default=None, dest="lambda_b")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ViolatedBound, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except MultipleEquilibria as err:
        print(f"model-regime error: {err}", file=sys.stderr)
        return 3
    except ModelError as err:
        print(f"model-regime error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
