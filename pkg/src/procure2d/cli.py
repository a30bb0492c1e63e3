"""Command-line interface.

Subcommands: ``opt`` (one-shot optimal auction on a bids file), ``ucb`` (one
learning run, trace to CSV), ``simulate`` (full experiment grid), ``verify``
(audit suite; nonzero exit if any audit fails), ``plot`` (results CSV to
SVG).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import audits
from .bandit import run_2d_ucb
from .harness import (
    ConfigError,
    ExperimentConfig,
    emit_results,
    parse_config,
    read_bids_csv,
    read_results_csv,
    render_results_svg,
    run_experiment,
)
from .model import (
    AgentType,
    MarketConfig,
    sample_reward_realization,
    uniform_type_distribution,
)
from .optimal import run_2d_opt


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="INI config file")
    parser.add_argument("--seed", type=int, default=None, metavar="U64",
                        help="override the master seed")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--threads", type=int, default=1, metavar="N",
                        help="worker processes for replications")


def _load_config(args) -> ExperimentConfig:
    config = parse_config(args.config)
    if args.seed is not None:
        config = ExperimentConfig(**{**config.__dict__, "master_seed": args.seed})
    return config


def _out_dir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _market_for_bids(config: ExperimentConfig, bids, units: int) -> MarketConfig:
    cap_hi = max(max(b.capacity for b in bids), 1)
    dist = uniform_type_distribution(config.cost_lo, config.cost_hi, 1, max(cap_hi, units))
    return MarketConfig(units, config.reward_scale, (dist,) * len(bids))


def _write_outcome(path, outcome) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("agent,units,payment\n")
        for i, (units, payment) in enumerate(zip(outcome.allocation, outcome.payments)):
            fh.write(f"{i},{int(units)},{payment:.17g}\n")


def _print_outcome(outcome) -> None:
    print("agent  units  payment")
    for i, (units, payment) in enumerate(zip(outcome.allocation, outcome.payments)):
        print(f"{i:>5}  {int(units):>5}  {payment:.6g}")
    print(f"auctioneer utility: {outcome.auctioneer_utility:.6g}")


def _cmd_opt(args) -> int:
    config = _load_config(args)
    bids, qualities = read_bids_csv(args.bids)
    units = args.units if args.units is not None else config.l_grid[0]
    market = _market_for_bids(config, bids, units)
    outcome = run_2d_opt(market, qualities, bids)
    _print_outcome(outcome)
    if args.out:
        _write_outcome(os.path.join(_out_dir(args), "outcome.csv"), outcome)
    return 0


def _cmd_ucb(args) -> int:
    config = _load_config(args)
    bids, qualities = read_bids_csv(args.bids)
    units = args.units if args.units is not None else config.l_grid[0]
    market = _market_for_bids(config, bids, units)
    realization = sample_reward_realization(
        qualities, units, np.random.SeedSequence([config.master_seed, 1])
    )
    outcome, trace = run_2d_ucb(
        market, bids, realization, config.mu,
        np.random.SeedSequence([config.master_seed, 2]),
    )
    _print_outcome(outcome)
    out = _out_dir(args)
    trace.to_csv(os.path.join(out, "trace.csv"))
    _write_outcome(os.path.join(out, "outcome.csv"), outcome)
    print(f"trace written to {os.path.join(out, 'trace.csv')}")
    return 0


def _cmd_simulate(args) -> int:
    config = _load_config(args)
    rows = run_experiment(config, threads=args.threads)
    out = _out_dir(args)
    csv_path = os.path.join(out, "results.csv")
    svg_path = os.path.join(out, "results.svg")
    emit_results(rows, csv_path, svg_path)
    print(f"wrote {csv_path} and {svg_path} ({len(rows)} rows)")
    return 0


def _cmd_plot(args) -> int:
    rows = read_results_csv(args.results)
    out = _out_dir(args)
    svg_path = os.path.join(out, "results.svg")
    with open(svg_path, "w") as fh:
        fh.write(render_results_svg(rows))
    print(f"wrote {svg_path}")
    return 0


def _cmd_verify(args) -> int:
    config = _load_config(args)
    seed = np.random.SeedSequence([config.master_seed, 99])
    resample_seed, instance_seed, bic_seed = seed.spawn(3)
    reports = []

    reports.append(audits.audit_resampler(
        config.mu, (config.cost_lo, config.cost_hi), 30_000, resample_seed
    ))

    rng = np.random.default_rng(instance_seed)
    dist = uniform_type_distribution(config.cost_lo, config.cost_hi, 1, 5)
    span = config.cost_hi - config.cost_lo
    for trial in range(8):
        n = int(rng.integers(2, 5))
        types = [
            AgentType(
                float(rng.uniform(config.cost_lo, config.cost_hi)),
                int(rng.integers(1, 6)),
                float(rng.uniform(0.0, 1.0)),
            )
            for _ in range(n)
        ]
        market = MarketConfig(int(rng.integers(1, 13)), config.reward_scale, (dist,) * n)
        qualities = np.array([t.quality for t in types])
        bids = [t.truthful_bid() for t in types]
        agent = int(rng.integers(n))
        grid = audits.DeviationGrid.spanning(dist, types[agent].capacity, n_costs=11)
        probe = audits.make_opt_probe(market, qualities, bids, agent)
        if trial == 0:
            reports.append(audits.audit_monotone_allocation(
                lambda c, k: probe(c, k)[0], grid, name="opt-allocation-monotone"
            ))
            reports.append(audits.audit_offered_utility(
                probe, grid, config.cost_hi, name="opt-offered-utility"
            ))
        report = audits.audit_dsic(
            probe, types[agent].cost, types[agent].capacity, grid,
            name="opt-truthfulness",
        )
        if not report.passed or trial == 7:
            reports.append(report)
            break

    n = 3
    bic_rng = np.random.default_rng(bic_seed)
    types = [
        AgentType(
            float(bic_rng.uniform(config.cost_lo, config.cost_hi)),
            int(bic_rng.integers(3, 8)),
            float(bic_rng.uniform(0.4, 1.0)),
        )
        for _ in range(n)
    ]
    dist_bic = uniform_type_distribution(config.cost_lo, config.cost_hi, 1, 10)
    market = MarketConfig(30, config.reward_scale, (dist_bic,) * n)
    bids = [t.truthful_bid() for t in types]
    batch = audits.make_ucb_batch_utility(
        market, bids, 0, types[0].cost, np.array([t.quality for t in types]),
        config.mu, 20_000, bic_seed,
    )
    grid = audits.DeviationGrid.spanning(dist_bic, types[0].capacity, n_costs=7)
    reports.append(audits.audit_stochastic_bic(
        batch, types[0].cost, types[0].capacity, grid, name="ucb-stochastic-truthfulness"
    ))
    reports.append(audits.audit_iia([0, 1, 2], [0, 1, 2], 0))

    failed = False
    for report in reports:
        print(report.line())
        failed = failed or (not report.passed and not report.inconclusive)
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="procure2d",
        description="Capacitated procurement auctions with quality learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("opt", help="run the optimal auction on a bids file")
    p_opt.add_argument("bids", help="CSV with header agent,cost,capacity,quality")
    p_opt.add_argument("--units", type=int, default=None, help="units to procure")
    _add_common(p_opt)
    p_opt.set_defaults(fn=_cmd_opt)

    p_ucb = sub.add_parser("ucb", help="run one learning auction, emit its trace")
    p_ucb.add_argument("bids", help="CSV with header agent,cost,capacity,quality")
    p_ucb.add_argument("--units", type=int, default=None, help="units to procure")
    _add_common(p_ucb)
    p_ucb.set_defaults(fn=_cmd_ucb)

    p_sim = sub.add_parser("simulate", help="run the full experiment grid")
    _add_common(p_sim)
    p_sim.set_defaults(fn=_cmd_simulate)

    p_verify = sub.add_parser("verify", help="run the audit suite")
    _add_common(p_verify)
    p_verify.set_defaults(fn=_cmd_verify)

    p_plot = sub.add_parser("plot", help="render a results CSV as SVG")
    p_plot.add_argument("results", help="results CSV produced by simulate")
    _add_common(p_plot)
    p_plot.set_defaults(fn=_cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
