"""Experiment configuration, the simulation driver, and result emission.

The driver measures average auctioneer utility per unit as the budget grows,
for the omniscient optimal benchmark, the UCB learner, and the
explore-then-commit baselines.  Replications fan out over a process pool;
every replication's random stream is a pure function of (master seed, type
sample, budget index, realization index), so the assembled results are
byte-identical regardless of worker count or scheduling.
"""

from __future__ import annotations

import configparser
import csv
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from xml.sax.saxutils import escape

import numpy as np

from .bandit import run_2d_ucb, run_eps_separated
from .model import Bid, MarketConfig, sample_reward_realization, uniform_type_distribution
from .optimal import run_2d_opt

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "ConfigError",
    "parse_config",
    "run_experiment",
    "emit_results",
    "read_results_csv",
    "render_results_svg",
    "read_bids_csv",
]

_DEFAULT_L_GRID = tuple(int(x) for x in np.linspace(1_000, 100_000, 10))


class ConfigError(ValueError):
    """Configuration file missing, malformed, or out of range."""


@dataclass(frozen=True)
class ExperimentConfig:
    """All experiment constants, defaulting to the standard simulation setup:
    five agents, reward scale 30, costs uniform on [0, 1], qualities uniform
    on [0.5, 1], ten budgets linearly spaced over [1e3, 1e5], 200 type samples
    of 100 reward realizations each, resampling parameter 0.1."""

    n: int = 5
    reward_scale: float = 30.0
    mu: float = 0.1
    cost_lo: float = 0.0
    cost_hi: float = 1.0
    quality_lo: float = 0.5
    quality_hi: float = 1.0
    l_grid: tuple[int, ...] = _DEFAULT_L_GRID
    type_samples: int = 200
    realizations: int = 100
    eps_exponents: tuple[float, ...] = (1 / 6, 1 / 3, 1 / 2, 2 / 3)
    cap_lower_frac: float = 0.5
    master_seed: int = 0

    def __post_init__(self):
        checks = [
            (self.n >= 1, "market.n must be >= 1"),
            (self.reward_scale > 0, "market.reward_scale must be > 0"),
            (0.0 < self.mu < 1.0, "ucb.mu must lie in (0, 1)"),
            (self.cost_lo < self.cost_hi, "market.cost_lo must be < market.cost_hi"),
            (0.0 <= self.quality_lo <= self.quality_hi <= 1.0,
             "market quality interval must satisfy 0 <= lo <= hi <= 1"),
            (len(self.l_grid) >= 1, "experiment.l_grid must be non-empty"),
            (all(b > a for a, b in zip(self.l_grid, self.l_grid[1:])),
             "experiment.l_grid must be strictly ascending"),
            (all(l >= self.n for l in self.l_grid),
             "experiment.l_grid entries must be >= market.n"),
            (self.type_samples >= 1, "experiment.type_samples must be >= 1"),
            (self.realizations >= 1, "experiment.realizations must be >= 1"),
            (len(self.eps_exponents) >= 1, "eps.exponents must be non-empty"),
            (all(0 < e < 1 for e in self.eps_exponents),
             "eps.exponents must lie in (0, 1)"),
            (0.0 < self.cap_lower_frac <= 1.0, "capacity.lower_frac must lie in (0, 1]"),
            (self.master_seed >= 0, "experiment.master_seed must be >= 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def cap_bounds(self, units: int) -> tuple[int, int]:
        """Capacity prior bounds at budget ``units``: upper bound the budget
        itself, lower bound ``ceil(lower_frac * ceil(units / n))`` (at least
        one unit)."""
        lower = max(1, math.ceil(self.cap_lower_frac * math.ceil(units / self.n)))
        return min(lower, units), units

    def mechanism_labels(self) -> list[str]:
        return ["opt", "ucb"] + [f"eps-{_exponent_label(e)}" for e in self.eps_exponents]


def _exponent_label(exponent: float) -> str:
    named = {1 / 6: "1/6", 1 / 3: "1/3", 1 / 2: "1/2", 2 / 3: "2/3"}
    for value, label in named.items():
        if abs(exponent - value) < 1e-12:
            return label
    return f"{exponent:g}"


@dataclass(frozen=True)
class ResultRow:
    """One (mechanism, budget) cell of the experiment output."""

    mechanism: str
    units: int
    mean_utility_per_unit: float
    stderr: float
    replications: int

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be >= 0")


_SECTION_FIELDS = {
    "market": {
        "n": ("n", int),
        "reward_scale": ("reward_scale", float),
        "cost_lo": ("cost_lo", float),
        "cost_hi": ("cost_hi", float),
        "quality_lo": ("quality_lo", float),
        "quality_hi": ("quality_hi", float),
    },
    "experiment": {
        "l_grid": ("l_grid", lambda s: tuple(int(x) for x in s.split(","))),
        "type_samples": ("type_samples", int),
        "realizations": ("realizations", int),
        "master_seed": ("master_seed", int),
    },
    "ucb": {"mu": ("mu", float)},
    "eps": {"exponents": ("eps_exponents", lambda s: tuple(float(x) for x in s.split(",")))},
    "capacity": {"lower_frac": ("cap_lower_frac", float)},
}


def parse_config(path: str | os.PathLike | None) -> ExperimentConfig:
    """Load an INI-style config; omitted keys keep their defaults.

    ``None`` returns the full default configuration.  Unknown sections or
    keys, unparsable values, and out-of-range values raise ``ConfigError``
    naming the offender.
    """
    if path is None:
        return ExperimentConfig()
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc

    overrides = {}
    for section in parser.sections():
        if section not in _SECTION_FIELDS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTION_FIELDS[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            attr, convert = _SECTION_FIELDS[section][key]
            try:
                overrides[attr] = convert(raw)
            except ValueError as exc:
                raise ConfigError(f"cannot parse {section}.{key} = {raw!r}") from exc
    return ExperimentConfig(**overrides)


def write_config(config: ExperimentConfig, path) -> None:
    """Emit a config file that ``parse_config`` reproduces exactly."""
    parser = configparser.ConfigParser()
    by_attr = {attr: (section, key)
               for section, keys in _SECTION_FIELDS.items()
               for key, (attr, _) in keys.items()}
    for f in fields(config):
        section, key = by_attr[f.name]
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        parser.setdefault(section, {})
        parser[section][key] = str(value)
    with open(path, "w") as fh:
        parser.write(fh)


# -- simulation ---------------------------------------------------------------

# Stream tags keep the per-purpose random streams disjoint.
_TAG_TYPES, _TAG_CAPS, _TAG_REALIZATION, _TAG_UCB, _TAG_EPS = 11, 12, 13, 14, 15


def _run_cell(config: ExperimentConfig, l_index: int, type_sample: int) -> dict[str, np.ndarray]:
    """All replications for one (budget, type sample) cell.

    Costs and qualities are drawn once per type sample and shared across
    budgets; capacities are redrawn per budget because their prior scales
    with it.
    """
    units = config.l_grid[l_index]
    n = config.n
    seed = config.master_seed

    rng_types = np.random.default_rng(np.random.SeedSequence([seed, _TAG_TYPES, type_sample]))
    costs = rng_types.uniform(config.cost_lo, config.cost_hi, n)
    qualities = rng_types.uniform(config.quality_lo, config.quality_hi, n)

    cap_lo, cap_hi = config.cap_bounds(units)
    rng_caps = np.random.default_rng(
        np.random.SeedSequence([seed, _TAG_CAPS, type_sample, l_index])
    )
    capacities = rng_caps.integers(cap_lo, cap_hi, n, endpoint=True)
    if capacities.sum() < units:
        warnings.warn(
            f"type sample {type_sample} at {units} units: total capacity "
            f"{capacities.sum()} cannot cover the budget",
            stacklevel=2,
        )

    dist = uniform_type_distribution(config.cost_lo, config.cost_hi, cap_lo, cap_hi)
    market = MarketConfig(units, config.reward_scale, (dist,) * n)
    bids = [Bid(float(costs[i]), int(capacities[i])) for i in range(n)]

    reps = config.realizations
    out = {label: np.empty(reps) for label in config.mechanism_labels()}

    benchmark = run_2d_opt(market, qualities, bids)
    out["opt"][:] = benchmark.auctioneer_utility / units

    explore_grid = [
        max(n, int(round(units ** exponent))) for exponent in config.eps_exponents
    ]
    for r in range(reps):
        realization = sample_reward_realization(
            qualities, units, np.random.SeedSequence([seed, _TAG_REALIZATION, type_sample, l_index, r])
        )
        ucb_outcome, _ = run_2d_ucb(
            market, bids, realization, config.mu,
            np.random.SeedSequence([seed, _TAG_UCB, type_sample, l_index, r]),
            record_trace=False,
        )
        out["ucb"][r] = ucb_outcome.auctioneer_utility / units
        for v, (exponent, explore) in enumerate(zip(config.eps_exponents, explore_grid)):
            eps_outcome, _ = run_eps_separated(
                market, bids, realization, explore, config.mu,
                np.random.SeedSequence([seed, _TAG_EPS, type_sample, l_index, r, v]),
                record_trace=False,
            )
            out[f"eps-{_exponent_label(exponent)}"][r] = eps_outcome.auctioneer_utility / units
    return out


def run_experiment(config: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Run the full grid and reduce to one row per (mechanism, budget).

    Deterministic for a fixed config regardless of ``threads``: cells are
    computed independently and reduced in a fixed order.
    """
    cells = [(l_index, ts) for l_index in range(len(config.l_grid))
             for ts in range(config.type_samples)]
    results: dict[tuple[int, int], dict[str, np.ndarray]] = {}
    if threads <= 1:
        for l_index, ts in cells:
            results[(l_index, ts)] = _run_cell(config, l_index, ts)
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {
                pool.submit(_run_cell, config, l_index, ts): (l_index, ts)
                for l_index, ts in cells
            }
            for future, key in futures.items():
                results[key] = future.result()

    rows = []
    for label in config.mechanism_labels():
        for l_index, units in enumerate(config.l_grid):
            values = np.concatenate(
                [results[(l_index, ts)][label] for ts in range(config.type_samples)]
            )
            mean = float(values.mean())
            stderr = (
                float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
            )
            rows.append(ResultRow(label, units, mean, stderr, values.size))
    return rows


# -- emission -----------------------------------------------------------------

_CSV_HEADER = ["mechanism", "L", "mean_utility_per_unit", "stderr", "replications"]


def emit_results(rows: list[ResultRow], csv_path, svg_path) -> None:
    """Write the results CSV (17 significant digits) and the SVG chart."""
    if not rows:
        raise ValueError("no result rows to emit")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for row in rows:
            writer.writerow([
                row.mechanism,
                row.units,
                f"{row.mean_utility_per_unit:.17g}",
                f"{row.stderr:.17g}",
                row.replications,
            ])
    with open(svg_path, "w") as fh:
        fh.write(render_results_svg(rows))


def read_results_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _CSV_HEADER:
            raise ValueError(f"unexpected results header: {reader.fieldnames}")
        return [
            ResultRow(
                rec["mechanism"],
                int(rec["L"]),
                float(rec["mean_utility_per_unit"]),
                float(rec["stderr"]),
                int(rec["replications"]),
            )
            for rec in reader
        ]


_PALETTE = ["#1b6ca8", "#d1495b", "#66a182", "#edae49", "#8d5a97", "#30638e",
            "#c05746", "#4f6d7a"]


def render_results_svg(rows: list[ResultRow]) -> str:
    """Line chart of mean utility per unit against the budget (log x axis),
    one polyline per mechanism, vertical stderr bars.  Plain SVG 1.1."""
    if not rows:
        raise ValueError("no result rows to plot")
    width, height = 760, 480
    left, right, top, bottom = 70, 180, 30, 50
    plot_w = width - left - right
    plot_h = height - top - bottom

    series: dict[str, list[ResultRow]] = {}
    for row in rows:
        series.setdefault(row.mechanism, []).append(row)
    for label in series:
        series[label] = sorted(series[label], key=lambda r: r.units)

    log_l = [math.log10(r.units) for r in rows]
    x_min, x_max = min(log_l), max(log_l)
    if x_max == x_min:
        x_min, x_max = x_min - 0.5, x_max + 0.5
    y_vals = [r.mean_utility_per_unit + s * r.stderr for r in rows for s in (-1.0, 1.0)]
    y_min, y_max = min(y_vals), max(y_vals)
    pad = 0.05 * (y_max - y_min) or 1.0
    y_min, y_max = y_min - pad, y_max + pad

    def x_pos(units: int) -> float:
        return left + (math.log10(units) - x_min) / (x_max - x_min) * plot_w

    def y_pos(value: float) -> float:
        return top + (y_max - value) / (y_max - y_min) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" '
        f'y2="{top + plot_h}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
    ]
    for units in sorted({r.units for r in rows}):
        x = x_pos(units)
        parts.append(
            f'<line x1="{x:.2f}" y1="{top + plot_h}" x2="{x:.2f}" '
            f'y2="{top + plot_h + 5}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{top + plot_h + 20}" font-size="11" '
            f'text-anchor="middle">{units}</text>'
        )
    for tick in np.linspace(y_min, y_max, 6):
        y = y_pos(float(tick))
        parts.append(
            f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{left - 9}" y="{y + 4:.2f}" font-size="11" '
            f'text-anchor="end">{tick:.3g}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.2f}" y="{height - 12}" font-size="12" '
        f'text-anchor="middle">units procured (log scale)</text>'
    )
    parts.append(
        f'<text x="18" y="{top + plot_h / 2:.2f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 18 {top + plot_h / 2:.2f})">mean utility per unit</text>'
    )

    for idx, (label, points) in enumerate(series.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        coords = " ".join(
            f"{x_pos(p.units):.2f},{y_pos(p.mean_utility_per_unit):.2f}" for p in points
        )
        for p in points:
            x = x_pos(p.units)
            y_lo = y_pos(p.mean_utility_per_unit - p.stderr)
            y_hi = y_pos(p.mean_utility_per_unit + p.stderr)
            parts.append(
                f'<line x1="{x:.2f}" y1="{y_lo:.2f}" x2="{x:.2f}" y2="{y_hi:.2f}" '
                f'stroke="{color}" stroke-width="1"/>'
            )
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>'
        )
        legend_y = top + 14 + 18 * idx
        parts.append(
            f'<line x1="{left + plot_w + 14}" y1="{legend_y - 4}" '
            f'x2="{left + plot_w + 38}" y2="{legend_y - 4}" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{left + plot_w + 44}" y="{legend_y}" '
            f'font-size="12">{escape(label)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def read_bids_csv(path) -> tuple[list[Bid], np.ndarray]:
    """Read an ``agent,cost,capacity,quality`` bids file.

    Agent ids must be 0..n-1 (any order).  Returns the bids in agent order
    and the quality vector.
    """
    records = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["agent", "cost", "capacity", "quality"]
        if reader.fieldnames != expected:
            raise ValueError(f"bids file must have header {','.join(expected)}")
        for rec in reader:
            agent = int(rec["agent"])
            if agent in records:
                raise ValueError(f"duplicate agent id {agent} in bids file")
            records[agent] = (
                Bid(float(rec["cost"]), int(rec["capacity"])),
                float(rec["quality"]),
            )
    n = len(records)
    if n == 0:
        raise ValueError("bids file contains no agents")
    if sorted(records) != list(range(n)):
        raise ValueError("agent ids must be consecutive integers starting at 0")
    bids = [records[i][0] for i in range(n)]
    qualities = np.array([records[i][1] for i in range(n)])
    return bids, qualities
