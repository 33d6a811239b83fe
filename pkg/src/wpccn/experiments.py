"""Monte-Carlo experiment runner and the three-node relay-position sweep.

Every trial draws one network from an RNG stream keyed by
``(seed, sweep index, trial index)`` and runs all requested algorithms on
that same network, so records are reproducible regardless of the order in
which trials execute.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import relay
from .netmodel import (
    ChannelModelConfig,
    GeometryConfig,
    NetworkInstance,
    Positions,
    SystemParams,
    deterministic_channels,
    random_instance,
)
from .numerics import bisect_root
from .scheduling import max_eh, powmu

KINDS = {
    "sweep_n": "num_sources",
    "sweep_k": "num_relays",
    "sweep_pmax": "max_ul_power",
    "sweep_relay_pos": "relay_radius_m",
    "optgap_maxeh": "num_sources",
    "runtime": "num_sources",
}

CSV_COLUMNS = ("sweep_param", "sweep_value", "trial", "algorithm", "total_s", "wall_time_s", "feasible")


def _direct_powmu(instance: NetworkInstance) -> relay.FullSchedule:
    return relay.solve_assignment(instance, [relay.DIRECT] * instance.n, "powmu")


def _direct_max_eh(instance: NetworkInstance) -> relay.FullSchedule:
    links = relay.assignment_to_links(instance, [relay.DIRECT] * instance.n)
    s = max_eh(links)
    n, k = instance.n, instance.k
    return relay.FullSchedule(
        np.zeros(n, dtype=int), s.tau0, s.tau_it[:n], s.p_tx[:n], np.zeros(k), np.zeros(k), s.total, "max_eh"
    )


ALGORITHMS: dict[str, Callable[[NetworkInstance], relay.FullSchedule]] = {
    "bba": relay.bba,
    "obh": relay.obh,
    "rph": relay.rph,
    "rstma": relay.rstma,
    "or_powmu": relay.or_powmu,
    "htc": relay.htc_baseline,
    # schedulers on the all-direct assignment
    "powmu": _direct_powmu,
    "max_eh": _direct_max_eh,
}


@dataclass
class ExperimentConfig:
    """One sweep: a kind, its grid, the algorithms and the base network."""

    kind: str
    grid: list
    algorithms: list[str] = field(default_factory=lambda: ["bba", "obh", "rph", "rstma", "or_powmu", "htc"])
    trials: int = 1000
    seed: int = 0
    params: dict = field(default_factory=lambda: {"num_sources": 5, "num_relays": 2})
    geometry: dict = field(default_factory=dict)
    channel: dict = field(default_factory=dict)
    # exact search grows as (K+1)^N; skipped above this many sources
    bba_max_sources: int = 5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {sorted(KINDS)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.grid:
            raise ValueError("sweep grid must not be empty")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown or not self.algorithms:
            raise ValueError(f"unknown algorithms {sorted(unknown)}; expected a subset of {sorted(ALGORITHMS)}")
        # validate the base blocks eagerly so a bad config fails before any trial runs
        GeometryConfig(**self.geometry)
        ChannelModelConfig(**self.channel)

    @property
    def sweep_param(self) -> str:
        return KINDS[self.kind]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TrialRecord:
    sweep_param: str
    sweep_value: float
    trial: int
    algorithm: str
    total_s: float
    wall_time_s: float
    feasible: bool


@dataclass
class ExperimentResult:
    records: list[TrialRecord]
    summary: list[dict]


def trial_rng(seed: int, sweep_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, sweep_index, trial])


def make_instance(config: ExperimentConfig, sweep_index: int, trial: int) -> NetworkInstance:
    value = config.grid[sweep_index]
    params = dict(config.params)
    geometry = dict(config.geometry)
    name = config.sweep_param
    if name == "relay_radius_m":
        geometry[name] = float(value)
    elif name in ("num_sources", "num_relays"):
        params[name] = int(value)
    else:
        params[name] = float(value)
    if config.kind == "optgap_maxeh":
        params["num_relays"] = 0
    rng = trial_rng(config.seed, sweep_index, trial)
    return random_instance(
        SystemParams(**params), rng, GeometryConfig(**geometry), ChannelModelConfig(**config.channel)
    )


def _algorithms_for(config: ExperimentConfig, instance: NetworkInstance) -> list[str]:
    return [a for a in config.algorithms if not (a == "bba" and instance.n > config.bba_max_sources)]


def run_trial(config: ExperimentConfig, sweep_index: int, trial: int) -> list[TrialRecord]:
    instance = make_instance(config, sweep_index, trial)
    value = config.grid[sweep_index]
    out = []
    for name in _algorithms_for(config, instance):
        start = time.perf_counter()
        try:
            total = float(ALGORITHMS[name](instance).total)
            ok = math.isfinite(total) and total > 0
        except (ValueError, ArithmeticError):
            total, ok = math.nan, False
        out.append(
            TrialRecord(config.sweep_param, value, trial, name, total, time.perf_counter() - start, ok)
        )
    return out


def _run_task(args) -> list[TrialRecord]:
    config, sweep_index, trial = args
    return run_trial(config, sweep_index, trial)


def iter_records(config: ExperimentConfig, threads: int = 1) -> Iterable[TrialRecord]:
    """Records in (sweep index, trial, algorithm order), whatever ``threads`` is."""
    tasks = [(config, s, t) for s in range(len(config.grid)) for t in range(config.trials)]
    if threads <= 1:
        for task in tasks:
            yield from _run_task(task)
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        # map preserves submission order
        for recs in pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * threads))):
            yield from recs


_Z95 = statistics.NormalDist().inv_cdf(0.975)


def summarize(records: Sequence[TrialRecord]) -> list[dict]:
    """Mean and normal-approximation 95% CI half-width per (sweep value, algorithm)."""
    groups: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        groups.setdefault((r.sweep_param, r.sweep_value, r.algorithm), []).append(r)
    rows = []
    for (param, value, algo), recs in groups.items():
        vals = [r.total_s for r in recs if r.feasible]
        mean = statistics.fmean(vals) if vals else math.nan
        half = _Z95 * statistics.stdev(vals) / math.sqrt(len(vals)) if len(vals) > 1 else math.nan
        rows.append(
            {
                "sweep_param": param,
                "sweep_value": value,
                "algorithm": algo,
                "trials": len(recs),
                "feasible": len(vals),
                "mean_total_s": mean,
                "ci95_s": half,
                "mean_wall_time_s": statistics.fmean(r.wall_time_s for r in recs),
            }
        )
    return rows


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    records = list(iter_records(config, threads))
    return ExperimentResult(records, summarize(records))


def record_row(r: TrialRecord) -> list:
    # repr keeps floats round-trippable, so equal seeds give equal bytes
    return [r.sweep_param, repr(r.sweep_value), r.trial, r.algorithm, repr(r.total_s), f"{r.wall_time_s:.6g}", int(r.feasible)]


def write_records_csv(records: Iterable[TrialRecord], out: io.TextIOBase) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(record_row(r))


def write_summary_csv(rows: Sequence[dict], out: io.TextIOBase) -> None:
    if not rows:
        return
    w = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


# ------------------------------------------------------------------ three node

THREE_NODE_COLUMNS = ("pmax_w", "relay_x_m", "direct_total_s", "relayed_total_s", "relay_benefit")


@dataclass
class ThreeNodeConfig:
    """AP at the origin, one source at ``source``, relay moving on ``y = relay_y``."""

    pmax_w: list[float] = field(default_factory=lambda: [1e3, 10e-3])
    x_min: float = -2.0
    x_max: float = 5.0
    points: int = 701
    relay_y: float = 2.0
    source: tuple[float, float] = (4.0, 0.0)
    scheduler: str = "powmu"
    params: dict = field(default_factory=dict)
    channel: dict = field(default_factory=lambda: {"shadowing_sigma_db": 0.0, "fading": "none"})

    def __post_init__(self):
        if self.scheduler not in ("powmu", "max_eh"):
            raise ValueError("scheduler must be 'powmu' or 'max_eh'")
        if not self.x_min < self.x_max or self.points < 2:
            raise ValueError("need x_min < x_max and at least 2 points")
        if not self.pmax_w:
            raise ValueError("pmax_w must not be empty")

    @classmethod
    def from_dict(cls, d: dict) -> "ThreeNodeConfig":
        d = dict(d)
        if "source" in d:
            d["source"] = tuple(d["source"])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ThreeNodeConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ThreeNodeResult:
    rows: list[tuple]
    # per pmax: x where relayed and direct totals cross, and where the gain test flips
    crossovers: dict[float, list[float]]
    benefit_edges: dict[float, list[float]]


def three_node_instance(cfg: ThreeNodeConfig, x: float, pmax: float) -> NetworkInstance:
    base = {"num_sources": 1, "num_relays": 1, **cfg.params, "max_ul_power": pmax}
    pos = Positions(np.array([cfg.source], float), np.array([[x, cfg.relay_y]], float))
    ch = deterministic_channels(pos, ChannelModelConfig(**cfg.channel))
    return NetworkInstance(SystemParams(**base), ch, pos)


def _three_node_totals(cfg: ThreeNodeConfig, x: float, pmax: float) -> tuple[float, float]:
    inst = three_node_instance(cfg, x, pmax)
    sched = powmu if cfg.scheduler == "powmu" else max_eh
    direct = sched(relay.assignment_to_links(inst, [0])).total
    relayed = sched(relay.assignment_to_links(inst, [1])).total
    return direct, relayed


def _sign_changes(xs, f: Callable[[float], float], vals) -> list[float]:
    roots = []
    for a, b, fa, fb in zip(xs[:-1], xs[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            roots.append(float(a))
        elif fa * fb < 0.0:
            roots.append(bisect_root(f, float(a), float(b)))
    return roots


def three_node_sweep(cfg: ThreeNodeConfig) -> ThreeNodeResult:
    xs = np.linspace(cfg.x_min, cfg.x_max, cfg.points)
    rows = []
    crossings: dict[float, list[float]] = {}
    edges: dict[float, list[float]] = {}
    for pmax in cfg.pmax_w:
        diff_vals, score_vals = [], []
        for x in xs:
            d, r = _three_node_totals(cfg, float(x), pmax)
            inst = three_node_instance(cfg, float(x), pmax)
            benefit = relay.relay_benefit(inst, 0, 1)
            rows.append((pmax, float(x), d, r, benefit))
            diff_vals.append(r - d)
            score_vals.append(_benefit_margin(inst))

        def diff(x, pmax=pmax):
            d, r = _three_node_totals(cfg, x, pmax)
            return r - d

        def margin(x, pmax=pmax):
            return _benefit_margin(three_node_instance(cfg, x, pmax))

        crossings[pmax] = _sign_changes(xs, diff, diff_vals)
        edges[pmax] = _sign_changes(xs, margin, score_vals)
    return ThreeNodeResult(rows, crossings, edges)


def _benefit_margin(inst: NetworkInstance) -> float:
    """Log-ratio of the relay's min-product to the direct product (positive = relay helps)."""
    s = relay._scores(inst, 0)
    return math.log(s[1]) - math.log(s[0])


def write_three_node_csv(result: ThreeNodeResult, out: io.TextIOBase) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(THREE_NODE_COLUMNS)
    for pmax, x, d, r, b in result.rows:
        w.writerow([repr(pmax), repr(x), repr(d), repr(r), int(b)])


def region_width_error(crossings: Sequence[float], edges: Sequence[float]) -> float:
    """Relative difference between the widths of the two benefit regions."""
    if len(crossings) != 2 or len(edges) != 2:
        return math.inf
    wc = crossings[1] - crossings[0]
    we = edges[1] - edges[0]
    return abs(wc - we) / we
