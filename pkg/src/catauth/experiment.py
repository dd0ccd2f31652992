"""Seeded Monte Carlo experiments over authentication rounds.

A trial is one fresh session run for ``rounds_per_trial`` rounds against
one strategy. Trial ``t`` draws its seeds from ``SeedSequence(master_seed,
spawn_key=(t,))``, so any trial can be replayed alone and results do not
depend on how trials are split across workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .adversary import AttackStrategy, Eve, Kind
from .protocol import ConfigError, RoundConfig, new_session, run_round
from .schmidt import (
    SchmidtVector, conversion_probability, is_catalyst, majorizes, make_schmidt,
    optimal_fidelity, reference_states, tensor_schmidt,
)

FORMATS = ("csv", "json")
CSV_COLUMNS = (
    "strategy", "K", "K_prime", "L", "trials", "detected", "detection_rate",
    "ci_low", "ci_high", "eve_fraction_mean", "key_growth",
)
#: below this many successes or failures the Wilson interval replaces the normal one
WILSON_BELOW = 30
SWEEP_AXES = ("K_prime", "L", "K")


@dataclass(frozen=True)
class ExperimentConfig:
    K: int = 100
    K_prime: int = 10
    trials: int = 1000
    rounds_per_trial: int = 1
    strategy: AttackStrategy = field(default_factory=AttackStrategy)
    master_seed: int = 0
    output_path: str | None = None
    output_format: str = "csv"
    key_sets: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.rounds_per_trial < 1:
            raise ConfigError("rounds_per_trial must be at least 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must fit in 64 bits")
        if self.output_format not in FORMATS:
            raise ConfigError(f"output_format must be one of {FORMATS}")
        if self.key_sets < 1 or self.workers < 1:
            raise ConfigError("key_sets and workers must be positive")
        self.round_config(0)
        try:
            self.strategy.check(self.K)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def round_config(self, seed: int) -> RoundConfig:
        return RoundConfig(self.K, self.K_prime, seed=seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategy"] = strategy_text(self.strategy)
        # neither affects results, so reports stay byte-identical across them
        d.pop("workers")
        d.pop("output_path")
        return d

    @classmethod
    def from_mapping(cls, items: dict) -> "ExperimentConfig":
        """Build from string values, as read from a config file or the command line."""
        ints = {"K", "K_prime", "trials", "rounds_per_trial", "master_seed", "key_sets", "workers"}
        kw: dict = {}
        L = None
        strategy = "passive"
        for key, val in items.items():
            key = {"seed": "master_seed", "out": "output_path", "format": "output_format"}.get(key, key)
            try:
                if key in ints:
                    kw[key] = int(val)
                elif key == "L":
                    L = int(val)
                elif key == "strategy":
                    strategy = str(val)
                elif key in ("output_path", "output_format"):
                    kw[key] = str(val)
                else:
                    raise ConfigError(f"unknown config key {key!r}")
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        try:
            kw["strategy"] = AttackStrategy.parse(strategy, L=L)
        except ValueError as exc:
            raise ConfigError(f"bad strategy {strategy!r}: {exc}") from None
        return cls(**kw)


def strategy_text(s: AttackStrategy) -> str:
    """Round-trippable text form, accepted by :meth:`AttackStrategy.parse`."""
    return f"{s.label},L={s.L}" if ":" in s.label else f"{s.label}:L={s.L}"


def parse_config_text(text: str) -> dict[str, str]:
    """``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {n}: expected key = value")
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = val.strip()
    return out


def load_config(path, **overrides) -> ExperimentConfig:
    items = parse_config_text(Path(path).read_text())
    items.update({k: str(v) for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_mapping(items)


@dataclass
class ExperimentStats:
    config: ExperimentConfig
    trials: int
    detected: int
    detection_rate: float
    stderr: float
    ci_low: float
    ci_high: float
    undetected_rate: float
    eve_fraction_histogram: dict[Fraction, int]
    eve_fraction_mean: float
    key_growth_per_round: int
    aborts: dict[str, int]
    runtime: float = 0.0

    def eve_fraction_tail(self) -> dict[Fraction, float]:
        """``p(e)``: probability of an undetected trial leaving Eve at least fraction ``e``."""
        out = {}
        acc = 0
        for e in sorted(self.eve_fraction_histogram, reverse=True):
            acc += self.eve_fraction_histogram[e]
            out[e] = acc / self.trials
        return dict(sorted(out.items()))

    def row(self) -> dict:
        c = self.config
        return {
            "strategy": c.strategy.label,
            "K": c.K,
            "K_prime": c.K_prime,
            "L": c.strategy.L,
            "trials": self.trials,
            "detected": self.detected,
            "detection_rate": self.detection_rate,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "eve_fraction_mean": self.eve_fraction_mean,
            "key_growth": self.key_growth_per_round,
        }


def trial_seeds(master_seed: int, trial: int) -> tuple[int, int]:
    """(session seed, adversary seed) for one trial."""
    words = np.random.SeedSequence(master_seed, spawn_key=(trial,)).generate_state(2, np.uint64)
    return int(words[0]), int(words[1])


def run_trial(config: ExperimentConfig, trial: int):
    """One trial. Returns ``(abort reason or None, Eve fraction 2K*e, key growth, successful rounds)``."""
    s_seed, e_seed = trial_seeds(config.master_seed, trial)
    session = new_session(config.round_config(s_seed), config.key_sets, record_transcript=False)
    strategy = config.strategy
    eve = None if strategy.kind is Kind.PASSIVE else Eve(strategy, seed=e_seed)
    growth = ok = 0
    for _ in range(config.rounds_per_trial):
        if session.terminated:
            break
        res = run_round(session, eve)
        if not res.success:
            return res.reason, None, growth, ok
        growth += res.key_delta
        ok += 1
    units = 0 if eve is None else eve.ledger.pairs_with_alice + eve.ledger.pairs_with_bob
    return None, units, growth, ok


def _run_chunk(args):
    config, start, stop = args
    return [run_trial(config, t) for t in range(start, stop)]


def proportion_ci(count: int, n: int) -> tuple[float, float]:
    """95% interval: normal approximation, or Wilson for fewer than 30 events either way."""
    from statsmodels.stats.proportion import proportion_confint

    method = "wilson" if min(count, n - count) < WILSON_BELOW else "normal"
    lo, hi = proportion_confint(count, n, alpha=0.05, method=method)
    return max(float(lo), 0.0), min(float(hi), 1.0)


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentStats:
    """Run every trial, aggregate, and write the report if ``output_path`` is set."""
    t0 = time.perf_counter()
    n = config.trials
    if config.workers > 1 and n > 1:
        bounds = np.linspace(0, n, config.workers + 1).astype(int)
        chunks = [(config, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(config.workers) as pool:
            results = [r for part in pool.map(_run_chunk, chunks) for r in part]
    else:
        results = _run_chunk((config, 0, n))
    stats = summarize(config, results)
    stats.runtime = time.perf_counter() - t0
    if write and config.output_path:
        write_report([stats], config.output_path, config.output_format, config)
    return stats


def summarize(config: ExperimentConfig, results) -> ExperimentStats:
    n = len(results)
    aborts = Counter(r[0] for r in results if r[0] is not None)
    detected = sum(aborts.values())
    rate = detected / n
    units = [r[1] for r in results if r[0] is None]
    hist = Counter(Fraction(u, 2 * config.K) for u in units)
    rounds = sum(r[3] for r in results)
    growth = sum(r[2] for r in results)
    lo, hi = proportion_ci(detected, n)
    return ExperimentStats(
        config=config,
        trials=n,
        detected=detected,
        detection_rate=rate,
        stderr=math.sqrt(rate * (1 - rate) / n),
        ci_low=lo,
        ci_high=hi,
        undetected_rate=1.0 - rate,
        eve_fraction_histogram=dict(sorted(hist.items())),
        eve_fraction_mean=float(np.mean([u / (2 * config.K) for u in units])) if units else 0.0,
        key_growth_per_round=round(growth / rounds) if rounds else 0,
        aborts=dict(sorted(aborts.items())),
    )


# -- reports ------------------------------------------------------------------

def _num(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def render_report(rows: list[ExperimentStats], fmt: str, config: ExperimentConfig, extra: dict | None = None) -> str:
    """Report text. Depends only on the configuration and results, never on timing."""
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# config: {json.dumps(config.to_dict(), sort_keys=True)}\n")
        buf.write(f"# master_seed: {config.master_seed}\n")
        for k, v in sorted((extra or {}).items()):
            buf.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for s in rows:
            r = s.row()
            w.writerow([_num(r[c]) for c in CSV_COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "config": config.to_dict(),
            "master_seed": config.master_seed,
            "rows": [
                {
                    **s.row(),
                    "undetected_rate": s.undetected_rate,
                    "stderr": s.stderr,
                    "aborts": s.aborts,
                    "eve_fraction_histogram": [[str(e), c] for e, c in s.eve_fraction_histogram.items()],
                }
                for s in rows
            ],
        }
        if extra:
            doc.update(extra)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    raise ConfigError(f"unknown report format {fmt!r}")


def write_report(rows, path, fmt, config, extra=None) -> None:
    Path(path).write_text(render_report(rows, fmt, config, extra))


# -- sweeps ---------------------------------------------------------------------

@dataclass
class SweepResult:
    axis: str
    values: list[int]
    rows: list[ExperimentStats]
    monotone: bool | None

    def rates(self) -> list[float]:
        return [r.detection_rate for r in self.rows]


def _with_axis(config: ExperimentConfig, axis: str, value: int) -> ExperimentConfig:
    if axis == "L":
        return replace(config, strategy=replace(config.strategy, L=value))
    return replace(config, **{axis: value})


def sweep(config: ExperimentConfig, axis: str, values, write: bool = True) -> SweepResult:
    """One experiment per value of ``axis``, all sharing the master seed.

    For ``K_prime`` the detection rate must not decrease by more than three
    combined standard errors from one value to the next; ``monotone`` reports
    the outcome (``None`` for other axes).
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {SWEEP_AXES}")
    values = [int(v) for v in values]
    if not values:
        raise ConfigError("sweep needs at least one value")
    rows = [run_experiment(_with_axis(config, axis, v), write=False) for v in values]
    monotone = None
    if axis == "K_prime":
        ordered = sorted(zip(values, rows), key=lambda t: t[0])
        monotone = all(
            b.detection_rate >= a.detection_rate - 3 * math.hypot(a.stderr, b.stderr)
            for (_, a), (_, b) in zip(ordered, ordered[1:])
        )
    result = SweepResult(axis, values, rows, monotone)
    if write and config.output_path:
        extra = {"sweep_axis": axis, "sweep_values": values, "monotone": monotone}
        write_report(rows, config.output_path, config.output_format, config, extra)
    return result


# -- reference constants ------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    value: float | bool
    expected: str
    passed: bool


def verify_reference_constants() -> list[Check]:
    b, c = reference_states()
    p = conversion_probability(b, c)
    p0 = optimal_fidelity(b, c)[0]
    direct = majorizes(c, b)
    catalysed = majorizes(tensor_schmidt(c, c), tensor_schmidt(b, c))
    return [
        Check("conversion_probability", p, "0.572 +- 0.001", abs(p - 0.572) <= 0.001),
        Check("optimal_fidelity", p0, "0.9907 +- 0.0005", abs(p0 - 0.9907) <= 0.0005),
        Check("direct_conversion", direct, "False", direct is False),
        Check("catalysed_conversion", catalysed, "True", catalysed is True),
    ]


# -- state search -----------------------------------------------------------------

@dataclass(frozen=True)
class SearchResult:
    b: SchmidtVector
    c: SchmidtVector
    p0: float
    iterations: int
    accepted: int


def feasible(b, c) -> bool:
    """``c`` cannot be reached from ``b`` directly but catalyses the conversion itself."""
    return not majorizes(c, b) and is_catalyst(c, b, c)


def _project(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, None)
    s = x.sum()
    if s <= 0:
        return np.full(x.size, 1.0 / x.size)
    return np.sort(x)[::-1] / s


def _start_point(dimension: int, rng: np.random.Generator, tries: int = 2000):
    pb, pc = reference_states()
    if dimension == pb.dim:
        return pb, pc
    if dimension > pb.dim:
        return pb.padded(dimension), pc.padded(dimension)
    for _ in range(tries):
        b = make_schmidt(rng.dirichlet(np.ones(dimension)))
        c = make_schmidt(rng.dirichlet(np.ones(dimension)))
        if feasible(b, c):
            return b, c
    return pb, pc


def search_states(dimension: int, iterations: int, seed: int = 0, step: float = 0.05) -> SearchResult:
    """Random local search for a feasible pair with a lower ``p0``.

    The first iteration evaluates the start point: the reference pair, zero-padded
    when ``dimension`` exceeds it, or a random feasible pair for smaller
    dimensions (the reference pair if none is found). Each later iteration
    perturbs the current best pair, projects both vectors back to sorted
    probability vectors, and keeps the candidate if it is feasible and lowers
    ``p0``.
    """
    if dimension < 4:
        raise ConfigError("dimension must be at least 4")
    if iterations < 1:
        raise ConfigError("iterations must be at least 1")
    rng = np.random.default_rng(seed)
    b, c = _start_point(dimension, rng)
    best = optimal_fidelity(b, c)[0]
    accepted = 0
    for _ in range(iterations - 1):
        nb = _project(b.coefficients + step * rng.standard_normal(b.dim) * rng.random())
        nc = _project(c.coefficients + step * rng.standard_normal(c.dim) * rng.random())
        nb, nc = SchmidtVector(nb), SchmidtVector(nc)
        if not feasible(nb, nc):
            continue
        f = optimal_fidelity(nb, nc)[0]
        if f < best:
            b, c, best = nb, nc, f
            accepted += 1
    return SearchResult(b, c, best, iterations, accepted)
