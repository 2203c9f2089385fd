"""Discrete-event Monte-Carlo simulation of recycling Bloom filters.

One epoch drives a filter through a stream of arrivals and scores every
arrival under the three counting conventions:

* count-instance: false positives among first arrivals of new messages;
* count-first: the same false positives over all arrivals;
* count-each: every arrival of a message whose first arrival was a false
  positive, over all arrivals.

"New" is ground truth: a message is known while the array it was recorded
against has not been cleared.  A message forgotten by a recycle is new again.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import IO, Any, Sequence

import numpy as np
from scipy import stats

from ._accel import jit
from .core import (
    INSERTED,
    RECYCLED,
    REPEAT,
    RETAINED,
    FilterParams,
    HashVariant,
    InvalidParameterError,
    NBounded,
    Phases,
    Retention,
    SigmaBounded,
    all_set,
    insert_kernel,
)
from .hashing import derive_seed, draw_indices, next_index, next_unit, stream_from

__all__ = [
    "WorkloadKind",
    "Workload",
    "EpochStats",
    "SimulationReport",
    "ExperimentConfig",
    "InsufficientSamplesError",
    "COUNTING",
    "run_epoch",
    "confidence_interval",
    "run_experiment",
    "write_report_csv",
]

COUNTING = ("count_instance", "count_first", "count_each")
MAX_POSITION = 4096

# counter slots filled by the kernel
_ARRIVALS, _NEW, _FP, _FP_EACH, _REPEATS, _BIT_SETTING = 0, 1, 2, 3, 4, 5
_CYCLES, _CYCLE_NEW, _CYCLE_BITSET, _MAX_BITS = 6, 7, 8, 9
_N_COUNTERS = 10


class InsufficientSamplesError(ValueError):
    pass


class WorkloadKind(enum.Enum):
    UNIFORM = "uniform"
    BERNOULLI = "bernoulli"


@dataclass(frozen=True)
class Workload:
    """Arrival process.

    ``UNIFORM`` draws every arrival uniformly from ``universe`` fixed
    messages.  ``BERNOULLI`` makes each arrival a repeat of a currently known
    message with probability ``p_repeat`` and a never-seen message otherwise.
    """

    kind: WorkloadKind = WorkloadKind.UNIFORM
    universe: int = 1000
    p_repeat: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind is WorkloadKind.UNIFORM and self.universe < 1:
            raise InvalidParameterError(f"universe must be >= 1, got {self.universe}")
        if not 0.0 <= self.p_repeat < 1.0:
            raise InvalidParameterError(f"p_repeat must lie in [0, 1), got {self.p_repeat}")

    @classmethod
    def uniform(cls, universe: int, seed: int = 0) -> "Workload":
        return cls(WorkloadKind.UNIFORM, universe=universe, seed=seed)

    @classmethod
    def bernoulli(cls, p_repeat: float, seed: int = 0) -> "Workload":
        return cls(WorkloadKind.BERNOULLI, p_repeat=p_repeat, seed=seed)


@dataclass(eq=False)
class EpochStats:
    arrivals: int
    new_messages: int
    fp_count_instance: int
    fp_count_first: int
    fp_count_each: int
    bit_setting: int
    cycles: int
    mean_bit_setting_msgs_per_cycle: float
    mean_new_msgs_per_cycle: float
    max_bits_set: int
    recycle_levels: np.ndarray = field(repr=False)
    new_by_position: np.ndarray = field(repr=False)
    fp_by_position: np.ndarray = field(repr=False)

    @property
    def fp_rate(self) -> dict[str, float]:
        return {
            "count_instance": _ratio(self.fp_count_instance, self.new_messages),
            "count_first": _ratio(self.fp_count_first, self.arrivals),
            "count_each": _ratio(self.fp_count_each, self.arrivals),
        }

    def summary(self) -> dict[str, Any]:
        row = {
            "arrivals": self.arrivals,
            "new_messages": self.new_messages,
            "fp_count_instance": self.fp_count_instance,
            "fp_count_first": self.fp_count_first,
            "fp_count_each": self.fp_count_each,
            "cycles": self.cycles,
            "mean_bit_setting_msgs_per_cycle": self.mean_bit_setting_msgs_per_cycle,
            "max_bits_set": self.max_bits_set,
        }
        row.update({f"rate_{name}": v for name, v in self.fp_rate.items()})
        return row


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


@jit
def _record(m, row, fp, tag, fpflag, gen, lists, list_n, keep_list):
    tag[m] = gen[row]
    fpflag[m] = fp
    if keep_list:
        lists[row, list_n[row]] = m
        list_n[row] += 1


@jit
def _epoch_kernel(
    M, k, noncolliding, two_phase, sigma, n_limit, retaining, oracle, frozen_inserts,
    bernoulli, universe, p_repeat, arrivals, hash_seed, arrival_seed,
    counters, recycle_levels, new_by_pos, fp_by_pos,
):
    n_ids = arrivals if bernoulli else universe
    bits = np.zeros((2, M), dtype=np.uint8)
    counts = np.zeros(2, dtype=np.int64)
    ctl = np.zeros(3, dtype=np.int64)
    tag = np.full(n_ids, -1, dtype=np.int64)
    fpflag = np.zeros(n_ids, dtype=np.uint8)
    gen = np.array([0, 1], dtype=np.int64)
    next_gen = 2
    lists = np.zeros((2, n_ids if bernoulli else 1), dtype=np.int64)
    list_n = np.zeros(2, dtype=np.int64)
    idx = np.empty(k, dtype=np.int64)
    max_pos = new_by_pos.size

    s = stream_from(arrival_seed, 0)
    fresh_id = 0
    pos = 0
    cycle_new = 0
    cycle_bitset = 0
    for _ in range(arrivals):
        counters[_ARRIVALS] += 1
        if bernoulli:
            s, u = next_unit(s)
            known_n = list_n[0] + list_n[1]
            if u < p_repeat and known_n > 0:
                s, r = next_index(s, known_n)
                if r < list_n[0]:
                    m = lists[0, r]
                else:
                    m = lists[1, r - list_n[0]]
            else:
                m = fresh_id
                fresh_id += 1
        else:
            s, m = next_index(s, universe)

        a = ctl[0]
        if tag[m] >= 0 and (tag[m] == gen[a] or (two_phase and tag[m] == gen[1 - a])):
            counters[_REPEATS] += 1
            if fpflag[m]:
                counters[_FP_EACH] += 1
            continue

        counters[_NEW] += 1
        cycle_new += 1
        draw_indices(m, hash_seed, M, k, noncolliding, idx)
        in_active = all_set(bits[a], idx, k)
        code, before, after, fresh = insert_kernel(
            bits, counts, ctl, idx, k, sigma, n_limit, retaining, two_phase, oracle,
            frozen_inserts,
        )
        fp = 1 if code & REPEAT else 0
        if pos < max_pos:
            new_by_pos[pos] += 1
            fp_by_pos[pos] += fp
        if fp:
            counters[_FP] += 1
            counters[_FP_EACH] += 1
        if fresh > 0:
            counters[_BIT_SETTING] += 1
            cycle_bitset += 1
        if code & INSERTED:
            _record(m, a, fp, tag, fpflag, gen, lists, list_n, bernoulli)
        elif fp:
            _record(m, a if in_active else 1 - a, fp, tag, fpflag, gen, lists, list_n, bernoulli)
        pos += 1

        if code & RECYCLED:
            level = before + fresh if code & INSERTED else before
            recycle_levels[level] += 1
            cleared = 1 - a if two_phase else a
            gen[cleared] = next_gen
            next_gen += 1
            list_n[cleared] = 0
            counters[_CYCLES] += 1
            counters[_CYCLE_NEW] += cycle_new
            counters[_CYCLE_BITSET] += cycle_bitset
            cycle_new = 0
            cycle_bitset = 0
            pos = 0
            if code & RETAINED:
                _record(m, ctl[0], 0, tag, fpflag, gen, lists, list_n, bernoulli)
        if counts[ctl[0]] > counters[_MAX_BITS]:
            counters[_MAX_BITS] = counts[ctl[0]]


def run_epoch(params: FilterParams, workload: Workload, arrivals: int, seed: int) -> EpochStats:
    """Simulate ``arrivals`` arrivals; deterministic in ``seed``."""
    if arrivals < 1:
        raise InvalidParameterError(f"arrivals must be >= 1, got {arrivals}")
    sigma, n_limit, oracle = params.kernel_limits()
    width = params.array_bits
    counters = np.zeros(_N_COUNTERS, dtype=np.int64)
    levels = np.zeros(width + 1, dtype=np.int64)
    new_pos = np.zeros(MAX_POSITION, dtype=np.int64)
    fp_pos = np.zeros(MAX_POSITION, dtype=np.int64)
    _epoch_kernel(
        width, params.k, params.noncolliding, params.two_phase, sigma, n_limit,
        params.retaining, oracle, params.insert_on_frozen_match,
        workload.kind is WorkloadKind.BERNOULLI,
        workload.universe, float(workload.p_repeat), arrivals,
        derive_seed(seed, 1), derive_seed(seed, 2, workload.seed),
        counters, levels, new_pos, fp_pos,
    )
    c = [int(v) for v in counters]
    cycles = c[_CYCLES]
    return EpochStats(
        arrivals=c[_ARRIVALS],
        new_messages=c[_NEW],
        fp_count_instance=c[_FP],
        fp_count_first=c[_FP],
        fp_count_each=c[_FP_EACH],
        bit_setting=c[_BIT_SETTING],
        cycles=cycles,
        mean_bit_setting_msgs_per_cycle=_ratio(c[_CYCLE_BITSET], cycles),
        mean_new_msgs_per_cycle=_ratio(c[_CYCLE_NEW], cycles),
        max_bits_set=c[_MAX_BITS],
        recycle_levels=levels,
        new_by_position=new_pos,
        fp_by_position=fp_pos,
    )


def confidence_interval(samples: Sequence[float], level: float = 0.99) -> tuple[float, float]:
    """Two-sided Student-t interval for the mean of ``samples``."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise InsufficientSamplesError(f"need at least 2 samples, got {x.size}")
    if not 0.0 < level < 1.0:
        raise InvalidParameterError(f"level must lie in (0, 1), got {level}")
    mean = float(x.mean())
    half = float(stats.t.ppf(0.5 + level / 2.0, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size))
    return mean - half, mean + half


@dataclass(frozen=True)
class ExperimentConfig:
    params: FilterParams
    workload: Workload = field(default_factory=Workload)
    epochs: int = 7
    arrivals: int = 100_000
    seed: int = 0
    confidence_level: float = 0.99
    workers: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.arrivals < 1:
            raise InvalidParameterError(f"arrivals must be >= 1, got {self.arrivals}")
        if not 0.0 < self.confidence_level < 1.0:
            raise InvalidParameterError("confidence_level must lie in (0, 1)")

    def epoch_seed(self, i: int) -> int:
        return derive_seed(self.seed, i)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ExperimentConfig":
        """Build from the JSON layout documented in the README."""
        doc = dict(doc)
        if "sigma" in doc and "N" in doc:
            raise InvalidParameterError("give either sigma or N, not both")
        if "N" in doc:
            recycle = NBounded(int(doc["N"]), bool(doc.get("oracle", False)))
        else:
            recycle = SigmaBounded(int(doc.get("sigma", 0)))
        params = FilterParams(
            M=int(doc["M"]),
            k=int(doc["k"]),
            hash_variant=HashVariant(doc.get("hash_variant", "colliding")),
            retention=Retention(doc.get("retention", "nonretaining")),
            recycle=recycle,
            phases=Phases(int(doc.get("phases", 1))),
            insert_on_frozen_match=bool(doc.get("insert_on_frozen_match", False)),
        )
        wl = dict(doc.get("workload", {}))
        workload = Workload(
            kind=WorkloadKind(wl.get("kind", "uniform")),
            universe=int(wl.get("universe", 1000)),
            p_repeat=float(wl.get("p_repeat", 0.0)),
            seed=int(wl.get("seed", 0)),
        )
        return cls(
            params=params,
            workload=workload,
            epochs=int(doc.get("epochs", 7)),
            arrivals=int(doc.get("arrivals", 100_000)),
            seed=int(doc.get("seed", 0)),
            confidence_level=float(doc.get("confidence_level", 0.99)),
            workers=int(doc.get("workers", 1)),
        )

    def to_dict(self) -> dict[str, Any]:
        p = self.params
        doc: dict[str, Any] = {
            "M": p.M,
            "k": p.k,
            "hash_variant": p.hash_variant.value,
            "retention": p.retention.value,
            "phases": p.phases.value,
            "insert_on_frozen_match": p.insert_on_frozen_match,
        }
        if isinstance(p.recycle, SigmaBounded):
            doc["sigma"] = p.recycle.sigma
        else:
            doc["N"] = p.recycle.n
            doc["oracle"] = p.recycle.oracle
        wl = asdict(self.workload)
        wl["kind"] = self.workload.kind.value
        doc["workload"] = wl
        doc.update(
            epochs=self.epochs,
            arrivals=self.arrivals,
            seed=self.seed,
            confidence_level=self.confidence_level,
            workers=self.workers,
        )
        return doc


@dataclass(eq=False)
class SimulationReport:
    epochs: list[EpochStats]
    mean: dict[str, float]
    std: dict[str, float]
    ci_low: dict[str, float]
    ci_high: dict[str, float]
    confidence_level: float

    @classmethod
    def from_epochs(cls, epochs: list[EpochStats], level: float) -> "SimulationReport":
        mean, std, lo, hi = {}, {}, {}, {}
        for name in COUNTING:
            x = np.array([e.fp_rate[name] for e in epochs])
            mean[name] = float(x.mean())
            std[name] = float(x.std(ddof=1)) if x.size > 1 else 0.0
            if x.size > 1:
                lo[name], hi[name] = confidence_interval(x, level)
            else:
                lo[name] = hi[name] = mean[name]
            # rounding can leave the mean a hair outside a zero-width interval
            lo[name] = min(lo[name], mean[name])
            hi[name] = max(hi[name], mean[name])
        return cls(epochs, mean, std, lo, hi, level)

    def mean_msgs_per_cycle(self) -> float:
        cycles = sum(e.cycles for e in self.epochs)
        total = sum(e.mean_bit_setting_msgs_per_cycle * e.cycles for e in self.epochs)
        return total / cycles if cycles else 0.0

    def to_json(self) -> dict[str, Any]:
        return {
            "confidence_level": self.confidence_level,
            "epochs": len(self.epochs),
            "mean": self.mean,
            "std": self.std,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "mean_bit_setting_msgs_per_cycle": self.mean_msgs_per_cycle(),
        }


def _run_one(args):
    config, i = args
    return run_epoch(config.params, config.workload, config.arrivals, config.epoch_seed(i))


def run_experiment(config: ExperimentConfig) -> SimulationReport:
    """Run every epoch with its own derived seed and aggregate.

    Epochs are independent, so ``workers > 1`` runs them on a thread pool
    (the compiled kernel releases the GIL); results are identical to a
    serial run.
    """
    jobs = [(config, i) for i in range(config.epochs)]
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            epochs = list(pool.map(_run_one, jobs))
    else:
        epochs = [_run_one(j) for j in jobs]
    return SimulationReport.from_epochs(epochs, config.confidence_level)


REPORT_COLUMNS = [
    "row", "arrivals", "new_messages", "fp_count_instance", "fp_count_first",
    "fp_count_each", "rate_count_instance", "rate_count_first", "rate_count_each",
    "cycles", "mean_bit_setting_msgs_per_cycle", "max_bits_set",
]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def write_report_csv(report: SimulationReport, fh: IO[str]) -> None:
    """One row per epoch, then ``mean``/``std``/``ci_low``/``ci_high`` rows."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for i, e in enumerate(report.epochs):
        row = e.summary()
        row["row"] = f"epoch{i}"
        w.writerow([_fmt(row.get(c, "")) for c in REPORT_COLUMNS])
    for label in ("mean", "std", "ci_low", "ci_high"):
        vals = getattr(report, label)
        row = {"row": label}
        row.update({f"rate_{n}": vals[n] for n in COUNTING})
        w.writerow([_fmt(row.get(c, "")) for c in REPORT_COLUMNS])


def report_json(report: SimulationReport, config: ExperimentConfig | None = None) -> str:
    doc = report.to_json()
    if config is not None:
        doc["config"] = config.to_dict()
    return json.dumps(doc, indent=2, sort_keys=True)


def report_csv_text(report: SimulationReport) -> str:
    buf = io.StringIO()
    write_report_csv(report, buf)
    return buf.getvalue()
