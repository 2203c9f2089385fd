"""Command-line front end.

Subcommands::

    model     long-run rate and expected capacity of one configuration
    bounds    worst-case, oracle and average-case rates for an N-bounded filter
    plan      best sigma-bounded plan and the N-bounded capacities at one M
    simulate  Monte-Carlo experiment, written as a CSV or JSON report
    compare   capacity comparison rows over several M and targets
    sweep     one-phase against two-phase capacity rows

Settings come from three layers, later ones winning: built-in defaults,
the JSON document given with ``--config``, then flags typed on the command
line.  Exit status is 0 on success, 2 for invalid flags or parameters and
1 when a computation fails.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
from typing import Any, Sequence

from . import __version__
from .bounds import DegenerateBoundError, bound_report
from .core import (
    FilterParams,
    HashVariant,
    InvalidParameterError,
    NBounded,
    Phases,
    Retention,
    SigmaBounded,
)
from .markov import (
    NumericalFailure,
    Variant,
    build_transition_table,
    expected_capacity,
    frozen_distribution,
    one_phase_fp,
    steady_state,
    two_phase_fp,
    write_table_csv,
)
from .planner import (
    COMPARE_COLUMNS,
    NORMALIZATIONS,
    SWEEP_COLUMNS,
    InfeasibleTargetError,
    compare_capacities,
    compare_row,
    sweep_row,
)
from .simulator import (
    ExperimentConfig,
    Workload,
    WorkloadKind,
    report_csv_text,
    report_json,
    run_experiment,
)

log = logging.getLogger("recyclebloom")

SEED_ENV = "RECYCLEBLOOM_SEED"
COMMANDS = ("model", "bounds", "plan", "simulate", "compare", "sweep")

DEFAULTS: dict[str, Any] = {
    "M": None,
    "k": None,
    "sigma": None,
    "N": None,
    "oracle": False,
    "target": None,
    "variant": "colliding",
    "retention": "nonretaining",
    "phases": 1,
    "insert_on_frozen_match": False,
    "epochs": 7,
    "arrivals": 100_000,
    "workload": "uniform",
    "universe": 1000,
    "p_repeat": 0.0,
    "workload_seed": 0,
    "confidence_level": 0.99,
    "workers": 1,
    "k_min": 1,
    "k_max": 15,
    "normalization": "per_swap",
    "format": "csv",
    "out": None,
    "dump_table": None,
}


class UsageError(Exception):
    """Bad flags or config; maps to exit status 2."""


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, *, multi: bool = False) -> None:
    # every default is SUPPRESS so that only typed flags reach the namespace
    nargs = "+" if multi else None
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON settings file (flags override it)")
    p.add_argument("--M", type=int, nargs=nargs, default=S, help="memory in bits")
    p.add_argument("--target", type=float, nargs=nargs, default=S, help="false-positive target")
    p.add_argument("--k", type=int, default=S, help="number of hash functions")
    p.add_argument("--variant", choices=[h.value for h in HashVariant], default=S)
    p.add_argument("--retention", choices=[r.value for r in Retention], default=S)
    p.add_argument("--phases", type=int, choices=[1, 2], default=S)
    p.add_argument("--seed", type=int, default=S, help=f"master seed (default ${SEED_ENV} or 0)")
    p.add_argument("--format", choices=["csv", "json"], default=S)
    p.add_argument("--out", default=S, help="write output here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(
        prog="recyclebloom",
        description="Long-run false-positive analysis of recycling Bloom filters.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="long-run rate and E[N0] of one configuration")
    _common(p)
    p.add_argument("--sigma", type=int, default=S)
    p.add_argument("--dump-table", dest="dump_table", default=S, help="write (i, j, tau) CSV here")

    p = sub.add_parser("bounds", help="N-bounded rates")
    _common(p)
    p.add_argument("--N", type=int, default=S)

    for name, multi in (("plan", False), ("compare", True), ("sweep", True)):
        p = sub.add_parser(name, help=f"{name} capacities under a target")
        _common(p, multi=multi)
        p.add_argument("--k-min", dest="k_min", type=int, default=S)
        p.add_argument("--k-max", dest="k_max", type=int, default=S)
        if name == "sweep":
            p.add_argument("--normalization", choices=list(NORMALIZATIONS), default=S)

    p = sub.add_parser("simulate", help="run a Monte-Carlo experiment")
    _common(p)
    p.add_argument("--sigma", type=int, default=S)
    p.add_argument("--N", type=int, default=S)
    p.add_argument("--oracle", action="store_true", default=S,
                   help="N-bounded recycling counts false-positive arrivals too")
    p.add_argument("--insert-on-frozen-match", dest="insert_on_frozen_match",
                   action="store_true", default=S)
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--arrivals", type=int, default=S)
    p.add_argument("--workload", choices=[w.value for w in WorkloadKind], default=S)
    p.add_argument("--universe", type=int, default=S)
    p.add_argument("--p-repeat", dest="p_repeat", type=float, default=S)
    p.add_argument("--confidence-level", dest="confidence_level", type=float, default=S)
    p.add_argument("--workers", type=int, default=S)
    return parser


def _flatten_config(doc: dict) -> dict:
    """Map a config document onto flag names.

    Accepts flag names directly, plus the experiment layout written by
    ``simulate --format json`` (``hash_variant`` and a nested ``workload``).
    """
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    out = dict(doc)
    out.pop("config", None)
    if "hash_variant" in out:
        out["variant"] = out.pop("hash_variant")
    wl = out.pop("workload", None)
    if isinstance(wl, dict):
        for key in ("universe", "p_repeat"):
            if key in wl:
                out[key] = wl[key]
        if "kind" in wl:
            out["workload"] = wl["kind"]
        if "seed" in wl:
            out["workload_seed"] = wl["seed"]
    elif wl is not None:
        out["workload"] = wl
    unknown = sorted(set(out) - set(DEFAULTS) - {"seed"})
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return out


def resolve(ns: argparse.Namespace, env: dict | None = None) -> dict:
    """Merge defaults, ``--config`` and typed flags, in that order."""
    env = os.environ if env is None else env
    settings = dict(DEFAULTS)
    try:
        settings["seed"] = int(env.get(SEED_ENV, 0))
    except ValueError:
        raise UsageError(f"${SEED_ENV} must be an integer") from None
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "verbose")}
    path = flags.pop("config", None)
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        settings.update(_flatten_config(doc))
    settings.update(flags)
    return settings


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _require(s: dict, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if s.get(n) is None]
    if missing:
        raise UsageError(f"missing required setting(s): {', '.join(missing)}")


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _scalar(s: dict, name: str):
    v = s[name]
    if isinstance(v, (list, tuple)):
        if len(v) != 1:
            raise UsageError(f"--{name} takes a single value here")
        return v[0]
    return v


def _k_range(s: dict) -> range:
    if s.get("k") is not None:
        return range(int(s["k"]), int(s["k"]) + 1)
    lo, hi = int(s["k_min"]), int(s["k_max"])
    if not 1 <= lo <= hi:
        raise InvalidParameterError(f"k range must satisfy 1 <= k-min <= k-max, got {lo}..{hi}")
    return range(lo, hi + 1)


def _num(v):
    # 12 significant digits everywhere
    if isinstance(v, float):
        return float(f"{v:.12g}")
    return v


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    if isinstance(v, bool):
        return str(v).lower()
    return "" if v is None else str(v)


def _render(rows: list[dict], columns: Sequence[str], fmt: str) -> str:
    if fmt == "json":
        doc = [{c: _num(r[c]) for c in columns} for r in rows]
        return json.dumps(doc[0] if len(doc) == 1 else doc, indent=2) + "\n"
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(r[c]) for c in columns) + "\n")
    return buf.getvalue()


def _filter_params(s: dict) -> FilterParams:
    if s.get("sigma") is not None and s.get("N") is not None:
        raise UsageError("give either --sigma or --N, not both")
    if s.get("N") is not None:
        recycle = NBounded(int(s["N"]), bool(s["oracle"]))
    else:
        _require(s, "sigma")
        recycle = SigmaBounded(int(s["sigma"]))
    return FilterParams(
        M=int(_scalar(s, "M")),
        k=int(s["k"]),
        hash_variant=HashVariant(s["variant"]),
        retention=Retention(s["retention"]),
        recycle=recycle,
        phases=Phases(int(s["phases"])),
        insert_on_frozen_match=bool(s["insert_on_frozen_match"]),
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

MODEL_COLUMNS = (
    "M", "k", "sigma", "variant", "retention", "phases", "array_bits", "fp", "expected_messages",
)
BOUNDS_COLUMNS = ("M", "k", "N", "f_w", "f_o", "f_a")


def cmd_model(s: dict) -> str:
    _require(s, "M", "k", "sigma")
    params = _filter_params(s)
    variant = Variant.of(params.hash_variant, params.retention)
    table = build_transition_table(variant, params.array_bits, params.k, params.recycle.sigma)
    steady = steady_state(table)
    if params.two_phase:
        fp = two_phase_fp(steady, frozen_distribution(steady, table))
    else:
        fp = one_phase_fp(steady)
    cap = None if params.retaining else expected_capacity(table)
    if s.get("dump_table"):
        with open(s["dump_table"], "w", newline="") as fh:
            write_table_csv(table, fh)
    row = {
        "M": params.M,
        "k": params.k,
        "sigma": params.recycle.sigma,
        "variant": params.hash_variant.value,
        "retention": params.retention.value,
        "phases": params.phases.value,
        "array_bits": params.array_bits,
        "fp": fp,
        "expected_messages": cap,
    }
    return _render([row], MODEL_COLUMNS, s["format"])


def cmd_bounds(s: dict) -> str:
    _require(s, "M", "k", "N")
    rep = bound_report(int(_scalar(s, "M")), int(s["k"]), int(s["N"]))
    row = {"M": rep.M, "k": rep.k, "N": rep.n_or_N, "f_w": rep.f_w, "f_o": rep.f_o, "f_a": rep.f_a}
    return _render([row], BOUNDS_COLUMNS, s["format"])


def _variant(s: dict) -> Variant:
    return Variant.of(HashVariant(s["variant"]), Retention(s["retention"]))


def cmd_plan(s: dict) -> str:
    _require(s, "M", "target")
    if int(s["phases"]) != 1:
        raise UsageError("plan works on one-phase filters; use sweep for two-phase capacity")
    plan = compare_capacities(
        int(_scalar(s, "M")), float(_scalar(s, "target")), _k_range(s), variant=_variant(s)
    )
    return _render([compare_row(plan)], COMPARE_COLUMNS, s["format"])


def cmd_compare(s: dict) -> str:
    _require(s, "M", "target")
    ks, variant = _k_range(s), _variant(s)
    rows = [
        compare_row(compare_capacities(int(M), float(t), ks, variant=variant))
        for t in _as_list(s["target"])
        for M in _as_list(s["M"])
    ]
    return _render(rows, COMPARE_COLUMNS, s["format"])


def cmd_sweep(s: dict) -> str:
    _require(s, "M", "target")
    ks, variant = _k_range(s), _variant(s)
    rows = [
        sweep_row(int(M), float(t), ks, variant=variant, normalization=s["normalization"])
        for M in _as_list(s["M"])
        for t in _as_list(s["target"])
    ]
    return _render(rows, SWEEP_COLUMNS, s["format"])


def experiment_config(s: dict) -> ExperimentConfig:
    _require(s, "M", "k")
    params = _filter_params(s)
    workload = Workload(
        kind=WorkloadKind(s["workload"]),
        universe=int(s["universe"]),
        p_repeat=float(s["p_repeat"]),
        seed=int(s["workload_seed"]),
    )
    return ExperimentConfig(
        params=params,
        workload=workload,
        epochs=int(s["epochs"]),
        arrivals=int(s["arrivals"]),
        seed=int(s["seed"]),
        confidence_level=float(s["confidence_level"]),
        workers=int(s["workers"]),
    )


def cmd_simulate(s: dict) -> str:
    config = experiment_config(s)
    report = run_experiment(config)
    if s["format"] == "json":
        return report_json(report, config) + "\n"
    return report_csv_text(report)


HANDLERS = {
    "model": cmd_model,
    "bounds": cmd_bounds,
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)  # exits with status 2 on malformed flags
    logging.basicConfig(
        level=logging.INFO if ns.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        settings = resolve(ns)
        text = HANDLERS[ns.command](settings)
    except (UsageError, InvalidParameterError, ValueError) as exc:
        # ValueError covers enum lookups on config values
        if isinstance(exc, (InfeasibleTargetError, NumericalFailure)):
            print(f"recyclebloom: error: {exc}", file=sys.stderr)
            return 1
        print(f"recyclebloom: invalid arguments: {exc}", file=sys.stderr)
        return 2
    except (DegenerateBoundError, ArithmeticError, OSError) as exc:
        print(f"recyclebloom: error: {exc}", file=sys.stderr)
        return 1
    out = settings.get("out")
    if out:
        try:
            with open(out, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"recyclebloom: error: {exc}", file=sys.stderr)
            return 1
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
