"""Seeded Monte Carlo sweep harness and command-line entry point.

Benchmarks the proposed estimator against the stacked LS baseline along one
scenario axis (snr_db, M, L_Q or L), aggregates NMSE and arithmetic-cost
statistics per (axis value, method), and emits a CSV table for external
plotting. Reproducibility contract: an identical SweepConfig (including the
seed) produces byte-identical output regardless of worker count, because
every trial derives its own RNG stream from (seed, axis_index, trial_index)
and aggregation happens after a deterministic sort.

NMSE is computed on the group image (I_M kron Omega) g of both estimate and
truth. With Q > 1 the training operators carry Q duplicate columns per
element group, so the element-space split inside a group is unidentifiable
from r and every estimator faces an element-space NMSE floor of 1 - 1/Q;
the grouped channel is the quantity the measurements actually determine.
At Q = 1 the group image is the identity embedding and the metric coincides
with element-space NMSE.
"""

import argparse
import configparser
import hashlib
import math
import struct
import sys
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines_metrics import OpCounter, ls_estimate, nmse
from .channel_model import (build_measurement_operators, gen_sparse_isac_channels,
                            qpsk_pilots, synth_observation)
from .estimator import EstimatorConfig, EstimatorError, estimate
from .grouping import build_grouping_matrix, group_image

__all__ = [
    "FixedParams",
    "SweepConfig",
    "SweepConfigError",
    "auto_blocks",
    "run_sweep",
    "emit_csv",
    "main",
]

AXES = ("snr_db", "M", "L_Q", "L")
METHODS = ("proposed", "ls")

CSV_HEADER = ("axis,axis_value,method,nmse_s_mean,nmse_s_stderr,"
              "nmse_c_mean,nmse_c_stderr,trials,failures,mul_count_mean")

Dims = namedtuple("Dims", "L M Q B k_s k_c snr_db")


class SweepConfigError(ValueError):
    """Raised for an invalid sweep configuration (CLI exit code 2)."""


def auto_blocks(L, M, Q, k_s, k_c):
    """Default pilot-block count when fixed.B is left unset.

    Row t of every training block only touches the columns of element group
    t, so the measurement splits into L/Q + 1 independent B x 2M subsystems
    and B must exceed ~1.5 M for the per-group lasso to be identifiable
    rather than interpolating. The rows >= 2 (k_s + k_c) floor guards tiny-M
    scenarios.
    """
    slots = L // Q + 1
    return max(math.ceil(1.5 * M), math.ceil(2 * (k_s + k_c) / slots), 1)


@dataclass
class FixedParams:
    """Scenario parameters held fixed while one axis sweeps.

    B = None selects auto_blocks() per axis point (B tracks M when M is the
    sweep axis). snr_db is only consulted when the sweep axis is not snr_db.
    """

    L: int = 64
    M: int = 8
    Q: int = 4
    B: int | None = None
    k_s: int = 8
    k_c: int = 8
    snr_db: float = 10.0

    def __post_init__(self):
        for name in ("L", "M", "Q", "k_s", "k_c"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise SweepConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.L % self.Q:
            raise SweepConfigError(f"Q = {self.Q} must divide L = {self.L}")
        if self.B is not None and (not isinstance(self.B, (int, np.integer))
                                   or isinstance(self.B, bool) or self.B < 1):
            raise SweepConfigError(f"B must be a positive integer or None, got {self.B!r}")
        self.snr_db = float(self.snr_db)
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise SweepConfigError(f"snr_db must be a real dB value, got {self.snr_db}")


def _default_estimator():
    # harness default: epsilon = 0.1 keeps the log(h + eps) barrier soft
    # enough that comm coordinates can leave zero at low SNR; the library
    # default 1e-3 stays untouched for direct estimate() callers.
    return EstimatorConfig(epsilon=0.1)


@dataclass
class SweepConfig:
    """One benchmark sweep: axis, fixed scenario, trial count, methods.

    axis_values must be nonempty and strictly increasing; for the M/L_Q/L
    axes they must be positive integers, every L_Q value must divide fixed.L,
    and every L value must be divisible by fixed.Q. methods is a nonempty
    subset of {proposed, ls}. estimator is the base config handed to every
    proposed-method trial after per-trial noise calibration (see run_sweep).
    """

    sweep_axis: str = "snr_db"
    axis_values: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    fixed: FixedParams = field(default_factory=FixedParams)
    trials: int = 200
    seed: int = 0
    methods: tuple = METHODS
    estimator: EstimatorConfig = field(default_factory=_default_estimator)
    output_path: str = "sweep.csv"
    trace_dir: str | None = None

    def __post_init__(self):
        if self.sweep_axis not in AXES:
            raise SweepConfigError(f"sweep_axis must be one of {AXES}, got {self.sweep_axis!r}")
        if isinstance(self.fixed, dict):
            self.fixed = FixedParams(**self.fixed)
        if not isinstance(self.fixed, FixedParams):
            raise SweepConfigError("fixed must be a FixedParams or a dict of its fields")
        try:
            vals = tuple(float(v) for v in tuple(self.axis_values))
        except (TypeError, ValueError):
            raise SweepConfigError(f"axis_values must be numeric, got {self.axis_values!r}")
        if not vals:
            raise SweepConfigError("axis_values must be nonempty")
        if any(math.isnan(v) for v in vals):
            raise SweepConfigError("axis_values must not contain NaN")
        if not all(a < b for a, b in zip(vals, vals[1:])):
            raise SweepConfigError(f"axis_values must be strictly increasing, got {vals}")
        if self.sweep_axis == "snr_db":
            if vals[0] == -math.inf:
                raise SweepConfigError("snr_db = -inf is not an operating point")
            self.axis_values = vals
        else:
            if not all(v == int(v) and v >= 1 for v in vals):
                raise SweepConfigError(f"{self.sweep_axis} values must be positive integers")
            self.axis_values = tuple(int(v) for v in vals)
        if self.sweep_axis == "L_Q":
            bad = [v for v in self.axis_values if self.fixed.L % v]
            if bad:
                raise SweepConfigError(f"L_Q values {bad} do not divide L = {self.fixed.L}")
        if self.sweep_axis == "L":
            bad = [v for v in self.axis_values if v % self.fixed.Q]
            if bad:
                raise SweepConfigError(f"L values {bad} are not divisible by Q = {self.fixed.Q}")
        if not isinstance(self.trials, (int, np.integer)) or isinstance(self.trials, bool) \
                or self.trials < 1:
            raise SweepConfigError(f"trials must be a positive integer, got {self.trials!r}")
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise SweepConfigError(f"seed must be an integer, got {self.seed!r}")
        methods = list(self.methods) if not isinstance(self.methods, str) else [self.methods]
        unknown = [m for m in methods if m not in METHODS]
        if unknown or not methods:
            raise SweepConfigError(f"methods must be a nonempty subset of {METHODS}, "
                                   f"got {self.methods!r}")
        self.methods = tuple(m for m in METHODS if m in methods)
        if not isinstance(self.estimator, EstimatorConfig):
            raise SweepConfigError("estimator must be an EstimatorConfig")
        self.output_path = str(self.output_path)
        if not self.output_path:
            raise SweepConfigError("output_path must be nonempty")
        if self.trace_dir is not None:
            self.trace_dir = str(self.trace_dir)
        for idx in range(len(self.axis_values)):
            dims = self.point_dims(idx)
            n = (dims.L + 1) * dims.M
            if dims.k_s > n or dims.k_c > n:
                raise SweepConfigError(
                    f"sparsity ({dims.k_s}, {dims.k_c}) exceeds dimension {n} "
                    f"at {self.sweep_axis} = {self.axis_values[idx]}")

    def point_dims(self, axis_index):
        """Fully resolved scenario (L, M, Q, B, k_s, k_c, snr_db) at one axis point."""
        fx = self.fixed
        L, M, Q, snr = fx.L, fx.M, fx.Q, fx.snr_db
        value = self.axis_values[axis_index]
        if self.sweep_axis == "snr_db":
            snr = float(value)
        elif self.sweep_axis == "M":
            M = int(value)
        elif self.sweep_axis == "L_Q":
            Q = L // int(value)
        else:
            L = int(value)
        B = fx.B if fx.B is not None else auto_blocks(L, M, Q, fx.k_s, fx.k_c)
        return Dims(L, M, Q, B, fx.k_s, fx.k_c, snr)


def _trial_seed(seed, axis_index, trial_index):
    # seed xor hash(axis_index, trial_index); a stable 64-bit BLAKE2b
    # replaces the salted builtin hash
    digest = hashlib.blake2b(struct.pack("<qq", axis_index, trial_index),
                             digest_size=8).digest()
    return (int(seed) ^ int.from_bytes(digest, "little")) & 0xFFFFFFFFFFFFFFFF


def _noise_informed(base, meas):
    """Per-trial estimator config calibrated from measurement metadata.

    The synthesizer records the operating SNR, so the harness (like any
    benchmark that knows its own noise level) initializes gamma at the true
    noise scale, floors it at 0.8 of that scale, and rescales eta by the
    column norm sqrt(B) (the universal-threshold rule is stated for
    unit-norm columns).
    """
    g = meas.gamma_e
    sigma = 1.0 / math.sqrt(g) if (math.isfinite(g) and g > 0) else 1e-12
    sigma = max(sigma, 1e-12)
    return replace(
        base,
        eta=base.eta * math.sqrt(meas.blocks),
        gamma_init=base.gamma_init if base.gamma_init is not None else sigma,
        gamma_floor=max(base.gamma_floor, 0.8 * sigma),
    )


def _run_trial(config, axis_index, trial_index):
    """One seeded trial: synthesize the scenario, run every method.

    Returns one record per method; a solver blowup (EstimatorError) marks
    that method's record failed instead of aborting the sweep.
    """
    dims = config.point_dims(axis_index)
    ss = np.random.SeedSequence(_trial_seed(config.seed, axis_index, trial_index))
    s_ch, s_pi, s_no = ss.spawn(3)
    gmap = build_grouping_matrix(dims.L, dims.Q, "grouping")
    channels = gen_sparse_isac_channels(dims.L, dims.M, dims.k_s, dims.k_c, s_ch)
    pilots = qpsk_pilots(dims.B, dims.M, s_pi)
    ops = build_measurement_operators(gmap, pilots, dims.M)
    meas = synth_observation(channels, ops, dims.snr_db, s_no,
                             grouping=gmap, pilots=pilots)
    gs_ref = group_image(channels.g_s, gmap)
    gc_ref = group_image(channels.g_c, gmap)
    records = []
    for method in config.methods:
        counter = OpCounter()
        rec = {"axis_index": axis_index, "trial": trial_index, "method": method,
               "ok": False, "nmse_s": math.nan, "nmse_c": math.nan, "muls": 0}
        try:
            if method == "ls":
                result = ls_estimate(meas, counter)
            else:
                trace_path = None
                if config.trace_dir is not None:
                    trace_path = Path(config.trace_dir) / (
                        f"trace_{axis_index:03d}_{trial_index:05d}.jsonl")
                result = estimate(meas, _noise_informed(config.estimator, meas),
                                  counter, trace_path=trace_path)
            rec["nmse_s"] = nmse(group_image(result.g_s_hat, gmap), gs_ref)
            rec["nmse_c"] = nmse(group_image(result.g_c_hat, gmap), gc_ref)
            rec["muls"] = counter.complex_multiplies
            rec["ok"] = True
        except EstimatorError:
            pass
        records.append(rec)
    return records


def run_sweep(config, workers=1):
    """Run every (axis value, trial) pair and aggregate per (value, method).

    Trials are the unit of parallelism (a work queue over a thread pool);
    per-trial seeding plus a deterministic sort before aggregation make the
    result independent of worker count and scheduling. Returns the table as
    a list of row dicts matching the CSV schema; the trials column counts
    successful trials, failures counts solver blowups (the failed trials are
    excluded from the means, and the table is still emitted).
    """
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        raise SweepConfigError(f"workers must be a positive integer, got {workers!r}")
    if config.trace_dir is not None:
        Path(config.trace_dir).mkdir(parents=True, exist_ok=True)
    tasks = [(a, t) for a in range(len(config.axis_values))
             for t in range(config.trials)]
    if workers == 1:
        groups = [_run_trial(config, a, t) for a, t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            groups = list(pool.map(lambda at: _run_trial(config, *at), tasks))
    records = [rec for group in groups for rec in group]
    records.sort(key=lambda r: (r["axis_index"], r["method"], r["trial"]))
    table = []
    for axis_index, value in enumerate(config.axis_values):
        for method in config.methods:
            cell = [r for r in records
                    if r["axis_index"] == axis_index and r["method"] == method]
            ok = [r for r in cell if r["ok"]]
            row = {"axis": config.sweep_axis, "axis_value": value, "method": method,
                   "trials": len(ok), "failures": len(cell) - len(ok)}
            for key, name in (("nmse_s", "nmse_s"), ("nmse_c", "nmse_c"),
                              ("muls", "mul_count")):
                data = np.asarray([r[key] for r in ok], dtype=np.float64)
                mean = float(np.mean(data)) if data.size else math.nan
                row[f"{name}_mean"] = mean
                if key != "muls":
                    se = float(np.std(data, ddof=1) / math.sqrt(data.size)) \
                        if data.size > 1 else 0.0
                    row[f"{name}_stderr"] = se
            table.append(row)
    return table


def _fmt(v):
    return f"{float(v):.9g}"


def emit_csv(table, path):
    """Write the aggregated table; header and ordering are bit-specified.

    Rows are sorted by (axis_value, method) and floats printed with 9
    significant digits. An empty table is an error and creates no file.
    """
    if not table:
        raise ValueError("empty result table; no file written")
    rows = sorted(table, key=lambda row: (row["axis_value"], row["method"]))
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(",".join([
            str(row["axis"]),
            _fmt(row["axis_value"]),
            str(row["method"]),
            _fmt(row["nmse_s_mean"]),
            _fmt(row["nmse_s_stderr"]),
            _fmt(row["nmse_c_mean"]),
            _fmt(row["nmse_c_stderr"]),
            str(int(row["trials"])),
            str(int(row["failures"])),
            _fmt(row["mul_count_mean"]),
        ]))
    out = Path(path)
    out.write_text("\n".join(lines) + "\n")
    return out


_EST_INT = ("inner_iters", "outer_iters", "anneal_iters")
_EST_BOOL = ("debias", "merge_duplicates")
_EST_STR = ("penalty",)
_EST_FLOAT = ("lam", "eta", "zeta", "epsilon", "mu", "tol_inner", "tol_outer",
              "gamma_init", "gamma_floor")


def _estimator_from_items(items):
    kwargs = {}
    for key, raw in items:
        try:
            if key in _EST_INT:
                kwargs[key] = int(raw)
            elif key in _EST_BOOL:
                kwargs[key] = raw.strip().lower() in ("1", "true", "yes", "on")
            elif key in _EST_STR:
                kwargs[key] = raw.strip()
            elif key in _EST_FLOAT:
                kwargs[key] = float(raw)
            else:
                raise SweepConfigError(f"unknown estimator option {key!r}")
        except ValueError as exc:
            raise SweepConfigError(f"bad estimator option {key} = {raw!r}: {exc}")
    base = _default_estimator()
    if "epsilon" not in kwargs:
        kwargs["epsilon"] = base.epsilon
    try:
        return EstimatorConfig(**kwargs)
    except ValueError as exc:
        raise SweepConfigError(str(exc))


_SWEEP_KEYS = ("axis", "values", "trials", "seed", "methods", "out",
               "trace_dir", "workers")
_FIXED_KEYS = ("L", "M", "Q", "B", "k_s", "k_c", "snr_db")


def _parse_values(text):
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise SweepConfigError("axis values list is empty")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise SweepConfigError(f"axis values must be numeric, got {text!r}")


def _parse_methods(text):
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise SweepConfigError("methods list is empty")
    return tuple(parts)


def _load_ini(path):
    """INI sections [sweep], [fixed], [estimator] mirroring SweepConfig."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # [fixed] keys L, M, Q, B are case-sensitive
    read = cp.read(path)
    if not read:
        raise SweepConfigError(f"config file {path!r} not found or unreadable")
    known = {"sweep": _SWEEP_KEYS, "fixed": _FIXED_KEYS,
             "estimator": _EST_INT + _EST_BOOL + _EST_STR + _EST_FLOAT}
    for section in cp.sections():
        if section not in known:
            raise SweepConfigError(f"unknown config section [{section}]")
        for key in cp[section]:
            if key not in known[section] and key.lower() not in known[section]:
                raise SweepConfigError(f"unknown option {key!r} in [{section}]")
    sweep = {}
    if cp.has_section("sweep"):
        for key in cp["sweep"]:
            sweep[key] = cp["sweep"][key]
    fixed = {}
    if cp.has_section("fixed"):
        for key in cp["fixed"]:
            raw = cp["fixed"][key]
            name = key if key in _FIXED_KEYS else key.lower()
            try:
                fixed[name] = float(raw) if name == "snr_db" else int(raw)
            except ValueError as exc:
                raise SweepConfigError(f"bad fixed option {key} = {raw!r}: {exc}")
    estimator = None
    if cp.has_section("estimator"):
        estimator = _estimator_from_items(cp["estimator"].items())
    return sweep, fixed, estimator


def _build_config(args):
    """Merge config-file values and CLI flags (flags win) into a SweepConfig."""
    sweep, fixed, estimator = ({}, {}, None)
    if args.config is not None:
        sweep, fixed, estimator = _load_ini(args.config)
    kw = {}
    kw["sweep_axis"] = args.sweep if args.sweep is not None else sweep.get("axis", "snr_db")
    if args.values is not None:
        kw["axis_values"] = _parse_values(args.values)
    elif "values" in sweep:
        kw["axis_values"] = _parse_values(sweep["values"])
    for name, flag in (("trials", args.trials), ("seed", args.seed)):
        if flag is not None:
            kw[name] = flag
        elif name in sweep:
            try:
                kw[name] = int(sweep[name])
            except ValueError as exc:
                raise SweepConfigError(f"bad sweep option {name}: {exc}")
    if args.methods is not None:
        kw["methods"] = _parse_methods(args.methods)
    elif "methods" in sweep:
        kw["methods"] = _parse_methods(sweep["methods"])
    if args.out is not None:
        kw["output_path"] = args.out
    elif "out" in sweep:
        kw["output_path"] = sweep["out"]
    if args.trace_dir is not None:
        kw["trace_dir"] = args.trace_dir
    elif "trace_dir" in sweep:
        kw["trace_dir"] = sweep["trace_dir"]
    for name, flag in (("L", args.L), ("M", args.M), ("Q", args.Q),
                       ("B", args.blocks), ("k_s", args.k_s), ("k_c", args.k_c)):
        if flag is not None:
            fixed[name] = flag
    if args.snr_db is not None:
        fixed["snr_db"] = args.snr_db
    if fixed:
        kw["fixed"] = FixedParams(**fixed)
    if estimator is not None:
        kw["estimator"] = estimator
    workers = args.workers
    if workers is None:
        try:
            workers = int(sweep.get("workers", 1))
        except ValueError as exc:
            raise SweepConfigError(f"bad sweep option workers: {exc}")
    if workers < 1:
        raise SweepConfigError(f"workers must be >= 1, got {workers}")
    try:
        config = SweepConfig(**kw)
    except TypeError as exc:
        raise SweepConfigError(str(exc))
    return config, workers


def main(argv=None):
    """CLI entry point; exit 0 on success, 2 on config error, 3 on trial failure."""
    parser = argparse.ArgumentParser(
        prog="risest",
        description="Monte Carlo NMSE benchmark of the grouped-surface joint "
                    "channel estimator against the stacked LS baseline.")
    parser.add_argument("--config", help="INI file with [sweep], [fixed], [estimator] sections")
    parser.add_argument("--sweep", choices=AXES, help="sweep axis")
    parser.add_argument("--values", help="comma-separated axis values")
    parser.add_argument("--L", type=int, help="surface element count (excluding the static term)")
    parser.add_argument("--M", type=int, help="receive antenna count")
    parser.add_argument("--Q", type=int, help="group size (elements per group)")
    parser.add_argument("--blocks", type=int, help="pilot block count B (default: auto)")
    parser.add_argument("--k-s", dest="k_s", type=int, help="sensing channel sparsity")
    parser.add_argument("--k-c", dest="k_c", type=int, help="communication channel sparsity")
    parser.add_argument("--snr-db", dest="snr_db", type=float,
                        help="fixed SNR in dB (non-SNR axes)")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials per axis value")
    parser.add_argument("--seed", type=int, help="64-bit root seed")
    parser.add_argument("--methods", help="comma-separated subset of: proposed, ls")
    parser.add_argument("--out", help="output CSV path")
    parser.add_argument("--trace-dir", dest="trace_dir",
                        help="directory for per-trial estimator trace JSONL files")
    parser.add_argument("--workers", type=int, help="worker thread count (default 1)")
    args = parser.parse_args(argv)
    try:
        config, workers = _build_config(args)
    except SweepConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    table = run_sweep(config, workers=workers)
    try:
        emit_csv(table, config.output_path)
    except OSError as exc:
        print(f"cannot write {config.output_path!r}: {exc}", file=sys.stderr)
        return 2
    failures = sum(row["failures"] for row in table)
    if failures:
        print(f"{failures} trial runs failed; means exclude them", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
