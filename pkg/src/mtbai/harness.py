"""Replicated simulation, aggregation and flat-file outputs."""
from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, MtbaiError, NumericalError, UsageError
from .model import ModelTensor, load_instance, membership_check, model_from_dict
from .oracle import SolverOptions
from .policies import STATUS_OK, osrl_run, tas_baseline

CI_MULTIPLIER = 2.2414

RUN_COLUMNS = ["run_id", "seed", "algo", "delta_g", "delta_h", "tau_g", "tau_h", "tau_total",
               "g_hat", "g_correct", "h_all_correct", "wall_ms"]
ALLOC_COLUMNS = ["run_id", "x", "g", "h", "count"]
SERIES_COLUMNS = ["run_id", "t", "mu_hat_l2", "dmu_l2_normalized", "c_sigma_inv",
                  "q_change_l2_normalized", "q_change_linf"]
SUMMARY_COLUMNS = ["algo", "phase", "delta", "n", "mean", "half_width", "min", "max", "std"]
FAILURE_COLUMNS = ["run_id", "seed", "algo", "reason"]

_SOLVER_KEYS = {"max_iters_cold", "max_iters_warm", "tol", "grad_clip", "lipschitz_floor"}
_STATUS_TEXT = {1: "round cap reached", 2: "non-finite objective in solver"}


@dataclass(frozen=True)
class ExperimentConfig:
    instance: ModelTensor
    algo: str = "both"
    delta_g: float = 0.1
    delta_h: float = 0.1
    sigma: float = 1e5
    recompute_period: Optional[int] = None
    warmstart_mix: float = 0.5
    solver: Dict[str, float] = field(default_factory=dict)
    runs: int = 1
    seed: int = 0
    threads: int = 1
    log_series: bool = False
    tas_task_mode: str = "one-random"
    check_tracking: bool = False
    record_wall_time: bool = False
    max_rounds: int = 10_000_000

    def __post_init__(self):
        if self.algo not in ("osrl", "tas", "both"):
            raise ConfigError(f"algo must be osrl, tas or both, got {self.algo!r}")
        for name in ("delta_g", "delta_h"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v!r}")
        for name in ("runs", "threads", "max_rounds"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if self.recompute_period is not None and (
                not isinstance(self.recompute_period, int) or self.recompute_period < 1):
            raise ConfigError(f"recompute_period must be a positive integer, got {self.recompute_period!r}")
        if self.tas_task_mode not in ("one-random", "all-sum"):
            raise ConfigError(f"tas_task_mode must be one-random or all-sum, got {self.tas_task_mode!r}")
        unknown = set(self.solver) - _SOLVER_KEYS
        if unknown:
            raise ConfigError(f"unknown solver options: {sorted(unknown)}")
        if not membership_check(self.instance).in_class:
            raise ConfigError("instance has no unique shared optimal representation")
        self.solver_options()

    def solver_options(self) -> SolverOptions:
        try:
            return SolverOptions(sigma=self.sigma, warmstart_mix=self.warmstart_mix, **self.solver)
        except (UsageError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, **kw) -> "ExperimentConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(**data)


def config_from_dict(obj: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    """Build a config from parsed JSON. ``instance`` is an inline object or a path."""
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {f.name for f in fields(ExperimentConfig)}
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "instance" not in obj:
        raise ConfigError("config is missing the 'instance' key")
    data = dict(obj)
    inst = data["instance"]
    if isinstance(inst, str):
        p = Path(inst)
        data["instance"] = load_instance(p if p.is_absolute() else base_dir / p)
    else:
        data["instance"] = model_from_dict(inst)
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(obj, path.parent)


@dataclass
class RunRecord:
    run_id: int
    seed: int
    algo: str
    delta_g: float
    delta_h: float
    tau_g: int
    tau_h: int
    tau_total: int
    g_hat: int
    g_correct: bool
    h_all_correct: bool
    wall_ms: float
    counts: Optional[np.ndarray] = field(default=None, repr=False)

    def row(self) -> list:
        return [getattr(self, c) for c in RUN_COLUMNS]


@dataclass
class SeriesPoint:
    run_id: int
    t: int
    mu_hat_l2: float
    dmu_l2_normalized: float
    c_sigma_inv: float
    q_change_l2_normalized: float
    q_change_linf: float


@dataclass
class FailedRun:
    run_id: int
    seed: int
    algo: str
    reason: str
    diagnostics: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    records: List[RunRecord]
    series: List[SeriesPoint]
    failures: List[FailedRun]


def _replicate(config: ExperimentConfig, i: int):
    seed = config.seed + i
    model = config.instance
    verdict = membership_check(model)
    opts = config.solver_options()
    osrl_ss, tas_ss = np.random.SeedSequence(seed).spawn(2)
    records, series, failures = [], [], []

    if config.algo in ("osrl", "both"):
        t0 = time.perf_counter()
        try:
            res = osrl_run(model, config.delta_g, config.delta_h, opts,
                           np.random.default_rng(osrl_ss), config.recompute_period,
                           log_series=config.log_series, check_tracking=config.check_tracking,
                           max_rounds=config.max_rounds)
            if res.status != STATUS_OK:
                raise NumericalError(_STATUS_TEXT.get(res.status, "engine failure"),
                                     {"tau_g": res.tau_g, "status": res.status})
            if res.phase1.tracking_violations:
                raise NumericalError("tracking lower bound violated",
                                     {"violations": res.phase1.tracking_violations})
        except NumericalError as exc:
            failures.append(FailedRun(i, seed, "osrl", str(exc), exc.diagnostics))
        else:
            wall = (time.perf_counter() - t0) * 1e3 if config.record_wall_time else 0.0
            g_ok = res.g_hat == verdict.best_representation
            records.append(RunRecord(
                i, seed, "osrl", config.delta_g, config.delta_h, res.tau_g, res.tau_h, res.tau,
                res.g_hat, g_ok, g_ok and res.h_hat == verdict.best_predictors, wall,
                res.phase1.pulls))
            for row in res.phase1.series:
                series.append(SeriesPoint(i, int(row[0]), *(float(v) for v in row[1:])))

    if config.algo in ("tas", "both"):
        t0 = time.perf_counter()
        res = tas_baseline(model, config.delta_g, config.tas_task_mode, opts,
                           np.random.default_rng(tas_ss), max_rounds=config.max_rounds)
        if res.status != STATUS_OK:
            failures.append(FailedRun(i, seed, "tas", _STATUS_TEXT.get(res.status, "engine failure"),
                                      {"tau": res.tau, "status": res.status}))
        else:
            wall = (time.perf_counter() - t0) * 1e3 if config.record_wall_time else 0.0
            g_ok = all(g == verdict.best_representation for _, g, _ in res.pairs)
            h_ok = g_ok and all(h == verdict.best_predictors[x] for x, _, h in res.pairs)
            records.append(RunRecord(i, seed, "tas", config.delta_g, config.delta_h, res.tau, 0,
                                     res.tau, res.pairs[0][1], g_ok, h_ok, wall, res.pulls))
    return records, series, failures


def _replicate_batch(args):
    config, ids = args
    return [_replicate(config, i) for i in ids]


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run ``config.runs`` independent replicates; replicate ``i`` is seeded with ``seed + i``."""
    ids = list(range(config.runs))
    if config.threads > 1 and config.runs > 1:
        chunks = [ids[k::config.threads] for k in range(config.threads)]
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            parts = [r for batch in pool.map(_replicate_batch, [(config, c) for c in chunks if c])
                     for r in batch]
    else:
        parts = [_replicate(config, i) for i in ids]
    records = sorted((r for p in parts for r in p[0]), key=lambda r: (r.run_id, r.algo))
    series = sorted((s for p in parts for s in p[1]), key=lambda s: (s.run_id, s.t))
    failures = sorted((f for p in parts for f in p[2]), key=lambda f: (f.run_id, f.algo))
    return ExperimentResult(records, series, failures)


# --------------------------------------------------------------------------
# aggregation
# --------------------------------------------------------------------------


@dataclass
class SummaryRow:
    algo: str
    phase: str
    delta: float
    n: int
    mean: float
    half_width: float
    min: float
    max: float
    std: float


def _phases(algo: str) -> Sequence[Tuple[str, str]]:
    if algo == "osrl":
        return (("phase1", "tau_g"), ("phase2", "tau_h"), ("total", "tau_total"))
    return (("total", "tau_total"),)


def summarize(records: Sequence[RunRecord]) -> List[SummaryRow]:
    """Mean, 97.5% half-width, min, max and sample std per (algo, phase, delta)."""
    groups: Dict[Tuple[str, str, float], List[float]] = {}
    for r in records:
        for phase, col in _phases(r.algo):
            groups.setdefault((r.algo, phase, float(r.delta_g)), []).append(float(getattr(r, col)))
    rows = []
    for (algo, phase, delta), vals in sorted(groups.items()):
        if len(vals) < 2:
            warnings.warn(f"group ({algo}, {phase}, {delta}) has fewer than 2 runs; omitted")
            continue
        v = np.asarray(vals)
        std = float(v.std(ddof=1))
        rows.append(SummaryRow(algo, phase, delta, len(v), float(v.mean()),
                               CI_MULTIPLIER * std / math.sqrt(len(v)), float(v.min()),
                               float(v.max()), std))
    return rows


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    try:
        path.write_text(buf.getvalue())
    except OSError as exc:
        raise MtbaiError(f"cannot write {path}: {exc}") from None


def emit_outputs(records: Sequence[RunRecord], series: Sequence[SeriesPoint], out_dir,
                 failures: Sequence[FailedRun] = ()) -> Dict[str, Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise MtbaiError(f"cannot create output directory {out}: {exc}") from None
    paths = {name: out / name for name in
             ("runs.csv", "alloc.csv", "series.csv", "summary.csv", "summary.json", "failures.csv")}
    _write_csv(paths["runs.csv"], RUN_COLUMNS, (r.row() for r in records))
    alloc = []
    for r in records:
        if r.counts is None:
            continue
        for (x, g, h), c in np.ndenumerate(r.counts):
            alloc.append([r.run_id, x, g, h, int(c)])
    _write_csv(paths["alloc.csv"], ALLOC_COLUMNS, alloc)
    _write_csv(paths["series.csv"], SERIES_COLUMNS,
               ([getattr(s, c) for c in SERIES_COLUMNS] for s in series))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        summary = summarize(records)
    _write_csv(paths["summary.csv"], SUMMARY_COLUMNS,
               ([getattr(s, c) for c in SUMMARY_COLUMNS] for s in summary))
    try:
        paths["summary.json"].write_text(json.dumps([asdict(s) for s in summary], indent=2) + "\n")
    except OSError as exc:
        raise MtbaiError(f"cannot write {paths['summary.json']}: {exc}") from None
    _write_csv(paths["failures.csv"], FAILURE_COLUMNS,
               ([f.run_id, f.seed, f.algo, f.reason] for f in failures))
    return paths


def _parse_bool(s: str) -> bool:
    if s not in ("true", "false"):
        raise ConfigError(f"expected true/false, got {s!r}")
    return s == "true"


def read_runs_csv(path) -> List[RunRecord]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != RUN_COLUMNS:
        raise ConfigError(f"{path} does not have the runs.csv header")
    out = []
    try:
        for row in reader:
            out.append(RunRecord(
                int(row["run_id"]), int(row["seed"]), row["algo"], float(row["delta_g"]),
                float(row["delta_h"]), int(row["tau_g"]), int(row["tau_h"]),
                int(row["tau_total"]), int(row["g_hat"]), _parse_bool(row["g_correct"]),
                _parse_bool(row["h_all_correct"]), float(row["wall_ms"])))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed row in {path}: {exc}") from None
    return out


def read_series_csv(path) -> List[SeriesPoint]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != SERIES_COLUMNS:
        raise ConfigError(f"{path} does not have the series.csv header")
    try:
        return [SeriesPoint(int(r["run_id"]), int(r["t"]),
                            *(float(r[c]) for c in SERIES_COLUMNS[2:])) for r in reader]
    except ValueError as exc:
        raise ConfigError(f"malformed row in {path}: {exc}") from None


def format_summary(rows: Sequence[SummaryRow], fmt: str = "csv") -> str:
    if fmt == "json":
        return json.dumps([asdict(r) for r in rows], indent=2)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in SUMMARY_COLUMNS])
        return buf.getvalue().rstrip("\n")
    if fmt == "markdown":
        lines = ["| " + " | ".join(SUMMARY_COLUMNS) + " |",
                 "|" + "---|" * len(SUMMARY_COLUMNS)]
        for r in rows:
            cells = [r.algo, r.phase, f"{r.delta:g}", str(r.n), f"{r.mean:.2f}",
                     f"±{r.half_width:.2f}", f"{r.min:.1f}", f"{r.max:.1f}", f"{r.std:.2f}"]
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines)
    raise UsageError(f"unknown summary format {fmt!r}")
