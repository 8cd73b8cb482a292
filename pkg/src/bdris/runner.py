"""Seeded Monte-Carlo sweeps and result-table I/O."""

import csv
import json
import logging
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import yaml

from .channels import ConfigError, ScenarioConfig, draw_channels
from .joint import joint_min_il
from .leakage import direct_leakage, effective_channels, interference_leakage
from .optimizers import (
    OptimizerOptions,
    minimize_il_diag,
    minimize_il_group,
    minimize_il_mo,
    minimize_il_rtp,
)
from .precoders import (
    max_sinr_beamformers_eff,
    max_sr_beamformers,
    min_il_beamformers_eff,
    svd_precoders,
    user_rates,
)

log = logging.getLogger(__name__)

SWEEP_KINDS = ("position_grid", "m_sweep", "pt_sweep", "convergence_trace", "runtime_bench")
STAGE2_CHOICES = ("svd", "minil", "maxsinr", "maxsr", "none")
BASE_COLUMNS = ["sweep_kind", "sweep_value", "trial", "seed", "stage1", "stage2", "M", "Mg",
                "pt_dbm", "il", "delta_inr_db", "sum_rate"]
TAIL_COLUMNS = ["iters_stage1", "wall_ms_stage1", "wall_ms_stage2", "il_trace", "error"]
WALL_COLUMNS = ("wall_ms_stage1", "wall_ms_stage2")
INT_COLUMNS = {"trial", "seed", "M", "Mg", "iters_stage1"}
STR_COLUMNS = {"sweep_kind", "sweep_value", "stage1", "stage2", "il_trace", "error"}


def columns_for(K: int) -> List[str]:
    return BASE_COLUMNS + [f"rate_{k + 1}" for k in range(K)] + TAIL_COLUMNS


def parse_stage1(name: str):
    """``'mo' | 'rtp' | 'diag' | 'joint' | 'group:<Mg>' | 'group-rtp:<Mg>'`` -> (kind, Mg)."""
    if name in ("mo", "rtp", "diag", "joint", "none"):
        return name, None
    for prefix in ("group:", "group-rtp:"):
        if name.startswith(prefix):
            try:
                mg = int(name[len(prefix):])
            except ValueError:
                raise ConfigError(f"bad group size in {name!r}") from None
            if mg < 1:
                raise ConfigError(f"bad group size in {name!r}")
            return prefix[:-1], mg
    raise ConfigError(f"unknown stage-1 solver {name!r}")


def default_stage1(config: ScenarioConfig) -> str:
    if config.architecture == "group":
        return f"group:{config.Mg}"
    return {"fully": "mo", "diagonal": "diag"}[config.architecture]


@dataclass
class SweepSpec:
    kind: str
    values: List[Any]
    stage1: str = "mo"
    stage2: str = "none"

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise ConfigError(f"unknown sweep {self.kind!r}; choose from {SWEEP_KINDS}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if self.stage2 not in STAGE2_CHOICES:
            raise ConfigError(f"unknown stage-2 precoder {self.stage2!r}")
        parse_stage1(self.stage1)


def default_values(kind: str, config: ScenarioConfig, grid_step: float = 5.0):
    if kind == "position_grid":
        side = config.square_side
        ticks = np.arange(5.0, side - 5.0 + 1e-9, grid_step)
        return [(float(x), float(y)) for y in ticks for x in ticks]
    if kind == "pt_sweep":
        return [0.0, 10.0, 20.0, 30.0]
    if kind in ("m_sweep", "runtime_bench"):
        return [16, 32, 64]
    return [config.M]


def format_value(value) -> str:
    if isinstance(value, (tuple, list)):
        return ";".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def trial_seed(master_seed: int, sweep_index: int, trial: int) -> int:
    """Per-trial seed keyed by (master seed, sweep point, trial); order independent."""
    ss = np.random.SeedSequence([int(master_seed), int(sweep_index), int(trial)])
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def point_config(config: ScenarioConfig, kind: str, value) -> ScenarioConfig:
    if kind == "position_grid":
        x, y = value
        return config.with_(ris_position=(x, y, config.ris_position[2]))
    if kind == "pt_sweep":
        return config.with_(pt_dbm=float(value))
    if kind in ("m_sweep", "runtime_bench", "convergence_trace"):
        return config.with_(M=int(value))
    return config


def run_stage1(channels, stage1: str, seed: int, options: OptimizerOptions, d: int, p_t: float):
    """Returns (theta, iterations, il_trace, joint_beamformers_or_None)."""
    kind, mg = parse_stage1(stage1)
    opts = OptimizerOptions(**{**options.__dict__, "seed": seed})
    m = channels.M
    if kind == "none":
        return np.zeros((m, m), dtype=complex), 0, [], None
    if kind == "mo":
        res, tr = minimize_il_mo(channels, options=opts)
        return res.theta, tr.iterations, tr.il_values, None
    if kind == "rtp":
        res, diag = minimize_il_rtp(channels, opts)
        return res.theta, diag.get("bisect_iters", 0), [diag["projected_il"]], None
    if kind == "diag":
        res, tr = minimize_il_diag(channels, opts)
        return res.theta, tr.iterations, tr.il_values, None
    if kind in ("group", "group-rtp"):
        if m % mg:
            raise ConfigError(f"group size {mg} does not divide M={m}")
        inner = "mo" if kind == "group" else "rtp"
        res, tr = minimize_il_group(channels, mg, inner, opts)
        return res.theta, tr.iterations, tr.il_values, None
    res, bf, tr = joint_min_il(channels, d, p_t, opts)
    return res.theta, tr.iterations, tr.il_values, bf


def run_stage2(h_eff, stage2: str, d: int, p_t: float, sigma2: float, joint_bf=None):
    if stage2 == "none":
        return None
    if stage2 == "minil":
        if joint_bf is not None:
            return joint_bf.v
        return min_il_beamformers_eff(h_eff, d, p_t).v
    if stage2 == "svd":
        return svd_precoders(h_eff, p_t, sigma2).v
    if stage2 == "maxsinr":
        return max_sinr_beamformers_eff(h_eff, d, p_t, sigma2).v
    init = svd_precoders(h_eff, p_t, sigma2)
    return max_sr_beamformers(h_eff, init.v, p_t, sigma2).v


@dataclass
class _Task:
    config: ScenarioConfig
    sweep: SweepSpec
    sweep_index: int
    value: Any
    trial: int
    options: OptimizerOptions
    repeats: int = 1


def run_trial(task: _Task) -> Dict[str, Any]:
    sweep = task.sweep
    cfg = point_config(task.config, sweep.kind, task.value)
    seed = trial_seed(cfg.seed, task.sweep_index, task.trial)
    kind, mg = parse_stage1(sweep.stage1)
    row: Dict[str, Any] = {
        "sweep_kind": sweep.kind, "sweep_value": format_value(task.value), "trial": task.trial,
        "seed": seed, "stage1": sweep.stage1, "stage2": sweep.stage2, "M": cfg.M, "Mg": mg,
        "pt_dbm": float(cfg.pt_dbm), "il": math.nan, "delta_inr_db": math.nan,
        "sum_rate": math.nan, "iters_stage1": 0, "wall_ms_stage1": math.nan,
        "wall_ms_stage2": math.nan, "il_trace": "", "error": "",
    }
    for k in range(cfg.K):
        row[f"rate_{k + 1}"] = math.nan
    try:
        rng = np.random.default_rng(seed)
        channels = draw_channels(cfg, rng)
        walls = []
        for _ in range(task.repeats):
            t0 = time.perf_counter()
            theta, iters, il_trace, joint_bf = run_stage1(channels, sweep.stage1, seed, task.options,
                                                          cfg.d, cfg.pt_mw)
            walls.append(1e3 * (time.perf_counter() - t0))
        row["wall_ms_stage1"] = statistics.median(walls)
        row["iters_stage1"] = int(iters)
        il = interference_leakage(channels, theta)
        row["il"] = il
        row["delta_inr_db"] = 10.0 * math.log10(il / direct_leakage(channels))
        if sweep.kind == "convergence_trace":
            row["il_trace"] = ";".join(repr(float(x)) for x in il_trace)
        t0 = time.perf_counter()
        h_eff = effective_channels(channels, theta)
        v = run_stage2(h_eff, sweep.stage2, cfg.d, cfg.pt_mw, channels.noise_power, joint_bf)
        row["wall_ms_stage2"] = 1e3 * (time.perf_counter() - t0)
        if v is not None:
            rates = user_rates(h_eff, v, channels.noise_power)
            for k, r in enumerate(rates):
                row[f"rate_{k + 1}"] = float(r)
            row["sum_rate"] = float(np.sum(rates))
    except ConfigError:
        raise
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        log.warning("trial %s at %s failed: %s", task.trial, row["sweep_value"], exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def run_sweep(config: ScenarioConfig, sweep: SweepSpec, trials: Optional[int] = None,
              options: Optional[OptimizerOptions] = None, workers: Optional[int] = None) -> List[Dict[str, Any]]:
    """Run every (sweep point, trial) and return rows sorted by point, then trial."""
    options = options or OptimizerOptions()
    trials = config.trials if trials is None else trials
    repeats = 3 if sweep.kind == "runtime_bench" else 1
    kind, mg = parse_stage1(sweep.stage1)
    for value in sweep.values:
        cfg = point_config(config, sweep.kind, value)  # validates early
        if mg is not None and cfg.M % mg:
            raise ConfigError(f"group size {mg} does not divide M={cfg.M}")
    tasks = [_Task(config, sweep, i, value, t, options, repeats)
             for i, value in enumerate(sweep.values) for t in range(trials)]
    workers = workers or os.cpu_count() or 1
    if workers <= 1 or len(tasks) <= 1:
        rows = [run_trial(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_trial, tasks, chunksize=1))
    order = sorted(range(len(rows)), key=lambda n: (tasks[n].sweep_index, tasks[n].trial))
    return [rows[n] for n in order]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def write_results(rows: Sequence[Dict[str, Any]], path, fmt: str = "csv", K: Optional[int] = None):
    """Write one row per (sweep point, trial) with a stable header."""
    path = Path(path)
    if K is None:
        K = _infer_k(rows)
    cols = columns_for(K)
    try:
        if fmt == "csv":
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(cols)
                for row in rows:
                    writer.writerow([_fmt(row.get(c)) for c in cols])
        elif fmt in ("jsonl", "json-lines"):
            with path.open("w") as fh:
                fh.write(json.dumps({"columns": cols}) + "\n")
                for row in rows:
                    fh.write(json.dumps({c: _json_value(row.get(c)) for c in cols}) + "\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _infer_k(rows) -> int:
    if not rows:
        return 0
    return sum(1 for c in rows[0] if c.startswith("rate_"))


def _parse_cell(col: str, text):
    if col in STR_COLUMNS:
        return "" if text is None else str(text)
    if text in ("", None):
        return None
    if col in INT_COLUMNS:
        return int(text)
    return float(text)


def read_results(path, fmt: Optional[str] = None) -> List[Dict[str, Any]]:
    """Inverse of :func:`write_results`."""
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix in (".jsonl", ".json") else "csv")
    rows = []
    if fmt == "csv":
        with path.open(newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append({c: _parse_cell(c, v) for c, v in rec.items()})
    else:
        with path.open() as fh:
            header = json.loads(fh.readline())["columns"]
            for line in fh:
                rec = json.loads(line)
                rows.append({c: _parse_cell(c, rec.get(c)) for c in header})
    return rows


def load_config(path) -> ScenarioConfig:
    """Read a flat key/value YAML (or JSON) file into a :class:`ScenarioConfig`."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_mapping(data)


def config_from_mapping(data: Dict[str, Any]) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a flat key/value mapping")
    data = dict(data)
    ris = list(ScenarioConfig.ris_position)
    for i, key in enumerate(("ris_x", "ris_y", "ris_z")):
        if key in data:
            ris[i] = float(data.pop(key))
    if "ris_position" in data:
        ris = list(data.pop("ris_position"))
    allowed = set(ScenarioConfig.field_names())
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return ScenarioConfig(ris_position=tuple(ris), **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def comparable_rows(rows):
    """Rows with wall-clock columns removed (used for determinism checks)."""
    return [{k: v for k, v in r.items() if k not in WALL_COLUMNS} for r in rows]
