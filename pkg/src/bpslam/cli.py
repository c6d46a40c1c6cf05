"""Experiment runner: config parsing, Monte Carlo runs and CSV artifacts.

Modes
-----
simulate
    Write synthetic measurement CSVs only.
run
    Simulate and filter ``runs`` independent runs and write estimates,
    per-step metrics and a summary. With ``--measurements`` a recorded CSV is
    replayed instead and only estimates are written.
evaluate
    Recompute ``metrics.csv`` and ``summary.csv`` from the estimate CSVs in
    the output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .engine import BPSLAMFilter, FilterDivergence, FilterParams
from .metrics import OspaParams, ospa, rmse
from .models import FeatureDynamicsParams, MotionParams, SensorModel
from .sim import MeasurementFrame, Scenario, generate_run, scenario_from_config

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MODES = ("simulate", "run", "evaluate")
MEAS_HEADER = ["n", "j", "z", "sigma"]
AGENT_HEADER = ["run", "n", "x", "y", "vx", "vy"]
FEATURE_HEADER = ["run", "n", "j", "feature_id", "x", "y", "p_exist", "detected"]


class ConfigError(ValueError):
    """Unreadable or invalid run configuration."""


class CsvFormatError(ValueError):
    """Malformed CSV input; the message carries the offending line number."""


@dataclass
class RunConfig:
    mode: str = "run"
    scenario: dict = field(default_factory=dict)
    filter: dict = field(default_factory=dict)
    out_dir: Path = Path("out")
    runs: int = 1
    particles: int = 10_000
    seed: int = 0
    workers: int = 1
    measurements: Path | None = None
    eval_start: int = 200
    ospa_cutoff: float = 5.0
    ospa_order: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.particles < 100:
            raise ConfigError("particle count must be >= 100")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        self.out_dir = Path(self.out_dir)


# -- configuration ----------------------------------------------------------

def default_config() -> dict:
    """The packaged default scenario config."""
    text = resources.files("bpslam").joinpath("scenarios/default.json").read_text()
    return json.loads(text)


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    version = cfg.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    if "scenario" not in cfg:
        raise ConfigError("config lacks a 'scenario' block")
    return cfg


_SIMPLE = {f.name for f in fields(FilterParams)} - {"motion", "dynamics", "sensor", "sensors", "n_particles"}


def filter_params_from_config(overrides: dict, n_particles: int, generator: dict | None = None) -> FilterParams:
    """FilterParams with config overrides applied on top of the defaults.

    Sensor detection and clutter defaults follow the scenario generator block
    unless the ``filter`` block sets them; the filter range std defaults to
    0.15 m.
    """
    overrides = dict(overrides or {})
    gen = generator or {}
    motion = MotionParams(sigma_w=overrides.pop("sigma_w", MotionParams.sigma_w))
    dyn = FeatureDynamicsParams(p_survival=overrides.pop("p_survival", FeatureDynamicsParams.p_survival),
                                sigma_a=overrides.pop("sigma_a", FeatureDynamicsParams.sigma_a))
    sensor = SensorModel(p_detect=overrides.pop("p_detect", gen.get("p_detect", SensorModel.p_detect)),
                         mu_fa=overrides.pop("mu_fa", gen.get("mu_fa", SensorModel.mu_fa)),
                         fa_range_max=overrides.pop("fa_range_max", gen.get("fa_range_max", SensorModel.fa_range_max)),
                         sigma_meas=overrides.pop("sigma_m", SensorModel.sigma_meas))
    unknown = set(overrides) - _SIMPLE
    if unknown:
        raise ConfigError(f"unknown filter parameters: {sorted(unknown)}")
    return FilterParams(n_particles=n_particles, motion=motion, dynamics=dyn, sensor=sensor, **overrides)


# -- CSV I/O ------------------------------------------------------------------

def write_measurement_csv(path, frames: list[list[MeasurementFrame]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MEAS_HEADER)
        for step in frames:
            for fr in step:
                for z, s in zip(fr.z, fr.sigma):
                    w.writerow([fr.n, fr.j + 1, repr(float(z)), repr(float(s))])


def parse_measurement_csv(path, n_pas: int | None = None) -> list[list[MeasurementFrame]]:
    """Frames grouped by step and PA.

    Rows ``n, j, z, sigma`` use 1-based ``n`` and ``j``. Rows may come in any
    order; steps run from 1 to the largest ``n`` and missing (n, j) pairs
    give empty frames.
    """
    rows: dict[tuple[int, int], list[tuple[float, float]]] = {}
    n_max = 0
    j_max = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if [h.strip() for h in header] != MEAS_HEADER:
            raise CsvFormatError(f"line 1: expected header {','.join(MEAS_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise CsvFormatError(f"line {line}: expected 4 fields, got {len(row)}")
            try:
                n, j = int(row[0]), int(row[1])
                z, s = float(row[2]), float(row[3])
            except ValueError as exc:
                raise CsvFormatError(f"line {line}: {exc}") from exc
            if n < 1 or j < 1:
                raise CsvFormatError(f"line {line}: n and j must be >= 1")
            if n_pas is not None and j > n_pas:
                raise CsvFormatError(f"line {line}: PA index {j} exceeds {n_pas}")
            if not (np.isfinite(z) and np.isfinite(s)):
                raise CsvFormatError(f"line {line}: z and sigma must be finite")
            if s <= 0:
                raise CsvFormatError(f"line {line}: sigma must be positive")
            if z < 0:
                raise CsvFormatError(f"line {line}: range must be nonnegative")
            rows.setdefault((n, j), []).append((z, s))
            n_max = max(n_max, n)
            j_max = max(j_max, j)
    J = n_pas if n_pas is not None else j_max
    out = []
    for n in range(1, n_max + 1):
        step = []
        for j in range(1, J + 1):
            vals = rows.get((n, j), [])
            z = [v[0] for v in vals]
            s = [v[1] for v in vals]
            step.append(MeasurementFrame(n, j - 1, np.array(z, dtype=float), np.array(s, dtype=float)))
        out.append(step)
    return out


def _read_table(path, header: list[str]) -> list[list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got is None or [h.strip() for h in got] != header:
            raise CsvFormatError(f"{path}: line 1: expected header {','.join(header)}")
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{path}: line {reader.line_num}: expected {len(header)} fields")
            rows.append(row)
    return rows


# -- single runs ----------------------------------------------------------------

@dataclass
class RunResult:
    run: int
    agent: np.ndarray | None = None  # (T, 4)
    features: list = field(default_factory=list)  # (n, j, id, x, y, p, detected)
    error: str | None = None
    seconds: float = 0.0


def run_filter(params: FilterParams, scenario_or_plan, pa_positions, start, frames, seed) -> RunResult:
    """Filter one sequence of frames; divergence is caught and reported."""
    plan = scenario_or_plan.plan if isinstance(scenario_or_plan, Scenario) else scenario_or_plan
    t0 = time.perf_counter()
    filt = BPSLAMFilter(params, plan, pa_positions, start, seed=np.random.default_rng(seed))
    agent = np.empty((len(frames), 4))
    feats = []
    try:
        for t, step in enumerate(frames):
            rep = filt.step(step)
            agent[t] = rep.agent_estimate
            for j, fs in enumerate(rep.features):
                for f in fs:
                    feats.append((rep.n, j + 1, f.feature_id, float(f.position[0]), float(f.position[1]),
                                  f.p_exist, int(f.detected)))
    except FilterDivergence as exc:
        return RunResult(-1, None, [], str(exc), time.perf_counter() - t0)
    return RunResult(-1, agent, feats, None, time.perf_counter() - t0)


def _run_one(args):
    r, cfg, params, seq = args
    meas_seq, filt_seq = seq.spawn(2)
    scenario = scenario_from_config(cfg["scenario"])
    frames = generate_run(scenario, np.random.default_rng(meas_seq))
    res = run_filter(params, scenario, scenario.anchors.pa_positions, scenario.trajectory[0], frames, filt_seq)
    res.run = r
    return res


def _map(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def run_batch(cfg: dict, params: FilterParams, runs: int, seed: int, workers: int = 1) -> list[RunResult]:
    """Simulate and filter ``runs`` independent runs with seeds derived from ``seed``."""
    seqs = np.random.SeedSequence(seed).spawn(runs)
    return _map(_run_one, [(r, cfg, params, seq) for r, seq in enumerate(seqs)], workers)


def batch_metrics(scenario: Scenario, results: list[RunResult], ospa_params: OspaParams,
                  eval_start: int = 200):
    """:func:`compute_metrics` applied to in-memory run results."""
    tracks = {res.run: res.agent for res in results if res.agent is not None}
    feats: dict[int, dict[int, list]] = {}
    for res in results:
        if res.agent is None:
            continue
        d = feats.setdefault(res.run, {})
        for n, j, _fid, x, y, _p, det in res.features:
            d.setdefault(n, []).append((j, x, y, det))
    return compute_metrics(scenario, tracks, feats, len(results), ospa_params, eval_start)


# -- artifacts ------------------------------------------------------------------

def write_estimates(out: Path, results: list[RunResult]) -> None:
    with open(out / "agent_estimates.csv", "w", newline="") as fa, \
            open(out / "features.csv", "w", newline="") as ff:
        wa, wf = csv.writer(fa), csv.writer(ff)
        wa.writerow(AGENT_HEADER)
        wf.writerow(FEATURE_HEADER)
        for res in results:
            if res.agent is None:
                continue
            for t, row in enumerate(res.agent):
                wa.writerow([res.run, t + 1, *(repr(float(v)) for v in row)])
            for n, j, fid, x, y, p, det in res.features:
                wf.writerow([res.run, n, j, fid, repr(x), repr(y), repr(float(p)), det])


def load_estimates(out: Path):
    """Agent tracks {run: (T, 4)} and feature rows {run: {n: [(j, x, y, detected)]}}."""
    agent: dict[int, list] = {}
    for row in _read_table(out / "agent_estimates.csv", AGENT_HEADER):
        agent.setdefault(int(row[0]), []).append((int(row[1]), [float(v) for v in row[2:]]))
    tracks = {}
    for r, rows in agent.items():
        rows.sort()
        tracks[r] = np.array([v for _, v in rows])
    feats: dict[int, dict[int, list]] = {}
    for row in _read_table(out / "features.csv", FEATURE_HEADER):
        r, n, j = int(row[0]), int(row[1]), int(row[2])
        feats.setdefault(r, {}).setdefault(n, []).append((j, float(row[4]), float(row[5]), int(row[7])))
    return tracks, feats


def compute_metrics(scenario: Scenario, tracks: dict, feats: dict, n_runs: int,
                    ospa_params: OspaParams, eval_start: int = 200):
    """Per-step metric rows and the summary dictionary."""
    J = scenario.anchors.n_pas
    runs = sorted(tracks)
    T = scenario.n_steps
    header = ["n", "rmse"] + [f"ospa_pa{j + 1}" for j in range(J)] + [f"n_detected_pa{j + 1}" for j in range(J)]
    rows = []
    summary = {"runs": n_runs, "runs_completed": len(runs), "runs_diverged": n_runs - len(runs)}
    if not runs:
        return header, rows, summary
    est = np.stack([tracks[r][:T, :2] for r in runs])
    err = rmse(scenario.trajectory[: est.shape[1]], est)
    truth = [scenario.anchors.features(j) for j in range(J)]
    osp = np.zeros((len(err), J))
    ndet = np.zeros((len(err), J))
    for t in range(len(err)):
        for r in runs:
            step = feats.get(r, {}).get(t + 1, [])
            for j in range(J):
                pts = np.array([(x, y) for jj, x, y, d in step if jj == j + 1 and d], dtype=float).reshape(-1, 2)
                osp[t, j] += ospa(truth[j], pts, ospa_params)
                ndet[t, j] += len(pts)
    osp /= len(runs)
    ndet /= len(runs)
    for t in range(len(err)):
        rows.append([t + 1, err[t], *osp[t], *ndet[t]])
    lo = min(max(eval_start, 1), len(err)) - 1
    summary["rmse_time_avg"] = float(np.mean(err[lo:]))
    summary["rmse_eval_start"] = lo + 1
    summary["rmse_final"] = float(err[-1])
    for j in range(J):
        summary[f"mospa_final_pa{j + 1}"] = float(osp[-1, j])
        summary[f"n_detected_final_pa{j + 1}"] = float(ndet[-1, j])
    return header, rows, summary


def write_metrics(out: Path, header, rows, summary) -> None:
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([row[0], *(repr(float(v)) for v in row[1:])])
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        for k, v in summary.items():
            w.writerow([k, repr(v) if isinstance(v, float) else v])


# -- modes ----------------------------------------------------------------------

def run_experiment(rc: RunConfig, cfg: dict) -> int:
    """Execute one mode; returns a process exit status."""
    out = rc.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "scenario.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    ospa_params = OspaParams(rc.ospa_cutoff, rc.ospa_order)
    scenario = scenario_from_config(cfg["scenario"])
    gen = cfg["scenario"].get("generator", {})
    seqs = np.random.SeedSequence(rc.seed).spawn(rc.runs)

    if rc.mode == "simulate":
        for r, seq in enumerate(seqs):
            frames = generate_run(scenario, np.random.default_rng(seq.spawn(2)[0]))
            name = "measurements.csv" if rc.runs == 1 else f"measurements_{r:03d}.csv"
            write_measurement_csv(out / name, frames)
        return 0

    if rc.mode == "evaluate":
        tracks, feats = load_estimates(out)
        header, rows, summary = compute_metrics(scenario, tracks, feats, max(rc.runs, len(tracks)),
                                                ospa_params, rc.eval_start)
        write_metrics(out, header, rows, summary)
        return 0

    params = filter_params_from_config(cfg.get("filter", {}), rc.particles, gen)
    if rc.measurements is not None:
        frames = parse_measurement_csv(rc.measurements, scenario.anchors.n_pas)
        start = cfg["scenario"].get("agent_start", scenario.trajectory[0])
        res = run_filter(params, scenario.plan, scenario.anchors.pa_positions, start, frames,
                         seqs[0].spawn(2)[1])
        res.run = 0
        write_estimates(out, [res])
        if res.error:
            log.error("run 0 diverged: %s", res.error)
            return 1
        return 0

    results = run_batch(cfg, params, rc.runs, rc.seed, rc.workers)
    for res in results:
        if res.error:
            log.error("run %d diverged: %s", res.run, res.error)
        else:
            log.info("run %d: %.3f s/step", res.run, res.seconds / max(scenario.n_steps, 1))
    write_estimates(out, results)
    header, rows, summary = batch_metrics(scenario, results, ospa_params, rc.eval_start)
    write_metrics(out, header, rows, summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bpslam", description="BP-based multipath SLAM experiments")
    ap.add_argument("--config", type=Path, help="JSON run config (default: packaged scenario)")
    ap.add_argument("--mode", choices=MODES, default="run")
    ap.add_argument("--runs", type=int)
    ap.add_argument("--particles", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--workers", type=int)
    ap.add_argument("--measurements", type=Path, help="replay a recorded measurement CSV")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(args) -> tuple[RunConfig, dict]:
    cfg = load_config(args.config) if args.config else default_config()
    run = cfg.get("run", {})

    def pick(name, default):
        v = getattr(args, name, None)
        return v if v is not None else run.get(name, default)

    rc = RunConfig(mode=args.mode, scenario=cfg["scenario"], filter=cfg.get("filter", {}),
                   out_dir=args.out, runs=pick("runs", 1), particles=pick("particles", 10_000),
                   seed=pick("seed", 0), workers=pick("workers", 1),
                   measurements=args.measurements, eval_start=run.get("eval_start", 200),
                   ospa_cutoff=run.get("ospa_cutoff", 5.0), ospa_order=run.get("ospa_order", 1.0))
    return rc, cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc, cfg = config_from_args(args)
        return run_experiment(rc, cfg)
    except (ConfigError, CsvFormatError, ValueError) as exc:
        print(f"bpslam: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
