"""Evaluation: success rate / average error over seeded trials, policy-by-environment
grids, episode logs (CSV / JSON-lines), force-distance profiles and SVG plots."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.stats import spearmanr

from .endoscope import ACTION_LIMIT, cc_inverse
from .env import Scene, SceneConfig, build_scene, make_variant
from .rng import substream

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUTCOMES = ("success", "boundary", "timeout")
CSV_HEADER = ("schema_version,policy,variant,trial,seed,target_index,initial_distance,outcome,first_contact,"
              "step,ee_x,ee_y,ee_z,target_x,target_y,target_z,distance,force_x,force_y,force_z,contact,"
              "a1,a2,a3,a4,a5,reward")
TABLE_HEADER = "policy,variant,trials,successes,sr,ae"
REPLAY_TOL = 1e-9
PROFILE_POINTS = 100


class ProfileError(ValueError):
    pass


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass
class StepRecord:
    step: int
    ee: np.ndarray
    target: np.ndarray
    distance: float
    force: np.ndarray
    contact: int
    action: np.ndarray
    reward: float

    def __eq__(self, other):
        if not isinstance(other, StepRecord):
            return NotImplemented
        return (self.step == other.step and self.contact == other.contact
                and self.distance == other.distance and self.reward == other.reward
                and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("ee", "target", "force", "action")))

    def to_dict(self) -> dict:
        return {"step": self.step, "ee": self.ee.tolist(), "target": self.target.tolist(),
                "distance": self.distance, "force": self.force.tolist(), "contact": self.contact,
                "action": self.action.tolist(), "reward": self.reward}

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        return cls(int(d["step"]), np.array(d["ee"], dtype=float), np.array(d["target"], dtype=float),
                   float(d["distance"]), np.array(d["force"], dtype=float), int(d["contact"]),
                   np.array(d["action"], dtype=float), float(d["reward"]))


@dataclass
class EpisodeLog:
    policy: str
    variant: str
    trial: int
    seed: int
    target_index: int
    initial_distance: float
    records: list = field(default_factory=list)
    outcome: str = "timeout"
    first_contact: int = -1   # step index of the first contact, -1 if none

    @property
    def final_distance(self) -> float:
        return self.records[-1].distance if self.records else self.initial_distance

    @property
    def steps(self) -> int:
        return len(self.records)

    def check(self) -> None:
        """Distances recomputable from positions; outcome consistent with the last record."""
        for r in self.records:
            if abs(float(np.linalg.norm(r.target - r.ee)) - r.distance) > 1e-9:
                raise ValueError(f"trial {self.trial} step {r.step}: distance inconsistent with positions")
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "policy": self.policy, "variant": self.variant,
                "trial": self.trial, "seed": self.seed, "target_index": self.target_index,
                "initial_distance": self.initial_distance, "outcome": self.outcome,
                "first_contact": self.first_contact, "records": [r.to_dict() for r in self.records]}

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeLog":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported episode schema {d.get('schema_version')!r}")
        return cls(d["policy"], d["variant"], int(d["trial"]), int(d["seed"]), int(d["target_index"]),
                   float(d["initial_distance"]), [StepRecord.from_dict(r) for r in d["records"]],
                   d["outcome"], int(d["first_contact"]))


@dataclass
class EvalReport:
    policy: str
    variant: str
    trials: int
    successes: int
    sr: float                  # percent
    ae: float                  # mm, over successful trials; nan when none succeeded
    final_errors: tuple
    outcomes: tuple
    logs: list = field(default_factory=list, repr=False, compare=False)

    @classmethod
    def from_logs(cls, policy: str, variant: str, logs: list) -> "EvalReport":
        if not logs:
            raise ValueError("no trials")
        errors = tuple(lg.final_distance for lg in logs)
        outcomes = tuple(lg.outcome for lg in logs)
        ok = [e for e, o in zip(errors, outcomes) if o == "success"]
        ae = float(np.mean(ok)) if ok else float("nan")
        return cls(policy, variant, len(logs), len(ok), 100.0 * len(ok) / len(logs), ae, errors, outcomes, list(logs))

    @property
    def ae_all(self) -> float:
        """Average final error over every trial (the alternative reading of AE)."""
        return float(np.mean(self.final_errors))

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "policy": self.policy, "variant": self.variant,
                "trials": self.trials, "successes": self.successes, "sr": self.sr,
                "ae": None if math.isnan(self.ae) else self.ae, "ae_all": self.ae_all,
                "final_errors": list(self.final_errors), "outcomes": list(self.outcomes)}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(d["policy"], d["variant"], int(d["trials"]), int(d["successes"]), float(d["sr"]),
                   float("nan") if d["ae"] is None else float(d["ae"]), tuple(d["final_errors"]),
                   tuple(d["outcomes"]))


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

class ZeroPolicy:
    """Never moves: the null baseline."""

    name = "zero"

    def __call__(self, obs):
        return np.zeros(5)


class ScriptedOracle:
    """Privileged controller: inverts the constant-curvature model onto the target.

    Wall targets are aimed ``push`` mm beyond the wall (radially from the cavity
    axis) so the tip presses into the surface; if that point is out of reach it aims
    at the target itself, and failing that just inserts.
    """

    name = "oracle"

    def __init__(self, push: float = 2.0):
        self.push = push
        self.scene: Scene | None = None

    def bind(self, scene: Scene) -> None:
        self.scene = scene

    def __call__(self, obs):
        sc = self.scene
        if sc is None:
            raise RuntimeError("ScriptedOracle must be bound to a scene")
        e = sc.config.entry
        tgt = sc.current_target()
        aims = [tgt]
        if not sc.free_space and sc.config.cavity is not None:
            rad = tgt - np.asarray(sc.config.cavity.center, dtype=float)
            rad[0] = 0.0
            n = np.linalg.norm(rad)
            if n > 0:
                aims.insert(0, tgt + self.push * rad / n)
        sol = None
        for aim in aims:
            sol = cc_inverse(sc.model, e.base, e.direction, e.e1, aim)
            if sol is not None:
                break
        lim = ACTION_LIMIT
        if sol is None:
            return np.array([0.0, 0.0, 0.0, 0.0, lim])
        s, ty, tz = sol
        d = sc.model.cable_moment_arm
        L = np.array([ty * d, tz * d, -ty * d, -tz * d])
        return np.clip(np.concatenate([L - sc.act.L, [s - sc.act.insertion]]), -lim, lim)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def trial_seeds(seed: int, n: int) -> list:
    rng = substream(seed, "eval-trials")
    return [int(s) for s in rng.integers(0, 2 ** 31, size=n)]


def run_episode(policy, scene: Scene, seed: int, max_steps: int = 80, policy_id: str = "",
                trial: int = 0, target: int | None = None) -> EpisodeLog:
    """One deterministic episode; stops at success, boundary or ``max_steps``."""
    if hasattr(policy, "bind"):
        policy.bind(scene)
    obs = scene.reset(seed, target)
    d0 = float(np.linalg.norm(obs.p))
    lg = EpisodeLog(policy_id, scene.config.variant, trial, seed, int(scene.target_index), d0)
    for k in range(max_steps):
        action = np.clip(np.asarray(policy(obs.vector()), dtype=float).reshape(5), -ACTION_LIMIT, ACTION_LIMIT)
        res = scene.step(action)
        info = res.info
        contact = int(info["contact_count"] > 0)
        lg.records.append(StepRecord(k + 1, np.array(info["ee"]), np.array(info["target"]), float(info["distance"]),
                                     np.array(info["force"]), contact, action, float(res.reward)))
        if contact and lg.first_contact < 0:
            lg.first_contact = k + 1
        obs = res.observation
        if info["success"]:
            lg.outcome = "success"
            break
        if info["boundary"]:
            lg.outcome = "boundary"
            break
        if res.truncated:
            break
    return lg


def evaluate(policy, env, n_trials: int = 40, max_steps: int = 80, seed: int = 0, threads: int = 1,
             policy_id: str | None = None) -> EvalReport:
    """SR / AE of ``policy`` (deterministic mode) over ``n_trials`` seeded trials.

    ``env`` is a :class:`SceneConfig` or a built :class:`Scene`. Each trial is fully
    determined by its seed, so the worker count does not change the results.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    cfg = env.config if isinstance(env, Scene) else env
    if cfg.max_steps < max_steps:
        cfg = replace(cfg, max_steps=max_steps)
    pid = policy_id if policy_id is not None else getattr(policy, "name", type(policy).__name__)
    seeds = trial_seeds(seed, n_trials)
    threads = max(1, min(int(threads), n_trials))

    def chunk(worker: int) -> list:
        scene = env if (isinstance(env, Scene) and worker == 0 and env.config == cfg) else build_scene(cfg)
        pol = _clone_policy(policy) if threads > 1 else policy
        return [run_episode(pol, scene, seeds[i], max_steps, pid, i) for i in range(worker, n_trials, threads)]

    if threads == 1:
        logs = chunk(0)
    else:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(chunk, range(threads)))
        logs = sorted((lg for part in parts for lg in part), key=lambda lg: lg.trial)
    return EvalReport.from_logs(pid, cfg.variant, logs)


def _clone_policy(policy):
    # scripted policies keep a scene binding, so each worker needs its own instance
    if hasattr(policy, "bind"):
        import copy
        return copy.copy(policy)
    return policy


@dataclass
class ComparisonTable:
    policies: list
    variants: list
    cells: dict               # (policy, variant) -> EvalReport | None

    def sr(self, policy: str, variant: str) -> float | None:
        rep = self.cells.get((policy, variant))
        return None if rep is None else rep.sr

    def rows(self) -> list:
        out = []
        for p in self.policies:
            for v in self.variants:
                rep = self.cells.get((p, v))
                if rep is None:
                    out.append({"policy": p, "variant": v, "trials": 0, "successes": 0, "sr": None, "ae": None})
                else:
                    out.append({"policy": p, "variant": v, "trials": rep.trials, "successes": rep.successes,
                                "sr": rep.sr, "ae": None if math.isnan(rep.ae) else rep.ae})
        return out

    def to_markdown(self) -> str:
        head = "| Policy | " + " | ".join(f"{v} SR (%) | {v} AE (mm)" for v in self.variants) + " |"
        sep = "|---|" + "---|---|" * len(self.variants)
        lines = [head, sep]
        for p in self.policies:
            cells = []
            for v in self.variants:
                rep = self.cells.get((p, v))
                if rep is None:
                    cells += ["absent", "absent"]
                else:
                    cells += [f"{rep.sr:.1f}", "-" if math.isnan(rep.ae) else f"{rep.ae:.2f}"]
            lines.append(f"| {p} | " + " | ".join(cells) + " |")
        return "\n".join(lines)


def compare_policies(policies: dict, base: SceneConfig, variants, n_trials: int = 40, max_steps: int = 80,
                     seed: int = 0, threads: int = 1) -> ComparisonTable:
    """Evaluate every policy on every environment variant.

    ``policies`` maps policy id to a loaded policy, or None when its checkpoint is
    missing (the cell is reported as absent). The observation mode of each policy
    follows its ``tags["force_observation"]`` (default on).
    """
    cells = {}
    for pid, pol in policies.items():
        for v in variants:
            if pol is None:
                cells[(pid, v)] = None
                continue
            force = bool(getattr(pol, "tags", {}).get("force_observation", True))
            cfg = replace(make_variant(base, v), force_observation=force)
            cells[(pid, v)] = evaluate(pol, cfg, n_trials, max_steps, seed, threads, policy_id=pid)
            log.info("%s on %s: SR %.1f%%", pid, v, cells[(pid, v)].sr)
    return ComparisonTable(list(policies), list(variants), cells)


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def export_logs(logs: list, path, fmt: str = "jsonl") -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "jsonl":
            with open(path, "w") as fh:
                for lg in logs:
                    fh.write(json.dumps(lg.to_dict(), sort_keys=True) + "\n")
        elif fmt == "csv":
            with open(path, "w", newline="") as fh:
                fh.write(CSV_HEADER + "\n")
                w = csv.writer(fh, lineterminator="\n")
                for lg in logs:
                    head = [SCHEMA_VERSION, lg.policy, lg.variant, lg.trial, lg.seed, lg.target_index,
                            _fmt(lg.initial_distance), lg.outcome, lg.first_contact]
                    for r in lg.records:
                        w.writerow(head + [r.step, *map(_fmt, r.ee), *map(_fmt, r.target), _fmt(r.distance),
                                           *map(_fmt, r.force), r.contact, *map(_fmt, r.action), _fmt(r.reward)])
        else:
            raise ValueError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def import_logs(path) -> list:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if path.suffix == ".csv":
        rows = list(csv.reader(text.splitlines()))
        if not rows or ",".join(rows[0]) != CSV_HEADER:
            raise ValueError(f"{path}: header does not match episode schema v{SCHEMA_VERSION}")
        logs: dict = {}
        for row in rows[1:]:
            if int(row[0]) != SCHEMA_VERSION:
                raise ValueError(f"{path}: unsupported schema {row[0]}")
            key = (row[1], row[2], int(row[3]))
            if key not in logs:
                logs[key] = EpisodeLog(row[1], row[2], int(row[3]), int(row[4]), int(row[5]), float(row[6]),
                                       [], row[7], int(row[8]))
            f = [float(x) for x in row[10:]]
            logs[key].records.append(StepRecord(int(row[9]), np.array(f[0:3]), np.array(f[3:6]), f[6],
                                                np.array(f[7:10]), int(f[10]), np.array(f[11:16]), f[16]))
        return list(logs.values())
    return [EpisodeLog.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


def write_report(report: EvalReport, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


def read_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))


def write_table(table: ComparisonTable, out) -> list:
    out = Path(out)
    md = out / "table.md"
    md.write_text(table.to_markdown() + "\n")
    tc = out / "table.csv"
    with open(tc, "w", newline="") as fh:
        fh.write(TABLE_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for r in table.rows():
            w.writerow([r["policy"], r["variant"], r["trials"], r["successes"],
                        "" if r["sr"] is None else _fmt(r["sr"]), "" if r["ae"] is None else _fmt(r["ae"])])
    logs = [lg for rep in table.cells.values() if rep is not None for lg in rep.logs]
    tj = export_logs(logs, out / "trials.jsonl", "jsonl")
    return [md, tc, tj]


def read_table(path) -> ComparisonTable:
    rows = list(csv.DictReader(Path(path).read_text().splitlines()))
    policies, variants, cells = [], [], {}
    for r in rows:
        if r["policy"] not in policies:
            policies.append(r["policy"])
        if r["variant"] not in variants:
            variants.append(r["variant"])
        if r["sr"] == "":
            cells[(r["policy"], r["variant"])] = None
            continue
        n, s = int(r["trials"]), int(r["successes"])
        cells[(r["policy"], r["variant"])] = EvalReport(r["policy"], r["variant"], n, s, float(r["sr"]),
                                                        float(r["ae"]) if r["ae"] else float("nan"), (), ())
    return ComparisonTable(policies, variants, cells)


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

def replay(lg: EpisodeLog, scene_cfg: SceneConfig) -> dict:
    """Re-execute the logged actions; report the largest per-step tip deviation (mm)."""
    scene = build_scene(replace(scene_cfg, max_steps=max(scene_cfg.max_steps, lg.steps)))
    scene.reset(lg.seed)
    if int(scene.target_index) != lg.target_index:
        raise RuntimeError(f"trial {lg.trial}: seed {lg.seed} draws target {scene.target_index}, "
                           f"log has {lg.target_index}")
    drift = 0.0
    for r in lg.records:
        res = scene.step(r.action)
        drift = max(drift, float(np.max(np.abs(res.info["ee"] - r.ee))))
    return {"policy": lg.policy, "variant": lg.variant, "trial": lg.trial, "steps": lg.steps, "max_drift": drift}


# ---------------------------------------------------------------------------
# force-distance profile
# ---------------------------------------------------------------------------

@dataclass
class ForceProfile:
    progress: np.ndarray
    force: np.ndarray        # mean normalised force magnitude
    distance: np.ndarray     # mean normalised distance
    correlation: float       # Spearman, normalised force vs -normalised distance, pooled steps
    n_logs: int

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "progress": self.progress.tolist(), "force": self.force.tolist(),
                "distance": self.distance.tolist(), "correlation": self.correlation, "n_logs": self.n_logs}


def normalised_series(lg: EpisodeLog) -> tuple[np.ndarray, np.ndarray]:
    """(force / max force, distance / first distance) over the logged steps."""
    f = np.array([np.linalg.norm(r.force) for r in lg.records])
    d = np.array([r.distance for r in lg.records])
    fmax = f.max() if len(f) else 0.0
    fn = f / fmax if fmax > 0 else np.zeros_like(f)
    return fn, d / d[0]


def resample(y: np.ndarray, n: int = PROFILE_POINTS) -> np.ndarray:
    """Cubic-spline resampling of a sequence onto ``n`` uniform progress points."""
    y = np.asarray(y, dtype=float)
    q = np.linspace(0.0, 1.0, n)
    if len(y) == 1:
        return np.full(n, y[0])
    u = np.linspace(0.0, 1.0, len(y))
    if len(y) < 4:
        return np.interp(q, u, y)
    return CubicSpline(u, y, bc_type="not-a-knot")(q)


def force_distance_profile(logs: list, n_points: int = PROFILE_POINTS) -> ForceProfile:
    logs = [lg for lg in logs if lg.records]
    if not logs:
        raise ProfileError("no trajectories to profile")
    fs, ds, pf, pd = [], [], [], []
    for lg in logs:
        fn, dn = normalised_series(lg)
        fs.append(resample(fn, n_points))
        ds.append(resample(dn, n_points))
        pf.append(fn)
        pd.append(dn)
    pf, pd = np.concatenate(pf), np.concatenate(pd)
    if np.ptp(pf) == 0 or np.ptp(pd) == 0:
        corr = float("nan")
    else:
        corr = float(spearmanr(pf, -pd)[0])
    return ForceProfile(np.linspace(0.0, 1.0, n_points), np.mean(fs, axis=0), np.mean(ds, axis=0), corr, len(logs))


# ---------------------------------------------------------------------------
# SVG plots
# ---------------------------------------------------------------------------

W, H = 640, 400
PAD_L, PAD_R, PAD_T, PAD_B = 70, 20, 40, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _num(x: float) -> str:
    return f"{x:.6g}"


def axis_range(values, margin: float = 0.05) -> tuple[float, float]:
    lo, hi = float(np.min(values)), float(np.max(values))
    span = hi - lo
    if span == 0:
        span = abs(lo) if lo != 0 else 1.0
    return lo - margin * span, hi + margin * span


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def svg_chart(series: dict, path, title: str = "", xlabel: str = "", ylabel: str = "",
              kind: str = "line") -> Path | None:
    """Deterministic SVG chart; axis ranges (5% margin) are recorded as ``data-*`` attributes.

    ``series`` maps a label to (x, y). ``kind="bar"`` draws one bar per x with
    series grouped side by side.
    """
    series = {k: (np.asarray(x, dtype=float), np.asarray(y, dtype=float)) for k, (x, y) in series.items()}
    series = {k: (x[np.isfinite(y)], y[np.isfinite(y)]) for k, (x, y) in series.items()}
    series = {k: v for k, v in series.items() if len(v[0])}
    if not series:
        log.warning("no data for %s; plot skipped", path)
        return None
    xs = np.concatenate([x for x, _ in series.values()])
    ys = np.concatenate([y for _, y in series.values()])
    if kind == "bar":
        ys = np.concatenate([ys, [0.0]])
        xs = np.concatenate([xs - 0.5, xs + 0.5])
    x0, x1 = axis_range(xs)
    y0, y1 = axis_range(ys)
    pw, ph = W - PAD_L - PAD_R, H - PAD_T - PAD_B

    def sx(x):
        return PAD_L + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return PAD_T + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
           f'data-xmin="{_num(x0)}" data-xmax="{_num(x1)}" data-ymin="{_num(y0)}" data-ymax="{_num(y1)}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{title}</text>',
           f'<rect x="{PAD_L}" y="{PAD_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<text x="{sx(t):.2f}" y="{PAD_T + ph + 16}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{_num(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{PAD_L}" y1="{sy(t):.2f}" x2="{PAD_L + pw}" y2="{sy(t):.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{PAD_L - 6}" y="{sy(t) + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">{_num(t)}</text>')
    out.append(f'<text x="{PAD_L + pw / 2:.1f}" y="{H - 10}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="13">{xlabel}</text>')
    out.append(f'<text x="16" y="{PAD_T + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="13" '
               f'transform="rotate(-90 16 {PAD_T + ph / 2:.1f})">{ylabel}</text>')
    n = len(series)
    for i, (label, (x, y)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        if kind == "bar":
            bw = pw / (x1 - x0) * 0.8 / n
            for xi, yi in zip(x, y):
                left = sx(xi) - 0.4 * pw / (x1 - x0) + i * bw
                top, bottom = sy(max(yi, 0.0)), sy(min(yi, 0.0))
                out.append(f'<rect x="{left:.2f}" y="{top:.2f}" width="{bw:.2f}" height="{bottom - top:.2f}" '
                           f'fill="{color}"/>')
        else:
            pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = PAD_T + 14 + 16 * i
        out.append(f'<rect x="{PAD_L + pw - 110}" y="{ly - 9}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{PAD_L + pw - 95}" y="{ly}" font-family="sans-serif" font-size="11">{label}</text>')
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n")
    return path


def read_svg_ranges(path) -> dict:
    import re
    head = Path(path).read_text().split(">", 1)[0]
    return {k: float(v) for k, v in re.findall(r'data-(xmin|xmax|ymin|ymax)="([^"]+)"', head)}


def plot_curves(curves: dict, key: str, path, ylabel: str = "") -> Path | None:
    series = {name: ([r["timestep"] for r in rows], [r[key] for r in rows]) for name, rows in curves.items()}
    return svg_chart(series, path, title=f"Training: {ylabel or key}", xlabel="timestep", ylabel=ylabel or key)


def plot_table(table: ComparisonTable, path) -> Path | None:
    series = {}
    for p in table.policies:
        x, y = [], []
        for j, v in enumerate(table.variants):
            sr = table.sr(p, v)
            if sr is not None:
                x.append(j)
                y.append(sr)
        series[p] = (x, y)
    label = "SR (%) per environment: " + ", ".join(f"{j}={v}" for j, v in enumerate(table.variants))
    return svg_chart(series, path, title="Success rate", xlabel=label, ylabel="SR (%)", kind="bar")


def plot_profile(profile: ForceProfile, path) -> Path | None:
    return svg_chart({"force / max": (profile.progress, profile.force),
                      "distance / initial": (profile.progress, profile.distance)}, path,
                     title=f"Force vs. distance (rank corr {profile.correlation:.2f})",
                     xlabel="trajectory progress", ylabel="normalised value")
