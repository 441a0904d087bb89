"""Command-line entry point: ``endonav {gen-scene,train,eval,compare,replay,plot}``.

Every command resolves one run configuration (defaults < config file < flags),
writes its outputs under ``--out`` and finishes with a ``manifest.json`` recording
the command, config hash, seed and produced files.

Exit codes: 0 ok, 2 configuration error, 3 runtime/solver error, 4 version mismatch.
"""
from __future__ import annotations

import os

# single-threaded BLAS keeps every run bit-reproducible; must precede the numpy import
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .configio import ConfigError, content_hash, dump_yaml, load_yaml
from .env import SceneConfig, VectorEnv, build_scene, make_variant
from .mesh import MeshError, write_msh
from .ppo import algo
from .ppo.checkpoint import CheckpointError, CheckpointVersionError

log = logging.getLogger("endonav")

THREADS_ENV = "ENDONAV_THREADS"
POLICY_VARIANTS = {
    # policy id: (training environment, force/contact observation)
    "A": ("FE", False),
    "B": ("SE", False),
    "C": ("SE", True),
    "D": ("DE", False),
    "E": ("DE", True),
}
EVAL_VARIANTS = ("SE", "DE", "UE1", "UE2")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERSION = 0, 2, 3, 4


@dataclass(frozen=True)
class RunConfig:
    config_version: int = 1
    seed: int = 0
    scene: SceneConfig = field(default_factory=SceneConfig)
    train: algo.TrainConfig = field(default_factory=algo.TrainConfig)
    eval_trials: int = 40
    eval_max_steps: int = 80

    def __post_init__(self):
        if self.config_version != 1:
            raise ConfigError(f"unsupported version {self.config_version}", "config_version")
        if self.eval_trials < 1:
            raise ConfigError("must be >= 1", "eval_trials")
        if self.eval_max_steps < 1:
            raise ConfigError("must be >= 1", "eval_max_steps")

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed, scene=replace(self.scene, seed=seed), train=replace(self.train, seed=seed))


def load_run_config(path, seed: int | None = None) -> RunConfig:
    if path is None:
        cfg = RunConfig()
    else:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}", "config")
        try:
            cfg = load_yaml(RunConfig, p.read_text())
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
    return cfg.with_seed(cfg.seed if seed is None else seed)


def policy_scene(cfg: RunConfig, policy: str) -> SceneConfig:
    if policy not in POLICY_VARIANTS:
        raise ConfigError(f"must be one of {sorted(POLICY_VARIANTS)}", "variant")
    env_variant, force = POLICY_VARIANTS[policy]
    return replace(make_variant(cfg.scene, env_variant), force_observation=force)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, argv: list, config_path, config_hash: str, seed: int,
                   started: float, outputs: list, extra: dict | None = None) -> Path:
    outs = sorted({str(Path(p).resolve().relative_to(out.resolve())) for p in outputs})
    manifest = {
        "command": command,
        "argv": list(argv),
        "config_path": None if config_path is None else str(config_path),
        "config_hash": config_hash,
        "seed": seed,
        "version": __version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        "outputs": [{"path": p, "sha256": _sha256(out / p)} for p in outs],
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_scene(args) -> int:
    started = time.time()
    cfg = load_run_config(args.config, args.seed)
    scene_cfg = cfg.scene if args.variant is None else make_variant(cfg.scene, args.variant)
    scene = build_scene(scene_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mesh_path = out / "cavity.msh"
    write_msh(scene.mesh, mesh_path)
    resolved = replace(cfg, scene=scene_cfg)
    cfg_path = out / "config.yaml"
    cfg_path.write_text(dump_yaml(resolved))
    targets = {"A": list(scene.targets.A), "B": list(scene.targets.B),
               "fixed": scene.fixed_indices.tolist(), "forced": scene.force_indices.tolist()}
    tgt_path = out / "targets.json"
    tgt_path.write_text(json.dumps(targets, sort_keys=True) + "\n")
    write_manifest(out, "gen-scene", sys.argv[1:], args.config, content_hash(resolved), cfg.seed, started,
                   [mesh_path, cfg_path, tgt_path],
                   {"n_vertices": scene.mesh.n_vertices, "n_tets": scene.mesh.n_tets})
    print(f"scene: {scene.mesh.n_vertices} vertices, {scene.mesh.n_tets} tets -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.time()
    cfg = load_run_config(args.config, args.seed)
    if args.variant is None:
        raise ConfigError("a policy variant (A-E) is required", "variant")
    scene_cfg = policy_scene(cfg, args.variant)
    tcfg = cfg.train
    if args.timesteps is not None:
        tcfg = replace(tcfg, total_timesteps=args.timesteps)
    resolved = replace(cfg, scene=scene_cfg, train=tcfg)
    chash = content_hash(resolved)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / "config.yaml"

    resume = None
    if args.resume is not None:
        resume = out / "last.ckpt" if args.resume == "auto" else Path(args.resume)
        if not resume.exists():
            raise CheckpointError(f"no checkpoint to resume from at {resume}")

    def factory(worker: int):
        return VectorEnv(build_scene(scene_cfg))

    def progress(row):
        log.info("step %7d  reward %10.2f  sr %.2f  kl %.4f", row["timestep"], row["mean_reward"], row["sr"],
                 row.get("approx_kl", float("nan")))

    cfg_path.write_text(dump_yaml(resolved))
    _, curve, trainer = algo.train(factory, tcfg, out_dir=out, resume=resume, config_hash=chash,
                                   threads=_threads(args), on_update=progress,
                                   tags={"policy": args.variant, "variant": scene_cfg.variant,
                                         "force_observation": scene_cfg.force_observation})
    outputs = [cfg_path, out / "learning_curve.csv", out / "final.ckpt", out / "last.ckpt"]
    outputs += sorted(out.glob("checkpoint_*.ckpt"))
    write_manifest(out, "train", sys.argv[1:], args.config, chash, cfg.seed, started, outputs,
                   {"policy": args.variant, "timesteps": trainer.timestep})
    print(f"trained policy {args.variant}: {trainer.timestep} steps -> {out / 'final.ckpt'}")
    return EXIT_OK


def _eval_scene(cfg: RunConfig, variant: str, policy) -> SceneConfig:
    force = bool(policy.tags.get("force_observation", True))
    return replace(make_variant(cfg.scene, variant), force_observation=force)


def cmd_eval(args) -> int:
    from . import evalsuite as es
    started = time.time()
    cfg = load_run_config(args.config, args.seed)
    trials = args.trials or cfg.eval_trials
    max_steps = args.max_steps or cfg.eval_max_steps
    variant = args.variant or "DE"
    policy = algo.load_policy(args.checkpoint)
    scene_cfg = _eval_scene(cfg, variant, policy)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = es.evaluate(policy, scene_cfg, n_trials=trials, max_steps=max_steps, seed=cfg.seed,
                         threads=_threads(args), policy_id=policy.tags.get("policy", policy.name))
    resolved = replace(cfg, scene=scene_cfg, eval_trials=trials, eval_max_steps=max_steps)
    cfg_path = out / "config.yaml"
    cfg_path.write_text(dump_yaml(resolved))
    files = [cfg_path, es.write_report(report, out / "report.json"),
             es.export_logs(report.logs, out / "episodes.jsonl", "jsonl"),
             es.export_logs(report.logs, out / "episodes.csv", "csv")]
    write_manifest(out, "eval", sys.argv[1:], args.config, content_hash(resolved), cfg.seed, started, files,
                   {"trials": trials, "max_steps": max_steps, "variant": variant,
                    "checkpoint": str(args.checkpoint)})
    print(f"{report.policy} on {variant}: SR {report.sr:.1f}%  AE {report.ae:.2f} mm  ({trials} trials)")
    return EXIT_OK


def cmd_compare(args) -> int:
    from . import evalsuite as es
    started = time.time()
    cfg = load_run_config(args.config, args.seed)
    trials = args.trials or cfg.eval_trials
    max_steps = args.max_steps or cfg.eval_max_steps
    runs = Path(args.runs)
    policies = {}
    for pid in args.policies:
        path = runs / pid / "final.ckpt"
        policies[pid] = algo.load_policy(path, pid) if path.exists() else None
        if policies[pid] is None:
            log.warning("policy %s: no checkpoint at %s", pid, path)
    variants = args.variant_list or list(EVAL_VARIANTS)
    table = es.compare_policies(policies, cfg.scene, variants, n_trials=trials, max_steps=max_steps,
                                seed=cfg.seed, threads=_threads(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = es.write_table(table, out)
    resolved = replace(cfg, eval_trials=trials, eval_max_steps=max_steps)
    cfg_path = out / "config.yaml"
    cfg_path.write_text(dump_yaml(resolved))
    write_manifest(out, "compare", sys.argv[1:], args.config, content_hash(resolved), cfg.seed, started,
                   files + [cfg_path], {"trials": trials, "max_steps": max_steps, "variants": variants,
                                        "policies": list(args.policies)})
    print(table.to_markdown())
    return EXIT_OK


def cmd_replay(args) -> int:
    from . import evalsuite as es
    started = time.time()
    log_path = Path(args.log)
    cfg_path = Path(args.config) if args.config else log_path.parent / "config.yaml"
    cfg = load_run_config(cfg_path, args.seed)
    logs = es.import_logs(log_path)
    if not logs:
        raise ConfigError(f"no episodes in {log_path}", "log")
    picked = logs if args.trial is None else [lg for lg in logs if lg.trial == args.trial]
    results = []
    for lg in picked:
        scene_cfg = replace(make_variant(cfg.scene, lg.variant), force_observation=cfg.scene.force_observation)
        results.append(es.replay(lg, scene_cfg))
    worst = max(r["max_drift"] for r in results)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res_path = out / "replay.json"
    res_path.write_text(json.dumps({"episodes": results, "max_drift": worst}, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "replay", sys.argv[1:], cfg_path, content_hash(cfg), cfg.seed, started, [res_path])
    print(f"replayed {len(results)} episode(s): max drift {worst:.3e} mm")
    return EXIT_OK if worst < es.REPLAY_TOL else EXIT_RUNTIME


def cmd_plot(args) -> int:
    from . import evalsuite as es
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if args.curve:
        series = {Path(c).parent.name or Path(c).stem: algo.read_curve(c) for c in args.curve}
        for key, label in (("sr", "success rate"), ("mean_reward", "mean episode reward")):
            f = es.plot_curves(series, key, out / f"curve_{key}.svg", ylabel=label)
            if f is not None:
                files.append(f)
    if args.table:
        f = es.plot_table(es.read_table(args.table), out / "sr_bars.svg")
        if f is not None:
            files.append(f)
    if args.logs:
        logs = [lg for p in args.logs for lg in es.import_logs(p)
                if lg.outcome == "success" and args.policy in (None, lg.policy)]
        if logs:
            prof = es.force_distance_profile(logs)
            files.append(es.plot_profile(prof, out / "force_profile.svg"))
            pj = out / "force_profile.json"
            pj.write_text(json.dumps(prof.to_dict(), sort_keys=True) + "\n")
            files.append(pj)
        else:
            log.warning("no successful episodes in the logs; force profile skipped")
    if not files:
        log.warning("nothing to plot")
    write_manifest(out, "plot", sys.argv[1:], None, "", 0, started, files)
    for f in files:
        print(f)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (YAML)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config file)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="endonav", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scene", parents=[common], help="materialise the cavity mesh and resolved config")
    g.add_argument("--variant", choices=["FE", "SE", "DE", "UE1", "UE2"])
    g.set_defaults(func=cmd_gen_scene)

    t = sub.add_parser("train", parents=[common], help="train one policy variant")
    t.add_argument("--variant", choices=sorted(POLICY_VARIANTS), help="policy id A-E")
    t.add_argument("--timesteps", type=int, help="override train.total_timesteps")
    t.add_argument("--resume", nargs="?", const="auto", help="resume from a checkpoint (default OUT/last.ckpt)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="evaluate one checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--variant", choices=["FE", "SE", "DE", "UE1", "UE2"])
    e.add_argument("--trials", type=int)
    e.add_argument("--max-steps", type=int)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", parents=[common], help="policies x environments SR/AE grid")
    c.add_argument("--runs", required=True, help="directory holding <policy>/final.ckpt")
    c.add_argument("--policies", nargs="+", default=sorted(POLICY_VARIANTS))
    c.add_argument("--variant", dest="variant_list", nargs="+", choices=["FE", "SE", "DE", "UE1", "UE2"])
    c.add_argument("--trials", type=int)
    c.add_argument("--max-steps", type=int)
    c.set_defaults(func=cmd_compare)

    r = sub.add_parser("replay", parents=[common], help="re-run logged actions and check the trajectory")
    r.add_argument("log", help="episodes.jsonl from eval")
    r.add_argument("--trial", type=int)
    r.set_defaults(func=cmd_replay)

    pl = sub.add_parser("plot", parents=[common], help="SVG plots from curves, tables and logs")
    pl.add_argument("--curve", nargs="+", help="learning_curve.csv files")
    pl.add_argument("--table", help="table.csv from compare")
    pl.add_argument("--logs", nargs="+", help="episodes.jsonl files (force profile)")
    pl.add_argument("--policy", help="profile only this policy's episodes")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except algo.ConfigMismatchError as exc:
        print(f"refusing to resume: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointVersionError as exc:
        print(f"version mismatch: {exc}", file=sys.stderr)
        return EXIT_VERSION
    except MeshError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, FloatingPointError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
