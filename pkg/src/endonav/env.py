"""Episodic navigation environment: deformable cavity, endoscope, contact and disturbances.

A scene is built once from a :class:`SceneConfig` (cavity mesh, material, constraints,
rod, contact pipeline, target sets) and then reset/stepped like a gym environment.
Each env step applies one clamped 5-vector action and runs ``substeps`` physics
iterations of size ``h``::

    periodic wall force -> rod step with contact projection -> wall step with reactions

Variants: FE (no cavity, free-space targets), SE (static cavity), DE (periodically
forced cavity), UE1/UE2 (2x/3x forcing on the held-out target set).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import contact as ct
from .configio import ConfigError, from_dict, load_yaml, dump_yaml
from .endoscope import (ActuationState, EndoscopeModel, Rod, apply_action, cc_tip)
from .fem import DeformableBody, MaterialParams, implicit_velocity, step_implicit, step_response
from .mesh import (TAG_INNER, TAG_OUTER, CavitySpec, TetMesh, generate_cavity, read_msh, surface_of)
from .rng import substream

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
VARIANTS = ("FE", "SE", "DE", "UE1", "UE2")
REWARD_BONUS = 1.0e4

OBS_LAYOUT = (
    "p_x", "p_y", "p_z",
    "v_x", "v_y", "v_z",
    "L1", "L2", "L3", "L4",
    "a_axial_prev",
    "contact",
    "F_x", "F_y", "F_z",
)
OBS_DIM = len(OBS_LAYOUT)


class EnvUsageError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _desk_cavity() -> CavitySpec:
    return CavitySpec(radii=(30.0, 20.0, 20.0), thickness=4.0, resolution=8, aperture_deg=40.0,
                      layers=1, center=(30.0, 0.0, 0.0), jitter=0.15)


def _desk_rod() -> EndoscopeModel:
    return EndoscopeModel(passive_length=60.0, active_length=30.0, node_spacing=10.0,
                          active_node_spacing=5.0, insertion_limit=60.0)


@dataclass(frozen=True)
class EntryConfig:
    base: tuple = (150.0, 0.0, 0.0)       # feed point at insertion 0, mm
    direction: tuple = (-1.0, 0.0, 0.0)   # insertion axis
    e1: tuple = (0.0, 1.0, 0.0)           # bend axis of cable pair (1, 3)
    start_insertion: float = 20.0         # mm at reset


@dataclass(frozen=True)
class TargetConfig:
    x_range: tuple = (24.0, 46.0)  # mm; candidate wall vertices
    n_train: int = 32
    n_unseen: int = 16
    free_samples: int = 48         # per set, FE variant
    free_insertion: tuple = (0.0, 20.0)  # mm beyond start_insertion
    free_bend: float = 1.2         # rad
    free_margin: float = 4.0       # mm clearance from the wall


@dataclass(frozen=True)
class SceneConfig:
    config_version: int = CONFIG_VERSION
    mesh_file: str | None = None
    cavity: CavitySpec | None = field(default_factory=_desk_cavity)
    material: MaterialParams = field(default_factory=lambda: MaterialParams(young_modulus=0.2))
    corotational: bool = False
    fixed_indices: tuple | None = None   # None: aperture rim and far pole, outer layer
    force_indices: tuple | None = None   # None: two outer vertices of largest y
    f0: tuple = (0.0, -1.0, 0.0)         # N
    period: int = 20                     # env steps
    gravity: tuple = (0.0, 0.0, -9800.0)  # mm/s^2
    contact: ct.ContactParams = field(default_factory=ct.ContactParams)
    endoscope: EndoscopeModel = field(default_factory=_desk_rod)
    entry: EntryConfig = field(default_factory=EntryConfig)
    targets: TargetConfig = field(default_factory=TargetConfig)
    variant: str = "DE"
    boundary_x: float = 15.0
    success_radius: float = 3.0
    max_steps: int = 128
    substeps: int = 12
    h: float = 0.02
    force_observation: bool = True
    force_scale: float = 5.0
    target_set: str = "A"
    preroll_steps: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.config_version != CONFIG_VERSION:
            raise ConfigError(f"unsupported version {self.config_version}", "config_version")
        if self.variant not in VARIANTS:
            raise ConfigError(f"must be one of {VARIANTS}", "variant")
        if self.target_set not in ("A", "B"):
            raise ConfigError("must be 'A' or 'B'", "target_set")
        if not self.success_radius > 0:
            raise ConfigError("must be positive", "success_radius")
        if self.substeps < 1:
            raise ConfigError("must be >= 1", "substeps")
        if not self.h > 0:
            raise ConfigError("must be positive", "h")
        if self.period < 1:
            raise ConfigError("must be >= 1", "period")
        if self.max_steps < 1:
            raise ConfigError("must be >= 1", "max_steps")
        if self.mesh_file is None and self.cavity is None:
            raise ConfigError("need a mesh file or a procedural cavity spec", "cavity")
        if len(self.f0) != 3 or len(self.gravity) != 3:
            raise ConfigError("must be a 3-vector", "f0" if len(self.f0) != 3 else "gravity")

    def to_yaml(self) -> str:
        return dump_yaml(self)

    @classmethod
    def from_yaml(cls, text: str) -> "SceneConfig":
        return load_yaml(cls, text)

    @classmethod
    def from_dict(cls, data: dict) -> "SceneConfig":
        return from_dict(cls, data)


def make_variant(base: SceneConfig, variant: str) -> SceneConfig:
    """Derive a variant from ``base``; ``base.f0`` is the reference forcing."""
    f0 = np.asarray(base.f0, dtype=float)
    scale = {"FE": 0.0, "SE": 0.0, "DE": 1.0, "UE1": 2.0, "UE2": 3.0}
    if variant not in scale:
        raise ConfigError(f"must be one of {VARIANTS}", "variant")
    tset = "B" if variant in ("UE1", "UE2") else "A"
    return replace(base, variant=variant, f0=tuple(float(x) for x in scale[variant] * f0), target_set=tset)


def periodic_force(t: int, T: int, f0) -> np.ndarray:
    """+f0 while floor(t/T) is even, -f0 while odd."""
    if T < 1:
        raise ValueError("period must be >= 1")
    f0 = np.asarray(f0, dtype=float)
    return f0.copy() if (t // T) % 2 == 0 else -f0


def reward_terms(distance: float, x_ee: float, boundary_x: float, success_radius: float):
    """(R_dis, R_B, R_S, success, boundary). Success takes precedence over the boundary."""
    success = bool(distance < success_radius)
    boundary = bool(x_ee < boundary_x) and not success
    r_dis = -float(distance)
    r_b = -REWARD_BONUS if boundary else 0.0
    r_s = REWARD_BONUS if success else 0.0
    return r_dis, r_b, r_s, success, boundary


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass
class Observation:
    p: np.ndarray            # target - EE, mm
    v: np.ndarray            # EE velocity, mm/s
    L: np.ndarray            # cable displacements, mm
    a_axial_prev: float      # mm
    contact: float           # 0 or 1
    force: np.ndarray        # normalised resultant force

    def vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, self.L, [self.a_axial_prev, self.contact], self.force])

    @classmethod
    def from_vector(cls, x) -> "Observation":
        x = np.asarray(x, dtype=float)
        if x.shape != (OBS_DIM,):
            raise ValueError(f"observation must have {OBS_DIM} components")
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:10].copy(), float(x[10]), float(x[11]), x[12:15].copy())


@dataclass
class StepResult:
    observation: Observation
    reward: float
    terminated: bool
    truncated: bool
    info: dict


@dataclass(frozen=True)
class TargetSet:
    """Training (A) and unseen (B) targets: wall vertex indices, or free points in FE."""
    A: tuple
    B: tuple
    points_A: np.ndarray | None = None
    points_B: np.ndarray | None = None

    def get(self, name: str) -> tuple:
        return self.A if name == "A" else self.B


def normalise_force(force, scale: float) -> np.ndarray:
    f = np.asarray(force, dtype=float) / scale
    n = float(np.linalg.norm(f))
    return f / n if n > 1.0 else f


# ---------------------------------------------------------------------------
# scene
# ---------------------------------------------------------------------------

def load_mesh(config: SceneConfig) -> TetMesh:
    if config.mesh_file is not None:
        path = Path(config.mesh_file)
        if not path.exists():
            raise ConfigError(f"mesh file not found: {path}", "mesh_file")
        return read_msh(path)
    return generate_cavity(config.cavity, seed=config.seed)


def _default_fixed(mesh: TetMesh) -> np.ndarray:
    v = mesh.vertices
    outer = np.flatnonzero(mesh.tags == TAG_OUTER) if mesh.tags is not None else np.arange(mesh.n_vertices)
    x = v[outer, 0]
    rim = outer[x >= x.max() - 1e-6 * max(1.0, abs(x.max()))]
    pole = outer[[int(np.argmin(x))]]
    return np.unique(np.concatenate([rim, pole]))


def _default_force(mesh: TetMesh) -> np.ndarray:
    outer = np.flatnonzero(mesh.tags == TAG_OUTER) if mesh.tags is not None else np.arange(mesh.n_vertices)
    order = np.lexsort((outer, -mesh.vertices[outer, 1]))
    return np.sort(outer[order[:2]])


class Scene:
    """One environment instance. Not thread-safe; use one per worker."""

    def __init__(self, config: SceneConfig):
        self.config = config
        self.model = config.endoscope
        self.free_space = config.variant == "FE"
        entry = config.entry
        self.rod = Rod(self.model, entry.base, entry.direction, entry.e1,
                       gravity=config.gravity)
        self.radii = np.full(self.model.n_nodes, self.model.radius)

        self.mesh = load_mesh(config)
        n = self.mesh.n_vertices
        fixed = _default_fixed(self.mesh) if config.fixed_indices is None else np.asarray(config.fixed_indices, dtype=np.int64)
        forced = _default_force(self.mesh) if config.force_indices is None else np.asarray(config.force_indices, dtype=np.int64)
        for name, idx in (("fixed_indices", fixed), ("force_indices", forced)):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ConfigError(f"node index out of range for a mesh of {n} vertices", name)
        self.fixed_indices = fixed
        self.force_indices = forced
        self.body = DeformableBody(self.mesh, config.material, corotational=config.corotational,
                                   fixed=frozenset(int(i) for i in fixed))
        self.surface = surface_of(self.mesh)
        if self.mesh.tags is not None:
            # the rod only ever meets lumen-facing and rim faces
            self.surface = self.surface.subset(~np.all(self.mesh.tags[self.surface.triangles] == TAG_OUTER, axis=1))
        inner = np.flatnonzero(self.mesh.tags == TAG_INNER) if self.mesh.tags is not None else np.unique(self.surface.triangles)
        self.inner_vertices = inner
        bx = self.mesh.bounds()
        if not bx[0][0] <= config.boundary_x <= bx[1][0]:
            raise ConfigError("boundary plane outside the mesh x-extent", "boundary_x")

        grav = np.asarray(config.gravity, dtype=float)
        self.f_gravity = (self.body.node_mass[:, None] * grav).ravel()
        self._proximity = ct.ProximityCache(config.contact)
        self._warm: dict = {}
        self._response_cache: dict = {}
        self.pgs_stats: list = []
        self._settle_wall()
        self.targets = self._make_targets()
        self._settle_rod()

        self.t = 0
        self.done = True
        self.act = ActuationState(insertion=entry.start_insertion)
        self.target_index = -1
        self.target_point = None
        self.last_report = ct.report([], config.h)
        self.substep_reports: list = []
        self._rng = substream(config.seed, "reset")

    # -- construction ---------------------------------------------------

    def _step_wall(self, extra: np.ndarray | None) -> None:
        f = self.f_gravity if extra is None else self.f_gravity + extra
        solver = "cg" if self.config.corotational else "direct"
        step_implicit(self.body, self.config.h, extra_forces=f, solver=solver)

    def _settle_wall(self) -> None:
        body = self.body
        if self.free_space:
            self.wall_snapshot = body.copy_state()
            return
        if not body.corotational:
            # static equilibrium under gravity, then confirm by pre-rolling
            import scipy.sparse.linalg as spla
            from .fem import _project_fixed
            dofs = body.fixed_dofs()
            rhs = self.f_gravity.copy()
            rhs[dofs] = 0.0
            body.u[:] = spla.spsolve(_project_fixed(body.K.tocsr(), dofs).tocsc(), rhs)
            body.u[dofs] = 0.0
        for _ in range(self.config.preroll_steps):
            self._step_wall(None)
            if np.abs(body.v).max() < 1e-3:
                break
        body.v[:] = 0.0
        self.wall_snapshot = body.copy_state()

    def _settle_rod(self) -> None:
        self.rod.reset(self.config.entry.start_insertion)
        act = ActuationState(insertion=self.config.entry.start_insertion)
        for _ in range(25):
            self.rod.step(self.config.h, act)
        self.rod.state.v[:] = 0.0
        self.rod_snapshot = (self.rod.x.copy(), self.rod.v.copy())
        tip = self.rod.x[-1]
        if not self.free_space:
            cands = ct.detect(self.rod.x, self.radii, self._wall_surface(), self.config.contact)
            if len(cands):
                raise ConfigError("entry pose is within the alarm distance of the wall", "entry")
        del tip

    def _wall_surface(self):
        return self.surface.with_vertices(self.body.positions)

    def _make_targets(self) -> TargetSet:
        cfg = self.config.targets
        rng = substream(self.config.seed, "targets")
        if self.free_space:
            pts = self._free_points(rng, 2 * cfg.free_samples)
            a = tuple(range(cfg.free_samples))
            b = tuple(range(cfg.free_samples, 2 * cfg.free_samples))
            return TargetSet(a, b, pts[: cfg.free_samples], pts[cfg.free_samples:])
        pos = self.body.positions
        cand = self.inner_vertices[(pos[self.inner_vertices, 0] >= cfg.x_range[0])
                                   & (pos[self.inner_vertices, 0] <= cfg.x_range[1])]
        # keep clear of the aperture rim
        rim = self.surface.triangles[np.any(self.mesh.tags[self.surface.triangles] != TAG_INNER, axis=1)] \
            if self.mesh.tags is not None else np.zeros((0, 3), dtype=np.int64)
        rim_nodes = np.unique(rim[np.isin(rim, self.inner_vertices)]) if rim.size else np.zeros(0, dtype=np.int64)
        if rim_nodes.size:
            d = np.linalg.norm(pos[cand][:, None, :] - pos[rim_nodes][None], axis=2).min(axis=1)
            cand = cand[d >= 2.0 * self.config.contact.contact_distance]
        perm = rng.permutation(cand)
        n_a = min(cfg.n_train, len(perm))
        n_b = min(cfg.n_unseen, len(perm) - n_a)
        if n_a == 0:
            raise ConfigError("no wall vertices in the target x-range", "targets.x_range")
        return TargetSet(tuple(int(i) for i in np.sort(perm[:n_a])),
                         tuple(int(i) for i in np.sort(perm[n_a:n_a + n_b])))

    def _free_points(self, rng, count: int) -> np.ndarray:
        """Unloaded constant-curvature tip positions, kept well inside the cavity."""
        cfg = self.config.targets
        entry = self.config.entry
        wall = surface_of(self.mesh)
        inner = wall.subset(np.all(np.isin(wall.triangles, self.inner_vertices), axis=1))
        out = []
        tries = 0
        while len(out) < count:
            tries += 1
            if tries > 200 * count:
                raise ConfigError("could not sample free-space targets", "targets")
            s = entry.start_insertion + rng.uniform(*cfg.free_insertion)
            th = rng.uniform(0.0, cfg.free_bend)
            az = rng.uniform(0.0, 2 * np.pi)
            p = cc_tip(self.model, entry.base, entry.direction, entry.e1, s, th * np.cos(az), th * np.sin(az))
            if p[0] < self.config.boundary_x + cfg.free_margin:
                continue
            node = np.zeros(inner.n_triangles, dtype=np.int64)
            tri = np.arange(inner.n_triangles)
            cand = ct._pair_geometry(p[None], np.zeros(1), inner, node, tri, np.inf)
            if len(cand) and np.min(cand.gap) >= cfg.free_margin + self.model.radius:
                out.append(p)
        return np.asarray(out)

    # -- episode --------------------------------------------------------

    def current_target(self) -> np.ndarray:
        if self.free_space:
            pts = self.targets.points_A if self.config.target_set == "A" else self.targets.points_B
            return pts[self.target_index].copy()
        return self.body.positions[self.target_index].copy()

    def reset(self, seed: int | None = None, target: int | None = None) -> Observation:
        """Re-pose the robot at the entry, restore the settled wall, draw a target."""
        if seed is not None:
            self._rng = substream(seed, "reset")
        pool = self.targets.get(self.config.target_set)
        if not pool:
            raise ConfigError("empty target set", "targets")
        k = int(self._rng.integers(len(pool))) if target is None else int(target)
        self.target_index = pool[k] if not self.free_space else k
        self.body.set_state(*self.wall_snapshot)
        self.rod.state.x[:] = self.rod_snapshot[0]
        self.rod.state.v[:] = self.rod_snapshot[1]
        self.act = ActuationState(insertion=self.config.entry.start_insertion)
        self.t = 0
        self.done = False
        self.last_report = ct.report([], self.config.h)
        self._proximity.invalidate()
        self._warm = {}
        return self.observe()

    def observe(self) -> Observation:
        cfg = self.config
        ee = self.rod.x[-1]
        vel = self.rod.v[-1]
        p = self.current_target() - ee
        if cfg.force_observation:
            c = 1.0 if self.last_report.any_contact else 0.0
            f = normalise_force(self.last_report.resultant, cfg.force_scale)
        else:
            c = 0.0
            f = np.zeros(3)
        return Observation(p, vel.copy(), self.act.L.copy(), float(self.act.last_axial_action), c, f)

    def _wall_response(self, dofs: np.ndarray) -> np.ndarray:
        """Inverse step-matrix columns, cached per node (the linear operator never changes)."""
        if self.config.corotational:
            return step_response(self.body, self.config.h, dofs)
        nodes = dofs[::3] // 3
        missing = [int(n) for n in nodes if int(n) not in self._response_cache]
        # one node per solve: batched multi-RHS solves round differently with batch width,
        # which would make a cached column depend on episode history
        for n in missing:
            self._response_cache[n] = step_response(self.body, self.config.h, 3 * n + np.arange(3))
        return np.concatenate([self._response_cache[int(n)] for n in nodes], axis=1)

    def _contact_callback(self, wall, wall_v_free: np.ndarray):
        params = self.config.contact
        h = self.config.h
        coupling = ct.WallCoupling(wall.triangles, wall_v_free, self._wall_response)

        def solve(x, v_free, compliance):
            cands = ct.merge_features(self._proximity.detect(x, self.radii, wall))
            if not len(cands):
                return None
            keys = list(zip(cands.node.tolist(), cands.tri.tolist()))
            warm = np.array([self._warm.get(k, (0.0, 0.0, 0.0)) for k in keys])
            sol = ct.solve_contacts(cands, v_free, compliance, params, h, warm_start=warm, wall=coupling)
            self._warm = {k: (p.lambda_n, *p.lambda_t) for k, p in zip(keys, sol.points)}
            self.pgs_stats.append((sol.iterations, sol.converged))
            return sol
        return solve

    def _physics_substep(self, act: ActuationState, f_periodic: np.ndarray | None):
        """Free wall velocity, then the rod step whose contact solve couples both bodies
        implicitly; finally the wall is integrated with its contact correction."""
        cfg = self.config
        if self.free_space:
            self.rod.step(cfg.h, act)
            return ct.report([], cfg.h)
        body = self.body
        f = self.f_gravity.copy()
        if f_periodic is not None:
            f.reshape(-1, 3)[self.force_indices] += f_periodic
        solver = "cg" if cfg.corotational else "direct"
        v_w = implicit_velocity(body, cfg.h, extra_forces=f, solver=solver)
        wall = self._wall_surface()
        sol = self.rod.step(cfg.h, act, contact=self._contact_callback(wall, v_w))
        if sol is not None and sol.points:
            v_w = v_w + sol.wall_delta_v.ravel()
            rep = ct.report(sol.points, cfg.h, sol.converged)
        else:
            self._warm = {}
            rep = ct.report([], cfg.h)
        body.v[:] = v_w
        body.u += cfg.h * body.v
        return rep

    def step(self, action) -> StepResult:
        if self.done:
            raise EnvUsageError("episode finished; call reset() first")
        cfg = self.config
        prev = self.act
        new = apply_action(prev, action, self.model)
        fp = None
        if not self.free_space and np.any(cfg.f0):
            fp = periodic_force(self.t, cfg.period, cfg.f0)
        n_sub = cfg.substeps
        for k in range(n_sub):
            w = (k + 1) / n_sub
            sub = ActuationState(tuple(float(x) for x in (1 - w) * prev.L + w * new.L),
                                 (1 - w) * prev.insertion + w * new.insertion, new.last_axial_action)
            rep = self._physics_substep(sub, fp)
        self.act = new
        self.last_report = rep
        self.t += 1

        ee = self.rod.x[-1].copy()
        target = self.current_target()
        dist = float(np.linalg.norm(target - ee))
        r_dis, r_b, r_s, success, boundary = reward_terms(dist, float(ee[0]), cfg.boundary_x, cfg.success_radius)
        terminated = success or boundary
        truncated = (not terminated) and self.t >= cfg.max_steps
        if not np.all(np.isfinite(self.rod.x)):
            raise FloatingPointError("rod state diverged")
        self.done = terminated or truncated
        info = {
            "distance": dist,
            "force": rep.resultant.copy(),
            "contact_count": rep.count,
            "success": success,
            "boundary": boundary,
            "ee": ee,
            "target": target,
            "step": self.t,
            "reward_terms": (r_dis, r_b, r_s),
            "solver_converged": rep.converged,
        }
        return StepResult(self.observe(), r_dis + r_b + r_s, terminated, truncated, info)


    # -- persistence ----------------------------------------------------

    def get_state(self) -> tuple[dict, dict]:
        """Arrays and JSON metadata that reproduce the episode exactly after ``set_state``."""
        keys = sorted(self._warm)
        arrays = {
            "rod_x": self.rod.x.copy(), "rod_v": self.rod.v.copy(),
            "wall_u": self.body.u.copy(), "wall_v": self.body.v.copy(),
            "cables": self.act.L.copy(),
            "force": np.asarray(self.last_report.resultant, dtype=float).copy(),
            "warm_keys": np.array(keys, dtype=np.int64).reshape(-1, 2),
            "warm_lam": np.array([self._warm[k] for k in keys], dtype=float).reshape(-1, 3),
        }
        meta = {
            "t": self.t, "done": self.done, "target_index": int(self.target_index),
            "insertion": self.act.insertion, "last_axial": self.act.last_axial_action,
            "any_contact": bool(self.last_report.any_contact),
            "converged": bool(self.last_report.converged),
            "rng": self._rng.bit_generator.state,
        }
        return arrays, meta

    def set_state(self, arrays: dict, meta: dict) -> None:
        self.rod.state.x[:] = arrays["rod_x"]
        self.rod.state.v[:] = arrays["rod_v"]
        self.body.set_state(arrays["wall_u"], arrays["wall_v"])
        self.act = ActuationState(tuple(float(c) for c in arrays["cables"]), float(meta["insertion"]),
                                  float(meta["last_axial"]))
        self.last_report = ct.ContactReport(bool(meta["any_contact"]), np.array(arrays["force"], dtype=float),
                                            [], bool(meta["converged"]))
        self._warm = {(int(a), int(b)): tuple(float(x) for x in lam)
                      for (a, b), lam in zip(arrays["warm_keys"], arrays["warm_lam"])}
        self.t = int(meta["t"])
        self.done = bool(meta["done"])
        self.target_index = int(meta["target_index"])
        self._rng.bit_generator.state = meta["rng"]
        self._proximity.invalidate()


class VectorEnv:
    """Flat-array view of a :class:`Scene` for the trainer (obs vectors, 5-tuple steps)."""

    obs_dim = OBS_DIM
    act_dim = 5

    def __init__(self, scene: Scene):
        self.scene = scene

    def reset(self, seed: int | None = None) -> np.ndarray:
        return self.scene.reset(seed).vector()

    def step(self, action):
        r = self.scene.step(action)
        return r.observation.vector(), r.reward, r.terminated, r.truncated, r.info

    def get_state(self):
        return self.scene.get_state()

    def set_state(self, arrays, meta):
        self.scene.set_state(arrays, meta)


# module-level API mirroring the scene methods

def build_scene(config: SceneConfig) -> Scene:
    return Scene(config)


def reset(scene: Scene, seed: int | None = None) -> Observation:
    return scene.reset(seed)


def step(scene: Scene, action) -> StepResult:
    return scene.step(action)


def observe(scene: Scene) -> Observation:
    return scene.observe()
