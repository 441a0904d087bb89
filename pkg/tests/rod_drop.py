"""Randomised rod drops into a rigid copy of the desk cavity.

Each trial poses a short rod clear of the wall, then drives it into the lumen under a
strong random body force, random cable ramps and steady insertion. Every contact solve
is recorded so the callers can check sign, cone and penetration bounds.
"""

from dataclasses import dataclass, field

import numpy as np

from endonav import contact as ct
from endonav.endoscope import ActuationState, EndoscopeModel, Rod
from endonav.env import SceneConfig, load_mesh
from endonav.mesh import TAG_OUTER, surface_of

DROP_ROD = EndoscopeModel(passive_length=12.0, active_length=10.0, node_spacing=4.0,
                          active_node_spacing=2.5, radius=1.5, insertion_limit=12.0)


@dataclass
class DropStats:
    trials: int = 0
    solves: int = 0
    points: int = 0
    min_lambda_n: float = np.inf
    max_cone_excess: float = -np.inf
    penetrations: list = field(default_factory=list)   # per step, deepest overlap (mm)
    min_gap: float = np.inf

    @property
    def max_penetration(self) -> float:
        return max(self.penetrations, default=0.0)

    def percentile(self, q: float) -> float:
        return float(np.percentile(self.penetrations, q)) if self.penetrations else 0.0


def drop_wall():
    mesh = load_mesh(SceneConfig())
    s = surface_of(mesh)
    return s.subset(~np.all(mesh.tags[s.triangles] == TAG_OUTER, axis=1))


def run_drops(n_trials: int, seed: int = 0, steps: int = 40, h: float = 0.02,
              params: ct.ContactParams | None = None, wall=None) -> DropStats:
    params = params or ct.ContactParams()
    wall = drop_wall() if wall is None else wall
    rng = np.random.default_rng(seed)
    stats = DropStats()
    model = DROP_ROD
    radii = np.full(model.n_nodes, model.radius)
    cache = ct.ProximityCache(params)
    mu = params.friction_coef
    for _ in range(n_trials):
        while True:
            base = np.array([30.0, 0.0, 0.0]) + rng.uniform(-6, 6, 3) * (1.0, 0.5, 0.5)
            d = rng.standard_normal(3)
            d /= np.linalg.norm(d)
            e1 = np.cross(d, rng.standard_normal(3))
            e1 /= np.linalg.norm(e1)
            g = rng.standard_normal(3)
            g *= rng.uniform(2e4, 2e5) / np.linalg.norm(g)
            rod = Rod(model, base - 6.0 * d, d, e1, gravity=g)
            rod.reset(0.0)
            if not len(ct.detect_brute(rod.x, radii, wall, params)):
                break
        cache.invalidate()
        cables = rng.uniform(-1, 1, 4) * model.cable_limit
        speed = rng.uniform(0.0, 0.3)
        stats.trials += 1

        def solve(x, v_free, compliance):
            cands = ct.merge_features(cache.detect(x, radii, wall))
            if not len(cands):
                return None
            sol = ct.solve_contacts(cands, v_free, compliance, params, h)
            stats.solves += 1
            for p in sol.points:
                stats.points += 1
                stats.min_lambda_n = min(stats.min_lambda_n, p.lambda_n)
                stats.max_cone_excess = max(stats.max_cone_excess, float(np.hypot(*p.lambda_t)) - mu * p.lambda_n)
            return sol

        for k in range(steps):
            w = min(1.0, (k + 1) / 20)
            act = ActuationState(tuple(w * cables), min(speed * (k + 1), model.track_limit), speed)
            rod.step(h, act, contact=solve)
            c = cache.detect(rod.x, radii, wall)
            if len(c):
                stats.min_gap = min(stats.min_gap, float(c.gap.min()))
                stats.penetrations.append(max(0.0, float(-c.gap.min())))
    return stats
