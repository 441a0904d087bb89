"""Sphere-vs-triangle proximity detection and velocity-level contact resolution.

Contacts between robot collision spheres and the (kinematic within the solve) wall
surface are resolved by projected Gauss-Seidel on the complementarity problem

    0 <= lambda_n  _|_  (W lambda + u_free)_n - b >= 0,   |lambda_t| <= mu lambda_n

where ``W = G A^-1 G^T`` is the Delassus operator of the robot's step matrix ``A``.
Impulses are in N s; forces are impulses divided by the step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._vec import cross
from .mesh import SurfaceMesh

__all__ = [
    "ContactParams",
    "Candidates",
    "ContactPoint",
    "ContactReport",
    "ContactSolution",
    "UniformGrid",
    "closest_point_on_triangles",
    "detect",
    "detect_brute",
    "merge_features",
    "WallCoupling",
    "ProximityCache",
    "solve_contacts",
    "report",
    "wall_node_forces",
    "tangent_basis",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContactParams:
    alarm_distance: float = 2.0
    contact_distance: float = 0.5
    friction_coef: float = 0.1
    pgs_iterations: int = 50
    pgs_tolerance: float = 1e-6
    baumgarte: float = 0.2
    slop_fraction: float = 0.1

    def __post_init__(self):
        if not self.alarm_distance > self.contact_distance > 0:
            raise ValueError("need alarm_distance > contact_distance > 0")
        if self.friction_coef < 0:
            raise ValueError("friction_coef must be >= 0")
        if self.pgs_iterations < 1:
            raise ValueError("pgs_iterations must be >= 1")

    @property
    def slop(self) -> float:
        return self.slop_fraction * self.contact_distance


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def closest_point_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray):
    """Closest points of points ``p`` to triangles ``(a, b, c)``, all shape (k, 3).

    Region tests follow the standard Voronoi-region construction; returns the
    closest points and their barycentric coordinates (k, 3).
    """
    p, a, b, c = (np.asarray(x, dtype=float).reshape(-1, 3) for x in (p, a, b, c))
    k = p.shape[0]
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    bary = np.zeros((k, 3))
    done = np.zeros(k, dtype=bool)

    def assign(mask, w):
        nonlocal done
        m = mask & ~done
        bary[m] = w[m] if w.ndim == 2 else w
        done |= m

    with np.errstate(divide="ignore", invalid="ignore"):
        assign((d1 <= 0) & (d2 <= 0), np.array([1.0, 0.0, 0.0]))
        assign((d3 >= 0) & (d4 <= d3), np.array([0.0, 1.0, 0.0]))
        assign((d6 >= 0) & (d5 <= d6), np.array([0.0, 0.0, 1.0]))
        v = d1 / (d1 - d3)
        assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), np.stack([1 - v, v, np.zeros(k)], axis=1))
        w = d2 / (d2 - d6)
        assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), np.stack([1 - w, np.zeros(k), w], axis=1))
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        assign((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), np.stack([np.zeros(k), 1 - w, w], axis=1))
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        assign(np.ones(k, dtype=bool), np.stack([1 - v - w, v, w], axis=1))
    q = bary[:, :1] * a + bary[:, 1:2] * b + bary[:, 2:] * c
    return q, bary


@dataclass
class Candidates:
    """Sphere/triangle pairs within the alarm distance, sorted by (node, triangle)."""

    node: np.ndarray
    tri: np.ndarray
    closest: np.ndarray
    bary: np.ndarray
    normal: np.ndarray
    gap: np.ndarray

    def __len__(self) -> int:
        return len(self.node)

    @classmethod
    def empty(cls) -> "Candidates":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 3)), np.zeros((0, 3)),
                   np.zeros((0, 3)), np.zeros(0))

    def take(self, idx) -> "Candidates":
        return Candidates(self.node[idx], self.tri[idx], self.closest[idx], self.bary[idx],
                          self.normal[idx], self.gap[idx])


def _pair_geometry(centers, radii, wall: SurfaceMesh, node, tri, alarm) -> Candidates:
    if len(node) == 0:
        return Candidates.empty()
    v = wall.vertices
    t = wall.triangles[tri]
    p = centers[node]
    q, bary = closest_point_on_triangles(p, v[t[:, 0]], v[t[:, 1]], v[t[:, 2]])
    d = p - q
    dist = np.linalg.norm(d, axis=1)
    fn = wall.normals[tri]
    interior = np.all(bary > 1e-12, axis=1)
    behind = interior & (np.einsum("ij,ij->i", d, fn) < 0)
    sdist = np.where(behind, -dist, dist)
    with np.errstate(invalid="ignore", divide="ignore"):
        normal = np.where(((dist > 1e-9) & ~behind)[:, None], d / dist[:, None], fn)
    gap = sdist - radii[node]
    # a centre more than one radius behind a face belongs to some other feature
    # (far side of a thin wall, rim faces seen from inside the cavity)
    keep = np.where(behind, dist < radii[node], dist - radii[node] < alarm)
    order = np.lexsort((tri[keep], node[keep]))
    sel = np.flatnonzero(keep)[order]
    return Candidates(node[sel], tri[sel], q[sel], bary[sel], normal[sel], gap[sel])


def detect_brute(centers, radii, wall: SurfaceMesh, params: ContactParams) -> Candidates:
    """All-pairs reference detection, O(spheres x triangles)."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(centers),))
    n, m = len(centers), wall.n_triangles
    node = np.repeat(np.arange(n), m)
    tri = np.tile(np.arange(m), n)
    return _pair_geometry(centers, radii, wall, node, tri, params.alarm_distance)


class UniformGrid:
    """Uniform hash grid over triangle bounding boxes.

    Boxes are padded by ``margin`` so the grid stays valid while vertices move less
    than that from the positions it was built on; ``needs_rebuild`` checks this.
    Cells are at least as large as any padded box and any query box, so each
    object touches at most two cells per axis.
    """

    def __init__(self, wall: SurfaceMesh, query_extent: float, margin: float = 2.0):
        self.triangles = wall.triangles
        self.margin = float(margin)
        self.build_vertices = wall.vertices.copy()
        tv = wall.vertices[wall.triangles]
        lo = tv.min(axis=1) - margin
        hi = tv.max(axis=1) + margin
        size = max(float((hi - lo).max()), 2.0 * float(query_extent), 1e-6)
        self.cell = size
        self.origin = lo.min(axis=0) - size
        self.dims = np.maximum(np.ceil((hi.max(axis=0) + size - self.origin) / size).astype(np.int64), 1)
        i0 = np.floor((lo - self.origin) / size).astype(np.int64)
        i1 = np.floor((hi - self.origin) / size).astype(np.int64)
        keys, owners = [], []
        for off in np.ndindex(2, 2, 2):
            idx = i0 + np.array(off)
            ok = np.all(idx <= i1, axis=1)
            keys.append(self._key(idx[ok]))
            owners.append(np.flatnonzero(ok))
        keys = np.concatenate(keys)
        owners = np.concatenate(owners)
        order = np.lexsort((owners, keys))
        self._keys = keys[order]
        self._tris = owners[order]

    def _key(self, idx: np.ndarray) -> np.ndarray:
        idx = np.clip(idx, 0, self.dims - 1)
        return idx[:, 0] + self.dims[0] * (idx[:, 1] + self.dims[1] * idx[:, 2])

    def needs_rebuild(self, vertices: np.ndarray) -> bool:
        disp = np.abs(vertices - self.build_vertices).max() if len(vertices) else 0.0
        return disp > self.margin

    def query(self, centers: np.ndarray, extent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Unique (sphere, triangle) pairs whose boxes share a cell."""
        lo = np.floor((centers - extent[:, None] - self.origin) / self.cell).astype(np.int64)
        hi = np.floor((centers + extent[:, None] - self.origin) / self.cell).astype(np.int64)
        sph, tri = [], []
        for off in np.ndindex(2, 2, 2):
            idx = lo + np.array(off)
            ok = np.all(idx <= hi, axis=1) & np.all(idx >= 0, axis=1) & np.all(idx < self.dims, axis=1)
            s = np.flatnonzero(ok)
            k = self._key(idx[ok])
            start = np.searchsorted(self._keys, k, side="left")
            stop = np.searchsorted(self._keys, k, side="right")
            cnt = stop - start
            if cnt.sum() == 0:
                continue
            rep = np.repeat(s, cnt)
            pos = np.repeat(start - np.cumsum(cnt) + cnt, cnt) + np.arange(cnt.sum())
            sph.append(rep)
            tri.append(self._tris[pos])
        if not sph:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        m = len(self.triangles)
        key = np.unique(np.concatenate(sph) * m + np.concatenate(tri))
        return key // m, key % m


def detect(centers, radii, wall: SurfaceMesh, params: ContactParams, grid: UniformGrid | None = None) -> Candidates:
    """Pairs whose sphere-to-triangle gap is below the alarm distance.

    ``gap = signed distance - radius``; the normal points from the wall toward the
    sphere centre (into free space). A ``grid`` built on ``wall`` may be passed in to
    be reused across calls.
    """
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(centers),)).astype(float)
    if len(centers) == 0 or wall.n_triangles == 0:
        return Candidates.empty()
    extent = radii + params.alarm_distance
    if grid is None:
        grid = UniformGrid(wall, float(extent.max()))
    node, tri = grid.query(centers, extent)
    return _pair_geometry(centers, radii, wall, node, tri, params.alarm_distance)


# ---------------------------------------------------------------------------
# resolution
# ---------------------------------------------------------------------------

class ProximityCache:
    """Broadphase with a padding ``margin``, reused while motion stays within it.

    The padded pair set is recomputed only when robot centres plus wall vertices have
    moved more than ``margin`` in total since it was built; until then the exact
    narrowphase on the cached pairs returns the same candidates as :func:`detect`.
    """

    def __init__(self, params: ContactParams, margin: float = 4.0):
        self.params = params
        self.margin = float(margin)
        self._pairs = None
        self._ref_centers = None
        self._ref_wall = None
        self.rebuilds = 0

    def invalidate(self) -> None:
        self._pairs = None

    def detect(self, centers, radii, wall: SurfaceMesh) -> Candidates:
        centers = np.asarray(centers, dtype=float).reshape(-1, 3)
        radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(centers),)).astype(float)
        stale = self._pairs is None or len(centers) != len(self._ref_centers) \
            or len(wall.vertices) != len(self._ref_wall)
        if not stale:
            moved = np.abs(centers - self._ref_centers).max() + np.abs(wall.vertices - self._ref_wall).max()
            stale = moved * np.sqrt(3.0) > self.margin
        if stale:
            extent = radii + self.params.alarm_distance + self.margin
            grid = UniformGrid(wall, float(extent.max()), margin=0.0)
            self._pairs = grid.query(centers, extent)
            self._ref_centers = centers.copy()
            self._ref_wall = wall.vertices.copy()
            self.rebuilds += 1
        node, tri = self._pairs
        return _pair_geometry(centers, radii, wall, node, tri, self.params.alarm_distance)


def merge_features(cands: Candidates, cos_tol: float = 0.95) -> Candidates:
    """One constraint per distinct contact direction and node.

    Triangles sharing the closest vertex or edge yield near-identical constraint rows;
    keeping them all makes the Delassus matrix rank deficient. Per node, candidates are
    visited by increasing gap and dropped when their normal is within ``cos_tol`` of
    one already kept.
    """
    if len(cands) < 2:
        return cands
    keep = []
    for n in np.unique(cands.node):
        idx = np.flatnonzero(cands.node == n)
        idx = idx[np.argsort(cands.gap[idx], kind="stable")]
        kept = []
        for i in idx:
            if all(cands.normal[i] @ cands.normal[j] < cos_tol for j in kept):
                kept.append(i)
        keep.extend(kept)
    return cands.take(np.sort(np.asarray(keep)))


def tangent_basis(normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = np.asarray(normals, dtype=float).reshape(-1, 3)
    helper = np.where((np.abs(n[:, 0]) < 0.9)[:, None], np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    t1 = cross(n, helper)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = cross(n, t1)
    return t1, t2


@dataclass
class ContactPoint:
    node: int
    tri: int
    normal: np.ndarray
    gap: float
    lambda_n: float
    lambda_t: np.ndarray
    tangents: np.ndarray = field(repr=False, default=None)
    bary: np.ndarray = field(repr=False, default=None)

    def impulse(self) -> np.ndarray:
        """World-frame impulse on the robot node (N s)."""
        out = self.lambda_n * self.normal
        if self.tangents is not None:
            out = out + self.lambda_t[0] * self.tangents[0] + self.lambda_t[1] * self.tangents[1]
        return out


@dataclass
class ContactSolution:
    points: list
    delta_v: np.ndarray          # (n_nodes, 3) velocity correction on the robot
    iterations: int
    residual: float
    converged: bool
    wall_delta_v: np.ndarray | None = None   # (n_wall, 3) when a wall coupling was given

    @property
    def impulses(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, 3))
        return np.stack([p.impulse() for p in self.points])


@dataclass
class WallCoupling:
    """Deformable wall taking part in the contact solve.

    ``velocity`` holds the wall's unconstrained end-of-step nodal velocities and
    ``response(dofs)`` returns the matching columns of its inverse step matrix
    (velocity change per unit impulse), so wall and robot respond implicitly to the
    same multipliers.
    """

    triangles: np.ndarray
    velocity: np.ndarray
    response: Callable[[np.ndarray], np.ndarray]


def _wall_jacobian(cands: Candidates, basis: np.ndarray, triangles: np.ndarray):
    """Contact-frame map from the involved wall dofs, (3k, 3m), plus those dofs."""
    tri_nodes = triangles[cands.tri]
    nodes = np.unique(tri_nodes)
    col = np.searchsorted(nodes, tri_nodes)
    k = len(cands)
    G = np.zeros((k, 3, len(nodes), 3))
    for j in range(3):
        G[np.arange(k), :, col[:, j], :] += cands.bary[:, j, None, None] * basis
    dofs = (3 * nodes[:, None] + np.arange(3)).ravel()
    return G.reshape(3 * k, 3 * len(nodes)), dofs


def _delassus(node: np.ndarray, basis: np.ndarray, compliance, n_nodes: int) -> np.ndarray:
    """``W = B^T A^-1 B`` for contact frames ``basis`` (k, 3, 3) acting on ``node``."""
    k = len(node)
    if np.ndim(compliance) == 1:
        inv_m = np.asarray(compliance, dtype=float)[node]
        w = np.zeros((3 * k, 3 * k))
        for a in range(k):
            for b in range(k):
                if node[a] == node[b]:
                    w[3 * a:3 * a + 3, 3 * b:3 * b + 3] = inv_m[a] * basis[a] @ basis[b].T
        return w
    cmat = np.asarray(compliance, dtype=float)
    dofs = (3 * node[:, None] + np.arange(3)).ravel()
    sub = cmat[np.ix_(dofs, dofs)].reshape(k, 3, k, 3)
    return np.einsum("aip,apbq,bjq->aibj", basis, sub, basis).reshape(3 * k, 3 * k)


def _apply_compliance(node: np.ndarray, impulses: np.ndarray, compliance, n_nodes: int) -> np.ndarray:
    if np.ndim(compliance) == 1:
        dv = np.zeros((n_nodes, 3))
        np.add.at(dv, node, impulses * np.asarray(compliance, dtype=float)[node][:, None])
        return dv
    g = np.zeros(3 * n_nodes)
    np.add.at(g, (3 * node[:, None] + np.arange(3)).ravel(), impulses.ravel())
    return (np.asarray(compliance) @ g).reshape(n_nodes, 3)


def solve_contacts(cands: Candidates, v_free: np.ndarray, compliance, params: ContactParams, h: float,
                   wall_velocity: np.ndarray | None = None, warm_start: np.ndarray | None = None,
                   wall: WallCoupling | None = None) -> ContactSolution:
    """Projected Gauss-Seidel on the contact complementarity problem.

    ``v_free`` (n, 3) are robot node velocities after the unconstrained step;
    ``compliance`` is either per-node inverse masses (n,) or the dense inverse of the
    robot's (3n, 3n) step matrix. ``wall_velocity`` (k, 3) is the velocity of each
    candidate's closest wall point for a kinematic wall; with ``wall`` given, the
    wall's own implicit compliance joins the Delassus operator and its velocity
    correction is returned too. The normal target is speculative above the contact
    distance (do not close it within the step) and a Baumgarte push-out below it.
    """
    v_free = np.asarray(v_free, dtype=float).reshape(-1, 3)
    n_nodes = len(v_free)
    k = len(cands)
    if k == 0:
        return ContactSolution([], np.zeros_like(v_free), 0, 0.0, True)
    if not h > 0:
        raise ValueError("time step must be positive")
    t1, t2 = tangent_basis(cands.normal)
    basis = np.stack([cands.normal, t1, t2], axis=1)           # (k, 3, 3) rows: n, t1, t2
    W = _delassus(cands.node, basis, compliance, n_nodes)
    rel = v_free[cands.node]
    if wall is not None:
        G, wdofs = _wall_jacobian(cands, basis, wall.triangles)
        R = wall.response(wdofs)
        W = W + G @ R[wdofs] @ G.T
        wv = np.asarray(wall.velocity, dtype=float).reshape(-1, 3)[wall.triangles[cands.tri]]
        rel = rel - np.einsum("kj,kjd->kd", cands.bary, wv)
    elif wall_velocity is not None:
        rel = rel - wall_velocity
    u = np.einsum("kij,kj->ki", basis, rel).ravel()             # free relative velocity per row
    dc = params.contact_distance
    gap = cands.gap
    target = np.where(gap > dc, -(gap - dc) / h,
                      params.baumgarte * np.maximum(0.0, (dc - gap) - params.slop) / h)
    lam = np.zeros(3 * k) if warm_start is None else np.array(warm_start, dtype=float).ravel()
    if lam.any():
        u = u + W @ lam
    mu = params.friction_coef
    diag_n = np.array([W[3 * c, 3 * c] for c in range(k)])
    tt_inv = [np.linalg.inv(W[3 * c + 1:3 * c + 3, 3 * c + 1:3 * c + 3]) if mu > 0 else None for c in range(k)]
    it = 0
    change = np.inf
    for it in range(1, params.pgs_iterations + 1):
        change = 0.0
        for c in range(k):
            i = 3 * c
            ln_old = lam[i]
            ln = max(0.0, ln_old - (u[i] - target[c]) / diag_n[c])
            d = ln - ln_old
            if d != 0.0:
                u += W[:, i] * d
                lam[i] = ln
                change = max(change, abs(d))
            if mu > 0:
                lt_old = lam[i + 1:i + 3].copy()
                lt = lt_old - tt_inv[c] @ u[i + 1:i + 3]
                cap = mu * ln
                norm = float(np.hypot(lt[0], lt[1]))
                if norm > cap:
                    lt = lt * (cap / norm) if norm > 0 else np.zeros(2)
                dt = lt - lt_old
                if dt.any():
                    u += W[:, i + 1:i + 3] @ dt
                    lam[i + 1:i + 3] = lt
                    change = max(change, float(np.abs(dt).max()))
        if change < params.pgs_tolerance:
            break
    converged = change < params.pgs_tolerance
    if not converged:
        log.debug("contact PGS stopped at iteration cap with change %.3e", change)
    lam = lam.reshape(k, 3)
    impulses = np.einsum("kij,ki->kj", basis, lam)
    dv = _apply_compliance(cands.node, impulses, compliance, n_nodes)
    wall_dv = None
    if wall is not None:
        wall_dv = -(R @ (G.T @ lam.ravel())).reshape(-1, 3)
    points = [
        ContactPoint(int(cands.node[c]), int(cands.tri[c]), cands.normal[c].copy(), float(cands.gap[c]),
                     float(lam[c, 0]), lam[c, 1:].copy(), basis[c, 1:].copy(), cands.bary[c].copy())
        for c in range(k)
    ]
    return ContactSolution(points, dv, it, float(change), converged, wall_dv)


@dataclass
class ContactReport:
    any_contact: bool
    resultant: np.ndarray
    points: list
    converged: bool = True

    @property
    def count(self) -> int:
        return len(self.points)


def report(points, h: float, converged: bool = True) -> ContactReport:
    """Aggregate force-carrying points into the contact flag and resultant force on the robot (N)."""
    active = [p for p in points if p.lambda_n > 0.0]
    if not active:
        return ContactReport(False, np.zeros(3), [], converged)
    total = np.sum([p.impulse() for p in active], axis=0) / h
    return ContactReport(True, total, active, converged)


def wall_node_forces(points, wall: SurfaceMesh, n_wall_nodes: int, h: float) -> np.ndarray:
    """Reaction forces on wall nodes (n, 3): each point's robot force, negated, split barycentrically."""
    f = np.zeros((n_wall_nodes, 3))
    for p in points:
        fr = -p.impulse() / h
        tri = wall.triangles[p.tri]
        f[tri] += p.bary[:, None] * fr
    return f
