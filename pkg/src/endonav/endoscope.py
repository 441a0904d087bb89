"""Cable-driven continuum endoscope as a lumped-mass rod chain.

The rod has a long passive part and a short active tip. Four antagonistic cables
set a target bend of the tip (constant-curvature map); the base node pair is driven
kinematically along the insertion axis. Stretch springs and angle-based bending
springs act between nodes; time stepping is backward Euler with a Gauss-Newton
Hessian, solved densely (the chain is short).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg as sla

from ._vec import cross

__all__ = [
    "EndoscopeModel",
    "ActuationState",
    "RodState",
    "Rod",
    "ACTION_LIMIT",
    "apply_action",
    "cable_to_target_curvature",
    "actuation_forces",
    "bend_vectors",
    "ee_state",
    "tip_bend_angle",
    "cc_tip",
    "cc_inverse",
]

ACTION_LIMIT = 0.4  # mm per step, each component


@dataclass(frozen=True)
class EndoscopeModel:
    passive_length: float = 1000.0        # mm
    active_length: float = 79.0           # mm
    node_spacing: float = 10.0            # mm, passive part
    active_node_spacing: float = 5.0      # mm
    radius: float = 1.5                   # mm, collision sphere radius
    stretch_stiffness: float = 200.0      # N/mm
    bend_stiffness: float = 2.0e3         # N mm^2
    linear_density: float = 7.8e-9        # tonne/mm
    cable_moment_arm: float = 3.0         # mm
    drag: float = 2.0e-5                  # N s/mm per node
    max_cable: float | None = None        # mm; default pi * cable_moment_arm
    insertion_limit: float | None = None  # mm; default passive_length

    def __post_init__(self):
        if not 0 < self.active_length < self.passive_length:
            raise ValueError("need 0 < active_length < passive_length")
        if not (self.node_spacing > 0 and self.active_node_spacing > 0):
            raise ValueError("node spacings must be positive")
        if self.n_active_segments < 2:
            raise ValueError("the active segment needs at least 3 nodes")
        if min(self.radius, self.stretch_stiffness, self.bend_stiffness, self.linear_density,
               self.cable_moment_arm) <= 0 or self.drag < 0:
            raise ValueError("rod physical parameters must be positive")

    @property
    def cable_limit(self) -> float:
        """Largest admissible cable displacement; one cable alone reaches 90 degrees there."""
        return np.pi * self.cable_moment_arm if self.max_cable is None else float(self.max_cable)

    @property
    def track_limit(self) -> float:
        return self.passive_length if self.insertion_limit is None else float(self.insertion_limit)

    @property
    def n_passive_segments(self) -> int:
        return max(1, int(round(self.passive_length / self.node_spacing)))

    @property
    def n_active_segments(self) -> int:
        return max(1, int(round(self.active_length / self.active_node_spacing)))

    @property
    def n_nodes(self) -> int:
        return self.n_passive_segments + self.n_active_segments + 1

    @property
    def total_length(self) -> float:
        return self.passive_length + self.active_length

    def rest_lengths(self) -> np.ndarray:
        return np.concatenate([
            np.full(self.n_passive_segments, self.passive_length / self.n_passive_segments),
            np.full(self.n_active_segments, self.active_length / self.n_active_segments),
        ])


@dataclass(frozen=True)
class ActuationState:
    cables: tuple = (0.0, 0.0, 0.0, 0.0)  # displacement from neutral, mm
    insertion: float = 0.0                 # mm along the track
    last_axial_action: float = 0.0         # mm

    @property
    def L(self) -> np.ndarray:
        return np.asarray(self.cables, dtype=float)


def apply_action(act: ActuationState, action, model: EndoscopeModel) -> ActuationState:
    """Clamp each action component to +-0.4 mm and integrate with saturation."""
    a = np.clip(np.nan_to_num(np.asarray(action, dtype=float).reshape(5)), -ACTION_LIMIT, ACTION_LIMIT)
    lim = model.cable_limit
    cables = np.clip(act.L + a[:4], -lim, lim)
    s = float(np.clip(act.insertion + a[4], 0.0, model.track_limit))
    return ActuationState(tuple(float(c) for c in cables), s, float(a[4]))


def cable_to_target_curvature(L, model: EndoscopeModel | None = None, moment_arm: float | None = None):
    """Constant-curvature tip bend (theta_y, theta_z) from antagonistic cable pairs (1,3), (2,4)."""
    d = moment_arm if moment_arm is not None else (model.cable_moment_arm if model else 3.0)
    L = np.asarray(L, dtype=float)
    ty = np.clip((L[0] - L[2]) / (2.0 * d), -np.pi / 2, np.pi / 2)
    tz = np.clip((L[1] - L[3]) / (2.0 * d), -np.pi / 2, np.pi / 2)
    return float(ty), float(tz)


@dataclass
class RodState:
    x: np.ndarray                      # (n, 3) mm
    v: np.ndarray                      # (n, 3) mm/s
    base: np.ndarray                   # track origin (insertion s = 0), mm
    direction: np.ndarray              # unit insertion axis
    e1: np.ndarray                     # unit bend axis for theta_y
    e2: np.ndarray = field(default=None)

    def __post_init__(self):
        self.direction = _unit(self.direction)
        self.e1 = _unit(self.e1 - (self.e1 @ self.direction) * self.direction)
        self.e2 = np.cross(self.direction, self.e1)

    def copy(self) -> "RodState":
        return RodState(self.x.copy(), self.v.copy(), self.base.copy(), self.direction.copy(), self.e1.copy())


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def ee_state(rod: RodState) -> tuple[np.ndarray, np.ndarray]:
    """Distal node position (mm) and velocity (mm/s)."""
    return rod.x[-1].copy(), rod.v[-1].copy()


def _skew(v: np.ndarray) -> np.ndarray:
    """Batched cross-product matrices, (k, 3) -> (k, 3, 3)."""
    s = np.zeros(v.shape[:-1] + (3, 3))
    s[..., 0, 1] = -v[..., 2]
    s[..., 0, 2] = v[..., 1]
    s[..., 1, 0] = v[..., 2]
    s[..., 1, 2] = -v[..., 0]
    s[..., 2, 0] = -v[..., 1]
    s[..., 2, 1] = v[..., 0]
    return s


def bend_vectors(x: np.ndarray, jacobians: bool = False):
    """Turning vector ``theta * axis`` at every interior node and, optionally, its
    Jacobians with respect to the incoming and outgoing edges."""
    e1 = x[1:-1] - x[:-2]
    e2 = x[2:] - x[1:-1]
    u = cross(e1, e2)
    s = np.linalg.norm(u, axis=1)
    c = np.einsum("ij,ij->i", e1, e2)
    theta = np.arctan2(s, c)
    n1 = np.linalg.norm(e1, axis=1)
    n2 = np.linalg.norm(e2, axis=1)
    small = s < 1e-9 * n1 * n2
    safe_s = np.where(small, 1.0, s)
    axis = u / safe_s[:, None]
    ratio = np.where(small, 1.0 / (n1 * n2), theta / safe_s)
    phi = np.where(small[:, None], u * ratio[:, None], theta[:, None] * axis)
    if not jacobians:
        return phi
    k = len(theta)
    proj = np.eye(3) - np.where(small[:, None, None], 0.0, axis[:, :, None] * axis[:, None, :])
    dth1 = -cross(axis, e1 / n1[:, None]) / n1[:, None]
    dth2 = cross(axis, e2 / n2[:, None]) / n2[:, None]
    outer1 = np.where(small[:, None, None], 0.0, axis[:, :, None] * dth1[:, None, :])
    outer2 = np.where(small[:, None, None], 0.0, axis[:, :, None] * dth2[:, None, :])
    j1 = outer1 - ratio[:, None, None] * proj @ _skew(e2)
    j2 = outer2 + ratio[:, None, None] * proj @ _skew(e1)
    assert j1.shape == (k, 3, 3)
    return phi, j1, j2


def _minimal_rotation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation matrix taking unit ``a`` onto unit ``b`` about ``a x b``."""
    k = np.cross(a, b)
    c = float(a @ b)
    if c < -1.0 + 1e-12:
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        perp = _unit(perp)
        return 2.0 * np.outer(perp, perp) - np.eye(3)
    kx = _skew(k)
    return np.eye(3) + kx + kx @ kx / (1.0 + c)


def target_turning(rod: RodState, act: ActuationState, model: EndoscopeModel) -> np.ndarray:
    """Target turning vector per interior joint: zero on the passive part, the tip bend
    spread evenly over the active joints about the bend axis carried to the active base."""
    n_p = model.n_passive_segments
    n_a = model.n_active_segments
    ty, tz = cable_to_target_curvature(act.L, model)
    th = float(np.hypot(ty, tz))
    if th > np.pi / 2:
        # both pairs saturated would otherwise bend the tip to ~127 degrees
        ty, tz = ty * (np.pi / 2) / th, tz * (np.pi / 2) / th
    target = np.zeros((model.n_nodes - 2, 3))
    if ty == 0.0 and tz == 0.0:
        return target
    t_b = _unit(rod.x[n_p + 1] - rod.x[n_p])
    t_prev = _unit(rod.x[n_p] - rod.x[n_p - 1])
    rot = _minimal_rotation(rod.direction, t_prev)
    axis = rot @ (ty * rod.e2 - tz * rod.e1)
    del t_b
    target[n_p - 1:] = axis / n_a  # joints at nodes n_p .. n_nodes-2
    return target


def _joint_weights(model: EndoscopeModel) -> np.ndarray:
    l = model.rest_lengths()
    return model.bend_stiffness / (0.5 * (l[:-1] + l[1:]))


def actuation_forces(rod: RodState, model: EndoscopeModel, act: ActuationState,
                     target: np.ndarray | None = None) -> np.ndarray:
    """Internal rod forces (n, 3): stretch springs plus bending springs toward the
    cable-commanded curvature. Bending energy per joint is
    ``0.5 * EI / l * |phi - phi_target|^2``; stretch energy ``0.5 * k (|e| - l)^2``."""
    if target is None:
        target = target_turning(rod, act, model)
    return _internal_forces(rod.x, model, target, _joint_weights(model))[0]


def _internal_forces(x: np.ndarray, model: EndoscopeModel, target: np.ndarray, weights: np.ndarray):
    f = np.zeros_like(x)
    rest = model.rest_lengths()
    e = x[1:] - x[:-1]
    ln = np.linalg.norm(e, axis=1)
    fs = (model.stretch_stiffness * (ln - rest) / ln)[:, None] * e
    f[:-1] += fs
    f[1:] -= fs
    phi, j1, j2 = bend_vectors(x, jacobians=True)
    g = weights[:, None] * (phi - target)
    a = np.einsum("kji,kj->ki", j1, g)   # J1^T g
    b = np.einsum("kji,kj->ki", j2, g)   # J2^T g
    f[:-2] += a
    f[1:-1] -= a - b
    f[2:] -= b
    return f, j1, j2


def tip_bend_angle(rod: RodState, model: EndoscopeModel) -> float:
    """Angle (rad) between the tip tangent and the tangent at the active segment's base."""
    n_p = model.n_passive_segments
    t0 = _unit(rod.x[n_p] - rod.x[n_p - 1])
    t1 = _unit(rod.x[-1] - rod.x[-2])
    return float(np.arccos(np.clip(t0 @ t1, -1.0, 1.0)))


class Rod:
    """Time stepper for one endoscope. Nodes 0 and 1 are kinematic (clamped base)."""

    n_kinematic = 2

    def __init__(self, model: EndoscopeModel, base, direction, e1, gravity=(0.0, 0.0, 0.0)):
        self.model = model
        self.gravity = np.asarray(gravity, dtype=float)
        l = model.rest_lengths()
        m = np.zeros(model.n_nodes)
        m[:-1] += 0.5 * l * model.linear_density
        m[1:] += 0.5 * l * model.linear_density
        self.node_mass = m
        self.arc = np.concatenate([[0.0], np.cumsum(l)])
        self.state = RodState(np.zeros((model.n_nodes, 3)), np.zeros((model.n_nodes, 3)),
                              np.asarray(base, dtype=float), np.asarray(direction, dtype=float),
                              np.asarray(e1, dtype=float))
        n = 3 * model.n_nodes
        self._free = np.arange(3 * self.n_kinematic, n)
        self._weights = _joint_weights(model)
        self._rest = model.rest_lengths()
        self._stretch_idx = self._block_index(3 * np.arange(model.n_nodes - 1), 6)
        self._bend_idx = self._block_index(3 * np.arange(model.n_nodes - 2), 9)
        self.reset(0.0)

    @property
    def x(self) -> np.ndarray:
        return self.state.x

    @property
    def v(self) -> np.ndarray:
        return self.state.v

    def base_point(self, insertion: float) -> np.ndarray:
        return self.state.base + insertion * self.state.direction

    def reset(self, insertion: float) -> None:
        st = self.state
        st.x[:] = self.base_point(insertion) + self.arc[:, None] * st.direction
        st.v[:] = 0.0

    def _block_index(self, start: np.ndarray, width: int) -> np.ndarray:
        """Flat (row * n + col) indices of square blocks of ``width`` dofs at ``start``."""
        n = 3 * self.model.n_nodes
        r = start[:, None] + np.arange(width)
        return (r[:, :, None] * n + r[:, None, :]).ravel()

    def _hessian(self, x: np.ndarray, j1: np.ndarray, j2: np.ndarray) -> np.ndarray:
        model = self.model
        n = 3 * model.n_nodes
        e = x[1:] - x[:-1]
        ln = np.linalg.norm(e, axis=1)
        eh = e / ln[:, None]
        outer = eh[:, :, None] * eh[:, None, :]
        blk = model.stretch_stiffness * (
            outer + np.maximum(0.0, 1.0 - self._rest / ln)[:, None, None] * (np.eye(3) - outer))
        sb = np.concatenate(
            [np.concatenate([blk, -blk], axis=2), np.concatenate([-blk, blk], axis=2)], axis=1)
        # Gauss-Newton bending block J^T w J with J = [-J1, J1 - J2, J2]
        jj = np.concatenate([-j1, j1 - j2, j2], axis=2)            # (k, 3, 9)
        hb = self._weights[:, None, None] * np.einsum("kai,kaj->kij", jj, jj)
        flat = np.bincount(self._stretch_idx, weights=sb.ravel(), minlength=n * n)
        flat += np.bincount(self._bend_idx, weights=hb.ravel(), minlength=n * n)
        return flat.reshape(n, n)

    def step(self, h: float, act: ActuationState, f_ext: np.ndarray | None = None,
             contact: Callable | None = None):
        """Advance one step of size ``h``.

        ``contact(x, v_free, compliance)`` may return a velocity correction (n, 3)
        computed from the unconstrained end-of-step velocities and the dense
        step-matrix inverse; it is applied before positions are integrated.
        Returns whatever ``contact`` returned (or None).
        """
        model = self.model
        st = self.state
        x, v = st.x, st.v
        n = model.n_nodes
        target = target_turning(st, act, model)
        f, j1, j2 = _internal_forces(x, model, target, self._weights)
        f += self.node_mass[:, None] * self.gravity
        if f_ext is not None:
            f += f_ext
        H = self._hessian(x, j1, j2)
        mdiag = np.repeat(self.node_mass, 3) + h * model.drag
        vf = v.ravel()
        rhs = h * (f.ravel() - model.drag * vf - h * (H @ vf))
        # kinematic base: prescribe end-of-step velocity of the first two nodes
        base = self.base_point(act.insertion)
        x_kin = base + self.arc[:self.n_kinematic, None] * st.direction
        dv_kin = ((x_kin - x[:self.n_kinematic]) / h - v[:self.n_kinematic]).ravel()
        A = h * h * H
        A[np.diag_indices_from(A)] += mdiag
        fr = self._free
        kin = np.arange(3 * self.n_kinematic)
        rhs_f = rhs[fr] - A[np.ix_(fr, kin)] @ dv_kin
        cho = sla.cho_factor(A[np.ix_(fr, fr)], lower=True, check_finite=False)
        dv = np.empty(3 * n)
        dv[kin] = dv_kin
        dv[fr] = sla.cho_solve(cho, rhs_f, check_finite=False)
        v_new = (vf + dv).reshape(n, 3)
        result = None
        if contact is not None:
            comp = np.zeros((3 * n, 3 * n))
            comp[np.ix_(fr, fr)] = sla.cho_solve(cho, np.eye(len(fr)), check_finite=False)
            result = contact(x, v_new, comp)
            if result is not None:
                v_new = v_new + result.delta_v
        st.v[:] = v_new
        st.x[:] = x + h * v_new
        st.x[:self.n_kinematic] = x_kin  # exact, free of round-off drift
        return result

    def settle(self, act: ActuationState, h: float, steps: int, **kw) -> None:
        for _ in range(steps):
            self.step(h, act, **kw)

    def with_model(self, **changes) -> "Rod":
        return Rod(replace(self.model, **changes), self.state.base, self.state.direction, self.state.e1, self.gravity)


def cc_tip(model: EndoscopeModel, base, direction, e1, insertion: float, theta_y: float, theta_z: float) -> np.ndarray:
    """Tip position of an unloaded rod under the constant-curvature model (straight passive part)."""
    d = _unit(direction)
    b1 = _unit(np.asarray(e1, dtype=float) - (np.asarray(e1, dtype=float) @ d) * d)
    b2 = np.cross(d, b1)
    start = np.asarray(base, dtype=float) + (insertion + model.passive_length) * d
    th = float(np.hypot(theta_y, theta_z))
    ell = model.active_length
    if th < 1e-12:
        return start + ell * d
    n = (theta_y * b1 + theta_z * b2) / th
    return start + ell * (np.sin(th) / th * d + (1.0 - np.cos(th)) / th * n)


def cc_inverse(model: EndoscopeModel, base, direction, e1, target) -> tuple[float, float, float] | None:
    """(insertion, theta_y, theta_z) placing the unloaded tip on ``target``; None if the
    lateral offset exceeds the 90-degree reach of the active segment."""
    d = _unit(direction)
    b1 = _unit(np.asarray(e1, dtype=float) - (np.asarray(e1, dtype=float) @ d) * d)
    b2 = np.cross(d, b1)
    r = np.asarray(target, dtype=float) - np.asarray(base, dtype=float)
    axial = float(r @ d)
    lat = r - axial * d
    rho = float(np.linalg.norm(lat))
    ell = model.active_length
    if rho > ell * 2.0 / np.pi + 1e-12:
        return None
    # (1 - cos t)/t is increasing on [0, pi/2]; bisect
    lo, hi = 0.0, np.pi / 2
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        f = ell * (1.0 - np.cos(mid)) / mid if mid > 0 else 0.0
        lo, hi = (mid, hi) if f < rho else (lo, mid)
    th = 0.5 * (lo + hi)
    reach = ell * np.sin(th) / th if th > 0 else ell
    s = axial - model.passive_length - reach
    if rho < 1e-12:
        return s, 0.0, 0.0
    n = lat / rho
    return s, th * float(n @ b1), th * float(n @ b2)
