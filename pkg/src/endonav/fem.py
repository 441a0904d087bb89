"""Linear / co-rotational tetrahedral FEM with lumped mass, Rayleigh damping and
backward-Euler time stepping.

Units: mm, N, s, so stress is MPa and density tonne/mm^3.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import TetMesh, signed_volumes

__all__ = [
    "MaterialParams",
    "DeformableBody",
    "AssemblyError",
    "SolverError",
    "shape_gradients",
    "element_stiffness",
    "assemble_stiffness",
    "lumped_mass",
    "internal_forces",
    "step_implicit",
    "implicit_velocity",
    "step_response",
    "apply_fixed_constraints",
    "linear_solve_cg",
    "polar_rotations",
    "total_energy",
]


class AssemblyError(ValueError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class MaterialParams:
    young_modulus: float = 0.05      # MPa
    poisson_ratio: float = 0.45
    density: float = 1.05e-9         # tonne / mm^3
    rayleigh_mass: float = 1.0       # 1/s
    rayleigh_stiffness: float = 0.01  # s

    def __post_init__(self):
        if not self.young_modulus > 0:
            raise ValueError("young_modulus must be > 0")
        if not 0.0 < self.poisson_ratio < 0.5:
            raise ValueError("poisson_ratio must be in (0, 0.5)")
        if not self.density > 0:
            raise ValueError("density must be > 0")
        if self.rayleigh_mass < 0 or self.rayleigh_stiffness < 0:
            raise ValueError("Rayleigh coefficients must be >= 0")

    def lame(self) -> tuple[float, float]:
        e, nu = self.young_modulus, self.poisson_ratio
        lam = e * nu / ((1 + nu) * (1 - 2 * nu))
        mu = e / (2 * (1 + nu))
        return lam, mu

    def elasticity_matrix(self) -> np.ndarray:
        """Isotropic 6x6 matrix in Voigt order (xx, yy, zz, yz, xz, xy), engineering shear."""
        lam, mu = self.lame()
        d = np.zeros((6, 6))
        d[:3, :3] = lam
        d[np.arange(3), np.arange(3)] += 2 * mu
        d[np.arange(3, 6), np.arange(3, 6)] = mu
        return d


def shape_gradients(vertices: np.ndarray, tets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Constant gradients of the 4 linear shape functions per tet, shape (m, 4, 3), and volumes."""
    x = vertices[tets]
    dm = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=2)
    vol = np.linalg.det(dm) / 6.0
    bad = np.flatnonzero(vol <= 1e-12 * np.abs(dm).max(axis=(1, 2)) ** 3)
    if bad.size:
        raise AssemblyError(f"tet {int(bad[0])} is inverted or degenerate (volume {vol[bad[0]]:.3e})")
    inv = np.linalg.inv(dm)          # rows are grad N1..N3
    grads = np.empty((len(tets), 4, 3))
    grads[:, 1:] = inv
    grads[:, 0] = -inv.sum(axis=1)
    return grads, vol


def _strain_displacement(grads: np.ndarray) -> np.ndarray:
    m = grads.shape[0]
    b = np.zeros((m, 6, 12))
    for a in range(4):
        gx, gy, gz = grads[:, a, 0], grads[:, a, 1], grads[:, a, 2]
        c = 3 * a
        b[:, 0, c] = gx
        b[:, 1, c + 1] = gy
        b[:, 2, c + 2] = gz
        b[:, 3, c + 1] = gz
        b[:, 3, c + 2] = gy
        b[:, 4, c] = gz
        b[:, 4, c + 2] = gx
        b[:, 5, c] = gy
        b[:, 5, c + 1] = gx
    return b


def element_stiffness(mesh: TetMesh, material: MaterialParams) -> np.ndarray:
    """Per-tet 12x12 stiffness ``V B^T D B``."""
    grads, vol = shape_gradients(mesh.vertices, mesh.tets)
    b = _strain_displacement(grads)
    d = material.elasticity_matrix()
    return vol[:, None, None] * np.einsum("mij,jk,mkl->mil", b.transpose(0, 2, 1), d, b)


def _element_dofs(tets: np.ndarray) -> np.ndarray:
    return (3 * tets[:, :, None] + np.arange(3)).reshape(len(tets), 12)


def _assemble(tets: np.ndarray, blocks: np.ndarray, n_dof: int) -> sp.csr_matrix:
    dofs = _element_dofs(tets)
    rows = np.repeat(dofs, 12, axis=1).ravel()
    cols = np.tile(dofs, (1, 12)).ravel()
    k = sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n_dof, n_dof)).tocsr()
    k.sum_duplicates()
    k.sort_indices()
    return k


def assemble_stiffness(body: "DeformableBody | TetMesh", material: MaterialParams | None = None) -> sp.csr_matrix:
    mesh = body.rest if isinstance(body, DeformableBody) else body
    if material is None:
        if not isinstance(body, DeformableBody):
            raise TypeError("material required when assembling from a bare mesh")
        material = body.material
    ke = element_stiffness(mesh, material)
    return _assemble(mesh.tets, ke, 3 * mesh.n_vertices)


def lumped_mass(mesh: TetMesh, density: float) -> np.ndarray:
    """Row-sum lumped nodal masses: each tet gives a quarter of its mass to each corner."""
    vol = signed_volumes(mesh.vertices, mesh.tets)
    m = np.zeros(mesh.n_vertices)
    np.add.at(m, mesh.tets.ravel(), np.repeat(density * vol / 4.0, 4))
    return m


def polar_rotations(rest: np.ndarray, current: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Rotation part of each tet's deformation gradient (SVD polar decomposition)."""
    def edges(x):
        p = x[tets]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=2)

    f = edges(current) @ np.linalg.inv(edges(rest))
    u, _, vt = np.linalg.svd(f)
    r = u @ vt
    flip = np.linalg.det(r) < 0
    if np.any(flip):
        u[flip, :, 2] *= -1
        r[flip] = u[flip] @ vt[flip]
    return r


@dataclass(eq=False)
class DeformableBody:
    rest: TetMesh
    material: MaterialParams = field(default_factory=MaterialParams)
    corotational: bool = False
    u: np.ndarray = None
    v: np.ndarray = None
    f_ext: np.ndarray = None
    fixed: frozenset = frozenset()

    def __post_init__(self):
        n = 3 * self.rest.n_vertices
        self.u = np.zeros(n) if self.u is None else np.asarray(self.u, dtype=float).copy()
        self.v = np.zeros(n) if self.v is None else np.asarray(self.v, dtype=float).copy()
        self.f_ext = np.zeros(n) if self.f_ext is None else np.asarray(self.f_ext, dtype=float).copy()
        if self.u.shape != (n,) or self.v.shape != (n,) or self.f_ext.shape != (n,):
            raise ValueError("u, v, f_ext must have length 3 * n_vertices")
        self.node_mass = lumped_mass(self.rest, self.material.density)
        if np.any(self.node_mass <= 0):
            raise AssemblyError("node without mass (unreferenced vertex)")
        self.mass = np.repeat(self.node_mass, 3)
        self.ke = element_stiffness(self.rest, self.material)
        self.K = _assemble(self.rest.tets, self.ke, n)
        self._factor_cache: dict = {}
        if self.fixed:
            apply_fixed_constraints(self, self.fixed)

    @property
    def n_nodes(self) -> int:
        return self.rest.n_vertices

    @property
    def positions(self) -> np.ndarray:
        return self.rest.vertices + self.u.reshape(-1, 3)

    def fixed_dofs(self) -> np.ndarray:
        idx = np.fromiter(sorted(self.fixed), dtype=np.int64, count=len(self.fixed))
        return (3 * idx[:, None] + np.arange(3)).ravel()

    def copy_state(self) -> tuple[np.ndarray, np.ndarray]:
        return self.u.copy(), self.v.copy()

    def set_state(self, u: np.ndarray, v: np.ndarray) -> None:
        self.u[:] = u
        self.v[:] = v

    def kinetic_energy(self) -> float:
        return 0.5 * float(self.v @ (self.mass * self.v))

    def strain_energy(self) -> float:
        return 0.5 * float(self.u @ (self.K @ self.u))


def total_energy(body: DeformableBody) -> float:
    """``0.5 v^T M v + 0.5 u^T K u`` with the linear stiffness."""
    return body.kinetic_energy() + body.strain_energy()


def apply_fixed_constraints(body: DeformableBody, indices) -> None:
    idx = {int(i) for i in indices}
    bad = [i for i in idx if i < 0 or i >= body.n_nodes]
    if bad:
        raise ValueError(f"fixed node index {bad[0]} out of range [0, {body.n_nodes})")
    body.fixed = frozenset(body.fixed | idx)
    dofs = body.fixed_dofs()
    body.u[dofs] = 0.0
    body.v[dofs] = 0.0
    body._factor_cache.clear()


def _rotated_stiffness(body: DeformableBody, rot: np.ndarray) -> sp.csr_matrix:
    n = 3 * body.n_nodes
    rb = np.zeros((len(rot), 12, 12))
    for a in range(4):
        rb[:, 3 * a:3 * a + 3, 3 * a:3 * a + 3] = rot
    blocks = rb @ body.ke @ rb.transpose(0, 2, 1)
    return _assemble(body.rest.tets, blocks, n)


def internal_forces(body: DeformableBody, K: sp.spmatrix | None = None, corotational: bool | None = None) -> np.ndarray:
    """Elastic force vector ``K u`` (sign: restoring force is its negative).

    In co-rotational mode each element's linear response is evaluated in the frame
    rotated by the polar rotation of its deformation gradient.
    """
    corot = body.corotational if corotational is None else corotational
    if not corot:
        K = body.K if K is None else K
        return K @ body.u
    x = body.positions
    rest = body.rest.vertices
    tets = body.rest.tets
    rot = polar_rotations(rest, x, tets)
    xe = x[tets]                                            # (m, 4, 3)
    local = np.einsum("mji,maj->mai", rot, xe) - rest[tets]  # R^T x - X
    fe = np.einsum("mij,mj->mi", body.ke, local.reshape(len(tets), 12)).reshape(-1, 4, 3)
    fe = np.einsum("mij,maj->mai", rot, fe)
    f = np.zeros((body.n_nodes, 3))
    np.add.at(f, tets.ravel(), fe.reshape(-1, 3))
    return f.ravel()


def linear_solve_cg(A, b: np.ndarray, tol: float = 1e-10, max_iter: int | None = None,
                    x0: np.ndarray | None = None, precondition: bool = True) -> np.ndarray:
    """Conjugate gradients for SPD ``A``; returns x with ``||Ax - b|| <= tol ||b||``.

    Jacobi preconditioning is used when ``A`` exposes a diagonal.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    max_iter = 10 * n if max_iter is None else max_iter
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    if precondition and hasattr(A, "diagonal"):
        d = np.asarray(A.diagonal(), dtype=float)
        inv_d = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
    else:
        inv_d = np.ones(n)
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    for it in range(max_iter):
        if res <= tol:
            return x
        ap = A @ p
        pap = p @ ap
        if pap <= 0:
            raise SolverError("matrix is not positive definite", res, it)
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        res = np.linalg.norm(r) / bnorm
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if res <= tol:
        return x
    raise SolverError("conjugate gradients hit the iteration cap", res, max_iter)


def _project_fixed(A: sp.csr_matrix, dofs: np.ndarray) -> sp.csr_matrix:
    if dofs.size == 0:
        return A
    n = A.shape[0]
    keep = np.ones(n)
    keep[dofs] = 0.0
    P = sp.diags(keep)
    ident = sp.diags(1.0 - keep)
    out = (P @ A @ P + ident).tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def implicit_velocity(body: DeformableBody, h: float, extra_forces: np.ndarray | None = None,
                      solver: str = "cg", tol: float = 1e-10, max_iter: int | None = None) -> np.ndarray:
    """End-of-step velocity of one backward-Euler step, without touching the body.

    Solves ``(M + hC + h^2 K) dv = h (F - f_int(u) - C v - h K v)`` with ``C = aM + bK``.
    Fixed dofs get identity rows and zero right-hand side. ``solver`` is ``"cg"`` or
    ``"direct"`` (cached sparse LU, linear mode only).
    """
    if not h > 0:
        raise ValueError("time step must be positive")
    alpha = body.material.rayleigh_mass
    beta = body.material.rayleigh_stiffness
    force = body.f_ext if extra_forces is None else body.f_ext + extra_forces
    m = body.mass
    dofs = body.fixed_dofs()
    if body.corotational:
        rot = polar_rotations(body.rest.vertices, body.positions, body.rest.tets)
        K = _rotated_stiffness(body, rot)
        f_int = internal_forces(body, corotational=True)
    else:
        K = body.K
        f_int = None
    if f_int is None:
        rhs = h * (force - alpha * m * body.v - K @ (body.u + (beta + h) * body.v))
    else:
        rhs = h * (force - f_int - alpha * m * body.v - K @ ((beta + h) * body.v))
    rhs[dofs] = 0.0
    if not rhs.any():
        return body.v.copy()
    if solver == "direct" and not body.corotational:
        dv = _factor(body, h, K).solve(rhs)
    elif solver in ("cg", "direct"):
        A = _project_fixed(_system_matrix(m, K, h, alpha, beta), dofs)
        dv = linear_solve_cg(A, rhs, tol=tol, max_iter=max_iter)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    dv[dofs] = 0.0
    return body.v + dv


def _factor(body: DeformableBody, h: float, K=None):
    key = ("lu", float(h))
    lu = body._factor_cache.get(key)
    if lu is None:
        K = body.K if K is None else K
        A = _project_fixed(_system_matrix(body.mass, K, h, body.material.rayleigh_mass,
                                          body.material.rayleigh_stiffness), body.fixed_dofs())
        lu = spla.splu(A.tocsc())
        body._factor_cache[key] = lu
    return lu


def step_response(body: DeformableBody, h: float, dofs: np.ndarray) -> np.ndarray:
    """Columns of the inverse step matrix ``(M + hC + h^2 K)^-1`` for ``dofs``, shape (3N, len(dofs)).

    This is the velocity change per unit impulse within one step; rows and columns of
    fixed dofs are zero. Uses the rest-state linear operator.
    """
    dofs = np.asarray(dofs, dtype=np.int64)
    rhs = np.zeros((3 * body.n_nodes, len(dofs)))
    rhs[dofs, np.arange(len(dofs))] = 1.0
    fixed = body.fixed_dofs()
    rhs[fixed] = 0.0
    if not len(dofs):
        return rhs
    out = _factor(body, h).solve(rhs)
    out[fixed] = 0.0
    return out


def step_implicit(body: DeformableBody, h: float, extra_forces: np.ndarray | None = None,
                  solver: str = "cg", tol: float = 1e-10, max_iter: int | None = None) -> DeformableBody:
    """One backward-Euler step of ``M a + C v + K u = F``, linearised once; see
    :func:`implicit_velocity`. Then ``u += h v``."""
    v_new = implicit_velocity(body, h, extra_forces, solver=solver, tol=tol, max_iter=max_iter)
    if not v_new.any() and not body.v.any():
        return body  # exact rest: nothing to do
    body.v[:] = v_new
    body.u += h * body.v
    return body


def _system_matrix(m: np.ndarray, K: sp.spmatrix, h: float, alpha: float, beta: float) -> sp.csr_matrix:
    return (sp.diags((1.0 + h * alpha) * m) + (h * beta + h * h) * K).tocsr()
