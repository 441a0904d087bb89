"""Tetrahedral / surface meshes, ASCII v2.2 ``.msh`` I/O and procedural geometry.

Units are millimetres throughout.
"""
from __future__ import annotations

import io
import itertools
from dataclasses import dataclass
from typing import TextIO

import numpy as np

__all__ = [
    "MeshError",
    "MeshParseError",
    "TetMesh",
    "SurfaceMesh",
    "CavitySpec",
    "signed_volumes",
    "load_msh",
    "read_msh",
    "dump_msh",
    "write_msh",
    "dump_debug",
    "generate_cavity",
    "generate_beam",
    "surface_of",
    "TAG_INNER",
    "TAG_OUTER",
]

TAG_INNER = 1
TAG_OUTER = 2

# Kuhn split of a hexahedron: walk from corner 000 to 111 along each axis permutation.
_KUHN_PERMS = list(itertools.permutations(range(3)))


class MeshError(ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def signed_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Signed volume of every tet, positive for right-handed (a, b, c, d) ordering."""
    v = np.asarray(vertices, dtype=float)
    t = np.asarray(tets, dtype=np.int64)
    if t.size == 0:
        return np.zeros(0)
    a = v[t[:, 0]]
    e1 = v[t[:, 1]] - a
    e2 = v[t[:, 2]] - a
    e3 = v[t[:, 3]] - a
    return np.einsum("ij,ij->i", e1, np.cross(e2, e3)) / 6.0


@dataclass(eq=False)
class TetMesh:
    vertices: np.ndarray
    tets: np.ndarray
    tags: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 3)
        self.tets = np.ascontiguousarray(self.tets, dtype=np.int64).reshape(-1, 4)
        if self.tags is not None:
            self.tags = np.ascontiguousarray(self.tags, dtype=np.int64).reshape(-1)
            if len(self.tags) != len(self.vertices):
                raise MeshError("tags must have one entry per vertex")
        self.validate()

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def validate(self) -> None:
        if self.tets.size and (self.tets.min() < 0 or self.tets.max() >= self.n_vertices):
            raise IndexError("tet references a vertex index outside [0, n_vertices)")
        vol = self.volumes()
        bad = np.flatnonzero(vol <= 0.0)
        if bad.size:
            raise MeshError(f"tet {int(bad[0])} has non-positive signed volume {vol[bad[0]]:.3e}")
        keys = np.sort(self.tets, axis=1)
        if len(np.unique(keys, axis=0)) != len(keys):
            raise MeshError("duplicate tets")

    def volumes(self) -> np.ndarray:
        return signed_volumes(self.vertices, self.tets)

    def total_volume(self) -> float:
        return float(self.volumes().sum())

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def equals(self, other: "TetMesh") -> bool:
        same_tags = (self.tags is None and other.tags is None) or (
            self.tags is not None and other.tags is not None and np.array_equal(self.tags, other.tags)
        )
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.tets, other.tets)
            and same_tags
        )


@dataclass(eq=False)
class SurfaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray
    owner: np.ndarray | None = None  # owning tet per triangle, when extracted from a TetMesh

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise IndexError("triangle references a vertex index out of range")
        if len(self.normals) != len(self.triangles):
            raise MeshError("one normal per triangle required")

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def with_vertices(self, vertices: np.ndarray) -> "SurfaceMesh":
        """Same connectivity on moved vertices, normals recomputed with the same winding."""
        return SurfaceMesh(vertices, self.triangles, triangle_normals(vertices, self.triangles), self.owner)

    def subset(self, mask: np.ndarray) -> "SurfaceMesh":
        mask = np.asarray(mask, dtype=bool)
        owner = None if self.owner is None else self.owner[mask]
        return SurfaceMesh(self.vertices, self.triangles[mask], self.normals[mask], owner)

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def euler_characteristic(self) -> int:
        tri = self.triangles
        n_v = len(np.unique(tri))
        edges = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
        n_e = len(np.unique(edges, axis=0))
        return n_v - n_e + len(tri)


def triangle_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    v = vertices[triangles]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    return n / np.linalg.norm(n, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# .msh (ASCII 2.2) I/O
# ---------------------------------------------------------------------------

# element types that carry no volume and are skipped: lines, triangles, quads, points
_IGNORED_ELEMENT_TYPES = {1, 2, 3, 15}
_TET4 = 4


class _Lines:
    def __init__(self, text: str):
        self._lines = text.splitlines()
        self.pos = 0

    def next(self) -> tuple[int, str]:
        while self.pos < len(self._lines):
            self.pos += 1
            line = self._lines[self.pos - 1].strip()
            if line:
                return self.pos, line
        raise MeshParseError("unexpected end of file", self.pos)


def load_msh(text: str | TextIO) -> TetMesh:
    """Parse an ASCII v2.2 mesh containing 4-node tetrahedra.

    Lower-dimensional elements (points, lines, triangles, quads) are skipped;
    any other element type is rejected. Negatively oriented tets are re-wound.
    """
    if not isinstance(text, str):
        text = text.read()
    src = _Lines(text)
    nodes: np.ndarray | None = None
    node_index: dict[int, int] = {}
    tets: list[list[int]] = []
    seen_format = False
    while True:
        try:
            lineno, line = src.next()
        except MeshParseError:
            break
        if line == "$MeshFormat":
            lineno, line = src.next()
            parts = line.split()
            if len(parts) != 3 or parts[0] not in ("2.2", "2.2.0", "2"):
                raise MeshParseError(f"unsupported mesh format {line!r} (ASCII 2.2 required)", lineno)
            if parts[1] != "0":
                raise MeshParseError("binary mesh files are not supported", lineno)
            _expect(src, "$EndMeshFormat")
            seen_format = True
        elif line == "$Nodes":
            lineno, line = src.next()
            count = _parse_int(line, lineno)
            rows = []
            for _ in range(count):
                lineno, line = src.next()
                if line.startswith("$"):
                    raise MeshParseError(f"$Nodes declares {count} nodes but section ended early", lineno)
                parts = line.split()
                if len(parts) != 4:
                    raise MeshParseError(f"node row must have 4 fields, got {len(parts)}", lineno)
                nid = _parse_int(parts[0], lineno)
                if nid in node_index:
                    raise MeshParseError(f"duplicate node id {nid}", lineno)
                node_index[nid] = len(rows)
                try:
                    rows.append([float(p) for p in parts[1:]])
                except ValueError:
                    raise MeshParseError(f"bad coordinate in {line!r}", lineno) from None
            lineno, line = src.next()
            if line != "$EndNodes":
                raise MeshParseError(f"$Nodes declares {count} nodes but more rows follow", lineno)
            nodes = np.array(rows, dtype=float).reshape(-1, 3)
        elif line == "$Elements":
            if nodes is None:
                raise MeshParseError("$Elements before $Nodes", lineno)
            lineno, line = src.next()
            count = _parse_int(line, lineno)
            for _ in range(count):
                lineno, line = src.next()
                if line.startswith("$"):
                    raise MeshParseError(f"$Elements declares {count} elements but section ended early", lineno)
                parts = [_parse_int(p, lineno) for p in line.split()]
                if len(parts) < 3:
                    raise MeshParseError("element row too short", lineno)
                etype, ntags = parts[1], parts[2]
                conn = parts[3 + ntags:]
                if etype in _IGNORED_ELEMENT_TYPES:
                    continue
                if etype != _TET4:
                    raise MeshParseError(f"unsupported element type {etype} (only 4-node tets)", lineno)
                if len(conn) != 4:
                    raise MeshParseError(f"tet element needs 4 nodes, got {len(conn)}", lineno)
                try:
                    tets.append([node_index[n] for n in conn])
                except KeyError as exc:
                    raise IndexError(f"line {lineno}: tet references unknown node {exc.args[0]}") from None
            _expect(src, "$EndElements")
        elif line.startswith("$"):
            # skip unknown sections such as $PhysicalNames
            name = line[1:]
            while True:
                lineno, line = src.next()
                if line == f"$End{name}":
                    break
        else:
            raise MeshParseError(f"expected a section header, got {line!r}", lineno)
    if not seen_format:
        raise MeshParseError("missing $MeshFormat section", 1)
    if nodes is None:
        raise MeshParseError("missing $Nodes section")
    tet_arr = np.array(tets, dtype=np.int64).reshape(-1, 4)
    return TetMesh(nodes, _orient_positive(nodes, tet_arr))


def read_msh(path) -> TetMesh:
    with open(path, "r", encoding="ascii") as fh:
        return load_msh(fh.read())


def _expect(src: _Lines, token: str) -> None:
    lineno, line = src.next()
    if line != token:
        raise MeshParseError(f"expected {token}, got {line!r}", lineno)


def _parse_int(s: str, lineno: int) -> int:
    try:
        return int(s)
    except ValueError:
        raise MeshParseError(f"expected an integer, got {s!r}", lineno) from None


def dump_msh(mesh: TetMesh) -> str:
    """Serialize to ASCII 2.2 with round-trip float precision. Vertex tags are not written."""
    out = io.StringIO()
    out.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
    out.write(f"$Nodes\n{mesh.n_vertices}\n")
    for i, (x, y, z) in enumerate(mesh.vertices.tolist(), start=1):
        out.write(f"{i} {x!r} {y!r} {z!r}\n")
    out.write("$EndNodes\n")
    out.write(f"$Elements\n{mesh.n_tets}\n")
    for i, (a, b, c, d) in enumerate(mesh.tets.tolist(), start=1):
        out.write(f"{i} 4 2 0 1 {a + 1} {b + 1} {c + 1} {d + 1}\n")
    out.write("$EndElements\n")
    return out.getvalue()


def write_msh(mesh: TetMesh, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dump_msh(mesh))


def dump_debug(mesh: TetMesh) -> str:
    """Line-oriented dump: ``v x y z [tag]`` per vertex then ``t a b c d`` per tet."""
    lines = []
    for i, p in enumerate(mesh.vertices.tolist()):
        tag = "" if mesh.tags is None else f" {int(mesh.tags[i])}"
        lines.append(f"v {p[0]!r} {p[1]!r} {p[2]!r}{tag}")
    lines.extend(f"t {a} {b} {c} {d}" for a, b, c, d in mesh.tets.tolist())
    return "\n".join(lines) + "\n"


def _orient_positive(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    tets = tets.copy()
    vol = signed_volumes(vertices, tets)
    flip = vol < 0
    tets[flip, 2], tets[flip, 3] = tets[flip, 3].copy(), tets[flip, 2].copy()
    return tets


# ---------------------------------------------------------------------------
# procedural geometry
# ---------------------------------------------------------------------------

def _hex_to_tets(corner: np.ndarray) -> np.ndarray:
    """Kuhn split. ``corner`` has shape (m, 2, 2, 2) of vertex ids; returns (6m, 4)."""
    out = []
    for perm in _KUHN_PERMS:
        idx = [0, 0, 0]
        path = [tuple(idx)]
        for ax in perm:
            idx[ax] = 1
            path.append(tuple(idx))
        out.append(np.stack([corner[:, a, b, c] for a, b, c in path], axis=1))
    return np.concatenate(out, axis=0)


def generate_beam(nx: int, ny: int, nz: int, cell: float) -> TetMesh:
    """Box of ``nx*ny*nz`` cubes of edge ``cell`` starting at the origin, 6 tets per cube."""
    if min(nx, ny, nz) < 1:
        raise ValueError("cell counts must be >= 1")
    if not cell > 0:
        raise ValueError("cell size must be positive")
    gi, gj, gk = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1), indexing="ij")
    vertices = np.stack([gi, gj, gk], axis=-1).reshape(-1, 3) * float(cell)
    vid = np.arange(vertices.shape[0]).reshape(nx + 1, ny + 1, nz + 1)
    ci, cj, ck = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    ci, cj, ck = ci.ravel(), cj.ravel(), ck.ravel()
    corner = np.empty((ci.size, 2, 2, 2), dtype=np.int64)
    for a, b, c in itertools.product((0, 1), repeat=3):
        corner[:, a, b, c] = vid[ci + a, cj + b, ck + c]
    tets = _orient_positive(vertices, _hex_to_tets(corner))
    return TetMesh(vertices, tets)


@dataclass(frozen=True)
class CavitySpec:
    """Ellipsoidal shell with an optional opening around the +x pole.

    ``resolution`` is the number of polar ring intervals; azimuthal count is twice that.
    ``jitter`` displaces surface samples within the ellipsoid parametrisation by up to that
    fraction of the local spacing (seeded).
    """

    radii: tuple[float, float, float] = (40.0, 30.0, 30.0)
    thickness: float = 5.0
    resolution: int = 8
    aperture_deg: float = 0.0
    layers: int = 1
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    jitter: float = 0.15

    def inner_radii(self) -> np.ndarray:
        return np.asarray(self.radii, dtype=float) - self.thickness

    def analytic_volume(self) -> float:
        a, b, c = self.radii
        ai, bi, ci = self.inner_radii()
        return 4.0 / 3.0 * np.pi * (a * b * c - ai * bi * ci)


def generate_cavity(spec: CavitySpec, seed: int = 0) -> TetMesh:
    """Hollow ellipsoidal shell; vertices of the innermost layer are tagged ``TAG_INNER``."""
    radii = np.asarray(spec.radii, dtype=float)
    if radii.shape != (3,) or np.any(radii <= 0):
        raise ValueError(f"cavity radii must be three positive numbers, got {spec.radii}")
    if not spec.thickness > 0 or spec.thickness >= radii.min():
        raise ValueError("wall thickness must be in (0, min radius)")
    if spec.resolution < 4:
        raise ValueError("resolution must be >= 4")
    if spec.layers < 1:
        raise ValueError("layers must be >= 1")
    if not 0.0 <= spec.aperture_deg < 90.0:
        raise ValueError("aperture angle must be in [0, 90) degrees")
    if not 0.0 <= spec.jitter < 0.4:
        raise ValueError("jitter must be in [0, 0.4)")

    rng = np.random.default_rng(seed)
    n_pol = int(spec.resolution)
    n_az = 2 * n_pol
    theta0 = np.deg2rad(spec.aperture_deg)
    closed_top = theta0 == 0.0
    thetas = theta0 + (np.pi - theta0) * np.arange(n_pol + 1) / n_pol
    # ring indices holding full azimuthal rings (poles collapse to a point)
    ring_ids = list(range(1 if closed_top else 0, n_pol))
    n_rings = len(ring_ids)
    d_theta = (np.pi - theta0) / n_pol
    d_phi = 2 * np.pi / n_az

    # one jitter field shared by all layers so radial lines stay straight
    th = np.repeat(thetas[ring_ids][:, None], n_az, axis=1)
    ph = np.repeat((np.arange(n_az) * d_phi)[None, :], n_rings, axis=0)
    if spec.jitter > 0:
        jt = rng.uniform(-spec.jitter, spec.jitter, size=th.shape) * d_theta
        if not closed_top:
            jt[0] = 0.0  # keep the aperture rim planar
        th = th + jt
        ph = ph + rng.uniform(-spec.jitter, spec.jitter, size=ph.shape) * d_phi

    center = np.asarray(spec.center, dtype=float)
    n_layers = spec.layers + 1
    layer_radii = [radii - spec.thickness * (1.0 - k / spec.layers) for k in range(n_layers)]

    vertices = []
    tags = []
    ring_vid = np.empty((n_layers, n_rings, n_az), dtype=np.int64)
    bottom_pole = np.empty(n_layers, dtype=np.int64)
    top_pole = np.empty(n_layers, dtype=np.int64)
    count = 0
    for k, (a, b, c) in enumerate(layer_radii):
        tag = TAG_INNER if k == 0 else (TAG_OUTER if k == n_layers - 1 else 0)
        pts = np.stack([a * np.cos(th), b * np.sin(th) * np.cos(ph), c * np.sin(th) * np.sin(ph)], axis=-1)
        ring_vid[k] = count + np.arange(n_rings * n_az).reshape(n_rings, n_az)
        vertices.append(pts.reshape(-1, 3))
        count += n_rings * n_az
        vertices.append(np.array([[-a, 0.0, 0.0]]))
        bottom_pole[k] = count
        count += 1
        tags.extend([tag] * (n_rings * n_az + 1))
        if closed_top:
            vertices.append(np.array([[a, 0.0, 0.0]]))
            top_pole[k] = count
            count += 1
            tags.append(tag)
    vertices = np.concatenate(vertices, axis=0) + center

    tets = []
    # hexahedral cells between consecutive full rings
    for k in range(spec.layers):
        for r in range(n_rings - 1):
            j = np.arange(n_az)
            jn = (j + 1) % n_az
            corner = np.empty((n_az, 2, 2, 2), dtype=np.int64)
            for a_ in (0, 1):
                for b_, jj in ((0, j), (1, jn)):
                    for c_ in (0, 1):
                        corner[:, a_, b_, c_] = ring_vid[k + c_, r + a_, jj]
            tets.append(_hex_to_tets(corner))
        # prisms fanning from each pole to its adjacent ring
        poles = [(bottom_pole, n_rings - 1)]
        if closed_top:
            poles.append((top_pole, 0))
        for pole, r in poles:
            j = np.arange(n_az)
            jn = (j + 1) % n_az
            a_in = np.full(n_az, pole[k])
            a_out = np.full(n_az, pole[k + 1])
            b_in, b_out = ring_vid[k, r, j], ring_vid[k + 1, r, j]
            c_in, c_out = ring_vid[k, r, jn], ring_vid[k + 1, r, jn]
            tets.append(np.stack([a_in, b_in, c_in, c_out], axis=1))
            tets.append(np.stack([a_in, b_in, b_out, c_out], axis=1))
            tets.append(np.stack([a_in, a_out, b_out, c_out], axis=1))
    tets = _orient_positive(vertices, np.concatenate(tets, axis=0))
    return TetMesh(vertices, tets, np.asarray(tags, dtype=np.int64))


# faces of a tet (a,b,c,d) paired with the opposite vertex
_TET_FACES = np.array([[1, 2, 3, 0], [0, 3, 2, 1], [0, 1, 3, 2], [0, 2, 1, 3]])


def surface_of(mesh: TetMesh) -> SurfaceMesh:
    """Boundary triangles (faces used by exactly one tet), wound with outward normals."""
    t = mesh.tets
    faces = t[:, _TET_FACES[:, :3]].reshape(-1, 3)
    opposite = t[:, _TET_FACES[:, 3]].reshape(-1)
    owner = np.repeat(np.arange(mesh.n_tets), 4)
    keys = np.sort(faces, axis=1)
    _, first, inverse, counts = np.unique(keys, axis=0, return_index=True, return_inverse=True, return_counts=True)
    boundary = np.sort(first[counts == 1])
    tri = faces[boundary].copy()
    opp = opposite[boundary]
    v = mesh.vertices
    n = np.cross(v[tri[:, 1]] - v[tri[:, 0]], v[tri[:, 2]] - v[tri[:, 0]])
    inward = np.einsum("ij,ij->i", n, v[opp] - v[tri[:, 0]]) > 0
    tri[inward, 1], tri[inward, 2] = tri[inward, 2].copy(), tri[inward, 1].copy()
    return SurfaceMesh(v, tri, triangle_normals(v, tri), owner[boundary])


def inner_surface(mesh: TetMesh, surface: SurfaceMesh | None = None) -> SurfaceMesh:
    """Boundary triangles whose three vertices all carry ``TAG_INNER``."""
    if mesh.tags is None:
        raise MeshError("mesh carries no vertex tags")
    surface = surface_of(mesh) if surface is None else surface
    mask = np.all(mesh.tags[surface.triangles] == TAG_INNER, axis=1)
    return surface.subset(mask)


def unit_cube_five_tets() -> TetMesh:
    """The classic 5-tet split of the unit cube (one central tet plus four corners)."""
    v = np.array(list(itertools.product((0.0, 1.0), repeat=3)))
    # index = 4x + 2y + z
    tets = np.array([[0, 4, 2, 1], [6, 2, 4, 7], [5, 1, 7, 4], [3, 1, 2, 7], [1, 2, 4, 7]])
    return TetMesh(v, _orient_positive(v, tets))

