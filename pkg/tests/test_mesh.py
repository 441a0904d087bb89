import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from endonav.mesh import (CavitySpec, MeshError, MeshParseError, TAG_INNER, TetMesh, dump_debug, dump_msh,
                          generate_beam, generate_cavity, load_msh, read_msh, signed_volumes, surface_of,
                          unit_cube_five_tets)

DATA = __import__("pathlib").Path(__file__).parent / "data"

ONE_TET = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$EndNodes
$Elements
1
1 4 2 0 1 1 2 3 4
$EndElements
"""


def _brute_volume(v, tets):
    # independent oracle: |det| / 6 per tet from explicit 3x3 determinants
    total = 0.0
    for t in tets:
        m = np.array([v[t[1]] - v[t[0]], v[t[2]] - v[t[0]], v[t[3]] - v[t[0]]])
        total += abs(np.linalg.det(m)) / 6.0
    return total


def _brute_boundary_faces(tets):
    count = {}
    for t in tets:
        for f in itertools.combinations(sorted(t), 3):
            count[f] = count.get(f, 0) + 1
    return {f for f, c in count.items() if c == 1}


def test_minimal_file():
    m = load_msh(ONE_TET)
    assert m.n_vertices == 4 and m.n_tets == 1
    assert m.total_volume() == pytest.approx(1 / 6, abs=1e-15)


def test_node_count_mismatch_is_parse_error():
    bad = ONE_TET.replace("$Nodes\n4", "$Nodes\n5")
    with pytest.raises(MeshParseError) as exc:
        load_msh(bad)
    assert exc.value.line is not None
    fewer = ONE_TET.replace("$Nodes\n4", "$Nodes\n3")
    with pytest.raises(MeshParseError):
        load_msh(fewer)


def test_bad_header_reports_line():
    with pytest.raises(MeshParseError, match="line 2"):
        load_msh("$MeshFormat\n4.1 0 8\n$EndMeshFormat\n")


def test_unknown_node_is_index_error():
    with pytest.raises(IndexError):
        load_msh(ONE_TET.replace("1 4 2 0 1 1 2 3 4", "1 4 2 0 1 1 2 3 9"))


def test_unsupported_element_rejected():
    with pytest.raises(MeshParseError, match="unsupported element"):
        load_msh(ONE_TET.replace("1 4 2 0 1 1 2 3 4", "1 5 2 0 1 1 2 3 4"))


def test_unit_cube_fixture():
    m = read_msh(DATA / "unit_cube_5tets.msh")
    assert (m.n_vertices, m.n_tets) == (8, 5)       # point and triangle elements skipped
    assert abs(m.total_volume() - 1.0) < 1e-9
    assert abs(_brute_volume(m.vertices, m.tets) - 1.0) < 1e-9
    assert np.all(m.volumes() > 0)


def test_roundtrip_and_debug_dump():
    m = generate_cavity(CavitySpec(resolution=5), seed=3)
    back = load_msh(dump_msh(m))
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.tets, m.tets)
    lines = dump_debug(m).splitlines()
    assert len(lines) == m.n_vertices + m.n_tets
    assert lines[0].startswith("v ") and lines[-1].startswith("t ")
    assert load_msh(io.StringIO(dump_msh(m))).equals(back)


def test_mesh_invariants_enforced():
    v = np.eye(4)[:, :3]
    with pytest.raises(IndexError):
        TetMesh(v, [[0, 1, 2, 7]])
    with pytest.raises(MeshError, match="signed volume"):
        TetMesh(v, [[0, 1, 3, 2]] if signed_volumes(v, [[0, 1, 2, 3]])[0] > 0 else [[0, 1, 2, 3]])
    with pytest.raises(MeshError, match="duplicate"):
        good = [0, 1, 2, 3] if signed_volumes(v, [[0, 1, 2, 3]])[0] > 0 else [0, 1, 3, 2]
        TetMesh(v, [good, good])


def test_cavity_deterministic():
    spec = CavitySpec(radii=(40, 30, 30), thickness=5, resolution=8)
    a, b = generate_cavity(spec, seed=7), generate_cavity(spec, seed=7)
    assert a.equals(b)
    assert not a.equals(generate_cavity(spec, seed=8))


def test_cavity_parameter_errors():
    with pytest.raises(ValueError):
        generate_cavity(CavitySpec(radii=(40, 30, 30), thickness=30))
    with pytest.raises(ValueError):
        generate_cavity(CavitySpec(radii=(40, -1, 30)))
    with pytest.raises(ValueError):
        generate_cavity(CavitySpec(resolution=3))


def test_cavity_volume_vs_ellipsoid_shell():
    spec = CavitySpec(radii=(40, 30, 30), thickness=5, resolution=8)
    m = generate_cavity(spec, seed=7)
    assert m.total_volume() == pytest.approx(spec.analytic_volume(), rel=0.10)
    assert np.all(m.volumes() > 0)


@pytest.mark.parametrize("res", [4, 6, 9])
def test_closed_cavity_surface_is_two_spheres(res):
    m = generate_cavity(CavitySpec(resolution=res, aperture_deg=0.0), seed=1)
    s = surface_of(m)
    inner = np.all(m.tags[s.triangles] == TAG_INNER, axis=1)
    # inner and outer skins are separate closed components
    assert s.subset(inner).euler_characteristic() == 2
    assert s.subset(~inner).euler_characteristic() == 2


def test_beam_counts_and_volume():
    assert generate_beam(1, 1, 1, 1.0).n_vertices == 8
    b = generate_beam(10, 1, 1, 1.0)
    assert b.n_vertices == 44
    assert abs(b.total_volume() - 10.0) < 1e-9
    assert abs(generate_beam(2, 2, 2, 0.5).total_volume() - 1.0) < 1e-9
    with pytest.raises(ValueError):
        generate_beam(0, 1, 1, 1.0)
    with pytest.raises(ValueError):
        generate_beam(1, 1, 1, 0.0)


def test_surface_single_tet_and_cube():
    s = surface_of(load_msh(ONE_TET))
    assert s.n_triangles == 4
    cube = unit_cube_five_tets()
    s = surface_of(cube)
    assert s.n_triangles == 12 == len(_brute_boundary_faces(cube.tets))
    assert {tuple(sorted(t)) for t in s.triangles.tolist()} == _brute_boundary_faces(cube.tets)


def test_surface_normals_point_out_of_owner():
    m = generate_cavity(CavitySpec(resolution=5, aperture_deg=30.0), seed=2)
    s = surface_of(m)
    tet_c = m.vertices[m.tets[s.owner]].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", s.normals, s.centroids() - tet_c) > 0)
    assert np.allclose(np.linalg.norm(s.normals, axis=1), 1.0, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_volume_invariant_under_vertex_permutation(seed):
    m = generate_beam(2, 2, 1, 1.5)
    perm = np.random.default_rng(seed).permutation(m.n_vertices)
    inv = np.argsort(perm)
    moved = TetMesh(m.vertices[perm], inv[m.tets])
    assert moved.total_volume() == pytest.approx(m.total_volume(), rel=1e-12)
