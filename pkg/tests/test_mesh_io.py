import numpy as np
import pytest

from fishbone import shapes
from fishbone.errors import EmptyGeometryError, MeshFormatError
from fishbone.mesh_io import (
    CleanPart,
    RawMesh,
    clean_and_normalize,
    classify_thin_shell,
    contract_to_twin,
    expand_from_twin,
    is_watertight,
    load_mesh,
    make_welded_twin,
    save_obj,
    unique_edges,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadObj:
    def test_single_triangle(self, tmp_path):
        p = write(tmp_path, "tri.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        raw = load_mesh(p)
        assert raw.vertices.shape == (3, 3)
        assert raw.faces.shape == (1, 3)

    def test_quad_fan_triangulation(self, tmp_path):
        p = write(tmp_path, "quad.obj",
                  "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        raw = load_mesh(p)
        assert raw.faces.shape == (2, 3)
        # both triangles share the fan diagonal (vertices 0 and 2)
        shared = set(raw.faces[0]) & set(raw.faces[1])
        assert shared == {0, 2}

    def test_two_objects_become_part_labels(self, tmp_path):
        p = write(tmp_path, "two.obj",
                  "o a\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"
                  "o b\nv 0 0 1\nv 1 0 1\nv 0 1 1\nf 4 5 6\n")
        raw = load_mesh(p)
        assert raw.part_labels is not None
        assert set(raw.part_labels.tolist()) == {0, 1}

    def test_slash_indices_and_negative(self, tmp_path):
        p = write(tmp_path, "s.obj",
                  "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 -1/3/3\n")
        raw = load_mesh(p)
        assert raw.faces[0].tolist() == [0, 1, 2]

    def test_parse_error_reports_line(self, tmp_path):
        p = write(tmp_path, "bad.obj", "v 0 0 0\nv 1 0\nf 1 2 3\n")
        with pytest.raises(MeshFormatError) as exc:
            load_mesh(p)
        assert exc.value.line == 2

    def test_degenerate_face_rejected(self, tmp_path):
        p = write(tmp_path, "deg.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\nf 1 2 3\n")
        raw = load_mesh(p)
        assert len(raw.faces) == 1
        assert len(raw.rejected_faces) == 1

    def test_out_of_range_index(self, tmp_path):
        p = write(tmp_path, "oob.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
        with pytest.raises(MeshFormatError):
            load_mesh(p)


class TestMeshJson:
    def test_roundtrip_fields(self, tmp_path):
        p = write(tmp_path, "m.json",
                  '{"vertices": [[0,0,0],[1,0,0],[0,1,0],[0,0,1],[1,0,1],[0,1,1]],'
                  ' "faces": [[0,1,2],[3,4,5]], "parts": [0, 1]}')
        raw = load_mesh(p)
        assert raw.vertices.shape == (6, 3)
        assert raw.part_labels.tolist() == [0, 1]

    def test_invalid_json(self, tmp_path):
        p = write(tmp_path, "bad.json", '{"vertices": [[0,0')
        with pytest.raises(MeshFormatError):
            load_mesh(p)


class TestCleanAndNormalize:
    def test_nan_purge(self):
        v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [np.nan, 0, 0], [2, 0, 0]])
        f = np.array([[0, 1, 2], [1, 3, 2], [3, 4, 2]])
        ps = clean_and_normalize(RawMesh(v, f))
        # both faces touching the NaN vertex removed, one survives
        assert sum(len(p.faces) for p in ps.parts) == 1

    def test_merge_within_tolerance(self):
        # two coincident vertices 1e-9 apart (normalized units ~ same scale)
        v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1e-9, 0, 0], [0, 0, 1]])
        f = np.array([[0, 1, 2], [3, 2, 4]])
        ps = clean_and_normalize(RawMesh(v, f))
        n_total = sum(len(p.vertices) for p in ps.parts)
        assert n_total == 4

    def test_unit_bbox_normalization(self):
        v, f = shapes.box(extents=(2, 2, 2), center=(5, 0, 0))
        ps = clean_and_normalize(RawMesh(v, f))
        allv = np.vstack([p.vertices for p in ps.parts])
        lo, hi = allv.min(axis=0), allv.max(axis=0)
        assert abs((hi - lo).max() - 1.0) < 1e-9
        assert np.abs(0.5 * (lo + hi)).max() < 1e-9

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        v, f = shapes.icosphere(1)
        v = v * 3.7 + rng.normal(0, 0.01, v.shape)
        ps1 = clean_and_normalize(RawMesh(v, f))
        part = ps1.parts[0]
        ps2 = clean_and_normalize(RawMesh(part.vertices, part.faces))
        assert np.abs(ps2.parts[0].vertices - part.vertices).max() <= 1e-12

    def test_empty_after_cleaning(self):
        v = np.array([[np.nan, 0, 0], [1, 0, 0], [0, 1, 0]])
        f = np.array([[0, 1, 2]])
        with pytest.raises(EmptyGeometryError):
            clean_and_normalize(RawMesh(v, f))

    def test_keep_largest_component(self):
        v1, f1 = shapes.icosphere(1)
        v2, f2 = shapes.box(extents=(0.1, 0.1, 0.1), center=(3, 0, 0))
        v = np.vstack([v1, v2])
        f = np.vstack([f1, f2 + len(v1)])
        ps = clean_and_normalize(RawMesh(v, f), keep_largest_component=True)
        assert len(ps.parts) == 1
        assert len(ps.parts[0].faces) == len(f1)

    def test_components_become_parts(self):
        v1, f1 = shapes.icosphere(1)
        v2, f2 = shapes.box(center=(3, 0, 0))
        v = np.vstack([v1, v2])
        f = np.vstack([f1, f2 + len(v1)])
        ps = clean_and_normalize(RawMesh(v, f))
        assert len(ps.parts) == 2
        # one shared transform preserves inter-part relationships
        assert all(p.normalization.scale == ps.shared_normalization.scale for p in ps.parts)


class TestThinShell:
    def test_closed_cube_is_solid(self):
        v, f = shapes.box()
        part = clean_and_normalize(RawMesh(v, f)).parts[0]
        assert classify_thin_shell(part) is False

    def test_single_quad_sheet(self):
        v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
        f = np.array([[0, 1, 2], [0, 2, 3]])
        part = clean_and_normalize(RawMesh(v, f)).parts[0]
        assert classify_thin_shell(part) is True

    def test_20x20_grid_sheet(self):
        # oracle: enumerate edges ourselves and count single-incidence ones
        v, f = shapes.grid_sheet(20, 20)
        part = clean_and_normalize(RawMesh(v, f)).parts[0]
        edges, counts = unique_edges(part.faces)
        boundary = int((counts == 1).sum())
        assert boundary == 4 * 19  # perimeter segments of a 20x20-vertex grid
        fraction = boundary / len(edges)
        assert fraction > 0.05
        assert classify_thin_shell(part) is True

    def test_scale_invariance(self, grid_part):
        scaled = CleanPart(grid_part.vertices * 123.0, grid_part.faces, 0, False,
                           grid_part.normalization)
        assert classify_thin_shell(scaled) == classify_thin_shell(grid_part)


class TestWeldedTwin:
    def test_watertight_sphere_identity(self):
        v, f = shapes.icosphere(1)
        part = clean_and_normalize(RawMesh(v, f)).parts[0]
        assert is_watertight(part)
        twin = make_welded_twin(part)
        assert len(twin.vertices) == len(part.vertices)
        assert np.array_equal(twin.weld_map, np.arange(len(part.vertices)))

    def _cracked_cube(self):
        v, f = shapes.box()
        part = clean_and_normalize(RawMesh(v, f)).parts[0]
        # crack one edge: duplicate the two vertices of face 0's edge (v0,v1)
        # and re-point that face at the duplicates, slightly offset
        v2 = part.vertices.copy()
        f2 = part.faces.copy()
        a, b = int(f2[0, 0]), int(f2[0, 1])
        off = part.bbox_diagonal * 1e-5
        v2 = np.vstack([v2, v2[a] + off, v2[b] + off])
        f2[0, 0] = len(v2) - 2
        f2[0, 1] = len(v2) - 1
        return CleanPart(v2, f2, 0, False, part.normalization)

    def test_cracked_cube_repaired(self):
        part = self._cracked_cube()
        assert not is_watertight(part)
        twin = make_welded_twin(part)
        assert is_watertight(twin)
        # Euler characteristic of a repaired cube-sphere is 2
        edges, _ = unique_edges(twin.faces)
        euler = len(twin.vertices) - len(edges) + len(twin.faces)
        assert euler == 2

    def test_thin_shell_rejected(self, grid_part):
        sheet = CleanPart(grid_part.vertices, grid_part.faces, 0, True,
                          grid_part.normalization)
        with pytest.raises(ValueError):
            make_welded_twin(sheet)

    def test_small_hole_filled(self):
        v, f = shapes.icosphere(1)
        part = clean_and_normalize(RawMesh(v, f[1:])).parts[0]  # remove one face
        assert not is_watertight(part)
        twin = make_welded_twin(part)
        assert is_watertight(twin)
        assert len(twin.vertices) == len(part.vertices) + 1  # fan centroid added

    def test_large_openings_not_capped(self, grid_part):
        # a solid-classified part with a long boundary loop keeps it open
        v, f = shapes.capped_cylinder(rings=8, segments=40)
        part = clean_and_normalize(RawMesh(v, f[:-40])).parts[0]  # remove the top cap
        part.is_thin_shell = False
        twin = make_welded_twin(part)
        assert twin.watertight_warning  # 40-edge loop exceeds the fill cap
        assert not is_watertight(twin)

    def test_weld_map_left_inverse(self):
        part = self._cracked_cube()
        twin = make_welded_twin(part)
        rng = np.random.default_rng(1)
        twin_vals = rng.normal(size=len(twin.vertices))
        expanded = expand_from_twin(twin_vals, twin.weld_map)
        back = contract_to_twin(expanded, twin.weld_map, len(twin.vertices))
        assert np.array_equal(back[: len(twin_vals)], twin_vals)


def test_save_obj_roundtrip(tmp_path):
    v, f = shapes.box()
    path = tmp_path / "box.obj"
    save_obj(path, [v], [f])
    raw = load_mesh(path)
    assert np.allclose(raw.vertices, v)
    assert np.array_equal(raw.faces, f)
