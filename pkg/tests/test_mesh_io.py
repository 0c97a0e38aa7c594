import numpy as np
import pytest

import posemfa.mesh_io as mio
from posemfa.errors import (
    CorrespondenceError,
    DegenerateExtent,
    IoError,
    ParseError,
    TooFewShapes,
)

TRI = np.array([[0, 1, 2]])


def single_triangle(offset=0.0):
    return mio.Mesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]) + offset, TRI)


def write_tmp(mesh, tmp_path, name):
    p = str(tmp_path / name)
    mio.write_obj(mesh, p)
    return p


class TestLoadSequence:
    def test_two_identical_triangles(self, tmp_path):
        paths = [write_tmp(single_triangle(), tmp_path, f"m{i}.obj") for i in range(2)]
        ts = mio.load_sequence(paths)
        assert ts.n_s == 2 and ts.n_v == 3
        assert np.array_equal(ts.triangles, TRI)

    def test_vertex_count_mismatch(self, tmp_path):
        a = write_tmp(single_triangle(), tmp_path, "a.obj")
        mesh = mio.Mesh(np.vstack([single_triangle().vertices, [[2.0, 2, 2]]]), TRI)
        b = write_tmp(mesh, tmp_path, "b.obj")
        with pytest.raises(CorrespondenceError):
            mio.load_sequence([a, b])

    def test_connectivity_mismatch(self, tmp_path):
        verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
        a = write_tmp(mio.Mesh(verts, np.array([[0, 1, 2]])), tmp_path, "a.obj")
        b = write_tmp(mio.Mesh(verts, np.array([[0, 1, 3]])), tmp_path, "b.obj")
        with pytest.raises(CorrespondenceError):
            mio.load_sequence([a, b])

    def test_too_few_shapes(self, tmp_path):
        a = write_tmp(single_triangle(), tmp_path, "a.obj")
        with pytest.raises(TooFewShapes):
            mio.load_sequence([a])

    def test_malformed_file(self, tmp_path):
        p = tmp_path / "bad.obj"
        p.write_text("v 1 2\nf 1 2 3\n")
        with pytest.raises(ParseError):
            mio.read_obj(str(p))

    def test_face_index_out_of_range(self, tmp_path):
        p = tmp_path / "bad.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
        with pytest.raises(ParseError):
            mio.read_obj(str(p))

    def test_slash_face_indices(self, tmp_path):
        p = tmp_path / "m.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n")
        mesh = mio.read_obj(str(p))
        assert np.array_equal(mesh.triangles, TRI)


class TestNormalizeUnitBox:
    def test_span_minus2_to_2(self):
        verts = np.array([[-2.0, -2, -2], [2, 2, 2], [0, 0, 0]])
        ts = mio.TrainingSet([mio.Mesh(verts, np.array([[0, 1, 2]]))] * 2)
        out = mio.normalize_unit_box(ts)
        assert out.scale_record.scale == pytest.approx(0.25)
        allv = out.vertex_array()
        assert allv.min() == pytest.approx(0.0) and allv.max() == pytest.approx(1.0)

    def test_already_unit_box(self):
        verts = np.array([[0.0, 0, 0], [1, 1, 1], [0.5, 0, 1]])
        ts = mio.TrainingSet([mio.Mesh(verts, np.array([[0, 1, 2]]))] * 2)
        out = mio.normalize_unit_box(ts)
        assert out.scale_record.scale == pytest.approx(1.0)
        np.testing.assert_allclose(out.shapes[0].vertices, verts)

    def test_degenerate_extent(self):
        verts = np.full((3, 3), 0.5)
        ts = mio.TrainingSet([mio.Mesh(verts, np.empty((0, 3), dtype=int))] * 2)
        with pytest.raises(DegenerateExtent):
            mio.normalize_unit_box(ts)

    def test_joint_box_preserves_inter_shape_offsets(self):
        a = single_triangle()
        b = single_triangle(offset=1.0)
        out = mio.normalize_unit_box(mio.TrainingSet([a, b]))
        # both shapes scaled by the same factor: relative offset preserved
        diff = out.shapes[1].vertices - out.shapes[0].vertices
        np.testing.assert_allclose(diff, np.tile(diff[0], (len(diff), 1)))

    def test_commutes_with_consistent_reordering(self):
        rng = np.random.default_rng(0)
        verts = [rng.uniform(-1, 3, size=(6, 3)) for _ in range(3)]
        tris = np.array([[0, 1, 2], [3, 4, 5]])
        perm = rng.permutation(6)
        ts = mio.TrainingSet([mio.Mesh(v, tris) for v in verts])
        ts_perm = mio.TrainingSet([mio.Mesh(v[perm], tris) for v in verts])
        out = mio.normalize_unit_box(ts)
        out_perm = mio.normalize_unit_box(ts_perm)
        for i in range(3):
            np.testing.assert_allclose(out.shapes[i].vertices[perm],
                                       out_perm.shapes[i].vertices)


class TestAssembleData:
    def test_two_shape_stack(self):
        tris = np.array([[0, 1, 2]])
        a = mio.Mesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), tris)
        b = mio.Mesh(np.array([[1.0, 1, 1], [2, 1, 1], [1, 2, 1]]), tris)
        data = mio.assemble_data(mio.TrainingSet([a, b]))
        np.testing.assert_array_equal(data[0], [0, 0, 0, 1, 1, 1])

    def test_round_trip_unstack(self):
        rng = np.random.default_rng(1)
        verts = [rng.uniform(0, 1, size=(5, 3)) for _ in range(3)]
        tris = np.array([[0, 1, 2]])
        ts = mio.TrainingSet([mio.Mesh(v, tris) for v in verts])
        blocks = mio.unstack_data(mio.assemble_data(ts))
        for i in range(3):
            np.testing.assert_array_equal(blocks[i], verts[i])


class TestObjRoundTrip:
    def test_load_normalize_write_load_idempotent(self, tmp_path):
        rng = np.random.default_rng(2)
        tris = np.array([[0, 1, 2], [1, 2, 3]])
        paths = []
        for i in range(2):
            mesh = mio.Mesh(rng.uniform(-3, 5, size=(4, 3)), tris)
            paths.append(write_tmp(mesh, tmp_path, f"s{i}.obj"))
        ts = mio.normalize_unit_box(mio.load_sequence(paths))
        paths2 = []
        for i, s in enumerate(ts.shapes):
            paths2.append(write_tmp(s, tmp_path, f"n{i}.obj"))
        ts2 = mio.load_sequence(paths2)
        for a, b in zip(ts.shapes, ts2.shapes):
            assert np.abs(a.vertices - b.vertices).max() <= 1e-9


class TestLabeledMesh:
    def test_write_and_sidecars(self, tmp_path):
        verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
        tris = np.array([[0, 1, 2], [1, 2, 3]])
        labels = np.array([0, 0, 0, 1])
        path = str(tmp_path / "seg.obj")
        mio.write_labeled_mesh(mio.Mesh(verts, tris), labels, path)
        back = mio.read_labels(str(tmp_path / "seg.labels"))
        np.testing.assert_array_equal(back, labels)
        with open(tmp_path / "seg.boundary") as fh:
            boundary = [int(x) for x in fh.read().split()]
        assert boundary == [1]  # second triangle spans labels 0 and 1
        mesh = mio.read_obj(path)
        np.testing.assert_allclose(mesh.vertices, verts)

    def test_label_length_mismatch(self, tmp_path):
        with pytest.raises(IoError):
            mio.write_labeled_mesh(single_triangle(), [0, 1],
                                   str(tmp_path / "x.obj"))
