"""STL parsing, writing, normalization and corpus curation."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshid import shapes, stl
from meshid.errors import (
    DegenerateExtent,
    EmptyMesh,
    IoFailure,
    MalformedAscii,
    NoModels,
    NonFiniteVertex,
    Truncated,
)


def binary_stl(facets, header=b"test mesh"):
    """Assemble binary STL bytes from (normal, (v0, v1, v2)) pairs."""
    out = bytearray(header.ljust(80, b"\0")[:80])
    out += struct.pack("<I", len(facets))
    for normal, verts in facets:
        for vector in (normal, *verts):
            out += struct.pack("<3f", *vector)
        out += struct.pack("<H", 0)
    return bytes(out)


ONE_FACET = [((0.0, 0.0, 1.0), ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)))]


class TestBinaryParsing:
    def test_single_facet(self):
        mesh = stl.parse_stl(binary_stl(ONE_FACET))
        assert mesh.triangle_count == 1
        assert mesh.triangles.dtype == np.float64
        assert np.array_equal(
            mesh.triangles[0], [[0, 0, 0], [1, 0, 0], [0, 1, 0]]
        )
        assert np.array_equal(mesh.normals, [[0.0, 0.0, 1.0]])

    def test_non_unit_normals_dropped(self):
        facets = [((0.0, 0.0, 2.0), ONE_FACET[0][1])]
        assert stl.parse_stl(binary_stl(facets)).normals is None

    def test_zero_normals_dropped(self):
        facets = [((0.0, 0.0, 0.0), ONE_FACET[0][1])]
        assert stl.parse_stl(binary_stl(facets)).normals is None

    def test_binary_wins_over_solid_header(self):
        # A length-consistent binary file parses as binary even when its
        # header starts with the ascii keyword.
        data = binary_stl(ONE_FACET, header=b"solid looks like ascii")
        mesh = stl.parse_stl(data)
        assert mesh.triangle_count == 1

    def test_zero_facets(self):
        with pytest.raises(EmptyMesh):
            stl.parse_stl(binary_stl([]))

    def test_count_mismatch(self):
        data = bytearray(binary_stl(ONE_FACET))
        struct.pack_into("<I", data, 80, 2)
        with pytest.raises(Truncated):
            stl.parse_stl(bytes(data))

    def test_short_input(self):
        with pytest.raises(Truncated):
            stl.parse_stl(b"\0" * 50)

    def test_empty_input(self):
        with pytest.raises(EmptyMesh):
            stl.parse_stl(b"")

    def test_non_finite_vertex(self):
        facets = [((0.0, 0.0, 1.0), ((float("nan"), 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)))]
        with pytest.raises(NonFiniteVertex):
            stl.parse_stl(binary_stl(facets))


ASCII_EXAMPLE = """solid example
  facet normal 0 0 1
    outer loop
      vertex 0 0 0
      vertex 1 0 0
      vertex 0 1 0
    endloop
  endfacet
endsolid example
"""


class TestAsciiParsing:
    def test_example(self):
        mesh = stl.parse_stl(ASCII_EXAMPLE.encode())
        assert mesh.triangle_count == 1
        assert np.array_equal(mesh.triangles[0], [[0, 0, 0], [1, 0, 0], [0, 1, 0]])
        assert np.array_equal(mesh.normals, [[0.0, 0.0, 1.0]])

    def test_name_with_spaces(self):
        text = ASCII_EXAMPLE.replace("solid example", "solid my favourite part")
        text = text.replace("endsolid example", "endsolid")
        assert stl.parse_stl(text.encode()).triangle_count == 1

    def test_scientific_notation(self):
        text = ASCII_EXAMPLE.replace("vertex 1 0 0", "vertex 1.0e0 0e0 -0.0E+1")
        mesh = stl.parse_stl(text.encode())
        assert np.array_equal(mesh.triangles[0][1], [1.0, 0.0, 0.0])

    def test_missing_keyword(self):
        text = ASCII_EXAMPLE.replace("  endfacet\n", "")
        with pytest.raises(MalformedAscii) as info:
            stl.parse_stl(text.encode())
        assert "endfacet" in str(info.value)

    def test_bad_number_reports_line(self):
        text = ASCII_EXAMPLE.replace("vertex 0 1 0", "vertex 0 banana 0")
        with pytest.raises(MalformedAscii) as info:
            stl.parse_stl(text.encode())
        assert "line 6" in str(info.value)
        assert "banana" in str(info.value)

    def test_underscored_number_rejected(self):
        text = ASCII_EXAMPLE.replace("vertex 1 0 0", "vertex 1_0 0 0")
        with pytest.raises(MalformedAscii):
            stl.parse_stl(text.encode())

    def test_huge_literal_is_non_finite(self):
        text = ASCII_EXAMPLE.replace("vertex 1 0 0", "vertex 1e999 0 0")
        with pytest.raises(NonFiniteVertex):
            stl.parse_stl(text.encode())

    def test_invalid_utf8(self):
        with pytest.raises(MalformedAscii):
            stl.parse_stl(b"solid \xff\xfe\nendsolid")

    def test_no_facets(self):
        with pytest.raises(EmptyMesh):
            stl.parse_stl(b"solid empty\nendsolid empty\n")

    def test_truncated_mid_facet(self):
        text = ASCII_EXAMPLE.split("endloop")[0]
        with pytest.raises(MalformedAscii):
            stl.parse_stl(text.encode())


class TestRoundTrips:
    def test_binary_exact_for_float32_values(self):
        cube = shapes.cube()
        back = stl.parse_stl(stl.write_stl_binary(cube))
        assert np.array_equal(back.triangles, cube.triangles)

    def test_binary_stable_after_first_write(self):
        # Irrational coordinates lose precision once on the way to
        # float32; after that the round trip is exact.
        first = stl.parse_stl(stl.write_stl_binary(shapes.torus()))
        second = stl.parse_stl(stl.write_stl_binary(first))
        assert np.array_equal(first.triangles, second.triangles)

    def test_ascii_exact(self):
        torus = shapes.torus()
        back = stl.parse_stl(stl.write_stl_ascii(torus).encode())
        assert np.array_equal(back.triangles, torus.triangles)

    def test_written_normals_are_unit(self):
        back = stl.parse_stl(stl.write_stl_binary(shapes.pyramid(4)))
        assert back.normals is not None
        assert np.allclose(np.linalg.norm(back.normals, axis=1), 1.0, atol=1e-5)


class TestGeometry:
    def test_bounding_box(self):
        mesh = stl.TriangleMesh(
            triangles=[[[0, 0, 0], [4, 0, 0], [0, 2, 0]], [[4, 2, 1], [0, 2, 1], [4, 0, 1]]]
        )
        box = stl.bounding_box(mesh)
        assert box.mins == (0.0, 0.0, 0.0)
        assert box.maxs == (4.0, 2.0, 1.0)
        assert np.array_equal(box.center, [2.0, 1.0, 0.5])
        assert box.largest_edge == 4.0

    def test_normalize_example(self):
        mesh = stl.TriangleMesh(
            triangles=[[[0, 0, 0], [4, 0, 0], [0, 2, 0]], [[4, 2, 1], [0, 2, 1], [4, 0, 1]]]
        )
        box = stl.bounding_box(stl.normalize(mesh))
        assert np.array_equal(box.extents, [1.0, 0.5, 0.25])
        assert np.array_equal(box.center, [0.0, 0.0, 0.0])

    def test_normalize_empty(self):
        with pytest.raises(EmptyMesh):
            stl.normalize(stl.TriangleMesh(triangles=np.zeros((0, 3, 3))))

    def test_normalize_degenerate(self):
        point = stl.TriangleMesh(triangles=np.ones((1, 3, 3)))
        with pytest.raises(DegenerateExtent):
            stl.normalize(point)

    def test_compute_normals_right_hand_rule(self):
        mesh = stl.compute_normals(stl.TriangleMesh(triangles=[ONE_FACET[0][1]]))
        assert np.array_equal(mesh.normals, [[0.0, 0.0, 1.0]])
        assert not mesh.degenerate[0]

    def test_compute_normals_flags_degenerate(self):
        collinear = stl.TriangleMesh(triangles=[[[0, 0, 0], [1, 1, 1], [2, 2, 2]]])
        mesh = stl.compute_normals(collinear)
        assert mesh.degenerate[0]
        assert np.array_equal(mesh.normals[0], [0.0, 0.0, 1.0])

    def test_mesh_shape_validation(self):
        with pytest.raises(ValueError):
            stl.TriangleMesh(triangles=np.zeros((2, 4, 3)))

    def test_mesh_rejects_non_finite(self):
        bad = np.zeros((1, 3, 3))
        bad[0, 0, 0] = np.inf
        with pytest.raises(NonFiniteVertex):
            stl.TriangleMesh(triangles=bad)


finite_coord = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, width=64)


@st.composite
def meshes(draw):
    count = draw(st.integers(min_value=1, max_value=4))
    values = draw(
        st.lists(finite_coord, min_size=count * 9, max_size=count * 9).map(np.array)
    )
    return values.reshape(count, 3, 3)


@given(meshes())
@settings(max_examples=40, deadline=None)
def test_normalize_idempotent(triangles):
    mesh = stl.TriangleMesh(triangles=triangles)
    extent = stl.bounding_box(mesh).largest_edge
    if extent <= 0.0:
        return
    once = stl.normalize(mesh)
    twice = stl.normalize(once)
    assert np.abs(twice.triangles - once.triangles).max() <= 1e-9


@given(meshes())
@settings(max_examples=40, deadline=None)
def test_ascii_round_trip_any_mesh(triangles):
    mesh = stl.TriangleMesh(triangles=triangles)
    back = stl.parse_stl(stl.write_stl_ascii(mesh).encode())
    assert np.array_equal(back.triangles, mesh.triangles)


class TestCurate:
    def test_catalogue(self, stl_dir):
        records = stl.curate(stl_dir)
        assert [r.id for r in records] == ["broken", "cube", "cube_2", "pyramid"]
        by_id = {r.id: r for r in records}
        assert by_id["broken"].status == "corrupt"
        assert "Truncated" in by_id["broken"].error
        assert by_id["cube"].status == "ok"
        assert by_id["cube"].triangle_count == 12
        assert by_id["cube_2"].source_path.endswith("nested/cube.stl")

    def test_parallel_matches_serial(self, stl_dir):
        assert stl.curate(stl_dir) == stl.curate(stl_dir, jobs=4)

    def test_warns_on_stray_files(self, stl_dir, caplog):
        with caplog.at_level("WARNING", logger="meshid.stl"):
            stl.curate(stl_dir)
        assert any("notes.txt" in message for message in caplog.messages)

    def test_empty_tree(self, tmp_path):
        with pytest.raises(NoModels):
            stl.curate(tmp_path)

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            stl.load_stl(tmp_path / "absent.stl")
