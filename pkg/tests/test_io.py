"""Tests for the PLY reader/writer and the UDFG binary grid format."""

import struct

import numpy as np
import pytest

from udfgrid import (
    DFKind,
    GridSpec,
    ParseError,
    PointCloud,
    SparseDFGrid,
    flip,
    read_grid,
    read_ply,
    write_grid,
    write_ply,
)


def _full_cloud(n=25, seed=42):
    rng = np.random.default_rng(seed)
    nrm = rng.normal(size=(n, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    nrm[3] = np.nan  # one unestimated normal
    return PointCloud(rng.random((n, 3)), nrm, rng.random((n, 3)))


def _grid(n=30, seed=42, kind=DFKind.UWED, flipped=False):
    rng = np.random.default_rng(seed)
    spec = GridSpec(origin=(0.25, -1.5, 3.0), voxel_size=0.05, dims=(9, 9, 9))
    ijk = np.stack(np.meshgrid(*([np.arange(9)] * 3), indexing="ij"),
                   axis=-1).reshape(-1, 3)
    pick = rng.choice(len(ijk), size=n, replace=False)
    lo, hi = (0.001, 3.0) if flipped else (0.0, 2.999)
    values = np.float64(np.float32(rng.uniform(lo, hi, size=n)))
    return SparseDFGrid(spec, kind, flipped, ijk[pick], values)


class TestPlyRoundtrip:
    @pytest.mark.parametrize("binary", [True, False])
    def test_positions_only(self, tmp_path, binary):
        cloud = PointCloud(np.random.default_rng(42).random((50, 3)))
        path = tmp_path / "c.ply"
        write_ply(cloud, path, binary=binary)
        back = read_ply(path)
        np.testing.assert_array_equal(back.positions, cloud.positions)
        assert back.normals is None and back.sensor_origins is None

    @pytest.mark.parametrize("binary", [True, False])
    def test_all_attributes(self, tmp_path, binary):
        cloud = _full_cloud()
        path = tmp_path / "c.ply"
        write_ply(cloud, path, binary=binary)
        back = read_ply(path)
        np.testing.assert_array_equal(back.positions, cloud.positions)
        np.testing.assert_array_equal(back.normals, cloud.normals)
        np.testing.assert_array_equal(back.sensor_origins, cloud.sensor_origins)

    @pytest.mark.parametrize("binary", [True, False])
    def test_empty_cloud(self, tmp_path, binary):
        path = tmp_path / "c.ply"
        write_ply(PointCloud(np.empty((0, 3))), path, binary=binary)
        assert len(read_ply(path)) == 0

    def test_canonical_bytes(self, tmp_path):
        cloud = _full_cloud()
        p1, p2 = tmp_path / "a.ply", tmp_path / "b.ply"
        write_ply(cloud, p1)
        write_ply(cloud, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_layout(self, tmp_path):
        path = tmp_path / "c.ply"
        write_ply(_full_cloud(n=7), path, binary=True)
        header = path.read_bytes().split(b"end_header\n")[0].decode()
        lines = header.splitlines()
        assert lines[0] == "ply"
        assert lines[1] == "format binary_little_endian 1.0"
        assert lines[2] == "element vertex 7"
        assert lines[3:] == [
            f"property double {n}"
            for n in ("x", "y", "z", "nx", "ny", "nz", "sx", "sy", "sz")
        ]

    def test_extreme_values_survive_ascii(self, tmp_path):
        pos = np.array([[1e-300, 1.0 + 2**-52, 12345678.987654321]])
        path = tmp_path / "c.ply"
        write_ply(PointCloud(pos), path, binary=False)
        np.testing.assert_array_equal(read_ply(path).positions, pos)


class TestPlyReadTolerance:
    def _read(self, tmp_path, text):
        path = tmp_path / "t.ply"
        data = text.encode() if isinstance(text, str) else text
        path.write_bytes(data)
        return read_ply(path)

    def test_comments_and_crlf(self, tmp_path):
        text = (
            "ply\r\ncomment made by hand\r\nformat ascii 1.0\r\n"
            "element vertex 1\r\nproperty double x\r\nproperty double y\r\n"
            "property double z\r\nend_header\r\n1 2 3\r\n"
        )
        cloud = self._read(tmp_path, text)
        np.testing.assert_array_equal(cloud.positions, [[1.0, 2.0, 3.0]])

    def test_unknown_scalar_property_skipped(self, tmp_path):
        text = (
            "ply\nformat ascii 1.0\nelement vertex 2\n"
            "property double x\nproperty double y\nproperty double z\n"
            "property float intensity\nend_header\n"
            "1 2 3 9\n4 5 6 8\n"
        )
        cloud = self._read(tmp_path, text)
        np.testing.assert_array_equal(cloud.positions, [[1, 2, 3], [4, 5, 6]])

    def test_float32_coordinates_accepted(self, tmp_path):
        text = (
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property float x\nproperty float y\nproperty float z\n"
            "end_header\n0.5 0.25 -1\n"
        )
        cloud = self._read(tmp_path, text)
        np.testing.assert_array_equal(cloud.positions, [[0.5, 0.25, -1.0]])

    def test_elements_after_vertex_ignored(self, tmp_path):
        text = (
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property double x\nproperty double y\nproperty double z\n"
            "element face 2\nend_header\n1 2 3\n0 0 0\n0 0 0\n"
        )
        cloud = self._read(tmp_path, text)
        assert len(cloud) == 1

    def test_partial_normals_not_grouped(self, tmp_path):
        """nx without ny/nz yields no normals rather than an error."""
        text = (
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property double x\nproperty double y\nproperty double z\n"
            "property double nx\nend_header\n1 2 3 1\n"
        )
        cloud = self._read(tmp_path, text)
        assert cloud.normals is None


class TestPlyReadErrors:
    def _err(self, tmp_path, payload):
        path = tmp_path / "t.ply"
        path.write_bytes(payload if isinstance(payload, bytes) else payload.encode())
        with pytest.raises(ParseError) as err:
            read_ply(path)
        return err.value

    def test_missing_end_header(self, tmp_path):
        assert self._err(tmp_path, "ply\nformat ascii 1.0\n").offset == 0

    def test_missing_magic(self, tmp_path):
        text = "xlx\nformat ascii 1.0\nend_header\n"
        assert self._err(tmp_path, text).offset == 0

    def test_non_ascii_header(self, tmp_path):
        payload = b"ply\nform\xffat ascii 1.0\nend_header\n"
        assert self._err(tmp_path, payload).offset == 4

    def test_bad_format_line(self, tmp_path):
        text = "ply\nformat binary_big_endian 1.0\nend_header\n"
        assert self._err(tmp_path, text).offset == 4

    def test_element_before_vertex(self, tmp_path):
        text = "ply\nformat ascii 1.0\nelement face 1\nend_header\n"
        assert self._err(tmp_path, text).offset == len("ply\nformat ascii 1.0\n")

    def test_duplicate_vertex_element(self, tmp_path):
        text = (
            "ply\nformat ascii 1.0\nelement vertex 0\nproperty double x\n"
            "property double y\nproperty double z\nelement vertex 1\nend_header\n"
        )
        err = self._err(tmp_path, text)
        assert "duplicate vertex" in str(err)

    def test_list_property(self, tmp_path):
        text = (
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property list uchar int vertex_indices\nend_header\n"
        )
        assert "list property" in str(self._err(tmp_path, text))

    def test_unknown_property_type(self, tmp_path):
        text = (
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property quad x\nend_header\n"
        )
        assert "unknown property type" in str(self._err(tmp_path, text))

    def test_integer_coordinate_rejected(self, tmp_path):
        text = (
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property int x\nend_header\n"
        )
        assert "must be float" in str(self._err(tmp_path, text))

    def test_duplicate_property(self, tmp_path):
        text = (
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property double x\nproperty double x\nend_header\n"
        )
        assert "duplicate property" in str(self._err(tmp_path, text))

    def test_unrecognized_header_line(self, tmp_path):
        text = "ply\nformat ascii 1.0\nobj_info whatever\nend_header\n"
        assert "unrecognized header" in str(self._err(tmp_path, text))

    def test_missing_format(self, tmp_path):
        text = (
            "ply\nelement vertex 0\nproperty double x\nproperty double y\n"
            "property double z\nend_header\n"
        )
        err = self._err(tmp_path, text)
        assert "missing format" in str(err) and err.offset == 0

    def test_missing_vertex_element(self, tmp_path):
        text = "ply\nformat ascii 1.0\nend_header\n"
        assert "missing vertex element" in str(self._err(tmp_path, text))

    def test_missing_coordinate_property(self, tmp_path):
        text = (
            "ply\nformat ascii 1.0\nelement vertex 0\n"
            "property double x\nproperty double z\nend_header\n"
        )
        assert "lacks property 'y'" in str(self._err(tmp_path, text))

    def test_binary_truncated(self, tmp_path):
        cloud = PointCloud(np.random.default_rng(42).random((5, 3)))
        path = tmp_path / "t.ply"
        write_ply(cloud, path, binary=True)
        data = path.read_bytes()[:-8]
        err = self._err(tmp_path, data)
        assert "truncated" in str(err) and err.offset == len(data)

    def test_ascii_short_row(self, tmp_path):
        head = (
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\n"
            "property double y\nproperty double z\nend_header\n"
        )
        err = self._err(tmp_path, head + "1 2 3\n4 5\n")
        assert "row 1 has 2 of 3" in str(err)
        assert err.offset == len(head) + len("1 2 3\n")

    def test_ascii_missing_rows(self, tmp_path):
        head = (
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\n"
            "property double y\nproperty double z\nend_header\n"
        )
        payload = head + "1 2 3\n"
        err = self._err(tmp_path, payload)
        assert "truncated (1 of 3 rows)" in str(err)
        assert err.offset == len(payload)

    def test_ascii_bad_number(self, tmp_path):
        head = (
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\n"
            "property double y\nproperty double z\nend_header\n"
        )
        err = self._err(tmp_path, head + "1 2 3\n4 five 6\n")
        assert "bad number 'five'" in str(err)
        assert err.offset == len(head) + len("1 2 3\n")


class TestUdfgRoundtrip:
    def test_bitwise_roundtrip(self, tmp_path):
        grid = _grid()
        path = tmp_path / "g.udfg"
        write_grid(grid, path)
        back = read_grid(path)
        assert back.kind is grid.kind and back.flipped == grid.flipped
        assert back.spec.dims == grid.spec.dims
        assert back.spec.voxel_size == grid.spec.voxel_size
        np.testing.assert_array_equal(back.spec.origin, grid.spec.origin)
        np.testing.assert_array_equal(back.indices, grid.indices)
        np.testing.assert_array_equal(back.values, grid.values)

    def test_flipped_flag_preserved(self, tmp_path):
        grid = flip(_grid())
        path = tmp_path / "g.udfg"
        write_grid(grid, path)
        back = read_grid(path)
        assert back.flipped
        # In-memory flip keeps full float64 precision of 3 - v; the file
        # stores float32 records, so the roundtrip grades to float32.
        np.testing.assert_array_equal(
            back.values, np.float64(np.float32(grid.values))
        )

    def test_empty_grid(self, tmp_path):
        spec = GridSpec(origin=(0.0, 0.0, 0.0), voxel_size=0.1, dims=(2, 2, 2))
        grid = SparseDFGrid(spec, DFKind.UED, False,
                            np.empty((0, 3), np.int64), np.empty(0))
        path = tmp_path / "g.udfg"
        write_grid(grid, path)
        back = read_grid(path)
        assert len(back) == 0 and back.kind is DFKind.UED

    def test_file_layout(self, tmp_path):
        grid = _grid(n=5)
        path = tmp_path / "g.udfg"
        write_grid(grid, path)
        data = path.read_bytes()
        assert len(data) == 62 + 16 * 5
        magic, version, kind, flipped = struct.unpack_from("<4sIBB", data, 0)
        assert magic == b"UDFG" and version == 1
        assert kind == DFKind.UWED.code and flipped == 0
        dims = struct.unpack_from("<3I", data, 10)
        assert dims == (9, 9, 9)
        origin = struct.unpack_from("<3d", data, 22)
        np.testing.assert_allclose(origin, [0.25, -1.5, 3.0])
        (vs,) = struct.unpack_from("<d", data, 46)
        assert vs == 0.05
        (count,) = struct.unpack_from("<Q", data, 54)
        assert count == 5

    def test_canonical_bytes(self, tmp_path):
        grid = _grid()
        p1, p2 = tmp_path / "a.udfg", tmp_path / "b.udfg"
        write_grid(grid, p1)
        write_grid(grid, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_records_sorted_lexicographically(self, tmp_path):
        grid = _grid(n=50)
        path = tmp_path / "g.udfg"
        write_grid(grid, path)
        data = path.read_bytes()
        rec = np.frombuffer(data, dtype=[("i", "<u4"), ("j", "<u4"),
                                         ("k", "<u4"), ("v", "<f4")], offset=62)
        ijk = np.stack([rec["i"], rec["j"], rec["k"]], axis=1).astype(np.int64)
        codes = (ijk[:, 0] * 9 + ijk[:, 1]) * 9 + ijk[:, 2]
        assert (np.diff(codes) > 0).all()


class TestUdfgReadErrors:
    def _write_and_corrupt(self, tmp_path, mutate):
        grid = _grid(n=4)
        path = tmp_path / "g.udfg"
        write_grid(grid, path)
        data = bytearray(path.read_bytes())
        data = mutate(data)
        path.write_bytes(bytes(data))
        with pytest.raises(ParseError) as err:
            read_grid(path)
        return err.value

    def test_header_truncated(self, tmp_path):
        err = self._write_and_corrupt(tmp_path, lambda d: d[:30])
        assert "header truncated" in str(err) and err.offset == 30

    def test_bad_magic(self, tmp_path):
        def mutate(d):
            d[0:4] = b"XDFG"
            return d
        err = self._write_and_corrupt(tmp_path, mutate)
        assert "bad magic" in str(err) and err.offset == 0

    def test_bad_version(self, tmp_path):
        def mutate(d):
            d[4:8] = struct.pack("<I", 2)
            return d
        err = self._write_and_corrupt(tmp_path, mutate)
        assert "version" in str(err) and err.offset == 4

    def test_bad_kind_code(self, tmp_path):
        def mutate(d):
            d[8] = 9
            return d
        err = self._write_and_corrupt(tmp_path, mutate)
        assert "kind code" in str(err) and err.offset == 8

    def test_bad_flipped_flag(self, tmp_path):
        def mutate(d):
            d[9] = 2
            return d
        err = self._write_and_corrupt(tmp_path, mutate)
        assert "flipped flag" in str(err) and err.offset == 9

    def test_zero_dim(self, tmp_path):
        def mutate(d):
            d[10:14] = struct.pack("<I", 0)
            return d
        err = self._write_and_corrupt(tmp_path, mutate)
        assert "dims" in str(err) and err.offset == 10

    def test_bad_voxel_size(self, tmp_path):
        def mutate(d):
            d[46:54] = struct.pack("<d", 0.0)
            return d
        err = self._write_and_corrupt(tmp_path, mutate)
        assert "voxel_size" in str(err) and err.offset == 46

    def test_records_truncated(self, tmp_path):
        err = self._write_and_corrupt(tmp_path, lambda d: d[:-10])
        assert "record data truncated" in str(err)
        assert err.offset == 62 + 16 * 4 - 10

    def test_trailing_bytes(self, tmp_path):
        err = self._write_and_corrupt(tmp_path, lambda d: d + b"xx")
        assert "trailing bytes" in str(err) and err.offset == 62 + 16 * 4

    def test_unsorted_records(self, tmp_path):
        def mutate(d):
            first = bytes(d[62:78])
            d[62:78] = d[78:94]
            d[78:94] = first
            return d
        err = self._write_and_corrupt(tmp_path, mutate)
        assert "unsorted record at index 1" in str(err) and err.offset == 62 + 16

    def test_duplicate_records(self, tmp_path):
        def mutate(d):
            d[78:94] = d[62:78]
            return d
        err = self._write_and_corrupt(tmp_path, mutate)
        assert "duplicate record at index 1" in str(err)

    def test_value_out_of_range(self, tmp_path):
        def mutate(d):
            d[74:78] = struct.pack("<f", 3.5)  # first record's value
            return d
        err = self._write_and_corrupt(tmp_path, mutate)
        assert "invalid grid data" in str(err)

    def test_index_outside_dims(self, tmp_path):
        def mutate(d):
            # Raise the last record's i coordinate beyond dims.
            off = 62 + 16 * 3
            d[off:off + 4] = struct.pack("<I", 9)
            return d
        err = self._write_and_corrupt(tmp_path, mutate)
        assert "invalid grid data" in str(err)
