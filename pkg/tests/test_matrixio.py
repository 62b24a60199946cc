"""ISMX1 matrix container, sidecars, PGM dumps."""

import json

import numpy as np
import pytest

from issfa.matrixio import (
    MatrixIOError,
    feature_row_to_image,
    read_matrix,
    read_sidecar,
    write_matrix,
    write_pgm,
)


class TestMatrixRoundTrip:
    def test_round_trip_bit_exact(self, tmp_path):
        arr = np.random.default_rng(0).normal(size=(7, 13))
        path = tmp_path / "m.ismx"
        write_matrix(path, arr, {"seed": 42})
        back = read_matrix(path)
        np.testing.assert_array_equal(back, arr)
        assert back.dtype == np.float64

    def test_sidecar_contents(self, tmp_path):
        path = tmp_path / "m.ismx"
        write_matrix(path, np.zeros((2, 3)), {"stage": "test", "seed": 7})
        side = read_sidecar(path)
        assert side["shape"] == [2, 3]
        assert side["provenance"]["seed"] == 7

    def test_one_dimensional(self, tmp_path):
        path = tmp_path / "v.ismx"
        write_matrix(path, np.arange(5.0))
        np.testing.assert_array_equal(read_matrix(path), np.arange(5.0))

    def test_header_layout(self, tmp_path):
        path = tmp_path / "m.ismx"
        write_matrix(path, np.zeros((2, 3)))
        raw = path.read_bytes()
        assert raw[:5] == b"ISMX1"
        assert int.from_bytes(raw[5:9], "little") == 2          # rank
        assert int.from_bytes(raw[9:17], "little") == 2         # dim 0
        assert int.from_bytes(raw[17:25], "little") == 3        # dim 1
        assert len(raw) == 25 + 6 * 8

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ismx"
        path.write_bytes(b"WRONG" + b"\0" * 20)
        with pytest.raises(MatrixIOError):
            read_matrix(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "m.ismx"
        write_matrix(path, np.zeros((4, 4)))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(MatrixIOError):
            read_matrix(path)


class TestPgm:
    def test_header_and_scaling(self, tmp_path):
        img = np.array([[0.0, 1.0], [2.0, 4.0]])
        path = tmp_path / "f.pgm"
        write_pgm(path, img)
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n2 2\n255\n")
        pixels = np.frombuffer(raw.split(b"255\n", 1)[1], dtype=np.uint8).reshape(2, 2)
        assert pixels[0, 0] == 0 and pixels[1, 1] == 255

    def test_constant_image(self, tmp_path):
        path = tmp_path / "c.pgm"
        write_pgm(path, np.full((3, 3), 2.5))
        pixels = np.frombuffer(path.read_bytes().split(b"255\n", 1)[1], dtype=np.uint8)
        assert np.all(pixels == 0)


class TestFeatureRowToImage:
    def test_2d(self):
        row = np.arange(12.0)
        img = feature_row_to_image(row, (3, 4))
        assert img.shape == (3, 4)
        assert img[1, 0] == 4.0

    def test_3d_slice_strip(self):
        row = np.arange(2 * 3 * 4, dtype=float)
        img = feature_row_to_image(row, (2, 3, 4))
        assert img.shape == (3, 8)
        vol = row.reshape(2, 3, 4)
        np.testing.assert_array_equal(img[:, :4], vol[0])
        np.testing.assert_array_equal(img[:, 4:], vol[1])

    def test_mismatch_rejected(self):
        with pytest.raises(MatrixIOError):
            feature_row_to_image(np.zeros(10), (3, 4))
