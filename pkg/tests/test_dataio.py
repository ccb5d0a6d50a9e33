import struct

import numpy as np
import pytest

from kpcaood import (
    DetectorConfig,
    FeatureMatrix,
    SeededRng,
    evaluate,
    fit_detector,
    gen_synthetic,
    read_matrix,
    write_matrix,
)
from kpcaood.dataio import DatasetBundle, MATRIX_MAGIC
from kpcaood.errors import DataError, FormatError, LengthError, ShapeError, UsageError


def _write_raw(path, magic=MATRIX_MAGIC, version=1, dtype=0, role=0, rows=1, cols=1,
               payload=b"\x00\x00\x80\x3f"):
    header = struct.pack("<4sHBBQQ", magic, version, dtype, role, rows, cols)
    path.write_bytes(header + payload)


class TestBinaryFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        fm = FeatureMatrix(rng.standard_normal((7, 3)).astype(np.float32))
        path = tmp_path / "m.kpcf"
        write_matrix(fm, path)
        back = read_matrix(path)
        np.testing.assert_array_equal(back.data, fm.data)
        assert back.role == fm.role

    def test_round_trip_extreme_values(self, tmp_path):
        extremes = np.array([[3.4e38, -3.4e38], [1.2e-38, 1e-45], [-0.0, 7.0]], dtype=np.float32)
        path = tmp_path / "m.kpcf"
        write_matrix(FeatureMatrix(extremes), path)
        first = path.read_bytes()
        write_matrix(read_matrix(path), path)
        assert path.read_bytes() == first

    def test_one_by_one_file_is_28_bytes(self, tmp_path):
        # 24-byte header (4+2+1+1+8+8) plus one float32
        path = tmp_path / "m.kpcf"
        write_matrix(FeatureMatrix(np.array([[5.0]])), path)
        assert path.stat().st_size == 28

    def test_logits_role_round_trips(self, tmp_path):
        path = tmp_path / "l.kpcf"
        write_matrix(FeatureMatrix(np.zeros((2, 4)), role="logits"), path)
        assert read_matrix(path).role == "logits"

    def test_zero_rows_header_rejected(self, tmp_path):
        path = tmp_path / "bad.kpcf"
        _write_raw(path, rows=0, payload=b"")
        with pytest.raises(LengthError):
            read_matrix(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.kpcf"
        _write_raw(path, magic=b"NOPE")
        with pytest.raises(FormatError):
            read_matrix(path)

    def test_bad_version_rejected(self, tmp_path):
        path = tmp_path / "bad.kpcf"
        _write_raw(path, version=9)
        with pytest.raises(FormatError):
            read_matrix(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "bad.kpcf"
        _write_raw(path, rows=2, cols=2, payload=b"\x00" * 8)
        with pytest.raises(LengthError):
            read_matrix(path)

    def test_nan_payload_names_position(self, tmp_path):
        path = tmp_path / "bad.kpcf"
        payload = struct.pack("<4f", 1.0, 2.0, float("nan"), 4.0)
        _write_raw(path, rows=2, cols=2, payload=payload)
        with pytest.raises(DataError, match="row 1, col 0"):
            read_matrix(path)

    def test_non_float32_representable_write_rejected(self, tmp_path):
        with pytest.raises(DataError):
            write_matrix(FeatureMatrix(np.array([[1e300]])), tmp_path / "m.kpcf")


class TestCsvFormat:
    def test_literal_parse(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1,2\n3,4\n")
        np.testing.assert_array_equal(read_matrix(path, "csv").data, [[1.0, 2.0], [3.0, 4.0]])

    def test_write_then_parse_matches_f32(self, tmp_path):
        # parse-print-parse fixed point: re-reading recovers the same float32s
        rng = np.random.default_rng(5)
        fm = FeatureMatrix(rng.standard_normal((6, 4)))
        path = tmp_path / "m.csv"
        write_matrix(fm, path, "csv")
        back = read_matrix(path, "csv")
        np.testing.assert_array_equal(
            back.data.astype(np.float32), fm.data.astype(np.float32)
        )
        write_matrix(back, path, "csv")
        np.testing.assert_array_equal(read_matrix(path, "csv").data, back.data)

    def test_empty_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("")
        with pytest.raises(LengthError):
            read_matrix(path, "csv")

    def test_ragged_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1,2\n3\n")
        with pytest.raises(FormatError):
            read_matrix(path, "csv")


class TestFeatureMatrix:
    def test_rejects_non_finite(self):
        with pytest.raises(DataError, match="row 0, col 1"):
            FeatureMatrix(np.array([[1.0, np.inf]]))

    def test_rejects_empty(self):
        with pytest.raises(LengthError):
            FeatureMatrix(np.zeros((0, 3)))

    def test_bundle_rejects_dim_mismatch(self):
        with pytest.raises(ShapeError):
            DatasetBundle(
                ind_train=FeatureMatrix(np.zeros((2, 3))),
                ind_test=FeatureMatrix(np.zeros((2, 4))),
            )


class TestGenSynthetic:
    def test_deterministic(self):
        a = gen_synthetic("clusters", 50, 20, 8, seed=4)
        b = gen_synthetic("clusters", 50, 20, 8, seed=4)
        np.testing.assert_array_equal(a.ind_train.data, b.ind_train.data)
        np.testing.assert_array_equal(a.ind_test.data, b.ind_test.data)
        np.testing.assert_array_equal(a.ood_sets["clusters"].data, b.ood_sets["clusters"].data)
        np.testing.assert_array_equal(a.ind_train_logits.data, b.ind_train_logits.data)

    def test_kinds_have_logits_everywhere(self):
        for kind in ("clusters", "swiss-roll", "shifted-norms"):
            b = gen_synthetic(kind, 40, 20, 8, seed=1)
            assert b.ind_train_logits is not None and b.ind_test_logits is not None
            assert set(b.ood_logits) == set(b.ood_sets)
            assert b.ind_train.rows == 40 and b.ood_sets[kind].rows == 20

    def test_shifted_norms_ratio_near_three(self):
        b = gen_synthetic("shifted-norms", 2000, 1000, 16, seed=0)
        r_ind = np.mean(np.linalg.norm(b.ind_train.data, axis=1))
        r_ood = np.mean(np.linalg.norm(b.ood_sets["shifted-norms"].data, axis=1))
        assert abs(r_ood / r_ind - 3.0) <= 0.3

    def test_zero_displacement_is_indistinguishable(self):
        bundle = gen_synthetic("clusters", 1000, 500, 8, seed=3, displacement=0.0)
        model = fit_detector(DetectorConfig(method="knn"), bundle, SeededRng(3))
        report = evaluate(model, bundle, histogram_bins=None)
        assert abs(report.average_auroc - 0.5) <= 0.05

    def test_unknown_kind_rejected(self):
        with pytest.raises(UsageError):
            gen_synthetic("torus", 10, 10, 4, seed=0)

    def test_tiny_counts_rejected(self):
        with pytest.raises(UsageError):
            gen_synthetic("clusters", 1, 10, 4, seed=0)
