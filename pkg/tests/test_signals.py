import struct

import numpy as np
import pytest

from core.errors import ConfigError, FormatError, ShapeError
from core.signals import (VIB_MAGIC, SignalMatrix, decode_binary_matrix, encode_binary_matrix, is_binary_matrix,
                          load_binary_matrix, load_signal, load_text_matrix, save_binary_matrix)


class TestTextMatrix:

    def test_whitespace_separated(self, tmp_path):
        path = tmp_path / "rec.txt"
        path.write_text("# header\n1.0 2.0\t3.0\n\n-4 5e-1 6\n", encoding="utf-8")
        m = load_text_matrix(path, sample_rate_hz=1000)
        assert (m.rows, m.cols) == (2, 3)
        np.testing.assert_array_equal(m.values, [[1, 2, 3], [-4, 0.5, 6]])
        assert m.sample_rate_hz == 1000
        assert m.seconds == pytest.approx(0.002)

    def test_comma_separated(self, tmp_path):
        path = tmp_path / "rec.csv"
        path.write_text("1,2\n3, 4\n", encoding="utf-8")
        np.testing.assert_array_equal(load_text_matrix(path).values, [[1, 2], [3, 4]])

    def test_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "ragged.txt"
        path.write_text("1 2 3\n4 5 6\n7 8\n", encoding="utf-8")
        with pytest.raises(FormatError) as info:
            load_text_matrix(path)
        assert info.value.line == 3
        assert ":3:" in str(info.value)

    def test_non_numeric_token(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 2\n3 abc\n", encoding="utf-8")
        with pytest.raises(FormatError, match="abc"):
            load_text_matrix(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("# nothing\n\n", encoding="utf-8")
        with pytest.raises(FormatError):
            load_text_matrix(path)

    def test_invalid_utf8_names_line(self, tmp_path):
        path = tmp_path / "latin.txt"
        path.write_bytes(b"1 2\n3 \xff\n")
        with pytest.raises(FormatError, match="UTF-8") as info:
            load_text_matrix(path)
        assert info.value.line == 2

    def test_ims_sized_file(self, tmp_path):
        values = np.arange(20480 * 8, dtype=np.float64).reshape(20480, 8) / 1000.0
        path = tmp_path / "2004.02.12.10.32.39"
        np.savetxt(path, values, fmt="%.3f", delimiter="\t")
        m = load_text_matrix(path, sample_rate_hz=20000.0)
        assert (m.rows, m.cols) == (20480, 8)
        assert m.seconds == pytest.approx(1.024)
        np.testing.assert_allclose(m.values, values)


class TestBinaryMatrix:

    def test_round_trip(self, tmp_path, rng):
        m = SignalMatrix(rng.normal((50, 3)), 12000.0)
        path = tmp_path / "m.vib"
        save_binary_matrix(m, path)
        loaded = load_binary_matrix(path)
        assert (loaded.rows, loaded.cols, loaded.sample_rate_hz) == (50, 3, 12000.0)
        np.testing.assert_array_equal(loaded.values, m.values.astype(np.float32))
        assert is_binary_matrix(path)

    def test_header_layout(self):
        data = encode_binary_matrix(SignalMatrix(np.ones((2, 3)), 20000.0))
        assert data[:4] == b"VIB1"
        assert struct.unpack_from("<IIf", data, 4) == (2, 3, 20000.0)
        assert len(data) == 16 + 2 * 3 * 4

    def test_bad_magic(self):
        data = bytearray(encode_binary_matrix(SignalMatrix(np.ones((2, 2)))))
        data[:4] = b"VIB2"
        with pytest.raises(FormatError, match="magic"):
            decode_binary_matrix(bytes(data))

    def test_truncated_payload(self):
        header = struct.pack("<4sIIf", VIB_MAGIC, 10, 2, 20000.0)
        data = header + np.zeros(19, dtype="<f4").tobytes()
        with pytest.raises(FormatError) as info:
            decode_binary_matrix(data)
        assert "20 floats" in str(info.value) and "19" in str(info.value)

    def test_trailing_bytes(self):
        data = encode_binary_matrix(SignalMatrix(np.ones((2, 2)))) + b"\x00"
        with pytest.raises(FormatError, match="trailing"):
            decode_binary_matrix(data)

    def test_truncated_header(self):
        with pytest.raises(FormatError):
            decode_binary_matrix(b"VIB1\x01")

    def test_empty_dimensions(self):
        with pytest.raises(FormatError):
            decode_binary_matrix(struct.pack("<4sIIf", VIB_MAGIC, 0, 2, 20000.0))

    @pytest.mark.parametrize("rate", [0.0, -20000.0, float("nan"), float("inf")])
    def test_invalid_sample_rate(self, rate):
        data = struct.pack("<4sIIf", VIB_MAGIC, 1, 2, rate) + struct.pack("<2f", 1.0, 2.0)
        with pytest.raises(FormatError, match="sample rate"):
            decode_binary_matrix(data)


def test_load_signal_sniffs_format(tmp_path):
    text = tmp_path / "a.txt"
    text.write_text("1 2\n", encoding="utf-8")
    binary = tmp_path / "a.vib"
    save_binary_matrix(SignalMatrix(np.array([[1.0, 2.0]]), 5000.0), binary)
    assert load_signal(text, 7000.0).sample_rate_hz == 7000.0
    assert load_signal(binary, 7000.0).sample_rate_hz == 5000.0


def test_signal_matrix_rejects_empty():
    with pytest.raises(ShapeError):
        SignalMatrix(np.zeros((0, 2)))


@pytest.mark.parametrize("rate", [0.0, -1.0, float("nan")])
def test_signal_matrix_rejects_bad_rate(rate):
    with pytest.raises(ConfigError):
        SignalMatrix(np.ones((2, 2)), rate)
