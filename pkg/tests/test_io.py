import io
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from conftest import noise
from tfscat.audio import AudioBuffer
from tfscat.container import (
    MAGIC,
    parse_container,
    read_coefficients,
    read_tensors,
    write_coefficients,
    write_tensors,
)
from tfscat.errors import ContainerError, DataError, WavFormatError
from tfscat.scattering import Coefficients, ScatteringTensor, coefficients
from tfscat.wavio import parse_wav_bytes, read_wav, soft_clip, write_wav


def wav_bytes(samples, rate=8000):
    buf = io.BytesIO()
    wavfile.write(buf, rate, samples)
    return buf.getvalue()


class TestWavRead:
    def test_pcm16_square_full_scale(self):
        q = np.tile(np.array([32767, -32768], dtype="<i2"), 50)
        x = parse_wav_bytes(wav_bytes(q))
        assert x.samples.max() == 32767 / 32768
        assert x.samples.min() == -1.0
        assert x.sample_rate == 8000.0

    def test_pcm24(self, tmp_path):
        # 24-bit frames written by hand: 0x7fffff and -0x800000
        frames = b"\xff\xff\x7f" + b"\x00\x00\x80"
        fmt = struct.pack("<HHIIHH", 1, 1, 8000, 24000, 3, 24)
        body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt \
            + b"data" + struct.pack("<I", len(frames)) + frames
        x = parse_wav_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
        np.testing.assert_allclose(x.samples, [(2**23 - 1) / 2**23, -1.0], rtol=0, atol=0)

    def test_float32(self):
        v = np.array([0.25, -0.5, 0.0], dtype="<f4")
        np.testing.assert_array_equal(parse_wav_bytes(wav_bytes(v)).samples, v)

    def test_stereo_downmix_warns(self):
        v = np.array([[1.0, 0.0], [0.5, 0.5]], dtype="<f4")
        with pytest.warns(RuntimeWarning, match="downmixing 2 channels"):
            x = parse_wav_bytes(wav_bytes(v))
        np.testing.assert_array_equal(x.samples, [0.5, 0.5])
        assert x.channels == 2

    @pytest.mark.parametrize("cut,chunk", [(4, "RIFF"), (30, "fmt "), (50, "data")])
    def test_truncation_names_chunk(self, cut, chunk):
        data = wav_bytes(np.zeros(100, dtype="<i2"))
        with pytest.raises(WavFormatError) as info:
            parse_wav_bytes(data[:cut])
        assert info.value.chunk == chunk

    def test_corrupted_data_length(self):
        data = bytearray(wav_bytes(np.zeros(100, dtype="<i2")))
        pos = data.index(b"data")
        data[pos + 4:pos + 8] = struct.pack("<I", 10**6)
        with pytest.raises(WavFormatError, match="declares") as info:
            parse_wav_bytes(bytes(data))
        assert info.value.chunk == "data"

    def test_not_wave(self):
        with pytest.raises(WavFormatError, match="RIFF"):
            parse_wav_bytes(b"OggS" + bytes(40))

    def test_unsupported_codec(self):
        data = bytearray(wav_bytes(np.zeros(10, dtype="<i2")))
        pos = data.index(b"fmt ")
        data[pos + 8:pos + 10] = struct.pack("<H", 2)  # ADPCM
        with pytest.raises(WavFormatError, match="unsupported codec"):
            parse_wav_bytes(bytes(data))

    def test_empty_data(self):
        with pytest.raises(WavFormatError, match="no samples"):
            parse_wav_bytes(wav_bytes(np.zeros(0, dtype="<i2")))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_wav(tmp_path / "absent.wav")

    @settings(max_examples=200, deadline=None)
    @given(st.binary(max_size=200))
    def test_fuzz_raises_only_data_errors(self, blob):
        try:
            parse_wav_bytes(blob)
        except DataError:
            pass

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 120), st.integers(0, 255))
    def test_fuzz_byte_flips(self, pos, value):
        data = bytearray(wav_bytes(np.arange(40, dtype="<i2")))
        data[pos % len(data)] = value
        try:
            x = parse_wav_bytes(bytes(data))
        except DataError:
            return
        assert np.all(np.isfinite(x.samples))


class TestWavWrite:
    def test_float32_roundtrip(self, tmp_path):
        x = AudioBuffer(np.linspace(-0.9, 0.9, 101), 22050)
        write_wav(x, tmp_path / "a.wav")
        y = read_wav(tmp_path / "a.wav")
        np.testing.assert_array_equal(y.samples, x.samples.astype(np.float32))
        assert y.sample_rate == 22050

    def test_float32_overs_warn_and_pass_through(self, tmp_path):
        x = AudioBuffer(np.array([0.0, 1.5, -2.0]), 8000)
        with pytest.warns(RuntimeWarning, match="exceeds full scale"):
            write_wav(x, tmp_path / "a.wav")
        np.testing.assert_array_equal(read_wav(tmp_path / "a.wav").samples, x.samples)

    def test_pcm16_error_within_dither_bound(self, tmp_path):
        x = noise(4000, seed=1)
        x = AudioBuffer(0.3 * x.samples / np.abs(x.samples).max(), 8000)
        write_wav(x, tmp_path / "a.wav", "pcm16", seed=3)
        y = read_wav(tmp_path / "a.wav")
        # triangular dither spans two steps, rounding adds half a step
        assert np.max(np.abs(y.samples - x.samples)) <= 1.5 / 32768 + 1e-12

    def test_pcm16_dither_is_seeded(self, tmp_path):
        x = AudioBuffer(np.full(256, 0.1), 8000)
        for name, seed in (("a", 1), ("b", 1), ("c", 2)):
            write_wav(x, tmp_path / f"{name}.wav", "pcm16", seed=seed)
        a, b, c = (read_wav(tmp_path / f"{n}.wav").samples for n in "abc")
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_pcm16_silence_stays_silent(self, tmp_path):
        write_wav(AudioBuffer(np.zeros(64), 8000), tmp_path / "a.wav", "pcm16")
        assert np.all(read_wav(tmp_path / "a.wav").samples == 0)

    def test_pcm16_soft_clips(self, tmp_path):
        x = AudioBuffer(np.array([0.0, 3.0, -3.0, 0.5]), 8000)
        with pytest.warns(RuntimeWarning, match="soft-clipping"):
            write_wav(x, tmp_path / "a.wav", "pcm16")
        y = read_wav(tmp_path / "a.wav").samples
        assert np.all(np.abs(y) <= 1.0)
        assert y[1] > 0.99

    def test_soft_clip_curve(self):
        x = np.linspace(-5, 5, 1001)
        y = soft_clip(x)
        inside = np.abs(x) <= 0.9
        np.testing.assert_array_equal(y[inside], x[inside])
        assert np.all(np.abs(y) <= 1.0)
        assert np.all(np.abs(y[np.abs(x) < 2]) < 1.0)
        assert np.all(np.diff(y) >= 0)

    def test_rejects_non_finite(self, tmp_path):
        with pytest.raises(DataError):
            write_wav(AudioBuffer(np.array([np.inf]), 8000), tmp_path / "a.wav")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            write_wav(AudioBuffer(np.zeros(4), 8000), tmp_path / "a.wav", "mp3")


@pytest.fixture(scope="module")
def coeffs(small_cfg):
    return coefficients(noise(2048, seed=2), small_cfg)


class TestContainer:
    def test_coefficient_roundtrip(self, coeffs, tmp_path):
        write_coefficients(tmp_path / "c.sct", coeffs, {"note": "test"})
        back, header = read_coefficients(tmp_path / "c.sct")
        assert back.config == coeffs.config
        assert back.n_samples == coeffs.n_samples
        assert [p.key() for p in back.s2.paths] == [p.key() for p in coeffs.s2.paths]
        np.testing.assert_array_equal(back.s1.values, coeffs.s1.values.astype(np.float32))
        np.testing.assert_array_equal(back.s2.values, coeffs.s2.values.astype(np.float32))
        np.testing.assert_array_equal(back.s1.lambda_grid, coeffs.s1.lambda_grid)
        assert header["provenance"] == {"note": "test"}

    def test_layout(self, tmp_path):
        write_tensors(tmp_path / "t.sct", {"a": np.arange(6.0).reshape(2, 3)})
        data = (tmp_path / "t.sct").read_bytes()
        assert data[:4] == MAGIC
        (hlen,) = struct.unpack("<I", data[4:8])
        header = json.loads(data[8:8 + hlen])
        assert header["tensors"] == [{"name": "a", "shape": [2, 3]}]
        np.testing.assert_array_equal(np.frombuffer(data[8 + hlen:], "<f4"), np.arange(6.0))

    def test_empty_path_table_rejected(self, coeffs, tmp_path):
        empty = Coefficients(coeffs.s1, ScatteringTensor([], np.zeros((0,) + coeffs.s1.values.shape),
                                                         coeffs.s2.frame_rate,
                                                         coeffs.s2.lambda_grid, "S2"),
                             coeffs.config, coeffs.n_samples)
        with pytest.raises(ContainerError, match="empty path table"):
            write_coefficients(tmp_path / "c.sct", empty)

    def test_empty_path_table_on_read(self, coeffs, tmp_path):
        write_coefficients(tmp_path / "c.sct", coeffs)
        header, tensors = read_tensors(tmp_path / "c.sct")
        header = {k: v for k, v in header.items() if k not in ("format", "version", "dtype",
                                                               "byte_order", "tensors")}
        header["paths"] = []
        write_tensors(tmp_path / "d.sct", tensors, header)
        with pytest.raises(ContainerError, match="empty path table"):
            read_coefficients(tmp_path / "d.sct")

    def test_header_length_beyond_file(self):
        blob = MAGIC + struct.pack("<I", 1000) + b"{}"
        with pytest.raises(ContainerError, match="header length"):
            parse_container(blob)

    def test_payload_size_mismatch(self, tmp_path):
        write_tensors(tmp_path / "t.sct", {"a": np.zeros(4)})
        data = (tmp_path / "t.sct").read_bytes()
        with pytest.raises(ContainerError, match="payload"):
            parse_container(data[:-2])

    def test_bad_magic(self):
        with pytest.raises(ContainerError, match="magic"):
            parse_container(b"SCT2" + bytes(10))

    def test_wrong_dtype(self):
        blob = json.dumps({"format": "SCT1", "dtype": "float64", "tensors": []}).encode()
        with pytest.raises(ContainerError):
            parse_container(MAGIC + struct.pack("<I", len(blob)) + blob)

    def test_duplicate_names(self):
        blob = json.dumps({"format": "SCT1", "dtype": "float32", "tensors": [
            {"name": "a", "shape": [1]}, {"name": "a", "shape": [1]}]}).encode()
        with pytest.raises(ContainerError, match="duplicate"):
            parse_container(MAGIC + struct.pack("<I", len(blob)) + blob + bytes(8))

    @settings(max_examples=200, deadline=None)
    @given(st.binary(max_size=120))
    def test_fuzz(self, blob):
        try:
            parse_container(MAGIC + blob)
        except ContainerError:
            pass

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 10**6), st.integers(0, 255))
    def test_fuzz_byte_flips(self, pos, value):
        buf = io.BytesIO()
        buf.write(MAGIC)
        blob = json.dumps({"format": "SCT1", "dtype": "float32",
                           "tensors": [{"name": "a", "shape": [2, 2]}]}).encode()
        data = bytearray(MAGIC + struct.pack("<I", len(blob)) + blob + bytes(16))
        data[pos % len(data)] = value
        try:
            header, tensors = parse_container(bytes(data))
        except ContainerError:
            return
        assert all(isinstance(v, np.ndarray) for v in tensors.values())

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_tensors(tmp_path / "absent.sct")
