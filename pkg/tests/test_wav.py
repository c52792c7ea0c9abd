import struct
import wave

import numpy as np
import pytest

from uwinfer.dsp import AudioClip
from uwinfer.errors import FormatError
from uwinfer.wav import read_wav, write_wav


def test_roundtrip(tmp_path):
    x = np.sin(np.linspace(0, 20, 500)) * 0.9
    write_wav(tmp_path / "a.wav", AudioClip(x, 330))
    clip = read_wav(tmp_path / "a.wav")
    assert clip.sample_rate_hz == 330
    np.testing.assert_allclose(clip.samples, x, atol=2 / 32768)


def test_known_bytes(tmp_path):
    path = tmp_path / "k.wav"
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(8000)
        f.writeframes(struct.pack("<3h", 0, 16384, -32768))
    assert read_wav(path).samples.tolist() == [0.0, 0.5, -1.0]


def test_rejects_stereo(tmp_path):
    path = tmp_path / "s.wav"
    with wave.open(str(path), "wb") as f:
        f.setnchannels(2)
        f.setsampwidth(2)
        f.setframerate(8000)
        f.writeframes(b"\0" * 8)
    with pytest.raises(FormatError) as info:
        read_wav(path)
    assert info.value.field == "channels"


def test_rejects_8bit(tmp_path):
    path = tmp_path / "b.wav"
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(1)
        f.setframerate(8000)
        f.writeframes(b"\x80" * 4)
    with pytest.raises(FormatError):
        read_wav(path)


def float_wav_bytes():
    data = struct.pack("<2f", 0.0, 0.5)
    fmt = struct.pack("<HHIIHH", 3, 1, 8000, 32000, 4, 32)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_rejects_float(tmp_path):
    path = tmp_path / "f.wav"
    path.write_bytes(float_wav_bytes())
    with pytest.raises(FormatError) as info:
        read_wav(path)
    assert info.value.field == "format"


def test_rejects_garbage(tmp_path):
    path = tmp_path / "g.wav"
    path.write_bytes(b"not a riff file at all")
    with pytest.raises(FormatError):
        read_wav(path)
