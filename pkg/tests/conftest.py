import os
import struct
import zlib

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "gas", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "gas"))


def write_png_bytes(path, pixels, color_type=2, bit_depth=8):
    """Minimal PNG encoder (no filtering), independent of the package's decoder.

    ``pixels`` is (H, W, C) of ints.
    """
    pixels = np.asarray(pixels)
    h, w = pixels.shape[:2]
    dtype = ">u2" if bit_depth == 16 else "u1"
    raw = b"".join(b"\x00" + pixels[y].astype(dtype).tobytes() for y in range(h))

    def chunk(tag, data):
        body = tag + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    ihdr = struct.pack(">IIBBBBB", w, h, bit_depth, color_type, 0, 0, 0)
    blob = b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b"")
    with open(path, "wb") as fh:
        fh.write(blob)


@pytest.fixture
def png_writer():
    return write_png_bytes


@pytest.fixture
def rand_image():
    def make(seed, h=16, w=16, lo=0.0, hi=1.0):
        return lo + (hi - lo) * np.random.default_rng(seed).random((3, h, w))

    return make


_CRITERIA = []


@pytest.fixture
def criterion(capsys):
    """``criterion(n, ok, detail)`` prints one pass/fail line and keeps it for the summary."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        _CRITERIA.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA, key=lambda x: x[0]):
            terminalreporter.write_line(line)
