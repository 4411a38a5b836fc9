"""Byte-mode QR encoder and rasterizer."""

from dataclasses import dataclass

import numpy as np

from qrkey import kernels
from qrkey.errors import CapacityExceeded
from qrkey.qr.blocks import add_error_correction
from qrkey.qr.layout import data_coords, function_template, mask_pattern, write_format
from qrkey.qr.tables import (
    MODE_BYTE,
    byte_capacity,
    char_count_bits,
    check_level,
    data_codewords,
    select_version,
    side_length,
)
from qrkey.raster import RasterImage


@dataclass(frozen=True, eq=False)
class QrSymbol:
    version: int
    ec_level: str
    mask: int
    modules: np.ndarray  # bool, True = dark

    @property
    def size(self):
        return self.modules.shape[0]

    def __eq__(self, other):
        if not isinstance(other, QrSymbol):
            return NotImplemented
        return (
            (self.version, self.ec_level, self.mask) == (other.version, other.ec_level, other.mask)
            and bool(np.array_equal(self.modules, other.modules))
        )


class _BitBuffer:
    def __init__(self):
        self.bits = []

    def append(self, value, length):
        for i in range(length - 1, -1, -1):
            self.bits.append(value >> i & 1)

    def __len__(self):
        return len(self.bits)


def data_codeword_stream(payload, version, ec_level):
    """Segment header + payload + terminator + padding, as data codewords."""
    capacity_bits = data_codewords(version, ec_level) * 8
    buf = _BitBuffer()
    buf.append(MODE_BYTE, 4)
    buf.append(len(payload), char_count_bits(MODE_BYTE, version))
    for b in payload:
        buf.append(b, 8)
    if len(buf) > capacity_bits:
        raise CapacityExceeded(
            f"{len(payload)} bytes do not fit version {version}-{ec_level} "
            f"(capacity {byte_capacity(version, ec_level)})"
        )
    buf.append(0, min(4, capacity_bits - len(buf)))
    buf.append(0, -len(buf) % 8)
    out = bytearray()
    for i in range(0, len(buf), 8):
        byte = 0
        for bit in buf.bits[i : i + 8]:
            byte = byte << 1 | bit
        out.append(byte)
    pad = 0xEC
    while len(out) < capacity_bits // 8:
        out.append(pad)
        pad ^= 0xEC ^ 0x11
    return bytes(out)


def codewords_for(payload, version, ec_level):
    """Final interleaved codeword sequence placed in the symbol."""
    return add_error_correction(data_codeword_stream(payload, version, ec_level), version, ec_level)


def _unmasked_grid(codewords, version):
    template, _ = function_template(version)
    grid = template.copy()
    rows, cols = data_coords(version)
    bits = np.unpackbits(np.frombuffer(bytes(codewords), dtype=np.uint8)).astype(bool)
    n = min(len(bits), len(rows))
    grid[rows[:n], cols[:n]] = bits[:n]
    return grid


def _apply_mask(grid, version, ec_level, mask):
    _, is_func = function_template(version)
    out = grid ^ (mask_pattern(mask, grid.shape[0]) & ~is_func)
    write_format(out, ec_level, mask)
    return out


def symbol_from_codewords(codewords, version, ec_level, mask=None):
    """Lay out an already-built codeword sequence and choose the mask.

    Exposed so tests can place deliberately corrupted codewords.
    """
    check_level(ec_level)
    grid = _unmasked_grid(codewords, version)
    if mask is None:
        best = None
        for candidate in range(8):
            masked = _apply_mask(grid, version, ec_level, candidate)
            score = kernels.mask_penalty(masked.view(np.uint8))
            if best is None or score < best[0]:
                best = (score, candidate, masked)
        _, mask, modules = best
    else:
        modules = _apply_mask(grid, version, ec_level, mask)
    modules.setflags(write=False)
    return QrSymbol(version=version, ec_level=ec_level, mask=mask, modules=modules)


def encode(payload, ec_level="H", version=None, mask=None):
    """Encode ``payload`` bytes as a byte-mode QR symbol.

    The smallest fitting version is used unless ``version`` is given.
    """
    check_level(ec_level)
    payload = bytes(payload)
    if version is None:
        version = select_version(max(len(payload), 1), ec_level)
    elif not 1 <= version <= 40:
        raise ValueError(f"version must be 1..40, got {version}")
    return symbol_from_codewords(codewords_for(payload, version, ec_level), version, ec_level, mask)


def render(symbol, module_px=4, quiet_zone_modules=4):
    """Rasterize to a black/white grayscale image."""
    if module_px < 1:
        raise ValueError("module_px must be >= 1")
    if quiet_zone_modules < 4:
        raise ValueError("quiet zone must be at least 4 modules")
    padded = np.pad(symbol.modules, quiet_zone_modules, constant_values=False)
    pixels = np.where(padded, 0, 255).astype(np.uint8)
    pixels = np.repeat(np.repeat(pixels, module_px, axis=0), module_px, axis=1)
    return RasterImage(pixels)


def expected_render_side(version, module_px, quiet_zone_modules=4):
    return (side_length(version) + 2 * quiet_zone_modules) * module_px
