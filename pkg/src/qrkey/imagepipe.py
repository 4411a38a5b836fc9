"""What a social portal does to an uploaded image, and the carriers it destroys.

``optimize`` reproduces the upload pipeline: drop bytes after the container's
end marker, decode, downscale, re-encode (usually to JPEG), strip metadata.
``embed_metadata`` and ``embed_lsb`` are the two alternative key carriers;
both are expected to die in that pipeline while a QR image survives.

Container handling is done at the byte level here (segment and chunk walking,
end-marker location, metadata insertion). Pixel coding uses Pillow.
"""

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from qrkey.errors import ImageFormatError, PayloadTooLarge
from qrkey.raster import PNG_SIGNATURE, RasterImage, sniff_format

JPEG_EOI = b"\xff\xd9"
APP1 = 0xE1
META_IDENT = b"QKMeta\x00"
_STANDALONE = {0xD8, 0xD9, 0x01} | set(range(0xD0, 0xD8))
_PNG_TEXT_CHUNKS = {b"tEXt", b"iTXt", b"zTXt"}


@dataclass(frozen=True)
class OptimizationProfile:
    max_dimension: int = 1024
    jpeg_quality: int = 75
    strip_metadata: bool = True
    truncate_after_eof: bool = True
    force_jpeg: bool = True
    resize_method: str = "bilinear"

    def __post_init__(self):
        if self.max_dimension < 16:
            raise ValueError("max_dimension must be >= 16")
        if not 1 <= self.jpeg_quality <= 100:
            raise ValueError("jpeg_quality must be in 1..100")
        if self.resize_method not in ("bilinear", "nearest"):
            raise ValueError("resize_method must be 'bilinear' or 'nearest'")


DEFAULT_PROFILE = OptimizationProfile()
# no recompression, no stripping: every carrier should survive this one
LOSSLESS_PROFILE = OptimizationProfile(strip_metadata=False, force_jpeg=False, truncate_after_eof=False)


@dataclass(frozen=True)
class MetadataBlock:
    """Text key/value pairs carried by the image container."""

    fields: dict = field(default_factory=dict)

    def __bool__(self):
        return bool(self.fields)

    def __len__(self):
        return len(self.fields)


# -- JPEG container -----------------------------------------------------------


def jpeg_segments(data):
    """Yield (marker, start, end) for every marker segment up to and including EOI.

    Entropy-coded data after SOS is skipped by scanning for the next marker
    that is not a stuffed 0xFF00 or a restart marker.
    """
    if not data.startswith(b"\xff\xd8"):
        raise ImageFormatError("missing JPEG SOI marker")
    pos = 2
    yield 0xD8, 0, 2
    n = len(data)
    while pos < n:
        if data[pos] != 0xFF:
            raise ImageFormatError(f"expected JPEG marker at offset {pos}")
        while pos < n and data[pos] == 0xFF:
            pos += 1
        if pos >= n:
            break
        marker = data[pos]
        start = pos - 1
        pos += 1
        if marker == 0xD9:
            yield marker, start, pos
            return
        if marker in _STANDALONE:
            yield marker, start, pos
            continue
        if pos + 2 > n:
            break
        (length,) = struct.unpack(">H", data[pos : pos + 2])
        end = pos + length
        if length < 2 or end > n:
            raise ImageFormatError("JPEG segment runs past end of file")
        yield marker, start, end
        pos = end
        if marker == 0xDA:
            while True:
                nxt = data.find(b"\xff", pos)
                if nxt < 0 or nxt + 1 >= n:
                    raise ImageFormatError("JPEG scan data has no terminating marker")
                following = data[nxt + 1]
                if following == 0x00 or 0xD0 <= following <= 0xD7 or following == 0xFF:
                    pos = nxt + 1 if following == 0xFF else nxt + 2
                    continue
                pos = nxt
                break
    raise ImageFormatError("JPEG stream has no EOI marker")


def jpeg_end(data):
    for marker, _, end in jpeg_segments(data):
        if marker == 0xD9:
            return end
    raise ImageFormatError("JPEG stream has no EOI marker")


# -- PNG container --------------------------------------------------------------


def png_chunks(data):
    """Yield (type, start, end, body) for each chunk through IEND."""
    if not data.startswith(PNG_SIGNATURE):
        raise ImageFormatError("missing PNG signature")
    pos = len(PNG_SIGNATURE)
    n = len(data)
    while pos + 8 <= n:
        length, ctype = struct.unpack(">I4s", data[pos : pos + 8])
        end = pos + 12 + length
        if end > n:
            raise ImageFormatError("PNG chunk runs past end of file")
        yield ctype, pos, end, data[pos + 8 : pos + 8 + length]
        if ctype == b"IEND":
            return
        pos = end
    raise ImageFormatError("PNG stream has no IEND chunk")


def png_end(data):
    for ctype, _, end, _ in png_chunks(data):
        if ctype == b"IEND":
            return end
    raise ImageFormatError("PNG stream has no IEND chunk")


def _png_chunk(ctype, body):
    return struct.pack(">I", len(body)) + ctype + body + struct.pack(">I", zlib.crc32(ctype + body) & 0xFFFFFFFF)


def container_end(data):
    """Offset one past the format's end marker (JPEG EOI / PNG IEND chunk)."""
    fmt = sniff_format(data)
    return jpeg_end(data) if fmt == "JPEG" else png_end(data)


def truncate_after_eof(data):
    return data[: container_end(data)]


def trailing_bytes(data):
    return data[container_end(data) :]


# -- metadata -------------------------------------------------------------------


def _pack_fields(fields):
    out = bytearray(META_IDENT)
    for key, value in fields.items():
        k = key.encode("utf-8")
        v = value.encode("utf-8")
        if len(k) > 0xFFFF or len(v) > 0xFFFF:
            raise PayloadTooLarge("metadata field longer than 65535 bytes")
        out += struct.pack(">H", len(k)) + k + struct.pack(">H", len(v)) + v
    if len(out) + 2 > 0xFFFF:
        raise PayloadTooLarge("metadata block exceeds one APP1 segment")
    return bytes(out)


def _unpack_fields(body):
    fields = {}
    pos = len(META_IDENT)
    try:
        while pos < len(body):
            (klen,) = struct.unpack(">H", body[pos : pos + 2])
            key = body[pos + 2 : pos + 2 + klen].decode("utf-8")
            pos += 2 + klen
            (vlen,) = struct.unpack(">H", body[pos : pos + 2])
            value = body[pos + 2 : pos + 2 + vlen].decode("utf-8")
            pos += 2 + vlen
            fields[key] = value
    except (struct.error, UnicodeDecodeError) as exc:
        raise ImageFormatError(f"corrupt metadata segment: {exc}") from exc
    return fields


def _jpeg_embed(data, block):
    segments = list(jpeg_segments(data))
    kept = bytearray(b"\xff\xd8")
    inserted = False
    body = _pack_fields(block.fields)
    app1 = b"\xff" + bytes([APP1]) + struct.pack(">H", len(body) + 2) + body
    for marker, start, end in segments[1:]:
        if marker == APP1 and data[start + 4 : start + 4 + len(META_IDENT)] == META_IDENT:
            continue
        if not inserted and marker != 0xE0:
            kept += app1
            inserted = True
        kept += data[start:end]
        if marker == 0xDA:
            # entropy-coded data runs until the next segment's start
            nxt = segments[segments.index((marker, start, end)) + 1][1]
            kept += data[end:nxt]
    return bytes(kept) + data[jpeg_end(data) :]


def _jpeg_extract(data):
    fields = {}
    for marker, start, end in jpeg_segments(data):
        if marker == APP1:
            body = data[start + 4 : end]
            if body.startswith(META_IDENT):
                fields.update(_unpack_fields(body))
    return fields


def _png_embed(data, block):
    out = bytearray(PNG_SIGNATURE)
    inserted = False
    for ctype, start, end, _ in png_chunks(data):
        if ctype in _PNG_TEXT_CHUNKS:
            continue
        if ctype == b"IDAT" and not inserted:
            for key, value in block.fields.items():
                try:
                    chunk = _png_chunk(b"tEXt", key.encode("latin-1") + b"\x00" + value.encode("latin-1"))
                except UnicodeEncodeError:
                    body = key.encode("utf-8") + b"\x00\x00\x00\x00\x00" + value.encode("utf-8")
                    chunk = _png_chunk(b"iTXt", body)
                out += chunk
            inserted = True
        out += data[start:end]
    return bytes(out) + data[png_end(data) :]


def _png_extract(data):
    fields = {}
    for ctype, _, _, body in png_chunks(data):
        try:
            if ctype == b"tEXt":
                key, _, value = body.partition(b"\x00")
                fields[key.decode("latin-1")] = value.decode("latin-1")
            elif ctype == b"zTXt":
                key, _, rest = body.partition(b"\x00")
                fields[key.decode("latin-1")] = zlib.decompress(rest[1:]).decode("latin-1")
            elif ctype == b"iTXt":
                key, _, rest = body.partition(b"\x00")
                compressed, _method = rest[0], rest[1]
                _lang, _, rest = rest[2:].partition(b"\x00")
                _tkey, _, text = rest.partition(b"\x00")
                if compressed:
                    text = zlib.decompress(text)
                fields[key.decode("utf-8")] = text.decode("utf-8")
        except (zlib.error, UnicodeDecodeError, IndexError) as exc:
            raise ImageFormatError(f"corrupt {ctype.decode()} chunk: {exc}") from exc
    return fields


def embed_metadata(data, block):
    """Replace the file's text metadata with ``block``; pixel data untouched."""
    if sniff_format(data) == "JPEG":
        return _jpeg_embed(data, block)
    return _png_embed(data, block)


def extract_metadata(data):
    if sniff_format(data) == "JPEG":
        return MetadataBlock(_jpeg_extract(data))
    return MetadataBlock(_png_extract(data))


# -- pipeline -------------------------------------------------------------------


def fit_within(width, height, max_dimension):
    longest = max(width, height)
    if longest <= max_dimension:
        return width, height
    scale = max_dimension / longest
    return max(1, round(width * scale)), max(1, round(height * scale))


def optimize(data, profile=DEFAULT_PROFILE):
    """Run an uploaded image file through the portal's optimization pipeline."""
    fmt = sniff_format(data)
    end = container_end(data)
    body, trailer = data[:end], data[end:]
    meta = None if profile.strip_metadata else extract_metadata(body)

    image = RasterImage.from_bytes(body)
    size = fit_within(image.width, image.height, profile.max_dimension)
    if size != (image.width, image.height):
        image = image.resized(*size, method=profile.resize_method)

    out = image.encode("JPEG" if profile.force_jpeg else fmt, profile.jpeg_quality)
    if meta:
        out = embed_metadata(out, meta)
    if not profile.truncate_after_eof:
        out += trailer
    return out


# -- LSB steganography ----------------------------------------------------------


def _carrier_channel(image):
    return 2 if image.channels == 3 else 0


def embed_lsb_bits(image, bits):
    """Write ``bits`` into the blue-channel LSBs, row-major, one bit per pixel."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    capacity = image.width * image.height
    if len(bits) > capacity:
        raise PayloadTooLarge(f"{len(bits)} bits exceed the {capacity}-pixel carrier")
    if bits.size and bits.max() > 1:
        raise ValueError("bits must be 0 or 1")
    px = image.pixels.copy()
    ch = _carrier_channel(image)
    plane = px[:, :, ch].reshape(-1)
    plane[: len(bits)] = (plane[: len(bits)] & 0xFE) | bits
    px[:, :, ch] = plane.reshape(image.height, image.width)
    return RasterImage(px)


def extract_lsb_bits(image, count):
    if count > image.width * image.height:
        raise PayloadTooLarge(f"cannot read {count} bits from a {image.width}x{image.height} image")
    plane = image.pixels[:, :, _carrier_channel(image)].reshape(-1)
    return plane[:count] & 1


def embed_lsb(image, payload):
    return embed_lsb_bits(image, np.unpackbits(np.frombuffer(bytes(payload), dtype=np.uint8)))


def extract_lsb(image, length):
    return np.packbits(extract_lsb_bits(image, length * 8)).tobytes()


def bit_error_rate(expected, actual):
    """Fraction of differing bits; a length mismatch counts the missing bits as errors."""
    a = np.unpackbits(np.frombuffer(bytes(expected), dtype=np.uint8))
    b = np.unpackbits(np.frombuffer(bytes(actual), dtype=np.uint8))
    n = max(len(a), len(b))
    if n == 0:
        return 0.0
    common = min(len(a), len(b))
    errors = int((a[:common] != b[:common]).sum()) + (n - common)
    return errors / n


def synthetic_photo(width, height, seed):
    """Smooth colour gradients plus mild noise: a stand-in cover image."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    channels = []
    for _ in range(3):
        fx, fy, phase = rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * (fx * x / width + fy * y / height) + phase)
        channels.append(128 + 90 * wave + rng.normal(0, 6, size=(height, width)))
    return RasterImage(np.clip(np.stack(channels, axis=2), 0, 255).astype(np.uint8))
