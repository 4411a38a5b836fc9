"""QR decoding from raster images.

Scope: one axis-aligned, unrotated symbol on a light background. Pipeline:
hybrid block binarization, finder-pattern search on row runs with vertical
cross-checks, affine grid sampling from the three finder centres, format and
version recovery, Reed-Solomon correction, and segment parsing.
"""

import math
from dataclasses import dataclass

import numpy as np

from qrkey import kernels
from qrkey.errors import FormatInfoUnreadable, MalformedSegment, NoSymbolFound, UnrecoverableErrors
from qrkey.qr.blocks import correct_codewords
from qrkey.qr.layout import (
    FORMAT_WORDS,
    VERSION_WORDS,
    data_coords,
    format_coords,
    mask_pattern,
    version_coords,
)
from qrkey.qr.tables import (
    ALPHANUMERIC_CHARSET,
    MODE_ALPHANUMERIC,
    MODE_BYTE,
    MODE_ECI,
    MODE_FNC1_FIRST,
    MODE_FNC1_SECOND,
    MODE_KANJI,
    MODE_NUMERIC,
    MODE_STRUCTURED_APPEND,
    char_count_bits,
    side_length,
    total_codewords,
)
from qrkey.raster import RasterImage

BLOCK = 8
MIN_SIDE = 64


@dataclass(frozen=True)
class DecodeResult:
    payload: bytes
    version: int
    ec_level: str
    mask: int
    corrected: int


# -- binarization -----------------------------------------------------------


def binarize(gray):
    """Adaptive mean threshold over 8x8 blocks; True = dark."""
    g = np.ascontiguousarray(gray, dtype=np.uint8)
    h, w = g.shape
    bp = kernels.black_points(g, BLOCK).astype(np.int64)
    sub_h, sub_w = bp.shape
    # 5x5 neighbourhood average of block black points, window clamped inside the grid
    padded = np.pad(bp, 2, mode="edge") if sub_h >= 5 and sub_w >= 5 else None
    if padded is not None:
        cs = padded.cumsum(0).cumsum(1)
        cs = np.pad(cs, ((1, 0), (1, 0)))
        ys = np.clip(np.arange(sub_h), 2, sub_h - 3)
        xs = np.clip(np.arange(sub_w), 2, sub_w - 3)
        # window [y-2, y+2] in bp coordinates is [y, y+4] in padded coordinates
        y0, y1 = ys[:, None], ys[:, None] + 5
        x0, x1 = xs[None, :], xs[None, :] + 5
        thresh = (cs[y1, x1] - cs[y0, x1] - cs[y1, x0] + cs[y0, x0]) // 25
    else:
        thresh = np.full_like(bp, int(bp.mean()))
    # expand to pixels; trailing partial blocks reuse the last block's threshold
    rows = np.minimum(np.arange(h) // BLOCK, sub_h - 1)
    cols = np.minimum(np.arange(w) // BLOCK, sub_w - 1)
    return g <= thresh[rows][:, cols]


# -- finder patterns --------------------------------------------------------


def _runs(line):
    """Run starts, lengths, and colours of a 1-D boolean array."""
    change = np.flatnonzero(line[1:] != line[:-1]) + 1
    starts = np.concatenate(([0], change))
    lengths = np.diff(np.concatenate((starts, [len(line)])))
    return starts, lengths, line[starts]


def _ratio_ok(counts):
    total = sum(counts)
    if total < 7:
        return False
    module = total / 7.0
    tol = module / 2.0
    return (
        abs(module - counts[0]) < tol
        and abs(module - counts[1]) < tol
        and abs(3 * module - counts[2]) < 3 * tol
        and abs(module - counts[3]) < tol
        and abs(module - counts[4]) < tol
    )


def _cross_check(line, pos):
    """Check a 1:1:3:1:1 pattern centred on ``pos``; return (centre, total) or None."""
    if not line[pos]:
        return None
    starts, lengths, colors = _runs(line)
    k = int(np.searchsorted(starts, pos, side="right")) - 1
    if k < 2 or k + 2 >= len(lengths):
        return None
    counts = [int(x) for x in lengths[k - 2 : k + 3]]
    if not _ratio_ok(counts):
        return None
    return starts[k] + lengths[k] / 2.0, sum(counts)


@dataclass
class _Candidate:
    x: float
    y: float
    module: float
    count: int = 1

    def near(self, x, y, module):
        if abs(x - self.x) <= module and abs(y - self.y) <= module:
            return abs(module - self.module) <= 1.0 or abs(module - self.module) <= self.module
        return False

    def merge(self, x, y, module):
        n = self.count
        self.x = (self.x * n + x) / (n + 1)
        self.y = (self.y * n + y) / (n + 1)
        self.module = (self.module * n + module) / (n + 1)
        self.count = n + 1


def find_finder_candidates(bits):
    h, w = bits.shape
    found = []
    for y in range(h):
        row = bits[y]
        starts, lengths, colors = _runs(row)
        if len(lengths) < 5:
            continue
        for k in range(2, len(lengths) - 2):
            if not colors[k] or not colors[k - 2]:
                continue
            counts = [int(x) for x in lengths[k - 2 : k + 3]]
            if not _ratio_ok(counts):
                continue
            cx = starts[k] + lengths[k] / 2.0
            col = int(cx)
            vert = _cross_check(bits[:, col], y)
            if vert is None:
                continue
            cy, vtotal = vert
            horiz = _cross_check(row if int(cy) == y else bits[int(cy)], col)
            if horiz is None:
                continue
            cx, htotal = horiz
            module = (htotal + vtotal) / 14.0
            for cand in found:
                if cand.near(cx, cy, module):
                    cand.merge(cx, cy, module)
                    break
            else:
                found.append(_Candidate(cx, cy, module))
    return found


def _order(a, b, c):
    """Return (top_left, top_right, bottom_left) for three finder centres."""
    def dist(p, q):
        return math.hypot(p.x - q.x, p.y - q.y)

    d_ab, d_bc, d_ac = dist(a, b), dist(b, c), dist(a, c)
    if d_bc >= d_ab and d_bc >= d_ac:
        tl, p, q = a, b, c
    elif d_ac >= d_ab and d_ac >= d_bc:
        tl, p, q = b, a, c
    else:
        tl, p, q = c, a, b
    cross = (p.x - tl.x) * (q.y - tl.y) - (p.y - tl.y) * (q.x - tl.x)
    # image y grows downward: top-right -> bottom-left turns clockwise
    if cross < 0:
        p, q = q, p
    return tl, p, q


def select_finders(candidates):
    pool = sorted((c for c in candidates if c.count >= 2), key=lambda c: -c.count)[:12]
    if len(pool) < 3:
        pool = sorted(candidates, key=lambda c: -c.count)[:12]
    best = None
    for i in range(len(pool)):
        for j in range(i + 1, len(pool)):
            for k in range(j + 1, len(pool)):
                tl, tr, bl = _order(pool[i], pool[j], pool[k])
                ms = (tl.module + tr.module + bl.module) / 3.0
                spread = max(abs(c.module - ms) for c in (tl, tr, bl)) / ms
                if spread > 0.5:
                    continue
                d1 = math.hypot(tr.x - tl.x, tr.y - tl.y)
                d2 = math.hypot(bl.x - tl.x, bl.y - tl.y)
                if d1 < 7 * ms or d2 < 7 * ms:
                    continue
                dot = ((tr.x - tl.x) * (bl.x - tl.x) + (tr.y - tl.y) * (bl.y - tl.y)) / (d1 * d2)
                score = abs(d1 - d2) / max(d1, d2) + abs(dot) + spread
                if best is None or score < best[0]:
                    best = (score, (tl, tr, bl))
    if best is None or best[0] > 0.5:
        raise NoSymbolFound("could not locate three consistent finder patterns")
    return best[1]


def estimate_dimension(tl, tr, bl):
    """Fractional symbol side implied by finder spacing and module size."""
    ms = (tl.module + tr.module + bl.module) / 3.0
    d1 = math.hypot(tr.x - tl.x, tr.y - tl.y) / ms
    d2 = math.hypot(bl.x - tl.x, bl.y - tl.y) / ms
    return (d1 + d2) / 2.0 + 7.0


def candidate_versions(raw_dim, spread=2):
    """Versions near the estimate, closest first."""
    base = int(round((raw_dim - 17) / 4.0))
    versions = [v for v in range(base - spread, base + spread + 1) if 1 <= v <= 40]
    if not versions:
        raise NoSymbolFound(f"implausible symbol dimension {raw_dim:.1f}")
    return sorted(versions, key=lambda v: abs(side_length(v) - raw_dim))


# -- sampling ----------------------------------------------------------------


def sample_grid(bits, tl, tr, bl, dim):
    """Sample module centres using the affine map fixed by the finder centres."""
    span = dim - 7.0
    idx = np.arange(dim) - 3.0  # module centres sit at i + 0.5; finder centres at 3.5
    u = idx[None, :] / span  # column fraction
    v = idx[:, None] / span  # row fraction
    xs = tl.x + u * (tr.x - tl.x) + v * (bl.x - tl.x)
    ys = tl.y + u * (tr.y - tl.y) + v * (bl.y - tl.y)
    h, w = bits.shape
    xi = np.clip(np.floor(xs).astype(np.intp), 0, w - 1)
    yi = np.clip(np.floor(ys).astype(np.intp), 0, h - 1)
    ms = (tl.module + tr.module + bl.module) / 3.0
    if ms < 3:
        return bits[yi, xi]
    # majority vote over the 3x3 pixel neighbourhood of each centre
    votes = np.zeros((dim, dim), dtype=np.int32)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            votes += bits[np.clip(yi + dy, 0, h - 1), np.clip(xi + dx, 0, w - 1)]
    return votes >= 5


# -- matrix decoding -----------------------------------------------------------


def read_format(modules):
    size = modules.shape[0]
    best = None
    for coords in format_coords(size):
        word = 0
        for i, (r, c) in enumerate(coords):
            word |= int(modules[r, c]) << i
        for valid, info in FORMAT_WORDS.items():
            d = bin(word ^ valid).count("1")
            if best is None or d < best[0]:
                best = (d, info)
    if best[0] > 3:
        raise FormatInfoUnreadable(f"format information is {best[0]} bits from any valid word")
    return best[1]


def read_version(modules):
    """Version from the version-information blocks, or None if unreadable."""
    size = modules.shape[0]
    best = None
    for coords in version_coords(size):
        word = 0
        for i, (r, c) in enumerate(coords):
            word |= int(modules[r, c]) << i
        for valid, version in VERSION_WORDS.items():
            d = bin(word ^ valid).count("1")
            if best is None or d < best[0]:
                best = (d, version)
    return best[1] if best[0] <= 3 else None


def read_codewords(modules, version, mask):
    size = modules.shape[0]
    rows, cols = data_coords(version)
    bits = modules[rows, cols] ^ mask_pattern(mask, size)[rows, cols]
    n = total_codewords(version) * 8
    return np.packbits(bits[:n].astype(np.uint8)).tobytes()


class _BitReader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def remaining(self):
        return len(self.data) * 8 - self.pos

    def read(self, n):
        if n > self.remaining():
            raise MalformedSegment("segment runs past the end of the data codewords")
        value = 0
        for _ in range(n):
            byte = self.data[self.pos >> 3]
            value = value << 1 | (byte >> (7 - (self.pos & 7)) & 1)
            self.pos += 1
        return value


def parse_segments(data, version):
    """Concatenate the payload of every segment in the data codewords."""
    reader = _BitReader(data)
    out = bytearray()
    while reader.remaining() >= 4:
        mode = reader.read(4)
        if mode == 0:
            break
        if mode == MODE_BYTE:
            count = reader.read(char_count_bits(MODE_BYTE, version))
            for _ in range(count):
                out.append(reader.read(8))
        elif mode == MODE_NUMERIC:
            count = reader.read(char_count_bits(MODE_NUMERIC, version))
            while count >= 3:
                value = reader.read(10)
                if value > 999:
                    raise MalformedSegment("numeric group out of range")
                out += b"%03d" % value
                count -= 3
            if count == 2:
                value = reader.read(7)
                if value > 99:
                    raise MalformedSegment("numeric group out of range")
                out += b"%02d" % value
            elif count == 1:
                value = reader.read(4)
                if value > 9:
                    raise MalformedSegment("numeric group out of range")
                out += b"%d" % value
        elif mode == MODE_ALPHANUMERIC:
            count = reader.read(char_count_bits(MODE_ALPHANUMERIC, version))
            while count >= 2:
                value = reader.read(11)
                if value >= 45 * 45:
                    raise MalformedSegment("alphanumeric pair out of range")
                out += (ALPHANUMERIC_CHARSET[value // 45] + ALPHANUMERIC_CHARSET[value % 45]).encode()
                count -= 2
            if count:
                value = reader.read(6)
                if value >= 45:
                    raise MalformedSegment("alphanumeric character out of range")
                out += ALPHANUMERIC_CHARSET[value].encode()
        elif mode == MODE_KANJI:
            count = reader.read(char_count_bits(MODE_KANJI, version))
            for _ in range(count):
                value = reader.read(13)
                word = (value // 0xC0) << 8 | (value % 0xC0)
                word += 0x8140 if word < 0x1F00 else 0xC140
                out += word.to_bytes(2, "big")
        elif mode == MODE_ECI:
            first = reader.read(8)
            if first & 0x80:
                reader.read(8 if first & 0x40 == 0 else 16)
        elif mode == MODE_STRUCTURED_APPEND:
            reader.read(16)
        elif mode == MODE_FNC1_SECOND:
            reader.read(8)
        elif mode == MODE_FNC1_FIRST:
            pass
        else:
            raise MalformedSegment(f"unknown mode indicator {mode:04b}")
    return bytes(out)


def decode_matrix(modules, version=None):
    """Decode a sampled module grid (True = dark)."""
    modules = np.asarray(modules, dtype=bool)
    size = modules.shape[0]
    if version is None:
        version = (size - 17) // 4
    if side_length(version) != size:
        raise NoSymbolFound(f"grid of side {size} is not a valid symbol size")
    ec_level, mask = read_format(modules)
    codewords = read_codewords(modules, version, mask)
    data, fixed = correct_codewords(codewords, version, ec_level)
    return DecodeResult(parse_segments(data, version), version, ec_level, mask, fixed)


def _prepare(image):
    if isinstance(image, (bytes, bytearray, memoryview)):
        image = RasterImage.from_bytes(bytes(image))
    gray = image.gray() if hasattr(image, "gray") else np.asarray(image, dtype=np.uint8)
    h, w = gray.shape
    if min(h, w) < MIN_SIDE:
        factor = -(-MIN_SIDE // min(h, w))
        gray = np.repeat(np.repeat(gray, factor, axis=0), factor, axis=1)
    return gray


def locate(image):
    """Binarize and find the symbol; return (bits, (tl, tr, bl), fractional dimension)."""
    bits = binarize(_prepare(image))
    candidates = find_finder_candidates(bits)
    if len(candidates) < 3:
        raise NoSymbolFound(f"found {len(candidates)} finder-pattern candidates, need 3")
    finders = select_finders(candidates)
    return bits, finders, estimate_dimension(*finders)


def decode_detailed(image):
    bits, (tl, tr, bl), raw_dim = locate(image)
    queue = candidate_versions(raw_dim)
    tried = set()
    first_error = None
    while queue:
        version = queue.pop(0)
        if version in tried:
            continue
        tried.add(version)
        modules = sample_grid(bits, tl, tr, bl, side_length(version))
        if version >= 7:
            read = read_version(modules)
            if read != version:
                if read is not None and read not in tried:
                    queue.insert(0, read)
                continue
        for grid in (modules, modules.T):  # the mirrored reading order is legal
            try:
                return decode_matrix(grid, version)
            except (UnrecoverableErrors, FormatInfoUnreadable, MalformedSegment) as exc:
                if first_error is None:
                    first_error = exc
    if first_error is None:
        raise NoSymbolFound(f"no version near dimension {raw_dim:.1f} has readable version information")
    raise first_error


def decode(image):
    """Recover the payload bytes of the single QR symbol in ``image``.

    ``image`` may be a RasterImage, a 2-D grayscale array, or PNG/JPEG bytes.
    """
    return decode_detailed(image).payload
