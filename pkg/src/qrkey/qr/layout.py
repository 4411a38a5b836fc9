"""Module placement shared by the encoder and the decoder."""

from functools import lru_cache

import numpy as np

from qrkey.qr.tables import FORMAT_BITS, alignment_positions, side_length

FORMAT_XOR = 0x5412


def format_bits(ec_level, mask):
    """15-bit BCH(15,5) format word, already XORed with the fixed pattern."""
    data = FORMAT_BITS[ec_level] << 3 | mask
    rem = data
    for _ in range(10):
        rem = (rem << 1) ^ ((rem >> 9) * 0x537)
    return (data << 10 | rem) ^ FORMAT_XOR


def version_bits(version):
    """18-bit BCH(18,6) version word (versions 7 and up)."""
    rem = version
    for _ in range(12):
        rem = (rem << 1) ^ ((rem >> 11) * 0x1F25)
    return version << 12 | rem


# (level, mask) for every valid format word
FORMAT_WORDS = {format_bits(ec, m): (ec, m) for ec in FORMAT_BITS for m in range(8)}
VERSION_WORDS = {version_bits(v): v for v in range(7, 41)}


def format_coords(size):
    """Coordinates (row, col) of format bit i, for both copies."""
    first = [(i, 8) for i in range(6)] + [(7, 8), (8, 8), (8, 7)] + [(8, 14 - i) for i in range(9, 15)]
    second = [(8, size - 1 - i) for i in range(8)] + [(size - 15 + i, 8) for i in range(8, 15)]
    return first, second


def version_coords(size):
    """Coordinates of version bit i, for the top-right and bottom-left blocks."""
    top_right = [(i // 3, size - 11 + i % 3) for i in range(18)]
    bottom_left = [(size - 11 + i % 3, i // 3) for i in range(18)]
    return top_right, bottom_left


def _finder(modules, is_func, row, col):
    size = modules.shape[0]
    for dy in range(-4, 5):
        for dx in range(-4, 5):
            r, c = row + dy, col + dx
            if 0 <= r < size and 0 <= c < size:
                dist = max(abs(dx), abs(dy))
                modules[r, c] = dist not in (2, 4)
                is_func[r, c] = True


@lru_cache(maxsize=None)
def function_template(version):
    """Return (modules, is_function) with every function pattern drawn.

    Format areas are reserved (light) and filled in by the encoder.
    """
    size = side_length(version)
    modules = np.zeros((size, size), dtype=bool)
    is_func = np.zeros((size, size), dtype=bool)

    timing = (np.arange(size) % 2) == 0
    modules[6, :] = timing
    modules[:, 6] = timing
    is_func[6, :] = True
    is_func[:, 6] = True

    for row, col in ((3, 3), (3, size - 4), (size - 4, 3)):
        _finder(modules, is_func, row, col)

    positions = alignment_positions(version)
    last = len(positions) - 1
    for i, r in enumerate(positions):
        for j, c in enumerate(positions):
            if (i, j) in ((0, 0), (0, last), (last, 0)):
                continue
            for dy in range(-2, 3):
                for dx in range(-2, 3):
                    modules[r + dy, c + dx] = max(abs(dx), abs(dy)) != 1
                    is_func[r + dy, c + dx] = True

    first, second = format_coords(size)
    for r, c in first + second:
        is_func[r, c] = True
        modules[r, c] = False
    # the dark module beside the lower-left format copy
    modules[size - 8, 8] = True
    is_func[size - 8, 8] = True

    if version >= 7:
        bits = version_bits(version)
        for block in version_coords(size):
            for i, (r, c) in enumerate(block):
                modules[r, c] = bool(bits >> i & 1)
                is_func[r, c] = True

    modules.setflags(write=False)
    is_func.setflags(write=False)
    return modules, is_func


@lru_cache(maxsize=None)
def data_coords(version):
    """Row and column arrays of data modules in placement (zigzag) order."""
    _, is_func = function_template(version)
    size = is_func.shape[0]
    rows, cols = [], []
    right = size - 1
    while right >= 1:
        if right == 6:
            right = 5
        upward = ((right + 1) & 2) == 0
        for vert in range(size):
            y = size - 1 - vert if upward else vert
            for j in range(2):
                x = right - j
                if not is_func[y, x]:
                    rows.append(y)
                    cols.append(x)
        right -= 2
    r = np.array(rows, dtype=np.intp)
    c = np.array(cols, dtype=np.intp)
    r.setflags(write=False)
    c.setflags(write=False)
    return r, c


@lru_cache(maxsize=None)
def mask_pattern(mask, size):
    """Boolean grid, True where mask ``mask`` flips a module (row=y, col=x)."""
    y, x = np.indices((size, size))
    if mask == 0:
        m = (x + y) % 2 == 0
    elif mask == 1:
        m = y % 2 == 0
    elif mask == 2:
        m = x % 3 == 0
    elif mask == 3:
        m = (x + y) % 3 == 0
    elif mask == 4:
        m = (x // 3 + y // 2) % 2 == 0
    elif mask == 5:
        m = x * y % 2 + x * y % 3 == 0
    elif mask == 6:
        m = (x * y % 2 + x * y % 3) % 2 == 0
    elif mask == 7:
        m = ((x + y) % 2 + x * y % 3) % 2 == 0
    else:
        raise ValueError(f"mask must be 0..7, got {mask}")
    m.setflags(write=False)
    return m


def write_format(modules, ec_level, mask):
    size = modules.shape[0]
    bits = format_bits(ec_level, mask)
    first, second = format_coords(size)
    for block in (first, second):
        for i, (r, c) in enumerate(block):
            modules[r, c] = bool(bits >> i & 1)
