"""ISO/IEC 18004 symbol geometry and error-correction tables (Model 2)."""

from dataclasses import dataclass, field
from functools import lru_cache

from qrkey.errors import CapacityExceeded

EC_LEVELS = ("L", "M", "Q", "H")

# two-bit level indicator stored in the format information
FORMAT_BITS = {"L": 1, "M": 0, "Q": 3, "H": 2}

# index 0 unused
ECC_CODEWORDS_PER_BLOCK = {
    "L": (-1, 7, 10, 15, 20, 26, 18, 20, 24, 30, 18, 20, 24, 26, 30, 22, 24, 28, 30, 28, 28,
          28, 28, 30, 30, 26, 28, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30),
    "M": (-1, 10, 16, 26, 18, 24, 16, 18, 22, 22, 26, 30, 22, 22, 24, 24, 28, 28, 26, 26, 26,
          26, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28),
    "Q": (-1, 13, 22, 18, 26, 18, 24, 18, 22, 20, 24, 28, 26, 24, 20, 30, 24, 28, 28, 26, 30,
          28, 30, 30, 30, 30, 28, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30),
    "H": (-1, 17, 28, 22, 16, 22, 28, 26, 26, 24, 28, 24, 28, 22, 24, 24, 30, 28, 28, 26, 28,
          30, 24, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30),
}

NUM_BLOCKS = {
    "L": (-1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 4, 4, 4, 4, 4, 6, 6, 6, 6, 7, 8,
          8, 9, 9, 10, 12, 12, 12, 13, 14, 15, 16, 17, 18, 19, 19, 20, 21, 22, 24, 25),
    "M": (-1, 1, 1, 1, 2, 2, 4, 4, 4, 5, 5, 5, 8, 9, 9, 10, 10, 11, 13, 14, 16,
          17, 17, 18, 20, 21, 23, 25, 26, 28, 29, 31, 33, 35, 37, 38, 40, 43, 45, 47, 49),
    "Q": (-1, 1, 1, 2, 2, 4, 4, 6, 6, 8, 8, 8, 10, 12, 16, 12, 17, 16, 18, 21, 20,
          23, 23, 25, 27, 29, 34, 34, 35, 38, 40, 43, 45, 48, 51, 53, 56, 59, 62, 65, 68),
    "H": (-1, 1, 1, 2, 4, 4, 4, 5, 6, 8, 8, 11, 11, 16, 16, 18, 16, 19, 21, 25, 25,
          25, 34, 30, 32, 35, 37, 40, 42, 45, 48, 51, 54, 57, 60, 63, 66, 70, 74, 77, 81),
}

MODE_NUMERIC = 0b0001
MODE_ALPHANUMERIC = 0b0010
MODE_STRUCTURED_APPEND = 0b0011
MODE_BYTE = 0b0100
MODE_FNC1_FIRST = 0b0101
MODE_ECI = 0b0111
MODE_KANJI = 0b1000
MODE_FNC1_SECOND = 0b1001

_COUNT_BITS = {
    MODE_NUMERIC: (10, 12, 14),
    MODE_ALPHANUMERIC: (9, 11, 13),
    MODE_BYTE: (8, 16, 16),
    MODE_KANJI: (8, 10, 12),
}

ALPHANUMERIC_CHARSET = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ $%*+-./:"


def check_level(ec_level):
    if ec_level not in FORMAT_BITS:
        raise ValueError(f"unknown error-correction level {ec_level!r}")
    return ec_level


def side_length(version):
    return 17 + 4 * version


def char_count_bits(mode, version):
    group = 0 if version <= 9 else (1 if version <= 26 else 2)
    return _COUNT_BITS[mode][group]


def alignment_positions(version):
    if version == 1:
        return []
    count = version // 7 + 2
    step = (version * 8 + count * 3 + 5) // (count * 4 - 4) * 2
    size = side_length(version)
    result = [size - 7 - i * step for i in range(count - 1)] + [6]
    return sorted(result)


def raw_data_modules(version):
    """Modules left for codewords after all function patterns (incl. remainder bits)."""
    result = (16 * version + 128) * version + 64
    if version >= 2:
        count = version // 7 + 2
        result -= (25 * count - 10) * count - 55
        if version >= 7:
            result -= 36
    return result


def total_codewords(version):
    return raw_data_modules(version) // 8


def data_codewords(version, ec_level):
    return total_codewords(version) - ECC_CODEWORDS_PER_BLOCK[ec_level][version] * NUM_BLOCKS[ec_level][version]


def byte_capacity(version, ec_level):
    bits = data_codewords(version, ec_level) * 8 - 4 - char_count_bits(MODE_BYTE, version)
    return bits // 8


def numeric_capacity(version, ec_level):
    bits = data_codewords(version, ec_level) * 8 - 4 - char_count_bits(MODE_NUMERIC, version)
    digits = bits // 10 * 3
    rest = bits % 10
    if rest >= 7:
        digits += 2
    elif rest >= 4:
        digits += 1
    return digits


def alphanumeric_capacity(version, ec_level):
    bits = data_codewords(version, ec_level) * 8 - 4 - char_count_bits(MODE_ALPHANUMERIC, version)
    chars = bits // 11 * 2
    if bits % 11 >= 6:
        chars += 1
    return chars


@lru_cache(maxsize=None)
def block_layout(version, ec_level):
    """Return (data lengths per block, ecc codewords per block); short blocks first."""
    blocks = NUM_BLOCKS[ec_level][version]
    ecc = ECC_CODEWORDS_PER_BLOCK[ec_level][version]
    raw = total_codewords(version)
    short_len = raw // blocks
    num_short = blocks - raw % blocks
    lengths = tuple(short_len - ecc + (0 if i < num_short else 1) for i in range(blocks))
    return lengths, ecc


def select_version(payload_len, ec_level):
    """Smallest version whose byte-mode capacity at ``ec_level`` holds ``payload_len`` bytes."""
    check_level(ec_level)
    if payload_len < 1:
        raise ValueError("payload_len must be >= 1")
    for version in range(1, 41):
        if byte_capacity(version, ec_level) >= payload_len:
            return version
    raise CapacityExceeded(
        f"{payload_len} bytes exceed the version-40 byte capacity at level {ec_level} "
        f"({byte_capacity(40, ec_level)} bytes)"
    )


@dataclass(frozen=True)
class SymbolFamily:
    """One column of the published symbol-family comparison."""

    name: str
    max_size: int
    numerals: int
    alphanumeric: int
    binary: int
    approximate: frozenset = field(default_factory=frozenset)

    def cell(self, attr):
        value = getattr(self, attr)
        text = f"{value}x{value}" if attr == "max_size" else str(value)
        return ("~" + text) if attr in self.approximate else text


SYMBOL_FAMILIES = (
    SymbolFamily("QR code Model 1", 73, 1101, 667, 458),
    SymbolFamily("QR code Model 2", 177, 7089, 4296, 2953),
    SymbolFamily("Micro QR code", 17, 35, 21, 15),
    SymbolFamily("iQR code", 422, 40637, 24626, 16928, frozenset({"alphanumeric", "binary"})),
)

FAMILY_ROWS = (
    ("Max Size [modules]", "max_size"),
    ("Max Capacity in numerals", "numerals"),
    ("Max Capacity in alphanumeric", "alphanumeric"),
    ("Max Capacity in binary [bytes]", "binary"),
)


@dataclass(frozen=True)
class CapacityTable:
    binary: dict
    families: tuple = SYMBOL_FAMILIES

    def __getitem__(self, key):
        return self.binary[key]

    def family(self, name):
        for fam in self.families:
            if fam.name == name:
                return fam
        raise KeyError(name)

    def format_families(self):
        """Render the symbol-family comparison as aligned text rows."""
        header = ["Parameters"] + [f.name for f in self.families]
        rows = [header] + [[label] + [f.cell(attr) for f in self.families] for label, attr in FAMILY_ROWS]
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


@lru_cache(maxsize=1)
def capacity_table():
    binary = {(v, ec): byte_capacity(v, ec) for v in range(1, 41) for ec in EC_LEVELS}
    return CapacityTable(binary=binary)
