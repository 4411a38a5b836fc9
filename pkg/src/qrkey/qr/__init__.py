"""QR symbology: byte-mode encoding, rasterizing, and decoding."""

from qrkey.qr.decoder import DecodeResult, decode, decode_detailed, decode_matrix
from qrkey.qr.encoder import QrSymbol, codewords_for, encode, render, symbol_from_codewords
from qrkey.qr.tables import CapacityTable, capacity_table, select_version
from qrkey.raster import RasterImage

__all__ = [
    "CapacityTable",
    "DecodeResult",
    "QrSymbol",
    "RasterImage",
    "capacity_table",
    "codewords_for",
    "decode",
    "decode_detailed",
    "decode_matrix",
    "encode",
    "render",
    "select_version",
    "symbol_from_codewords",
]
