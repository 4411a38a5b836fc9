"""Reed-Solomon block splitting and interleaving."""

from qrkey import kernels
from qrkey.errors import UnrecoverableErrors
from qrkey.qr.tables import block_layout


def add_error_correction(data, version, ec_level):
    """Split data codewords into blocks, append ECC, interleave."""
    lengths, ecc = block_layout(version, ec_level)
    if len(data) != sum(lengths):
        raise ValueError(f"expected {sum(lengths)} data codewords, got {len(data)}")
    blocks = []
    pos = 0
    for n in lengths:
        chunk = bytes(data[pos : pos + n])
        pos += n
        blocks.append((chunk, kernels.rs_encode(chunk, ecc)))
    out = bytearray()
    for i in range(max(lengths)):
        for chunk, _ in blocks:
            if i < len(chunk):
                out.append(chunk[i])
    for i in range(ecc):
        for _, parity in blocks:
            out.append(parity[i])
    return bytes(out)


def block_index_map(version, ec_level):
    """For each interleaved codeword position, the (block, offset) it belongs to."""
    lengths, ecc = block_layout(version, ec_level)
    mapping = []
    for i in range(max(lengths)):
        for b, n in enumerate(lengths):
            if i < n:
                mapping.append((b, i))
    for i in range(ecc):
        for b, n in enumerate(lengths):
            mapping.append((b, n + i))
    return mapping


def deinterleave(codewords, version, ec_level):
    lengths, ecc = block_layout(version, ec_level)
    blocks = [bytearray(n + ecc) for n in lengths]
    for value, (b, off) in zip(codewords, block_index_map(version, ec_level)):
        blocks[b][off] = value
    return blocks


def correct_codewords(codewords, version, ec_level):
    """Run RS correction per block; return (data codewords, corrected symbol count)."""
    lengths, ecc = block_layout(version, ec_level)
    data = bytearray()
    fixed = 0
    for index, block in enumerate(deinterleave(codewords, version, ec_level)):
        result = kernels.rs_decode(bytes(block), ecc)
        if result is None:
            raise UnrecoverableErrors(
                f"block {index} of version {version}-{ec_level} exceeds the correction capacity of "
                f"{ecc // 2} codewords"
            )
        corrected, n_errors = result
        fixed += n_errors
        data += corrected[: lengths[index]]
    return bytes(data), fixed
