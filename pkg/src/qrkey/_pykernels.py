"""Pure-Python implementations of the hot kernels.

Same algorithms and signatures as ``_ckernels.pyx``; selected by
:mod:`qrkey.kernels` when the compiled module is missing or disabled.
Codeword sequences are highest-degree coefficient first, as QR stores them.
"""

import numpy as np

IMPLEMENTATION = "python"

GF_EXP = [0] * 512
GF_LOG = [0] * 256
_x = 1
for _i in range(255):
    GF_EXP[_i] = _x
    GF_LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= 0x11D
for _i in range(255, 512):
    GF_EXP[_i] = GF_EXP[_i - 255]
del _x, _i


def gf_mul(a, b):
    if a == 0 or b == 0:
        return 0
    return GF_EXP[GF_LOG[a] + GF_LOG[b]]


def gf_inv(a):
    return GF_EXP[255 - GF_LOG[a]]


def rs_divisor(nsym):
    """Generator polynomial prod(x - a^i, i < nsym) without its leading 1."""
    result = [0] * (nsym - 1) + [1]
    root = 1
    for _ in range(nsym):
        for j in range(nsym):
            result[j] = gf_mul(result[j], root)
            if j + 1 < nsym:
                result[j] ^= result[j + 1]
        root = gf_mul(root, 2)
    return result


def rs_encode(data, nsym):
    divisor = rs_divisor(nsym)
    rem = [0] * nsym
    for b in data:
        factor = b ^ rem.pop(0)
        rem.append(0)
        if factor:
            lf = GF_LOG[factor]
            for i, coef in enumerate(divisor):
                if coef:
                    rem[i] ^= GF_EXP[GF_LOG[coef] + lf]
    return bytes(rem)


def _eval_low_first(poly, x):
    y = 0
    for coef in reversed(poly):
        y = gf_mul(y, x) ^ coef
    return y


def rs_syndromes(msg, nsym):
    synd = [0] * nsym
    for j in range(nsym):
        root = GF_EXP[j]
        y = 0
        for c in msg:
            y = gf_mul(y, root) ^ c
        synd[j] = y
    return synd


def rs_decode(msg, nsym):
    """Correct up to nsym // 2 symbol errors.

    Returns ``(corrected_bytes, error_count)`` or ``None`` when the word is
    not within the correction radius of any codeword.
    """
    n = len(msg)
    synd = rs_syndromes(msg, nsym)
    if not any(synd):
        return bytes(msg), 0

    # Berlekamp-Massey; polynomials low-degree first
    C = [1] + [0] * nsym
    B = [1] + [0] * nsym
    L = 0
    m = 1
    b = 1
    for k in range(nsym):
        d = synd[k]
        for i in range(1, L + 1):
            d ^= gf_mul(C[i], synd[k - i])
        if d == 0:
            m += 1
            continue
        coef = gf_mul(d, gf_inv(b))
        if 2 * L <= k:
            T = C[:]
            for i in range(m, nsym + 1):
                C[i] ^= gf_mul(coef, B[i - m])
            L = k + 1 - L
            B = T
            b = d
            m = 1
        else:
            for i in range(m, nsym + 1):
                C[i] ^= gf_mul(coef, B[i - m])
            m += 1
    if 2 * L > nsym:
        return None
    locator = C[: L + 1]

    # Chien search over every codeword position; power p sits at index n-1-p
    positions = []
    for p in range(n):
        if _eval_low_first(locator, GF_EXP[(255 - p) % 255]) == 0:
            positions.append(p)
    if len(positions) != L:
        return None

    omega = [0] * nsym
    for i in range(nsym):
        acc = 0
        for j in range(min(i, L) + 1):
            acc ^= gf_mul(synd[i - j], locator[j])
        omega[i] = acc
    deriv = [locator[i] if i % 2 == 1 else 0 for i in range(1, L + 1)]

    out = bytearray(msg)
    for p in positions:
        x = GF_EXP[p]
        x_inv = GF_EXP[(255 - p) % 255]
        denom = _eval_low_first(deriv, x_inv)
        if denom == 0:
            return None
        magnitude = gf_mul(x, gf_mul(_eval_low_first(omega, x_inv), gf_inv(denom)))
        out[n - 1 - p] ^= magnitude
    if any(rs_syndromes(out, nsym)):
        return None
    return bytes(out), L


_N3_A = np.array([1, 0, 1, 1, 1, 0, 1, 0, 0, 0, 0], dtype=np.uint8)
_N3_B = _N3_A[::-1].copy()


def _runs_penalty(lines):
    total = 0
    for line in lines:
        run = 1
        prev = line[0]
        for v in line[1:]:
            if v == prev:
                run += 1
            else:
                if run >= 5:
                    total += run - 2
                run = 1
                prev = v
        if run >= 5:
            total += run - 2
    return total


def _finder_like(lines):
    count = 0
    width = lines.shape[1]
    for start in range(width - 10):
        window = lines[:, start : start + 11]
        count += int(np.all(window == _N3_A, axis=1).sum())
        count += int(np.all(window == _N3_B, axis=1).sum())
    return count


def mask_penalty(modules):
    """Sum of the four ISO/IEC 18004 mask penalty rules (N1=3, N2=3, N3=40, N4=10)."""
    m = np.asarray(modules, dtype=np.uint8)
    size = m.shape[0]
    rows = m.tolist()
    cols = m.T.tolist()
    score = _runs_penalty(rows) + _runs_penalty(cols)
    block = (m[:-1, :-1] == m[1:, :-1]) & (m[:-1, :-1] == m[:-1, 1:]) & (m[:-1, :-1] == m[1:, 1:])
    score += 3 * int(block.sum())
    score += 40 * (_finder_like(m) + _finder_like(m.T))
    total = size * size
    dark = int(m.sum())
    score += 10 * (abs(dark * 20 - total * 10) // total)
    return score


def black_points(gray, block=8, min_range=24):
    """Per-block black point for the hybrid adaptive binarizer.

    Low-contrast blocks are assumed to be background (``min / 2``) unless
    their already-computed upper/left neighbours suggest the block sits
    inside a dark region.
    """
    g = np.asarray(gray, dtype=np.uint8)
    h, w = g.shape
    sub_h = (h + block - 1) // block
    sub_w = (w + block - 1) // block
    max_y = h - block
    max_x = w - block
    out = np.zeros((sub_h, sub_w), dtype=np.int32)
    for y in range(sub_h):
        yo = min(y * block, max_y)
        for x in range(sub_w):
            xo = min(x * block, max_x)
            tile = g[yo : yo + block, xo : xo + block]
            lo = int(tile.min())
            hi = int(tile.max())
            average = int(tile.sum(dtype=np.int64)) // (block * block)
            if hi - lo <= min_range:
                average = lo // 2
                if y > 0 and x > 0:
                    neighbour = (int(out[y - 1, x]) + 2 * int(out[y, x - 1]) + int(out[y - 1, x - 1])) // 4
                    if lo < neighbour:
                        average = neighbour
            out[y, x] = average
    return out
