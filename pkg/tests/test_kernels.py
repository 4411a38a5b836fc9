"""Reed-Solomon, mask penalty and binarization kernels, both implementations."""

import random
import re

import numpy as np
import pytest

from qrkey import _pykernels, kernels

IMPLS = [pytest.param(_pykernels, id="python")]
if kernels.compiled is not None:
    IMPLS.append(pytest.param(kernels.compiled, id="cython"))


# independent GF(256) arithmetic: carry-less multiply then reduce by 0x11D
def _clmul(a, b):
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        b >>= 1
    for bit in range(15, 7, -1):
        if r & (1 << bit):
            r ^= 0x11D << (bit - 8)
    return r


def _poly_eval(codeword, x):
    y = 0
    for c in codeword:
        y = _clmul(y, x) ^ c
    return y


def _alpha(i):
    v = 1
    for _ in range(i):
        v = _clmul(v, 2)
    return v


# the 1-M symbol for numeric "01234567" (worked example in the symbology standard)
KNOWN = [
    (
        "10 20 0C 56 61 80 EC 11 EC 11 EC 11 EC 11 EC 11",
        "A5 24 D4 C1 ED 36 C7 87 2C 55",
    ),
]


def test_selection_reports_an_implementation():
    assert kernels.IMPLEMENTATION in ("python", "cython")
    if kernels.compiled is not None:
        assert kernels.compiled.IMPLEMENTATION == "cython"


@pytest.mark.parametrize("impl", IMPLS)
@pytest.mark.parametrize("data,ecc", KNOWN)
def test_rs_encode_known_vectors(impl, data, ecc):
    assert impl.rs_encode(bytes.fromhex(data), 10).hex(" ").upper() == ecc


@pytest.mark.parametrize("impl", IMPLS)
def test_rs_codewords_vanish_at_generator_roots(impl):
    rng = random.Random(3)
    for nsym in (7, 10, 17, 22, 28, 30):
        data = bytes(rng.getrandbits(8) for _ in range(rng.randint(1, 120)))
        word = data + impl.rs_encode(data, nsym)
        assert all(_poly_eval(word, _alpha(i)) == 0 for i in range(nsym))


@pytest.mark.parametrize("impl", IMPLS)
def test_rs_decode_corrects_up_to_half_the_parity(impl):
    rng = random.Random(5)
    for _ in range(200):
        nsym = rng.choice((10, 18, 22, 28, 30))
        data = bytes(rng.getrandbits(8) for _ in range(rng.randint(1, 60)))
        word = bytearray(data + impl.rs_encode(data, nsym))
        nerr = rng.randint(0, nsym // 2)
        for pos in rng.sample(range(len(word)), nerr):
            word[pos] ^= rng.randrange(1, 256)
        result = impl.rs_decode(bytes(word), nsym)
        assert result is not None
        fixed, count = result
        assert fixed[: len(data)] == data
        assert count == nerr


@pytest.mark.parametrize("impl", IMPLS)
def test_rs_decode_beyond_bound_never_returns_a_noncodeword(impl):
    rng = random.Random(9)
    nsym = 28
    for _ in range(100):
        data = bytes(rng.getrandbits(8) for _ in range(15))
        word = bytearray(data + impl.rs_encode(data, nsym))
        for pos in rng.sample(range(len(word)), nsym // 2 + 1 + rng.randint(0, 8)):
            word[pos] ^= rng.randrange(1, 256)
        result = impl.rs_decode(bytes(word), nsym)
        if result is not None:
            # a miscorrection must still land on a valid codeword
            fixed = result[0]
            assert all(_poly_eval(fixed, _alpha(i)) == 0 for i in range(nsym))


@pytest.mark.skipif(kernels.compiled is None, reason="extension not built")
def test_rs_parity_between_implementations():
    rng = random.Random(11)
    c, p = kernels.compiled, _pykernels
    for _ in range(300):
        nsym = rng.choice((7, 16, 26, 28))
        data = bytes(rng.getrandbits(8) for _ in range(rng.randint(1, 100)))
        assert c.rs_encode(data, nsym) == p.rs_encode(data, nsym)
        word = bytearray(data + p.rs_encode(data, nsym))
        for pos in rng.sample(range(len(word)), rng.randint(0, nsym)):
            word[pos] ^= rng.randrange(1, 256)
        assert c.rs_decode(bytes(word), nsym) == p.rs_decode(bytes(word), nsym)


# -- mask penalty ---------------------------------------------------------------------------


def _naive_penalty(m):
    """Straight transcription of the four scoring rules, string based."""
    m = np.asarray(m, dtype=bool)
    n = m.shape[0]
    lines = ["".join("1" if v else "0" for v in row) for row in m]
    lines += ["".join("1" if v else "0" for v in col) for col in m.T]
    score = 0
    for line in lines:
        for run in re.findall(r"0+|1+", line):
            if len(run) >= 5:
                score += 3 + len(run) - 5
        # finder-like pattern with four light modules on either side, overlaps allowed
        for pat in ("10111010000", "00001011101"):
            score += 40 * sum(1 for i in range(len(line) - 10) if line[i : i + 11] == pat)
    for r in range(n - 1):
        for c in range(n - 1):
            if m[r, c] == m[r, c + 1] == m[r + 1, c] == m[r + 1, c + 1]:
                score += 3
    dark = int(m.sum())
    k = abs(dark * 20 - n * n * 10) // (n * n)
    return score + 10 * k


@pytest.mark.parametrize("impl", IMPLS)
def test_mask_penalty_matches_rule_transcription(impl):
    rng = np.random.default_rng(2)
    for n in (21, 25, 45, 57):
        for density in (0.3, 0.5, 0.7):
            m = rng.random((n, n)) < density
            assert impl.mask_penalty(m) == _naive_penalty(m)


@pytest.mark.parametrize("impl", IMPLS)
def test_mask_penalty_small_hand_cases(impl):
    # all light 21x21: 21 rows+21 cols of run 21 -> 42*(3+16); 400 2x2 blocks; balance 50% off -> k=10
    light = np.zeros((21, 21), dtype=bool)
    assert impl.mask_penalty(light) == 42 * 19 + 400 * 3 + 100
    checker = np.indices((21, 21)).sum(axis=0) % 2 == 0
    # no runs, no blocks, no finder patterns, 221 dark of 441 -> k=0
    assert impl.mask_penalty(checker) == 0


@pytest.mark.parametrize("impl", IMPLS)
def test_black_points_uniform_and_contrasty(impl):
    flat = np.full((64, 64), 200, dtype=np.uint8)
    bp = impl.black_points(flat)
    assert bp.shape == (8, 8)
    # low contrast: black point falls to half the block minimum
    assert (bp == 100).all()
    half = np.zeros((16, 16), dtype=np.uint8)
    half[:, 8:] = 255
    bp = impl.black_points(half)
    assert bp[0, 0] == 0  # flat dark block, nothing to average with
    assert bp.shape == (2, 2)


@pytest.mark.skipif(kernels.compiled is None, reason="extension not built")
def test_black_points_and_penalty_parity():
    rng = np.random.default_rng(4)
    for shape in ((64, 64), (120, 200), (37, 91)):
        img = rng.integers(0, 256, size=shape, dtype=np.uint8)
        assert np.array_equal(kernels.compiled.black_points(img), _pykernels.black_points(img))
    for n in (21, 77, 177):
        m = rng.random((n, n)) < 0.5
        assert kernels.compiled.mask_penalty(m) == _pykernels.mask_penalty(m)
