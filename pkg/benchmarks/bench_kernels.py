"""Compare the compiled and pure-Python kernels on realistic QR workloads.

    python3 benchmarks/bench_kernels.py [--repeat N]

Workloads mirror what encode/decode of a key image does: RS encoding of
every block, RS decoding with errors at the correction limit, mask penalty
scoring of all eight masks for a version-19 symbol, and block black points
for a 606x606 image.
"""

import argparse
import random
import time

import numpy as np

from qrkey import kernels
from qrkey.qr import encode, render
from qrkey.qr.tables import block_layout


def _workloads(rng):
    ver, ec = 19, "H"
    data_lens, nsym = block_layout(ver, ec)
    blocks = [bytes(rng.getrandbits(8) for _ in range(n)) for n in data_lens]
    encoded = [b + kernels.python.rs_encode(b, nsym) for b in blocks]
    damaged = []
    for word in encoded:
        word = bytearray(word)
        for pos in rng.sample(range(len(word)), nsym // 2):
            word[pos] ^= rng.randrange(1, 256)
        damaged.append(bytes(word))
    symbol = encode(bytes(rng.getrandbits(8) for _ in range(300)), "H", version=ver)
    masked = [symbol.modules ^ (np.indices(symbol.modules.shape).sum(axis=0) % (m + 2) == 0) for m in range(8)]
    gray = render(symbol, module_px=6).gray()
    return {
        "rs_encode (v19-H, all blocks)": lambda k: [k.rs_encode(b, nsym) for b in blocks],
        "rs_decode (v19-H, t errors/block)": lambda k: [k.rs_decode(w, nsym) for w in damaged],
        "mask_penalty (8 masks, 93x93)": lambda k: [k.mask_penalty(m) for m in masked],
        "black_points (606x606 image)": lambda k: k.black_points(gray),
    }


def _time(fn, impl, repeat):
    fn(impl)  # warm-up
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(impl)
        best = min(best, time.perf_counter() - t0)
    return best


def run(repeat=5, seed=1):
    impls = [("python", kernels.python)]
    if kernels.compiled is not None:
        impls.append(("cython", kernels.compiled))
    rows = []
    for name, fn in _workloads(random.Random(seed)).items():
        times = {label: _time(fn, impl, repeat) for label, impl in impls}
        rows.append((name, times))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rows = run(args.repeat)
    if kernels.compiled is None:
        print("compiled extension not built; timing the Python kernels only")
    print(f"{'workload':38} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, t in rows:
        py = t["python"] * 1e3
        if "cython" in t:
            cy = t["cython"] * 1e3
            print(f"{name:38} {py:10.2f} {cy:10.3f} {py / cy:7.1f}x")
        else:
            print(f"{name:38} {py:10.2f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
