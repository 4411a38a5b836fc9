# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``_pykernels`` call for call."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

IMPLEMENTATION = "cython"

cdef int GF_EXP[512]
cdef int GF_LOG[256]


cdef void _init_tables():
    cdef int x = 1
    cdef int i
    for i in range(255):
        GF_EXP[i] = x
        GF_LOG[x] = i
        x <<= 1
        if x & 0x100:
            x ^= 0x11D
    for i in range(255, 512):
        GF_EXP[i] = GF_EXP[i - 255]
    GF_LOG[0] = 0


_init_tables()


cdef inline int gmul(int a, int b) nogil:
    if a == 0 or b == 0:
        return 0
    return GF_EXP[GF_LOG[a] + GF_LOG[b]]


cdef inline int ginv(int a) nogil:
    return GF_EXP[255 - GF_LOG[a]]


cdef inline int eval_low(int* poly, int deg, int x) nogil:
    cdef int y = 0
    cdef int i
    for i in range(deg, -1, -1):
        y = gmul(y, x) ^ poly[i]
    return y


cdef void divisor(int nsym, int* out) nogil:
    cdef int root = 1
    cdef int i, j
    for i in range(nsym):
        out[i] = 0
    out[nsym - 1] = 1
    for i in range(nsym):
        for j in range(nsym):
            out[j] = gmul(out[j], root)
            if j + 1 < nsym:
                out[j] ^= out[j + 1]
        root = gmul(root, 2)


def rs_encode(const unsigned char[:] data, int nsym):
    cdef int div[256]
    cdef int rem[256]
    cdef int i, k, factor
    cdef Py_ssize_t n = data.shape[0]
    divisor(nsym, div)
    for i in range(nsym):
        rem[i] = 0
    for k in range(n):
        factor = data[k] ^ rem[0]
        for i in range(nsym - 1):
            rem[i] = rem[i + 1]
        rem[nsym - 1] = 0
        if factor:
            for i in range(nsym):
                rem[i] ^= gmul(div[i], factor)
    return bytes([rem[i] for i in range(nsym)])


cdef int syndromes(unsigned char* msg, int n, int nsym, int* synd) nogil:
    cdef int j, k, root, y
    cdef int nonzero = 0
    for j in range(nsym):
        root = GF_EXP[j]
        y = 0
        for k in range(n):
            y = gmul(y, root) ^ msg[k]
        synd[j] = y
        if y:
            nonzero = 1
    return nonzero


def rs_decode(const unsigned char[:] msg, int nsym):
    cdef int n = msg.shape[0]
    cdef int synd[256]
    cdef int C[257]
    cdef int B[257]
    cdef int T[257]
    cdef int omega[256]
    cdef int deriv[256]
    cdef int positions[256]
    cdef int L = 0, m = 1, b = 1
    cdef int i, j, k, d, coef, npos, p, x, x_inv, denom, acc
    cdef bytearray out = bytearray(msg)
    cdef unsigned char* buf = out

    if not syndromes(buf, n, nsym, synd):
        return bytes(out), 0

    for i in range(nsym + 1):
        C[i] = 0
        B[i] = 0
    C[0] = 1
    B[0] = 1
    for k in range(nsym):
        d = synd[k]
        for i in range(1, L + 1):
            d ^= gmul(C[i], synd[k - i])
        if d == 0:
            m += 1
            continue
        coef = gmul(d, ginv(b))
        if 2 * L <= k:
            for i in range(nsym + 1):
                T[i] = C[i]
            for i in range(m, nsym + 1):
                C[i] ^= gmul(coef, B[i - m])
            L = k + 1 - L
            for i in range(nsym + 1):
                B[i] = T[i]
            b = d
            m = 1
        else:
            for i in range(m, nsym + 1):
                C[i] ^= gmul(coef, B[i - m])
            m += 1
    if 2 * L > nsym:
        return None

    npos = 0
    for p in range(n):
        if eval_low(C, L, GF_EXP[(255 - p) % 255]) == 0:
            positions[npos] = p
            npos += 1
    if npos != L:
        return None

    for i in range(nsym):
        acc = 0
        for j in range(min(i, L) + 1):
            acc ^= gmul(synd[i - j], C[j])
        omega[i] = acc
    for i in range(1, L + 1):
        deriv[i - 1] = C[i] if i % 2 == 1 else 0

    for k in range(npos):
        p = positions[k]
        x = GF_EXP[p]
        x_inv = GF_EXP[(255 - p) % 255]
        denom = eval_low(deriv, L - 1, x_inv) if L > 0 else 0
        if denom == 0:
            return None
        buf[n - 1 - p] ^= gmul(x, gmul(eval_low(omega, nsym - 1, x_inv), ginv(denom)))
    if syndromes(buf, n, nsym, synd):
        return None
    return bytes(out), L


cdef long runs_penalty(const unsigned char[:, :] m, bint transpose) nogil:
    cdef Py_ssize_t size = m.shape[0]
    cdef Py_ssize_t a, c
    cdef long total = 0
    cdef int run, prev, v
    for a in range(size):
        run = 1
        prev = m[0, a] if transpose else m[a, 0]
        for c in range(1, size):
            v = m[c, a] if transpose else m[a, c]
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


cdef long finder_like(const unsigned char[:, :] m, bint transpose) nogil:
    cdef int pat[11]
    cdef Py_ssize_t size = m.shape[0]
    cdef Py_ssize_t a, s, t
    cdef long count = 0
    cdef bint fwd, rev
    cdef int v
    pat[0] = 1; pat[1] = 0; pat[2] = 1; pat[3] = 1; pat[4] = 1; pat[5] = 0
    pat[6] = 1; pat[7] = 0; pat[8] = 0; pat[9] = 0; pat[10] = 0
    for a in range(size):
        for s in range(size - 10):
            fwd = True
            rev = True
            for t in range(11):
                v = m[s + t, a] if transpose else m[a, s + t]
                if v != pat[t]:
                    fwd = False
                if v != pat[10 - t]:
                    rev = False
                if not fwd and not rev:
                    break
            if fwd:
                count += 1
            if rev:
                count += 1
    return count


def mask_penalty(modules):
    cdef const unsigned char[:, :] m = np.ascontiguousarray(modules, dtype=np.uint8)
    cdef Py_ssize_t size = m.shape[0]
    cdef Py_ssize_t r, c
    cdef long score = 0
    cdef long dark = 0
    cdef long total = size * size
    cdef int v
    with nogil:
        score += runs_penalty(m, False) + runs_penalty(m, True)
        for r in range(size - 1):
            for c in range(size - 1):
                v = m[r, c]
                if v == m[r + 1, c] and v == m[r, c + 1] and v == m[r + 1, c + 1]:
                    score += 3
        score += 40 * (finder_like(m, False) + finder_like(m, True))
        for r in range(size):
            for c in range(size):
                dark += m[r, c]
        score += 10 * (abs(dark * 20 - total * 10) // total)
    return int(score)


def black_points(gray, int block=8, int min_range=24):
    cdef const unsigned char[:, :] g = np.ascontiguousarray(gray, dtype=np.uint8)
    cdef Py_ssize_t h = g.shape[0]
    cdef Py_ssize_t w = g.shape[1]
    cdef Py_ssize_t sub_h = (h + block - 1) // block
    cdef Py_ssize_t sub_w = (w + block - 1) // block
    cdef Py_ssize_t max_y = h - block
    cdef Py_ssize_t max_x = w - block
    out_arr = np.zeros((sub_h, sub_w), dtype=np.int32)
    cdef int[:, :] out = out_arr
    cdef Py_ssize_t y, x, yo, xo, i, j
    cdef long total
    cdef int lo, hi, v, average, neighbour
    with nogil:
        for y in range(sub_h):
            yo = y * block
            if yo > max_y:
                yo = max_y
            for x in range(sub_w):
                xo = x * block
                if xo > max_x:
                    xo = max_x
                total = 0
                lo = 255
                hi = 0
                for i in range(block):
                    for j in range(block):
                        v = g[yo + i, xo + j]
                        total += v
                        if v < lo:
                            lo = v
                        if v > hi:
                            hi = v
                average = <int>(total // (block * block))
                if hi - lo <= min_range:
                    average = lo // 2
                    if y > 0 and x > 0:
                        neighbour = (out[y - 1, x] + 2 * out[y, x - 1] + out[y - 1, x - 1]) // 4
                        if lo < neighbour:
                            average = neighbour
                out[y, x] = average
    return out_arr
