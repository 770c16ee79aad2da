"""Hot numeric kernels with a numba path and a pure-numpy/Python fallback.

The backend is chosen once at import time from the ``WEVADE_BACKEND``
environment variable (``numba`` or ``numpy``).  ``numba`` is the default
when the package is importable.  Both implementations of every kernel stay
importable so they can be cross-checked and benchmarked against each other.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

BACKEND = os.environ.get("WEVADE_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    raise ValueError(f"WEVADE_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")
USE_NUMBA = numba is not None and BACKEND == "numba"


def _jit(fn):
    if numba is None:
        return None
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# bilinear resize (half-pixel centres, no antialiasing)
# ---------------------------------------------------------------------------


def _resize_axis_weights(n_in, n_out):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear_numpy(img, h, w):
    h_in, w_in = img.shape[:2]
    y0, y1, fy = _resize_axis_weights(h_in, h)
    x0, x1, fx = _resize_axis_weights(w_in, w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = img[y0][:, x0] * (1.0 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1.0 - fx) + img[y1][:, x1] * fx
    return top * (1.0 - fy) + bot * fy


def _resize_bilinear_loops(img, h, w):
    h_in, w_in, c = img.shape
    out = np.empty((h, w, c), dtype=np.float64)
    sy = h_in / h
    sx = w_in / w
    for i in range(h):
        y = (i + 0.5) * sy - 0.5
        y = max(y, 0.0)
        if y > h_in - 1:
            y = h_in - 1.0
        y0 = int(np.floor(y))
        y1 = min(y0 + 1, h_in - 1)
        fy = y - y0
        for j in range(w):
            x = (j + 0.5) * sx - 0.5
            x = max(x, 0.0)
            if x > w_in - 1:
                x = w_in - 1.0
            x0 = int(np.floor(x))
            x1 = min(x0 + 1, w_in - 1)
            fx = x - x0
            for k in range(c):
                top = img[y0, x0, k] * (1.0 - fx) + img[y0, x1, k] * fx
                bot = img[y1, x0, k] * (1.0 - fx) + img[y1, x1, k] * fx
                out[i, j, k] = top * (1.0 - fy) + bot * fy
    return out


resize_bilinear_numba = _jit(_resize_bilinear_loops)


def resize_bilinear(img, h, w):
    img = np.ascontiguousarray(img, dtype=np.float64)
    if USE_NUMBA:
        return resize_bilinear_numba(img, h, w)
    return resize_bilinear_numpy(img, h, w)


# ---------------------------------------------------------------------------
# 2-D correlation with mirror padding (blur)
# ---------------------------------------------------------------------------


def correlate_reflect_numpy(img, kernel):
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    padded = np.pad(img, ((ph, ph), (pw, pw), (0, 0)), mode="reflect")
    h, w = img.shape[:2]
    out = np.zeros_like(img, dtype=np.float64)
    for dy in range(kh):
        for dx in range(kw):
            out += kernel[dy, dx] * padded[dy : dy + h, dx : dx + w]
    return out


def _reflect_index(i, n):
    # mirror without repeating the edge sample: -1 -> 1, n -> n - 2
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = i % period
    if i < 0:
        i += period
    if i >= n:
        i = period - i
    return i


def _correlate_reflect_loops(img, kernel):
    h, w, c = img.shape
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((h, w, c), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            for dy in range(kh):
                yy = _reflect_index(i + dy - ph, h)
                for dx in range(kw):
                    xx = _reflect_index(j + dx - pw, w)
                    wt = kernel[dy, dx]
                    for k in range(c):
                        out[i, j, k] += wt * img[yy, xx, k]
    return out


if numba is not None:
    _reflect_index_nb = numba.njit(cache=True)(_reflect_index)

    @numba.njit(cache=True, nogil=True)
    def correlate_reflect_numba(img, kernel):
        h, w, c = img.shape
        kh, kw = kernel.shape
        ph, pw = kh // 2, kw // 2
        out = np.zeros((h, w, c), dtype=np.float64)
        for i in range(h):
            for j in range(w):
                for dy in range(kh):
                    yy = _reflect_index_nb(i + dy - ph, h)
                    for dx in range(kw):
                        xx = _reflect_index_nb(j + dx - pw, w)
                        wt = kernel[dy, dx]
                        for k in range(c):
                            out[i, j, k] += wt * img[yy, xx, k]
        return out

else:  # pragma: no cover
    correlate_reflect_numba = None


def correlate_reflect(img, kernel):
    img = np.ascontiguousarray(img, dtype=np.float64)
    kernel = np.ascontiguousarray(kernel, dtype=np.float64)
    if min(img.shape[:2]) <= max(kernel.shape) // 2:
        # np.pad's reflect cannot handle pads wider than the image
        return _correlate_reflect_loops(img, kernel)
    if USE_NUMBA:
        return correlate_reflect_numba(img, kernel)
    return correlate_reflect_numpy(img, kernel)


# ---------------------------------------------------------------------------
# separable "valid" filtering of a 2-D plane (SSIM windows)
# ---------------------------------------------------------------------------


def filter_valid_numpy(plane, g):
    from numpy.lib.stride_tricks import sliding_window_view

    rows = sliding_window_view(plane, g.size, axis=0) @ g
    return sliding_window_view(rows, g.size, axis=1) @ g


def _filter_valid_loops(plane, g):
    h, w = plane.shape
    k = g.size
    tmp = np.zeros((h - k + 1, w), dtype=np.float64)
    for i in range(h - k + 1):
        for t in range(k):
            gt = g[t]
            for j in range(w):
                tmp[i, j] += gt * plane[i + t, j]
    out = np.zeros((h - k + 1, w - k + 1), dtype=np.float64)
    for i in range(h - k + 1):
        for j in range(w - k + 1):
            acc = 0.0
            for t in range(k):
                acc += g[t] * tmp[i, j + t]
            out[i, j] = acc
    return out


filter_valid_numba = _jit(_filter_valid_loops)


def filter_valid(plane, g):
    plane = np.ascontiguousarray(plane, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    if USE_NUMBA:
        return filter_valid_numba(plane, g)
    return filter_valid_numpy(plane, g)


# ---------------------------------------------------------------------------
# baseline JPEG Huffman entropy coding
#
# blocks: (nblocks, 64) int32 coefficients in zig-zag order, MCU-interleaved
# comp:   (nblocks,) component index of each block
# dc_tab/ac_tab: (ncomp,) table index used by each component
# codes/sizes: (ntables, 256) canonical Huffman code words and lengths
# ---------------------------------------------------------------------------


def _huffman_encode_loops(blocks, comp, dc_tab, ac_tab, codes, sizes):
    nblocks = blocks.shape[0]
    out = np.empty(nblocks * 64 * 8 + 64, dtype=np.uint8)
    pos = 0
    acc = 0  # bit accumulator, at most 7 + 27 pending bits
    nacc = 0
    pred = np.zeros(dc_tab.shape[0], dtype=np.int64)
    for b in range(nblocks):
        c = comp[b]
        # DC difference
        diff = np.int64(blocks[b, 0]) - pred[c]
        pred[c] = blocks[b, 0]
        mag = diff if diff >= 0 else -diff
        s = 0
        while mag > 0:
            s += 1
            mag >>= 1
        t = dc_tab[c]
        bits = diff if diff >= 0 else diff + (1 << s) - 1
        acc = (acc << sizes[t, s]) | codes[t, s]
        nacc += sizes[t, s]
        acc = (acc << s) | (bits & ((1 << s) - 1))
        nacc += s
        while nacc >= 8:
            byte = (acc >> (nacc - 8)) & 0xFF
            out[pos] = byte
            pos += 1
            if byte == 0xFF:
                out[pos] = 0
                pos += 1
            nacc -= 8
        acc &= (1 << nacc) - 1
        # AC run lengths
        t = ac_tab[c]
        run = 0
        for k in range(1, 64):
            v = np.int64(blocks[b, k])
            if v == 0:
                run += 1
                continue
            while run > 15:
                acc = (acc << sizes[t, 0xF0]) | codes[t, 0xF0]
                nacc += sizes[t, 0xF0]
                run -= 16
                while nacc >= 8:
                    byte = (acc >> (nacc - 8)) & 0xFF
                    out[pos] = byte
                    pos += 1
                    if byte == 0xFF:
                        out[pos] = 0
                        pos += 1
                    nacc -= 8
                acc &= (1 << nacc) - 1
            mag = v if v >= 0 else -v
            s = 0
            while mag > 0:
                s += 1
                mag >>= 1
            sym = (run << 4) | s
            bits = v if v >= 0 else v + (1 << s) - 1
            acc = (acc << sizes[t, sym]) | codes[t, sym]
            nacc += sizes[t, sym]
            acc = (acc << s) | (bits & ((1 << s) - 1))
            nacc += s
            while nacc >= 8:
                byte = (acc >> (nacc - 8)) & 0xFF
                out[pos] = byte
                pos += 1
                if byte == 0xFF:
                    out[pos] = 0
                    pos += 1
                nacc -= 8
            acc &= (1 << nacc) - 1
            run = 0
        if run > 0:
            acc = (acc << sizes[t, 0]) | codes[t, 0]
            nacc += sizes[t, 0]
            while nacc >= 8:
                byte = (acc >> (nacc - 8)) & 0xFF
                out[pos] = byte
                pos += 1
                if byte == 0xFF:
                    out[pos] = 0
                    pos += 1
                nacc -= 8
            acc &= (1 << nacc) - 1
    if nacc > 0:
        # pad the final byte with 1-bits
        byte = ((acc << (8 - nacc)) | ((1 << (8 - nacc)) - 1)) & 0xFF
        out[pos] = byte
        pos += 1
        if byte == 0xFF:
            out[pos] = 0
            pos += 1
    return out[:pos]


def _huffman_decode_loops(data, nblocks, comp, dc_tab, ac_tab, maxcode, valptr, mincode, huffval):
    blocks = np.zeros((nblocks, 64), dtype=np.int32)
    pred = np.zeros(dc_tab.shape[0], dtype=np.int64)
    pos = 0
    cur = 0
    nbits = 0
    ndata = data.shape[0]
    for b in range(nblocks):
        c = comp[b]
        k = 0
        while k < 64:
            t = dc_tab[c] if k == 0 else ac_tab[c]
            # decode one Huffman symbol bit by bit
            code = 0
            length = 0
            sym = -1
            while length < 16:
                if nbits == 0:
                    if pos < ndata:
                        cur = np.int64(data[pos])
                        pos += 1
                        if cur == 0xFF and pos < ndata and data[pos] == 0:
                            pos += 1
                    else:
                        cur = 0xFF
                    nbits = 8
                nbits -= 1
                code = (code << 1) | ((cur >> nbits) & 1)
                length += 1
                if maxcode[t, length] >= 0 and code <= maxcode[t, length]:
                    sym = np.int64(huffval[t, valptr[t, length] + code - mincode[t, length]])
                    break
            if sym < 0:
                raise ValueError("corrupt Huffman stream")
            if k == 0:
                s = sym
                run = 0
            else:
                run = sym >> 4
                s = sym & 15
                if s == 0:
                    if run == 15:
                        k += 16
                        continue
                    break  # EOB
            v = 0
            for _ in range(s):
                if nbits == 0:
                    if pos < ndata:
                        cur = np.int64(data[pos])
                        pos += 1
                        if cur == 0xFF and pos < ndata and data[pos] == 0:
                            pos += 1
                    else:
                        cur = 0xFF
                    nbits = 8
                nbits -= 1
                v = (v << 1) | ((cur >> nbits) & 1)
            if s > 0 and v < (1 << (s - 1)):
                v = v - (1 << s) + 1
            if k == 0:
                pred[c] += v
                blocks[b, 0] = pred[c]
                k = 1
            else:
                k += run
                if k > 63:
                    raise ValueError("AC run past end of block")
                blocks[b, k] = v
                k += 1
    return blocks


huffman_encode_numba = _jit(_huffman_encode_loops)
huffman_decode_numba = _jit(_huffman_decode_loops)
huffman_encode_python = _huffman_encode_loops
huffman_decode_python = _huffman_decode_loops


def huffman_encode(blocks, comp, dc_tab, ac_tab, codes, sizes):
    fn = huffman_encode_numba if USE_NUMBA else huffman_encode_python
    return fn(
        np.ascontiguousarray(blocks, dtype=np.int32),
        np.ascontiguousarray(comp, dtype=np.int64),
        np.ascontiguousarray(dc_tab, dtype=np.int64),
        np.ascontiguousarray(ac_tab, dtype=np.int64),
        np.ascontiguousarray(codes, dtype=np.int64),
        np.ascontiguousarray(sizes, dtype=np.int64),
    )


def huffman_decode(data, nblocks, comp, dc_tab, ac_tab, maxcode, valptr, mincode, huffval):
    fn = huffman_decode_numba if USE_NUMBA else huffman_decode_python
    return fn(
        np.ascontiguousarray(data, dtype=np.uint8),
        int(nblocks),
        np.ascontiguousarray(comp, dtype=np.int64),
        np.ascontiguousarray(dc_tab, dtype=np.int64),
        np.ascontiguousarray(ac_tab, dtype=np.int64),
        np.ascontiguousarray(maxcode, dtype=np.int64),
        np.ascontiguousarray(valptr, dtype=np.int64),
        np.ascontiguousarray(mincode, dtype=np.int64),
        np.ascontiguousarray(huffval, dtype=np.int64),
    )
