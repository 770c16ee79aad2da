"""Baseline sequential JPEG (JFIF, 4:4:4) encoder and decoder.

``encode`` produces a real interchange-format bitstream (standard Annex K
quantization and Huffman tables, IJG quality scaling) that third-party
decoders read; ``decode`` parses the baseline subset this module writes
(any 1x1-sampled baseline file without restart markers).  ``jpeg`` is the
lossy round trip used as a post-processing baseline; it skips the entropy
coder, which is lossless, and equals ``decode(encode(image, Q))``.
"""

import struct

import numpy as np
from scipy.fft import dct

from .. import _kernels
from ..errors import ImageFormatError
from ..imaging import from_uint8, to_uint8

# Annex K.1 tables, natural (row-major) order
LUMA_Q = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ]
)
CHROMA_Q = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ]
)

# Annex K.3 typical Huffman tables: (code counts per length 1..16, symbols)
DC_LUMA = (
    (0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0),
    tuple(range(12)),
)
DC_CHROMA = (
    (0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0),
    tuple(range(12)),
)
AC_LUMA = (
    (0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7D),
    bytes.fromhex(
        "01020300041105122131410613516107227114328191a1082342b1c11552d1f02433627282"
        "090a161718191a25262728292a3435363738393a434445464748494a535455565758595a"
        "636465666768696a737475767778797a838485868788898a92939495969798999aa2a3a4"
        "a5a6a7a8a9aab2b3b4b5b6b7b8b9bac2c3c4c5c6c7c8c9cad2d3d4d5d6d7d8d9dae1e2e3"
        "e4e5e6e7e8e9eaf1f2f3f4f5f6f7f8f9fa"
    ),
)
AC_CHROMA = (
    (0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77),
    bytes.fromhex(
        "000102031104052131061241510761711322328108144291a1b1c109233352f0156272d1"
        "0a162434e125f11718191a262728292a35363738393a434445464748494a535455565758"
        "595a636465666768696a737475767778797a82838485868788898a92939495969798999a"
        "a2a3a4a5a6a7a8a9aab2b3b4b5b6b7b8b9bac2c3c4c5c6c7c8c9cad2d3d4d5d6d7d8d9da"
        "e2e3e4e5e6e7e8e9eaf2f3f4f5f6f7f8f9fa"
    ),
)
HUFFMAN_TABLES = (DC_LUMA, AC_LUMA, DC_CHROMA, AC_CHROMA)

ZIGZAG = np.array(
    [
        0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5,
        12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21, 28,
        35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
        58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
    ]
)  # ZIGZAG[k] = natural index of the k-th zig-zag coefficient

_D = dct(np.eye(8), norm="ortho", axis=0)

_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_FROM_YCC = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136, -0.714136],
        [1.0, 1.772, 0.0],
    ]
)


def quality_scale(q: int) -> int:
    if not (1 <= q <= 100):
        raise ValueError(f"quality must lie in [1, 99], got {q}")
    return 5000 // q if q < 50 else 200 - 2 * q


def quant_tables(q: int):
    """Luma and chroma quantization tables for quality ``q`` (natural order)."""
    f = quality_scale(int(q))
    out = []
    for base in (LUMA_Q, CHROMA_Q):
        out.append(np.clip((base * f + 50) // 100, 1, 255).astype(np.int64))
    return out[0], out[1]


def _check_quality(q) -> int:
    if int(q) != q or not (1 <= q <= 99):
        raise ValueError(f"JPEG quality must be an integer in [1, 99], got {q}")
    return int(q)


# ---------------------------------------------------------------------------
# transform and quantization
# ---------------------------------------------------------------------------


def _to_blocks(plane):
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3).reshape(-1, 8, 8)


def _from_blocks(blocks, h, w):
    return blocks.reshape(h // 8, w // 8, 8, 8).transpose(0, 2, 1, 3).reshape(h, w)


def _pad8(arr):
    h, w = arr.shape[:2]
    ph, pw = -h % 8, -w % 8
    if ph or pw:
        arr = np.pad(arr, ((0, ph), (0, pw), (0, 0)), mode="edge")
    return arr


def forward_coefficients(image, q: int):
    """Quantized DCT coefficients of the three YCbCr planes, natural order.

    Returns ``(coeffs, (h, w))`` with ``coeffs`` of shape (3, nblocks, 8, 8).
    """
    q = _check_quality(q)
    pix = to_uint8(image).astype(np.float64)
    h, w = pix.shape[:2]
    ycc = _pad8(pix) @ _TO_YCC.T
    ycc[:, :, 1:] += 128.0
    ql, qc = quant_tables(q)
    planes = []
    for ch, table in zip(range(3), (ql, qc, qc)):
        blocks = _to_blocks(ycc[:, :, ch] - 128.0)
        coef = _D @ blocks @ _D.T
        planes.append(np.round(coef / table).astype(np.int32))
    return np.stack(planes), (h, w)


def inverse_coefficients(coeffs, tables, shape):
    """Dequantize, inverse-transform and convert back to an RGB image in [0, 1]."""
    h, w = shape
    ph, pw = h + (-h % 8), w + (-w % 8)
    ycc = np.empty((ph, pw, 3))
    for ch in range(3):
        blocks = _D.T @ (coeffs[ch] * tables[ch]) @ _D
        ycc[:, :, ch] = _from_blocks(blocks, ph, pw) + 128.0
    # decoders store each component as an 8-bit sample before colour conversion
    ycc = np.clip(np.floor(ycc + 0.5), 0, 255)
    ycc[:, :, 1:] -= 128.0
    rgb = ycc @ _FROM_YCC.T
    rgb = np.clip(np.floor(rgb + 0.5), 0, 255)[:h, :w]
    return from_uint8(rgb.astype(np.uint8))


def jpeg(image, q: int):
    """Compress at quality ``q`` and decompress again."""
    coeffs, shape = forward_coefficients(image, q)
    ql, qc = quant_tables(q)
    return inverse_coefficients(coeffs, (ql, qc, qc), shape)


# ---------------------------------------------------------------------------
# Huffman tables
# ---------------------------------------------------------------------------


def _canonical(bits, vals):
    """Code word and length for every symbol of a table given in DHT form."""
    codes = np.zeros(256, dtype=np.int64)
    sizes = np.zeros(256, dtype=np.int64)
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            codes[vals[k]] = code
            sizes[vals[k]] = length
            code += 1
            k += 1
        code <<= 1
    return codes, sizes


def _decoder_tables(bits, vals):
    maxcode = np.full(18, -1, dtype=np.int64)
    valptr = np.zeros(17, dtype=np.int64)
    mincode = np.zeros(17, dtype=np.int64)
    huffval = np.zeros(256, dtype=np.int64)
    huffval[: len(vals)] = list(vals)
    code = 0
    k = 0
    for length in range(1, 17):
        count = bits[length - 1]
        if count:
            valptr[length] = k
            mincode[length] = code
            code += count
            k += count
            maxcode[length] = code - 1
        code <<= 1
    return maxcode, valptr, mincode, huffval


def _stack_tables(tables, fn):
    parts = [fn(bits, vals) for bits, vals in tables]
    return [np.stack(col) for col in zip(*parts)]


# ---------------------------------------------------------------------------
# bitstream
# ---------------------------------------------------------------------------


def _segment(marker: int, payload: bytes) -> bytes:
    return struct.pack(">HH", marker, len(payload) + 2) + payload


def encode(image, q: int = 75) -> bytes:
    """Baseline JFIF bitstream for ``image`` at quality ``q``."""
    coeffs, (h, w) = forward_coefficients(image, q)
    ql, qc = quant_tables(q)
    nb = coeffs.shape[1]
    zz = coeffs.reshape(3, nb, 64)[:, :, ZIGZAG]
    # interleave: one block of each component per MCU
    blocks = zz.transpose(1, 0, 2).reshape(-1, 64)
    comp = np.tile(np.arange(3), nb)
    codes, sizes = _stack_tables(HUFFMAN_TABLES, _canonical)
    data = _kernels.huffman_encode(blocks, comp, np.array([0, 2, 2]), np.array([1, 3, 3]), codes, sizes)

    out = bytearray(b"\xff\xd8")
    out += _segment(0xFFE0, b"JFIF\x00\x01\x01\x00\x00\x01\x00\x01\x00\x00")
    for tid, table in enumerate((ql, qc)):
        out += _segment(0xFFDB, bytes([tid]) + bytes(table.ravel()[ZIGZAG].astype(np.uint8)))
    sof = struct.pack(">BHHB", 8, h, w, 3)
    for cid, tq in ((1, 0), (2, 1), (3, 1)):
        sof += bytes([cid, 0x11, tq])
    out += _segment(0xFFC0, sof)
    for (bits, vals), (tc, th) in zip(HUFFMAN_TABLES, ((0, 0), (1, 0), (0, 1), (1, 1))):
        out += _segment(0xFFC4, bytes([(tc << 4) | th]) + bytes(bits) + bytes(vals))
    sos = bytes([3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0])
    out += _segment(0xFFDA, sos)
    out += data.tobytes()
    out += b"\xff\xd9"
    return bytes(out)


def decode(data: bytes):
    """Decode a baseline, 1x1-sampled JPEG bitstream into an RGB image."""
    data = bytes(data)
    if data[:2] != b"\xff\xd8":
        raise ImageFormatError("missing SOI marker")
    qtables = {}
    htables = {}
    frame = None
    pos = 2
    while pos < len(data):
        if data[pos] != 0xFF:
            raise ImageFormatError(f"expected a marker at byte {pos}")
        marker = data[pos + 1]
        pos += 2
        if marker == 0xD9:
            break
        if marker == 0xFF:
            pos -= 1
            continue
        (length,) = struct.unpack(">H", data[pos : pos + 2])
        payload = data[pos + 2 : pos + length]
        pos += length
        if marker == 0xDB:
            i = 0
            while i < len(payload):
                pq, tq = payload[i] >> 4, payload[i] & 15
                if pq != 0:
                    raise ImageFormatError("16-bit quantization tables are not supported")
                zz = np.frombuffer(payload[i + 1 : i + 65], dtype=np.uint8).astype(np.int64)
                table = np.zeros(64, dtype=np.int64)
                table[ZIGZAG] = zz
                qtables[tq] = table.reshape(8, 8)
                i += 65
        elif marker == 0xC4:
            i = 0
            while i < len(payload):
                tc, th = payload[i] >> 4, payload[i] & 15
                bits = tuple(payload[i + 1 : i + 17])
                nsym = sum(bits)
                vals = tuple(payload[i + 17 : i + 17 + nsym])
                htables[(tc, th)] = (bits, vals)
                i += 17 + nsym
        elif marker == 0xC0:
            prec, h, w, nc = struct.unpack(">BHHB", payload[:6])
            if prec != 8:
                raise ImageFormatError("only 8-bit precision is supported")
            comps = []
            for k in range(nc):
                cid, samp, tq = payload[6 + 3 * k : 9 + 3 * k]
                if samp != 0x11:
                    raise ImageFormatError("only 1x1 chroma sampling is supported")
                comps.append((cid, tq))
            frame = (h, w, comps)
        elif marker in (0xC1, 0xC2, 0xC3, 0xC5, 0xC6, 0xC7, 0xC9, 0xCA, 0xCB, 0xCD, 0xCE, 0xCF):
            raise ImageFormatError("only baseline sequential JPEG is supported")
        elif marker == 0xDD:
            raise ImageFormatError("restart intervals are not supported")
        elif marker == 0xDA:
            if frame is None:
                raise ImageFormatError("scan before frame header")
            h, w, comps = frame
            ns = payload[0]
            if ns != len(comps):
                raise ImageFormatError("multi-scan files are not supported")
            sel = {payload[1 + 2 * k]: payload[2 + 2 * k] for k in range(ns)}
            end = data.rfind(b"\xff\xd9")
            scan = np.frombuffer(data[pos : end if end >= pos else len(data)], dtype=np.uint8)
            return _decode_scan(scan, h, w, comps, sel, qtables, htables)
    raise ImageFormatError("no scan found")


def _decode_scan(scan, h, w, comps, sel, qtables, htables):
    keys = sorted(htables)
    index = {k: i for i, k in enumerate(keys)}
    maxcode, valptr, mincode, huffval = _stack_tables([htables[k] for k in keys], _decoder_tables)
    nc = len(comps)
    try:
        dc_tab = np.array([index[(0, sel[cid] >> 4)] for cid, _ in comps])
        ac_tab = np.array([index[(1, sel[cid] & 15)] for cid, _ in comps])
        tables = [qtables[tq] for _, tq in comps]
    except KeyError as exc:
        raise ImageFormatError(f"missing table {exc}") from None
    ph, pw = h + (-h % 8), w + (-w % 8)
    nb = (ph // 8) * (pw // 8)
    comp = np.tile(np.arange(nc), nb)
    try:
        zz = _kernels.huffman_decode(scan, nb * nc, comp, dc_tab, ac_tab, maxcode, valptr, mincode, huffval)
    except ValueError as exc:
        raise ImageFormatError(str(exc)) from None
    natural = np.zeros_like(zz)
    natural[:, ZIGZAG] = zz
    coeffs = natural.reshape(nb, nc, 8, 8).transpose(1, 0, 2, 3).astype(np.float64)
    if nc == 1:
        gray = _from_blocks(_D.T @ (coeffs[0] * tables[0]) @ _D, ph, pw) + 128.0
        gray = np.clip(np.floor(gray + 0.5), 0, 255)[:h, :w].astype(np.uint8)
        return from_uint8(np.repeat(gray[:, :, None], 3, axis=2))
    if nc != 3:
        raise ImageFormatError(f"unsupported component count {nc}")
    return inverse_coefficients(coeffs, tables, (h, w))
