"""Arithmetic over GF(2^8) with the AES reduction polynomial x^8+x^4+x^3+x+1.

Scalar helpers work on Python ints; ``MUL`` and ``INV`` are numpy lookup
tables for vectorised row operations on ``uint8`` arrays.
"""
from __future__ import annotations

import numpy as np

POLY = 0x11B
GENERATOR = 0x03

EXP = np.zeros(512, dtype=np.uint8)
LOG = np.zeros(256, dtype=np.int16)


def _build_tables() -> None:
    x = 1
    for i in range(255):
        EXP[i] = x
        LOG[x] = i
        # multiply by the generator 0x03 = x + 1
        x2 = x << 1
        if x2 & 0x100:
            x2 ^= POLY
        x = x2 ^ x
    EXP[255:510] = EXP[0:255]
    LOG[0] = -1


_build_tables()

_exp = EXP.astype(np.int64)
_log = LOG.astype(np.int64)

MUL = np.zeros((256, 256), dtype=np.uint8)
_nz = np.arange(1, 256)
MUL[1:, 1:] = EXP[(_log[_nz][:, None] + _log[_nz][None, :]) % 255]

INV = np.zeros(256, dtype=np.uint8)
INV[1:] = EXP[(255 - _log[_nz]) % 255]

_EXP_L = [int(v) for v in EXP]
_LOG_L = [int(v) for v in LOG]


def add(a: int, b: int) -> int:
    return a ^ b


sub = add


def mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP_L[_LOG_L[a] + _LOG_L[b]]


def inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no multiplicative inverse in GF(256)")
    return _EXP_L[255 - _LOG_L[a]]


def div(a: int, b: int) -> int:
    return mul(a, inv(b))


def scale(c: int, row: np.ndarray) -> np.ndarray:
    """Return ``c * row`` element-wise."""
    return MUL[c][row]


def axpy(c: int, x: np.ndarray, y: np.ndarray) -> None:
    """In place ``y += c * x``."""
    if c:
        np.bitwise_xor(y, MUL[c][x], out=y)


def combine(coeffs: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Linear combination ``sum_b coeffs[b] * rows[b]`` of the rows of a 2-D array."""
    rows = np.asarray(rows, dtype=np.uint8)
    if rows.shape[0] == 0:
        return np.zeros(rows.shape[1:], dtype=np.uint8)
    prod = MUL[np.asarray(coeffs, dtype=np.uint8)[:, None], rows]
    return np.bitwise_xor.reduce(prod, axis=0)


def rank(rows: np.ndarray) -> int:
    """Rank of a matrix over GF(256) by Gaussian elimination on a copy."""
    m = np.array(rows, dtype=np.uint8, copy=True)
    if m.ndim != 2 or m.size == 0:
        return 0
    r = 0
    nrows, ncols = m.shape
    for col in range(ncols):
        piv = None
        for i in range(r, nrows):
            if m[i, col]:
                piv = i
                break
        if piv is None:
            continue
        m[[r, piv]] = m[[piv, r]]
        m[r] = MUL[INV[m[r, col]]][m[r]]
        for i in range(nrows):
            if i != r and m[i, col]:
                m[i] ^= MUL[m[i, col]][m[r]]
        r += 1
        if r == nrows:
            break
    return r


def solve(coeffs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``coeffs @ X = rhs`` for square nonsingular ``coeffs`` (Gauss-Jordan)."""
    a = np.array(coeffs, dtype=np.uint8, copy=True)
    b = np.array(rhs, dtype=np.uint8, copy=True)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("coefficient matrix must be square")
    for col in range(n):
        nz = np.nonzero(a[col:, col])[0]
        if nz.size == 0:
            raise np.linalg.LinAlgError("singular matrix over GF(256)")
        piv = col + int(nz[0])
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        f = INV[a[col, col]]
        a[col] = MUL[f][a[col]]
        b[col] = MUL[f][b[col]]
        for i in range(n):
            c = a[i, col]
            if i != col and c:
                a[i] ^= MUL[c][a[col]]
                b[i] ^= MUL[c][b[col]]
    return b
