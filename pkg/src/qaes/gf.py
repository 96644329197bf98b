"""Arithmetic in GF(2^8) modulo the AES polynomial x^8 + x^4 + x^3 + x + 1."""

import numpy as np

AES_POLY = 0x11B


def xtime(a):
    a <<= 1
    if a & 0x100:
        a ^= AES_POLY
    return a & 0xFF


def gf_mul(a, b):
    p = 0
    while b:
        if b & 1:
            p ^= a
        a = xtime(a)
        b >>= 1
    return p


def gf_inv(a):
    """Multiplicative inverse; 0 maps to 0 as AES requires."""
    if a == 0:
        return 0
    # a^254 = a^-1 in a field of 256 elements
    result, base, e = 1, a, 254
    while e:
        if e & 1:
            result = gf_mul(result, base)
        base = gf_mul(base, base)
        e >>= 1
    return result


def _rotl8(x, n):
    return ((x << n) | (x >> (8 - n))) & 0xFF


def _affine(b):
    return b ^ _rotl8(b, 1) ^ _rotl8(b, 2) ^ _rotl8(b, 3) ^ _rotl8(b, 4) ^ 0x63


def _mul_table(c):
    return np.array([gf_mul(x, c) for x in range(256)], dtype=np.uint8)


MUL2 = _mul_table(2)
MUL3 = _mul_table(3)
MUL9 = _mul_table(9)
MUL11 = _mul_table(11)
MUL13 = _mul_table(13)
MUL14 = _mul_table(14)

STANDARD_SBOX = np.array([_affine(gf_inv(x)) for x in range(256)], dtype=np.uint8)
STANDARD_INV_SBOX = np.argsort(STANDARD_SBOX).astype(np.uint8)
