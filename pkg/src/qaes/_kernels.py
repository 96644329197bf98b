"""JIT-compiled AES round loops.

Every kernel works on a batch of ``n`` blocks. Per-block key material is
looked up through index arrays so that shared material (one key schedule,
one S-box) costs nothing to broadcast:

    wks[wk_ix[i]]           16-byte whitening key XORed before round 0
    rks[rk_ix[i]]           (nr + 1, 16) round keys
    boxes[box_ix[i, r - 1]] S-box used by SubBytes in round r

State layout is the FIPS-197 column-major one: byte ``4 * c + r`` holds row
``r`` of column ``c``.
"""

import numpy as np
from numba import njit

from .gf import MUL2, MUL3, MUL9, MUL11, MUL13, MUL14

# ShiftRows as a gather: new[k] = old[SHIFT[k]]
SHIFT = np.array([(r + 4 * ((c + r) % 4)) for c in range(4) for r in range(4)], dtype=np.int64)
INV_SHIFT = np.array([(r + 4 * ((c - r) % 4)) for c in range(4) for r in range(4)], dtype=np.int64)


@njit(cache=True)
def _mix(s, t):
    for c in range(4):
        a0 = s[4 * c]
        a1 = s[4 * c + 1]
        a2 = s[4 * c + 2]
        a3 = s[4 * c + 3]
        t[4 * c] = MUL2[a0] ^ MUL3[a1] ^ a2 ^ a3
        t[4 * c + 1] = a0 ^ MUL2[a1] ^ MUL3[a2] ^ a3
        t[4 * c + 2] = a0 ^ a1 ^ MUL2[a2] ^ MUL3[a3]
        t[4 * c + 3] = MUL3[a0] ^ a1 ^ a2 ^ MUL2[a3]
    for k in range(16):
        s[k] = t[k]


@njit(cache=True)
def _inv_mix(s, t):
    for c in range(4):
        a0 = s[4 * c]
        a1 = s[4 * c + 1]
        a2 = s[4 * c + 2]
        a3 = s[4 * c + 3]
        t[4 * c] = MUL14[a0] ^ MUL11[a1] ^ MUL13[a2] ^ MUL9[a3]
        t[4 * c + 1] = MUL9[a0] ^ MUL14[a1] ^ MUL11[a2] ^ MUL13[a3]
        t[4 * c + 2] = MUL13[a0] ^ MUL9[a1] ^ MUL14[a2] ^ MUL11[a3]
        t[4 * c + 3] = MUL11[a0] ^ MUL13[a1] ^ MUL9[a2] ^ MUL14[a3]
    for k in range(16):
        s[k] = t[k]


@njit(cache=True)
def _encrypt_state(s, t, wk, rk, boxes, bix):
    nr = rk.shape[0] - 1
    for k in range(16):
        s[k] ^= wk[k] ^ rk[0, k]
    for rnd in range(1, nr + 1):
        box = boxes[bix[rnd - 1]]
        for k in range(16):
            t[k] = box[s[SHIFT[k]]]
        for k in range(16):
            s[k] = t[k]
        if rnd < nr:
            _mix(s, t)
        for k in range(16):
            s[k] ^= rk[rnd, k]


@njit(cache=True)
def _decrypt_state(s, t, wk, rk, inv_boxes, bix):
    nr = rk.shape[0] - 1
    for k in range(16):
        s[k] ^= rk[nr, k]
    for rnd in range(nr, 0, -1):
        box = inv_boxes[bix[rnd - 1]]
        for k in range(16):
            t[k] = box[s[INV_SHIFT[k]]]
        for k in range(16):
            s[k] = t[k] ^ rk[rnd - 1, k]
        if rnd > 1:
            _inv_mix(s, t)
    for k in range(16):
        s[k] ^= wk[k]


@njit(cache=True)
def ecb_encrypt(blocks, wks, wk_ix, rks, rk_ix, boxes, box_ix):
    n = blocks.shape[0]
    out = np.empty((n, 16), dtype=np.uint8)
    s = np.empty(16, dtype=np.uint8)
    t = np.empty(16, dtype=np.uint8)
    for i in range(n):
        for k in range(16):
            s[k] = blocks[i, k]
        _encrypt_state(s, t, wks[wk_ix[i]], rks[rk_ix[i]], boxes, box_ix[i])
        for k in range(16):
            out[i, k] = s[k]
    return out


@njit(cache=True)
def ecb_decrypt(blocks, wks, wk_ix, rks, rk_ix, inv_boxes, box_ix):
    n = blocks.shape[0]
    out = np.empty((n, 16), dtype=np.uint8)
    s = np.empty(16, dtype=np.uint8)
    t = np.empty(16, dtype=np.uint8)
    for i in range(n):
        for k in range(16):
            s[k] = blocks[i, k]
        _decrypt_state(s, t, wks[wk_ix[i]], rks[rk_ix[i]], inv_boxes, box_ix[i])
        for k in range(16):
            out[i, k] = s[k]
    return out


@njit(cache=True)
def ofb_keystream(iv, wks, wk_ix, rks, rk_ix, boxes, box_ix):
    n = wk_ix.shape[0]
    out = np.empty((n, 16), dtype=np.uint8)
    s = iv.copy()
    t = np.empty(16, dtype=np.uint8)
    for i in range(n):
        _encrypt_state(s, t, wks[wk_ix[i]], rks[rk_ix[i]], boxes, box_ix[i])
        for k in range(16):
            out[i, k] = s[k]
    return out


@njit(cache=True)
def cfb_encrypt(iv, blocks, wks, wk_ix, rks, rk_ix, boxes, box_ix):
    # full-block CFB; a short final block is zero-padded by the caller and truncated after
    n = blocks.shape[0]
    out = np.empty((n, 16), dtype=np.uint8)
    s = iv.copy()
    t = np.empty(16, dtype=np.uint8)
    for i in range(n):
        _encrypt_state(s, t, wks[wk_ix[i]], rks[rk_ix[i]], boxes, box_ix[i])
        for k in range(16):
            s[k] ^= blocks[i, k]
            out[i, k] = s[k]
    return out


@njit(cache=True)
def keyed_shuffle(stream):
    """Fisher-Yates over 0..255 drawing one byte per attempt, with rejection.

    Returns the permutation and the number of bytes consumed, or -1 if the
    stream ran out before the shuffle finished.
    """
    perm = np.arange(256).astype(np.uint8)
    pos = 0
    for i in range(255, 0, -1):
        m = i + 1
        limit = 256 - (256 % m)
        while True:
            if pos >= stream.shape[0]:
                return perm, -1
            b = np.int64(stream[pos])
            pos += 1
            if b < limit:
                break
        j = b % m
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
    return perm, pos
