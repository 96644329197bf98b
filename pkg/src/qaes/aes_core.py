"""AES block cipher with a pluggable SubBytes table.

Only SubBytes is parameterized. ShiftRows, MixColumns, AddRoundKey and the
key schedule are classical AES; the key schedule always uses the standard
S-box regardless of which box the rounds use.

No constant-time guarantees: table lookups are indexed by secret data.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import KeyLengthMismatch, UnsupportedKeyLength
from .gf import MUL2, MUL3, MUL9, MUL11, MUL13, MUL14, STANDARD_INV_SBOX, STANDARD_SBOX

BLOCK_SIZE = 16

_RCON = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36]
_SBOX_LIST = [int(x) for x in STANDARD_SBOX]


@dataclass(frozen=True)
class CipherParams:
    nk: int
    nb: int
    nr: int

    def __post_init__(self):
        if (self.nk, self.nb, self.nr) not in _TABLE.values():
            raise UnsupportedKeyLength(f"not an AES parameter set: {self}")

    @property
    def key_bits(self):
        return self.nk * 32

    @property
    def key_bytes(self):
        return self.nk * 4


_TABLE = {128: (4, 4, 10), 192: (6, 4, 12), 256: (8, 4, 14)}


def params_for_key_len(bits):
    try:
        return CipherParams(*_TABLE[bits])
    except (KeyError, TypeError):
        raise UnsupportedKeyLength(f"key length must be 128, 192 or 256 bits, got {bits!r}") from None


@dataclass(frozen=True)
class RoundKeySet:
    keys: tuple

    def __post_init__(self):
        if len(self.keys) not in (11, 13, 15) or any(len(k) != 16 for k in self.keys):
            raise ValueError("round key set needs 11, 13 or 15 keys of 16 bytes")

    @property
    def nr(self):
        return len(self.keys) - 1

    @cached_property
    def array(self):
        return np.frombuffer(b"".join(self.keys), dtype=np.uint8).reshape(-1, 16)

    @classmethod
    def from_bytes(cls, data):
        """Split a flat (nr + 1) * 16 byte string into round keys."""
        return cls(tuple(bytes(data[i:i + 16]) for i in range(0, len(data), 16)))


def expand_key(key, params=None):
    key = bytes(key)
    if params is None:
        params = params_for_key_len(len(key) * 8)
    if len(key) != params.key_bytes:
        raise KeyLengthMismatch(f"expected {params.key_bytes}-byte key, got {len(key)}")
    nk, nr = params.nk, params.nr
    words = [list(key[4 * i:4 * i + 4]) for i in range(nk)]
    for i in range(nk, 4 * (nr + 1)):
        temp = list(words[i - 1])
        if i % nk == 0:
            temp = temp[1:] + temp[:1]
            temp = [_SBOX_LIST[b] for b in temp]
            temp[0] ^= _RCON[i // nk - 1]
        elif nk > 6 and i % nk == 4:
            temp = [_SBOX_LIST[b] for b in temp]
        words.append([a ^ b for a, b in zip(words[i - nk], temp)])
    flat = bytes(b for w in words for b in w)
    return RoundKeySet.from_bytes(flat)


def forward_table(sbox):
    if sbox is None:
        return STANDARD_SBOX
    table = getattr(sbox, "forward", sbox)
    return _as_table(table)


def inverse_table(sbox_inv):
    """Table used by InvSubBytes. A box object contributes its ``inverse``;
    a bare array is taken to already be the inverse table."""
    if sbox_inv is None:
        return STANDARD_INV_SBOX
    table = getattr(sbox_inv, "inverse", sbox_inv)
    return _as_table(table)


def _as_table(table):
    arr = np.ascontiguousarray(table, dtype=np.uint8)
    if arr.shape != (256,):
        raise ValueError(f"S-box table must have 256 entries, got shape {arr.shape}")
    return arr


def _rk_array(rks):
    return rks.array if isinstance(rks, RoundKeySet) else np.asarray(rks, dtype=np.uint8)


@dataclass
class BlockKeying:
    """Key material for a batch of ``n`` blocks, addressed by index arrays.

    ``whitening[wk_ix[i]]`` is XORed into block ``i`` before round 0,
    ``round_keys[rk_ix[i]]`` are its round keys and ``boxes[box_ix[i, r]]``
    its S-box in round ``r + 1``.
    """

    whitening: np.ndarray
    wk_ix: np.ndarray
    round_keys: np.ndarray
    rk_ix: np.ndarray
    boxes: np.ndarray
    inv_boxes: np.ndarray
    box_ix: np.ndarray

    def __post_init__(self):
        self.whitening = np.ascontiguousarray(self.whitening, dtype=np.uint8).reshape(-1, 16)
        self.round_keys = np.ascontiguousarray(self.round_keys, dtype=np.uint8)
        if self.round_keys.ndim == 2:
            self.round_keys = self.round_keys[None]
        self.boxes = np.ascontiguousarray(self.boxes, dtype=np.uint8).reshape(-1, 256)
        self.inv_boxes = np.ascontiguousarray(self.inv_boxes, dtype=np.uint8).reshape(-1, 256)
        self.wk_ix = np.ascontiguousarray(self.wk_ix, dtype=np.int64)
        self.rk_ix = np.ascontiguousarray(self.rk_ix, dtype=np.int64)
        self.box_ix = np.ascontiguousarray(self.box_ix, dtype=np.int64)
        n = len(self.wk_ix)
        nr = self.round_keys.shape[1] - 1
        if len(self.rk_ix) != n or self.box_ix.shape != (n, nr):
            raise ValueError("index arrays disagree on block count or round count")

    @property
    def nr(self):
        return self.round_keys.shape[1] - 1

    def __len__(self):
        return len(self.wk_ix)

    @classmethod
    def uniform(cls, n, rks, sbox=None, whitening=None):
        """Same round keys, box and whitening key for every block."""
        rk = _rk_array(rks)
        nr = rk.shape[0] - 1
        fwd = forward_table(sbox)
        if sbox is None or hasattr(sbox, "inverse"):
            inv = inverse_table(sbox)
        else:
            inv = np.argsort(fwd).astype(np.uint8)
        wk = np.zeros(16, np.uint8) if whitening is None else np.frombuffer(bytes(whitening), np.uint8)
        return cls(
            whitening=wk,
            wk_ix=np.zeros(n, np.int64),
            round_keys=rk,
            rk_ix=np.zeros(n, np.int64),
            boxes=fwd,
            inv_boxes=inv,
            box_ix=np.zeros((n, nr), np.int64),
        )

    def _args(self, boxes):
        return (self.whitening, self.wk_ix, self.round_keys, self.rk_ix, boxes, self.box_ix)


def _blocks(data):
    arr = np.frombuffer(bytes(data), dtype=np.uint8) if not isinstance(data, np.ndarray) else data
    return np.ascontiguousarray(arr, dtype=np.uint8).reshape(-1, 16)


def encrypt_blocks(blocks, keying):
    blocks = _blocks(blocks)
    _check_count(blocks, keying)
    return _kernels.ecb_encrypt(blocks, *keying._args(keying.boxes))


def decrypt_blocks(blocks, keying):
    blocks = _blocks(blocks)
    _check_count(blocks, keying)
    return _kernels.ecb_decrypt(blocks, *keying._args(keying.inv_boxes))


def ofb_keystream(iv, keying):
    return _kernels.ofb_keystream(_iv(iv), *keying._args(keying.boxes))


def cfb_encrypt(iv, blocks, keying):
    blocks = _blocks(blocks)
    _check_count(blocks, keying)
    return _kernels.cfb_encrypt(_iv(iv), blocks, *keying._args(keying.boxes))


def _iv(iv):
    iv = np.frombuffer(bytes(iv), dtype=np.uint8).copy()
    if iv.shape != (16,):
        raise ValueError("IV must be 16 bytes")
    return iv


def _check_count(blocks, keying):
    if len(blocks) != len(keying):
        raise ValueError(f"{len(blocks)} blocks but key material for {len(keying)}")


def encrypt_block(p, rks, sbox=None):
    """Encrypt one 16-byte block; ``sbox`` defaults to the standard AES box."""
    p = bytes(p)
    if len(p) != BLOCK_SIZE:
        raise ValueError("block must be 16 bytes")
    return encrypt_blocks(p, BlockKeying.uniform(1, rks, sbox)).tobytes()


def decrypt_block(c, rks, sbox_inv=None):
    c = bytes(c)
    if len(c) != BLOCK_SIZE:
        raise ValueError("block must be 16 bytes")
    keying = BlockKeying.uniform(1, rks)
    keying.inv_boxes = inverse_table(sbox_inv).reshape(1, 256)
    return decrypt_blocks(c, keying).tobytes()


def mix_column(col):
    a0, a1, a2, a3 = col
    return [
        int(MUL2[a0] ^ MUL3[a1] ^ a2 ^ a3),
        int(a0 ^ MUL2[a1] ^ MUL3[a2] ^ a3),
        int(a0 ^ a1 ^ MUL2[a2] ^ MUL3[a3]),
        int(MUL3[a0] ^ a1 ^ a2 ^ MUL2[a3]),
    ]


def inv_mix_column(col):
    a0, a1, a2, a3 = col
    return [
        int(MUL14[a0] ^ MUL11[a1] ^ MUL13[a2] ^ MUL9[a3]),
        int(MUL9[a0] ^ MUL14[a1] ^ MUL11[a2] ^ MUL13[a3]),
        int(MUL13[a0] ^ MUL9[a1] ^ MUL14[a2] ^ MUL11[a3]),
        int(MUL11[a0] ^ MUL13[a1] ^ MUL9[a2] ^ MUL14[a3]),
    ]
