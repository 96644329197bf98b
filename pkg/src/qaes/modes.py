"""Online and offline QAES contexts and message encryption (CTR/CFB/OFB/raw).

Offline: one slice of quantum key material yields a DQS-Box (256 bits) and a
master key that goes through the classical AES key schedule. The context is
self-contained afterwards.

Online: every block draws a 128-bit whitening key and nr + 1 round keys
straight from the quantum key stream, with no key schedule, and computes
``C_i = E(P_i xor qk_i)``. The DQS-Box is redrawn from the stream once per
message by default, or per block / per round.

Stream layout per online message, in draw order::

    [box, if box_refresh == "message"] [keyset, if key_refresh == "message"]
    then for each block:
    [keyset, if key_refresh == "block"] [1 box if "block" | nr boxes if "round"]

where a keyset is 16 bytes of whitening followed by (nr + 1) * 16 bytes of
round keys, and a box is 32 bytes of key material.

No integrity protection: a desynchronized stream or wrong key decrypts to
garbage without an error.
"""

from dataclasses import dataclass, field

import numpy as np

from . import aes_core
from .aes_core import BlockKeying, RoundKeySet, expand_key, params_for_key_len
from .dqsbox import KEY_MATERIAL_BITS, DqsBox, generate_box
from .errors import KeyDepletionError
from .qkd_bb84 import QuantumKeyStream

BLOCK_MODES = ("ctr", "cfb", "ofb", "raw")
KEY_REFRESH = ("block", "message")
BOX_REFRESH = ("message", "block", "round")
_BOX_BYTES = KEY_MATERIAL_BITS // 8


@dataclass
class QaesContext:
    mode: str
    params: aes_core.CipherParams
    block_mode: str = "ctr"
    box: DqsBox | None = None
    round_keys: RoundKeySet | None = None
    stream: QuantumKeyStream | None = None
    key_refresh: str = "block"
    box_refresh: str = "message"
    blocks_processed: int = 0
    box_refreshes: int = 0
    _stream_start: int = 0
    _next_index: int = 0
    _message_keyset: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in ("online", "offline"):
            raise ValueError(f"mode must be 'online' or 'offline', got {self.mode!r}")
        if self.block_mode not in BLOCK_MODES:
            raise ValueError(f"block mode must be one of {BLOCK_MODES}, got {self.block_mode!r}")
        if self.key_refresh not in KEY_REFRESH:
            raise ValueError(f"key_refresh must be one of {KEY_REFRESH}")
        if self.box_refresh not in BOX_REFRESH:
            raise ValueError(f"box_refresh must be one of {BOX_REFRESH}")

    @property
    def bits_consumed(self):
        """Stream bits drawn since the context was created (online only)."""
        return 0 if self.stream is None else self.stream.cursor - self._stream_start


def _as_stream(source):
    if isinstance(source, QuantumKeyStream):
        return source
    if isinstance(source, (bytes, bytearray, memoryview)):
        return QuantumKeyStream.from_bytes(bytes(source))
    return QuantumKeyStream.from_bits(source)


def offline_init(source, key_len, block_mode="ctr", sbox=None):
    """Build an offline context from quantum key bits.

    Draws 256 bits for the DQS-Box, then ``key_len`` bits for the master key.
    Passing ``sbox`` (for instance the standard AES table) skips the box draw
    and uses that box instead; the first ``key_len`` bits are then the key.
    """
    params = params_for_key_len(key_len)
    stream = _as_stream(source)
    need = key_len + (0 if sbox is not None else KEY_MATERIAL_BITS)
    if stream.remaining < need:
        raise KeyDepletionError(need, stream.remaining)
    if sbox is None:
        box = generate_box(stream.take_bytes(_BOX_BYTES))
    elif isinstance(sbox, DqsBox):
        box = sbox
    else:
        box = DqsBox.from_permutation(aes_core.forward_table(sbox), "supplied")
    key = stream.take_bytes(key_len // 8)
    return QaesContext(
        mode="offline",
        params=params,
        block_mode=block_mode,
        box=box,
        round_keys=expand_key(key, params),
    )


def online_init(stream, key_len, block_mode="ctr", key_refresh="block", box_refresh="message"):
    if not isinstance(stream, QuantumKeyStream):
        stream = _as_stream(stream)
    return QaesContext(
        mode="online",
        params=params_for_key_len(key_len),
        block_mode=block_mode,
        stream=stream,
        key_refresh=key_refresh,
        box_refresh=box_refresh,
        _stream_start=stream.cursor,
    )


# -- online key material ------------------------------------------------------


def _keyset_bytes(ctx):
    return 16 * (ctx.params.nr + 2)


def _boxes_per_block(ctx):
    return {"message": 0, "block": 1, "round": ctx.params.nr}[ctx.box_refresh]


def online_bits_needed(ctx, n_blocks, new_message=True):
    """Stream bits an online context draws for ``n_blocks`` blocks."""
    if n_blocks == 0:
        return 0
    head = 0
    if new_message:
        head += _BOX_BYTES if ctx.box_refresh == "message" else 0
        head += _keyset_bytes(ctx) if ctx.key_refresh == "message" else 0
    per_block = _BOX_BYTES * _boxes_per_block(ctx)
    per_block += _keyset_bytes(ctx) if ctx.key_refresh == "block" else 0
    return 8 * (head + n_blocks * per_block)


def message_bits_needed(mode, key_len, block_mode, n_bytes, key_refresh="block", box_refresh="message"):
    """Quantum key bits needed to set up a context and encrypt one message of ``n_bytes``."""
    if mode == "offline":
        return KEY_MATERIAL_BITS + key_len
    ctx = QaesContext("online", params_for_key_len(key_len), block_mode,
                      key_refresh=key_refresh, box_refresh=box_refresh)
    n_blocks = n_bytes // 16 + 1 if block_mode == "raw" else -(-n_bytes // 16)
    return online_bits_needed(ctx, n_blocks)


def _split_keysets(raw, nr):
    raw = raw.reshape(-1, 16 * (nr + 2))
    return raw[:, :16], raw[:, 16:].reshape(-1, nr + 1, 16)


def _make_boxes(material):
    return [generate_box(bytes(chunk)) for chunk in material.reshape(-1, _BOX_BYTES)]


def _draw_online(ctx, n, new_message):
    """Draw stream material for ``n`` blocks and return their BlockKeying."""
    need = online_bits_needed(ctx, n, new_message)
    if need > ctx.stream.remaining:
        raise KeyDepletionError(need, ctx.stream.remaining)
    nr = ctx.params.nr
    raw = np.frombuffer(ctx.stream.take_bytes(need // 8), dtype=np.uint8)
    pos = 0
    if new_message:
        if ctx.box_refresh == "message":
            ctx.box = generate_box(raw[:_BOX_BYTES].tobytes())
            ctx.box_refreshes += 1
            pos += _BOX_BYTES
        if ctx.key_refresh == "message":
            ctx._message_keyset = raw[pos:pos + _keyset_bytes(ctx)].copy()
            pos += _keyset_bytes(ctx)
    per_block = raw[pos:].reshape(n, (len(raw) - pos) // n)
    kb = _keyset_bytes(ctx) if ctx.key_refresh == "block" else 0

    if ctx.key_refresh == "block":
        wks, rks = _split_keysets(per_block[:, :kb], nr)
        ix = np.arange(n)
    else:
        wks, rks = _split_keysets(ctx._message_keyset, nr)
        ix = np.zeros(n, np.int64)

    nb = _boxes_per_block(ctx)
    if nb:
        boxes = _make_boxes(per_block[:, kb:])
        ctx.box_refreshes += len(boxes)
        ctx.box = boxes[-1]
        fwd = np.stack([b.forward for b in boxes])
        inv = np.stack([b.inverse for b in boxes])
        box_ix = np.arange(n * nb).reshape(n, nb)
        if nb == 1:
            box_ix = np.repeat(box_ix, nr, axis=1)
    else:
        fwd, inv = ctx.box.forward, ctx.box.inverse
        box_ix = np.zeros((n, nr), np.int64)
    ctx.blocks_processed += n
    return BlockKeying(wks, ix, rks, ix, fwd, inv, box_ix)


def _keying(ctx, n):
    if ctx.mode == "offline":
        ctx.blocks_processed += n
        return BlockKeying.uniform(n, ctx.round_keys, ctx.box)
    ctx._next_index = 0
    return _draw_online(ctx, n, new_message=True)


def _block_api_keying(ctx, index):
    if ctx.mode != "online":
        raise ValueError("block-indexed encryption needs an online context")
    if index != 0 and index != ctx._next_index:
        raise ValueError(f"online blocks are sequential: expected index {ctx._next_index} (or 0 to start a message), got {index}")
    keying = _draw_online(ctx, 1, new_message=index == 0)
    ctx._next_index = index + 1
    return keying


def online_encrypt_block(ctx, p, index):
    """C_i = E(P_i xor qk_i) with this block's round keys drawn from the stream.

    Index 0 starts a new message (per-message material is drawn there); later
    indices must follow in order.
    """
    keying = _block_api_keying(ctx, index)
    return aes_core.encrypt_blocks(bytes(p), keying).tobytes()


def online_decrypt_block(ctx, c, index):
    keying = _block_api_keying(ctx, index)
    return aes_core.decrypt_blocks(bytes(c), keying).tobytes()


# -- message modes ----------------------------------------------------------


def _counter_blocks(nonce, n):
    value = int.from_bytes(nonce, "big")
    hi, lo = np.uint64(value >> 64), np.uint64(value & (2**64 - 1))
    i = np.arange(n, dtype=np.uint64)
    new_lo = lo + i
    new_hi = hi + (new_lo < lo).astype(np.uint64)
    out = np.empty((n, 2), dtype=">u8")
    out[:, 0] = new_hi
    out[:, 1] = new_lo
    return out.view(np.uint8).reshape(n, 16)


def _pkcs7_pad(data):
    k = 16 - len(data) % 16
    return data + bytes([k]) * k


def _pkcs7_unpad(data):
    if not data or len(data) % 16:
        raise ValueError("padded data must be a nonzero multiple of 16 bytes")
    k = data[-1]
    if not 1 <= k <= 16 or data[-k:] != bytes([k]) * k:
        raise ValueError("bad padding")
    return data[:-k]


def _check_nonce(nonce):
    nonce = bytes(nonce)
    if len(nonce) != 16:
        raise ValueError("nonce must be 16 bytes")
    return nonce


def _pad_blocks(data):
    n = -(-len(data) // 16)
    buf = np.zeros(n * 16, dtype=np.uint8)
    buf[:len(data)] = np.frombuffer(data, dtype=np.uint8)
    return buf.reshape(n, 16)


def encrypt_message(ctx, plaintext, nonce=None):
    """Encrypt under the context's block mode.

    The nonce must be unique per message for a given context; reuse is not
    detected. Raw-block mode pads (PKCS#7) and ignores the nonce.
    """
    data = bytes(plaintext)
    if ctx.block_mode == "raw":
        padded = _pkcs7_pad(data)
        keying = _keying(ctx, len(padded) // 16)
        return aes_core.encrypt_blocks(padded, keying).tobytes()
    nonce = _check_nonce(nonce)
    if not data:
        return b""
    n = -(-len(data) // 16)
    keying = _keying(ctx, n)
    blocks = _pad_blocks(data)
    if ctx.block_mode == "ctr":
        ks = aes_core.encrypt_blocks(_counter_blocks(nonce, n), keying)
        out = blocks ^ ks
    elif ctx.block_mode == "ofb":
        out = blocks ^ aes_core.ofb_keystream(nonce, keying)
    else:
        out = aes_core.cfb_encrypt(nonce, blocks, keying)
    return out.tobytes()[:len(data)]


def decrypt_message(ctx, ciphertext, nonce=None):
    data = bytes(ciphertext)
    if ctx.block_mode == "raw":
        if len(data) % 16 or not data:
            raise ValueError("raw-block ciphertext must be a nonzero multiple of 16 bytes")
        keying = _keying(ctx, len(data) // 16)
        return _pkcs7_unpad(aes_core.decrypt_blocks(data, keying).tobytes())
    nonce = _check_nonce(nonce)
    if not data:
        return b""
    n = -(-len(data) // 16)
    keying = _keying(ctx, n)
    blocks = _pad_blocks(data)
    if ctx.block_mode == "ctr":
        out = blocks ^ aes_core.encrypt_blocks(_counter_blocks(nonce, n), keying)
    elif ctx.block_mode == "ofb":
        out = blocks ^ aes_core.ofb_keystream(nonce, keying)
    else:
        prev = np.concatenate([np.frombuffer(nonce, np.uint8)[None], blocks[:-1]])
        out = blocks ^ aes_core.encrypt_blocks(prev, keying)
    return out.tobytes()[:len(data)]
