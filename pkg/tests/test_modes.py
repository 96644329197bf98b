import numpy as np
import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms
from cryptography.hazmat.primitives.ciphers import modes as libmodes

try:
    from cryptography.hazmat.decrepit.ciphers.modes import CFB, OFB
except ImportError:
    CFB, OFB = libmodes.CFB, libmodes.OFB

import oracle_aes
from qaes import modes
from qaes.errors import KeyDepletionError
from qaes.gf import STANDARD_SBOX
from qaes.qkd_bb84 import Bb84Config, QuantumKeyStream, run_session


def _stream(nbytes, seed=0):
    return QuantumKeyStream.from_bytes(np.random.default_rng(seed).bytes(nbytes))


def test_offline_deterministic():
    data = np.random.default_rng(1).bytes(64)
    a = modes.offline_init(QuantumKeyStream.from_bytes(data), 192)
    b = modes.offline_init(QuantumKeyStream.from_bytes(data), 192)
    assert np.array_equal(a.box.forward, b.box.forward)
    assert a.round_keys.keys == b.round_keys.keys
    assert len(a.round_keys.keys) == 13


def test_offline_consumes_box_then_key():
    s = _stream(100)
    ctx = modes.offline_init(s, 128)
    assert s.cursor == 256 + 128
    raw = s.replay().take_bytes(48)
    assert ctx.round_keys.keys[0] == raw[32:48]


def test_offline_disjoint_segments_differ():
    s = _stream(200)
    a, b = modes.offline_init(s, 128), modes.offline_init(s, 128)
    assert np.count_nonzero(a.box.forward == b.box.forward) <= 16


def test_offline_needs_enough_bits():
    with pytest.raises(KeyDepletionError):
        modes.offline_init(_stream(40), 256)


def test_offline_never_touches_stream_again():
    s = _stream(200)
    ctx = modes.offline_init(s, 256)
    before = s.cursor
    modes.encrypt_message(ctx, bytes(1000), bytes(16))
    assert s.cursor == before


@pytest.mark.parametrize("nbytes", [16, 24, 32])
def test_offline_standard_box_is_aes_ctr(nbytes):
    rng = np.random.default_rng(nbytes)
    key, nonce, msg = rng.bytes(nbytes), rng.bytes(16), rng.bytes(1000)
    ctx = modes.offline_init(key, nbytes * 8, "ctr", sbox=STANDARD_SBOX)
    lib = Cipher(algorithms.AES(key), libmodes.CTR(nonce)).encryptor().update(msg)
    assert modes.encrypt_message(ctx, msg, nonce) == lib


@pytest.mark.parametrize("name, lib", [("ofb", OFB), ("cfb", CFB)])
def test_offline_standard_box_feedback_modes(name, lib):
    rng = np.random.default_rng(2)
    key, iv, msg = rng.bytes(16), rng.bytes(16), rng.bytes(333)
    ctx = modes.offline_init(key, 128, name, sbox=STANDARD_SBOX)
    want = Cipher(algorithms.AES(key), lib(iv)).encryptor().update(msg)
    assert modes.encrypt_message(ctx, msg, iv) == want


def test_raw_mode_pads():
    ctx = modes.offline_init(_stream(100), 128, "raw")
    for n in (0, 1, 15, 16, 17):
        ct = modes.encrypt_message(ctx, bytes(n))
        assert len(ct) == (n // 16 + 1) * 16
        assert modes.decrypt_message(ctx, ct) == bytes(n)


def test_raw_mode_bad_padding():
    ctx = modes.offline_init(_stream(100), 128, "raw")
    with pytest.raises(ValueError):
        modes.decrypt_message(ctx, bytes(15))


@pytest.mark.parametrize("block_mode", ["ctr", "cfb", "ofb"])
def test_stream_modes_preserve_length(block_mode):
    ctx = modes.offline_init(_stream(100), 128, block_mode)
    assert len(modes.encrypt_message(ctx, b"x", bytes(16))) == 1
    assert modes.encrypt_message(ctx, b"", bytes(16)) == b""


def test_ctr_nonces_matter():
    ctx = modes.offline_init(_stream(100), 128, "ctr")
    msg = bytes(64)
    a = modes.encrypt_message(ctx, msg, bytes(16))
    b = modes.encrypt_message(ctx, msg, bytes(15) + b"\x01")
    assert a != b
    assert modes.decrypt_message(ctx, a, bytes(15) + b"\x01") != msg


def test_nonce_length_checked():
    ctx = modes.offline_init(_stream(100), 128, "ctr")
    with pytest.raises(ValueError):
        modes.encrypt_message(ctx, b"abc", bytes(8))


@pytest.mark.parametrize("key_len", [128, 192, 256])
@pytest.mark.parametrize("block_mode", list(modes.BLOCK_MODES))
def test_online_roundtrip_and_accounting(key_len, block_mode):
    nr = {128: 10, 192: 12, 256: 14}[key_len]
    msg = np.random.default_rng(key_len).bytes(100)
    s = _stream(20_000)
    enc = modes.online_init(s, key_len, block_mode)
    ct = modes.encrypt_message(enc, msg, bytes(16))
    n_blocks = len(ct) // 16 if block_mode == "raw" else -(-len(msg) // 16)
    assert enc.bits_consumed == n_blocks * 128 * (nr + 2) + enc.box_refreshes * 256
    assert enc.box_refreshes == 1
    dec = modes.online_init(s.replay(), key_len, block_mode)
    assert modes.decrypt_message(dec, ct, bytes(16)) == msg


@pytest.mark.parametrize("key_refresh", list(modes.KEY_REFRESH))
@pytest.mark.parametrize("box_refresh", list(modes.BOX_REFRESH))
def test_online_refresh_options(key_refresh, box_refresh):
    msg = np.random.default_rng(5).bytes(50)
    s = _stream(40_000)
    enc = modes.online_init(s, 128, "ctr", key_refresh, box_refresh)
    need = modes.message_bits_needed("online", 128, "ctr", len(msg), key_refresh, box_refresh)
    ct = modes.encrypt_message(enc, msg, bytes(16))
    assert enc.bits_consumed == need
    expected_boxes = {"message": 1, "block": 4, "round": 40}[box_refresh]
    assert enc.box_refreshes == expected_boxes
    dec = modes.online_init(s.replay(), 128, "ctr", key_refresh, box_refresh)
    assert modes.decrypt_message(dec, ct, bytes(16)) == msg


def test_online_depletion():
    ctx = modes.online_init(_stream(100), 128, "ctr")
    with pytest.raises(KeyDepletionError):
        modes.encrypt_message(ctx, bytes(64), bytes(16))
    assert ctx.stream.cursor == 0


def test_online_block_independence():
    raw = bytearray(np.random.default_rng(6).bytes(2000))
    a = modes.online_init(QuantumKeyStream.from_bytes(bytes(raw)), 128, "raw")
    c1 = modes.online_encrypt_block(a, bytes(16), 0)
    # flip a byte inside block 2's key material
    raw[32 + 192 + 50] ^= 0xFF
    b = modes.online_init(QuantumKeyStream.from_bytes(bytes(raw)), 128, "raw")
    assert modes.online_encrypt_block(b, bytes(16), 0) == c1
    assert modes.online_encrypt_block(a, bytes(16), 1) != modes.online_encrypt_block(b, bytes(16), 1)


def test_online_blocks_are_sequential():
    ctx = modes.online_init(_stream(2000), 128, "raw")
    modes.online_encrypt_block(ctx, bytes(16), 0)
    with pytest.raises(ValueError):
        modes.online_encrypt_block(ctx, bytes(16), 5)


def test_online_block_decrypt():
    s = _stream(2000)
    enc = modes.online_init(s, 128, "raw")
    p = [b"A" * 16, b"B" * 16]
    c = [modes.online_encrypt_block(enc, p[i], i) for i in range(2)]
    dec = modes.online_init(s.replay(), 128, "raw")
    assert [modes.online_decrypt_block(dec, c[i], i) for i in range(2)] == p


def test_online_golden_vector():
    # fixed BB84 seed, two all-zero blocks
    r = run_session(Bb84Config(n_pump=10_000, rng_seed=7))
    ctx = modes.online_init(r.key_stream(), 128, "raw")
    c1 = modes.online_encrypt_block(ctx, bytes(16), 0)
    c2 = modes.online_encrypt_block(ctx, bytes(16), 1)
    assert c1.hex() == "da334a4ec524d2062f0ec74bbe7e8742"
    assert c2.hex() == "0fa5d9ee2911dc9e93972ecc2e231acc"
    assert ctx.bits_consumed == 256 + 2 * 128 * 12

    # hand trace of block 1: box from the first 256 bits, then qk_1, then 11 raw round keys
    raw = np.packbits(r.sifted_key).tobytes()
    box = oracle_aes.shuffled_box(raw[:32])
    qk1 = raw[32:48]
    rks = [raw[48 + 16 * i:64 + 16 * i] for i in range(11)]
    assert oracle_aes.encrypt_with(qk1, rks, box) == c1


def test_empty_message_consumes_nothing_online():
    s = _stream(1000)
    ctx = modes.online_init(s, 128, "ctr")
    assert modes.encrypt_message(ctx, b"", bytes(16)) == b""
    assert s.cursor == 0


def test_bad_options():
    with pytest.raises(ValueError):
        modes.online_init(_stream(100), 128, "ecb")
    with pytest.raises(ValueError):
        modes.online_init(_stream(100), 128, "ctr", key_refresh="round")
