import os

import numpy as np
import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle_aes
from qaes.aes_core import (
    CipherParams,
    RoundKeySet,
    decrypt_block,
    encrypt_block,
    expand_key,
    inv_mix_column,
    mix_column,
    params_for_key_len,
)
from qaes.errors import KeyLengthMismatch, UnsupportedKeyLength
from qaes.gf import STANDARD_INV_SBOX, STANDARD_SBOX, gf_mul


@pytest.mark.parametrize("bits, row", [(128, (4, 4, 10)), (192, (6, 4, 12)), (256, (8, 4, 14))])
def test_params_table(bits, row):
    p = params_for_key_len(bits)
    assert (p.nk, p.nb, p.nr) == row
    assert p.key_bits == bits


@pytest.mark.parametrize("bits", [0, 64, 127, 160, 512])
def test_unsupported_key_len(bits):
    with pytest.raises(UnsupportedKeyLength):
        params_for_key_len(bits)


def test_params_rejects_off_table_rows():
    with pytest.raises(ValueError):
        CipherParams(4, 4, 12)


def test_oracle_sbox_is_fips_table():
    # the oracle's literal table must agree with the GF(2^8) construction
    assert list(STANDARD_SBOX) == oracle_aes.SBOX
    assert oracle_aes.SBOX[0x00] == 0x63 and oracle_aes.SBOX[0x53] == 0xED


# FIPS-197 known answers
FIPS = [
    ("000102030405060708090a0b0c0d0e0f", "69c4e0d86a7b0430d8cdb78070b4c55a"),
    ("000102030405060708090a0b0c0d0e0f1011121314151617", "dda97ca4864cdfe06eaf70a0ec0d7191"),
    ("000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f", "8ea2b7ca516745bfeafc49904b496089"),
]
FIPS_PT = bytes.fromhex("00112233445566778899aabbccddeeff")


@pytest.mark.parametrize("key, ct", FIPS)
def test_fips_known_answer(key, ct):
    key = bytes.fromhex(key)
    rks = expand_key(key)
    assert encrypt_block(FIPS_PT, rks).hex() == ct
    assert decrypt_block(bytes.fromhex(ct), rks) == FIPS_PT
    assert oracle_aes.encrypt(key, FIPS_PT).hex() == ct


@pytest.mark.parametrize("nbytes", [16, 24, 32])
def test_matches_library_aes(nbytes):
    rng = np.random.default_rng(nbytes)
    for _ in range(50):
        key, p = rng.bytes(nbytes), rng.bytes(16)
        lib = Cipher(algorithms.AES(key), modes.ECB()).encryptor().update(p)
        assert encrypt_block(p, expand_key(key)) == lib


def test_zero_key_schedule_matches_oracle():
    for n in (16, 24, 32):
        rks = expand_key(bytes(n))
        assert list(rks.keys) == oracle_aes.key_schedule(bytes(n))


def test_schedule_lengths():
    assert len(expand_key(bytes(16)).keys) == 11
    assert len(expand_key(bytes(24)).keys) == 13
    assert len(expand_key(bytes(32)).keys) == 15


def test_schedule_rejects_wrong_key_length():
    with pytest.raises(KeyLengthMismatch):
        expand_key(bytes(16), params_for_key_len(256))
    with pytest.raises(UnsupportedKeyLength):
        expand_key(bytes(20))


def test_one_bit_key_change_changes_schedule():
    a = bytearray(16)
    b = bytearray(16)
    b[5] ^= 0x10
    assert expand_key(bytes(a)).keys != expand_key(bytes(b)).keys


def test_round_key_set_validation():
    with pytest.raises(ValueError):
        RoundKeySet((bytes(16),) * 5)
    with pytest.raises(ValueError):
        RoundKeySet((bytes(15),) * 11)


def test_mix_column_example():
    assert mix_column([0xDB, 0x13, 0x53, 0x45]) == [0x8E, 0x4D, 0xA1, 0xBC]


def test_mix_column_against_bitwise_multiply():
    # brute-force GF multiply with the matrix rows written out
    rng = np.random.default_rng(5)
    for col in rng.integers(0, 256, (200, 4)):
        a = [int(x) for x in col]
        want = [
            oracle_aes.mul(a[0], 2) ^ oracle_aes.mul(a[1], 3) ^ a[2] ^ a[3],
            a[0] ^ oracle_aes.mul(a[1], 2) ^ oracle_aes.mul(a[2], 3) ^ a[3],
            a[0] ^ a[1] ^ oracle_aes.mul(a[2], 2) ^ oracle_aes.mul(a[3], 3),
            oracle_aes.mul(a[0], 3) ^ a[1] ^ a[2] ^ oracle_aes.mul(a[3], 2),
        ]
        assert mix_column(a) == want


def test_inv_mix_column_exhaustive_per_position():
    base = [0x01, 0x23, 0x45, 0x67]
    for pos in range(4):
        for v in range(256):
            col = list(base)
            col[pos] = v
            assert inv_mix_column(mix_column(col)) == col


def test_gf_mul_matches_oracle():
    for a in range(0, 256, 7):
        for b in range(256):
            assert gf_mul(a, b) == oracle_aes.mul(a, b)


def test_roundtrip_random_boxes():
    rng = np.random.default_rng(9)
    for nbytes in (16, 24, 32):
        for _ in range(30):
            rks = expand_key(rng.bytes(nbytes))
            box = rng.permutation(256).astype(np.uint8)
            inv = np.argsort(box).astype(np.uint8)
            p = rng.bytes(16)
            c = encrypt_block(p, rks, box)
            assert decrypt_block(c, rks, inv) == p
            assert c == oracle_aes.encrypt_with(p, list(rks.keys), [int(x) for x in box])


def test_roundtrip_many_blocks_vectorized():
    # 10^4 random trials through the batched kernels
    from qaes.aes_core import BlockKeying, decrypt_blocks, encrypt_blocks

    rng = np.random.default_rng(10)
    rks = expand_key(rng.bytes(32))
    blocks = rng.integers(0, 256, (10_000, 16), dtype=np.uint8)
    keying = BlockKeying.uniform(len(blocks), rks)
    assert np.array_equal(decrypt_blocks(encrypt_blocks(blocks, keying), keying), blocks)


def test_wrong_round_keys_fail():
    rng = np.random.default_rng(11)
    for _ in range(50):
        p = rng.bytes(16)
        c = encrypt_block(p, expand_key(rng.bytes(16)))
        assert decrypt_block(c, expand_key(rng.bytes(16))) != p


def test_non_inverse_box_fails_roundtrip():
    rng = np.random.default_rng(12)
    rks = expand_key(rng.bytes(16))
    p = rng.bytes(16)
    c = encrypt_block(p, rks, STANDARD_SBOX)
    wrong = np.roll(STANDARD_INV_SBOX, 1)
    assert decrypt_block(c, rks, wrong) != p


def test_block_length_checked():
    rks = expand_key(bytes(16))
    with pytest.raises(ValueError):
        encrypt_block(bytes(15), rks)
    with pytest.raises(ValueError):
        decrypt_block(bytes(17), rks)


@settings(max_examples=60, deadline=None)
@given(key=st.sampled_from([16, 24, 32]).flatmap(lambda n: st.binary(min_size=n, max_size=n)),
       block=st.binary(min_size=16, max_size=16))
def test_property_oracle_and_inverse(key, block):
    rks = expand_key(key)
    c = encrypt_block(block, rks)
    assert c == oracle_aes.encrypt(key, block)
    assert decrypt_block(c, rks) == block


def test_schedule_deterministic():
    k = os.urandom(24)
    assert expand_key(k).keys == expand_key(k).keys
