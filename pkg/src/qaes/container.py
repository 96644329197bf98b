"""Encrypted file container.

Layout (big-endian)::

    magic        4   b"QAES"
    version      1
    mode         1   0 offline, 1 online
    key_len      1   0: 128, 1: 192, 2: 256
    block_mode   1   0 ctr, 1 cfb, 2 ofb, 3 raw
    nonce        16
    reserved_tag 16  zero; kept for a future authentication tag
    payload_len  8
    -- online mode only: session descriptor --
    seed         8   BB84 session seed
    n_pump       8   qubits pumped in that session
    cfg_digest   8   first 8 bytes of the session config digest
    key_refresh  1   0 block, 1 message
    box_refresh  1   0 message, 1 block, 2 round
    -- then payload_len bytes of ciphertext --
"""

import struct
from dataclasses import dataclass

from .errors import ContainerError, TruncatedContainer

MAGIC = b"QAES"
VERSION = 1
HEADER = struct.Struct(">4sBBBB16s16sQ")
SESSION = struct.Struct(">QQ8sBB")

MODES = ("offline", "online")
KEY_LENS = (128, 192, 256)
BLOCK_MODES = ("ctr", "cfb", "ofb", "raw")
KEY_REFRESH = ("block", "message")
BOX_REFRESH = ("message", "block", "round")


@dataclass(frozen=True)
class SessionDescriptor:
    seed: int
    n_pump: int
    cfg_digest: bytes
    key_refresh: str = "block"
    box_refresh: str = "message"


@dataclass(frozen=True)
class ContainerHeader:
    mode: str
    key_len: int
    block_mode: str
    nonce: bytes
    payload_len: int
    version: int = VERSION
    reserved_tag: bytes = bytes(16)

    def pack(self):
        return HEADER.pack(
            MAGIC,
            self.version,
            MODES.index(self.mode),
            KEY_LENS.index(self.key_len),
            BLOCK_MODES.index(self.block_mode),
            self.nonce,
            self.reserved_tag,
            self.payload_len,
        )


def _code(table, value, what):
    if value >= len(table):
        raise ContainerError(f"unknown {what} code {value}")
    return table[value]


def write_container(header, payload, session=None):
    if len(payload) != header.payload_len:
        raise ValueError("payload_len does not match payload")
    if (header.mode == "online") != (session is not None):
        raise ValueError("online containers carry a session descriptor, offline ones do not")
    parts = [header.pack()]
    if session is not None:
        parts.append(SESSION.pack(session.seed, session.n_pump, session.cfg_digest,
                                  KEY_REFRESH.index(session.key_refresh),
                                  BOX_REFRESH.index(session.box_refresh)))
    parts.append(payload)
    return b"".join(parts)


def read_container(data):
    """Parse a container; returns (header, session descriptor or None, payload)."""
    data = bytes(data)
    if not MAGIC.startswith(data[:4]):
        raise ContainerError("bad magic")
    if len(data) < HEADER.size:
        raise TruncatedContainer("container shorter than its header")
    magic, version, mode, key_len, block_mode, nonce, tag, payload_len = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ContainerError("bad magic")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    header = ContainerHeader(
        mode=_code(MODES, mode, "mode"),
        key_len=_code(KEY_LENS, key_len, "key length"),
        block_mode=_code(BLOCK_MODES, block_mode, "block mode"),
        nonce=nonce,
        payload_len=payload_len,
        version=version,
        reserved_tag=tag,
    )
    pos = HEADER.size
    session = None
    if header.mode == "online":
        if len(data) < pos + SESSION.size:
            raise TruncatedContainer("missing session descriptor")
        seed, n_pump, digest, kr, br = SESSION.unpack_from(data, pos)
        session = SessionDescriptor(seed, n_pump, digest, _code(KEY_REFRESH, kr, "key refresh"),
                                    _code(BOX_REFRESH, br, "box refresh"))
        pos += SESSION.size
    body = data[pos:]
    if len(body) < payload_len:
        raise TruncatedContainer(f"payload truncated: {len(body)} of {payload_len} bytes")
    if len(body) > payload_len:
        raise ContainerError("trailing bytes after payload")
    return header, session, body
