"""Master/slave QAES negotiation over a reliable byte stream.

Phases, in order::

    HELLO -> QBATCH* -> BASES -> SIFT_IDX -> QBER_SAMPLE -> KEY_CONFIRM
          -> PARAMS -> DATA* -> BYE

The quantum channel is simulated: QBATCH frames carry one byte per qubit,
``value | basis << 1``. The slave measures each record following the BB84
rules in :mod:`qaes.qkd_bb84`, so only the simulation layer ever looks at the
sender's basis.

Endpoints are sans-IO state machines (``start()`` / ``receive(frame)`` return
frames to send). :func:`run_lockstep` drives both in one thread for
reproducible transcripts; :func:`run_master` / :func:`run_slave` drive one
side over a socket.

Wire format: 4-byte big-endian payload length, 1-byte tag, payload.
"""

import enum
import hashlib
import json
import socket
import struct
import threading
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from . import modes
from .errors import KeyDepletionError, ProtocolError
from .qkd_bb84 import (
    Bb84Config,
    QuantumKeyStream,
    channel_noise,
    choose_sample,
    estimate_qber,
    intercept_resend,
    make_rng,
    measure,
    prepare,
    pump_for_bits,
)

MAX_FRAME = 1 << 20
QBATCH_SIZE = 1 << 16
CONFIRM_BITS = 64
PROTOCOL_VERSION = 1
_HEADER = struct.Struct(">IB")


class Tag(enum.IntEnum):
    HELLO = 1
    QBATCH = 2
    BASES = 3
    SIFT_IDX = 4
    QBER_SAMPLE = 5
    KEY_CONFIRM = 6
    PARAMS = 7
    DATA = 8
    ABORT = 9
    BYE = 10


class Outcome(enum.Enum):
    COMPLETE = "complete"
    ABORT_QBER = "abort-qber"
    ABORT_DIGEST = "abort-digest"
    ABORT_KEY = "abort-key-material"
    ABORT_PROTOCOL = "abort-protocol"
    MALFORMED = "malformed-frame"
    TRANSPORT = "transport-failure"

    @property
    def aborted(self):
        return self is not Outcome.COMPLETE


class MalformedFrame(ProtocolError):
    pass


class TransportError(ProtocolError):
    pass


@dataclass(frozen=True)
class Frame:
    tag: Tag
    payload: bytes = b""

    def encode(self):
        if len(self.payload) > MAX_FRAME:
            raise MalformedFrame(f"payload of {len(self.payload)} bytes exceeds {MAX_FRAME}")
        return _HEADER.pack(len(self.payload), self.tag) + self.payload

    @property
    def digest(self):
        return hashlib.sha256(self.payload).hexdigest()[:16]


def decode_header(header):
    length, tag = _HEADER.unpack(header)
    if length > MAX_FRAME:
        raise MalformedFrame(f"frame length {length} exceeds {MAX_FRAME}")
    try:
        return length, Tag(tag)
    except ValueError:
        raise MalformedFrame(f"unknown frame tag {tag}") from None


def decode_frames(data):
    """Split a byte string holding whole frames."""
    frames, pos = [], 0
    while pos < len(data):
        if len(data) - pos < _HEADER.size:
            raise MalformedFrame("truncated frame header")
        length, tag = decode_header(data[pos:pos + _HEADER.size])
        pos += _HEADER.size
        if len(data) - pos < length:
            raise MalformedFrame("truncated frame payload")
        frames.append(Frame(tag, bytes(data[pos:pos + length])))
        pos += length
    return frames


def _json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _unjson(payload):
    try:
        return json.loads(payload)
    except ValueError:
        raise MalformedFrame("payload is not JSON") from None


def key_digest(bits):
    """64-bit confirmation digest of a key bit string."""
    bits = np.asarray(bits, dtype=np.uint8)
    h = hashlib.sha256(b"qaes-key-confirm" + len(bits).to_bytes(8, "big") + np.packbits(bits).tobytes())
    return h.digest()[:8]


def encode_qubits(values, bases):
    return (values | (bases << 1)).astype(np.uint8).tobytes()


def decode_qubits(payload):
    rec = np.frombuffer(payload, dtype=np.uint8)
    if rec.size and rec.max() > 3:
        raise MalformedFrame("qubit record out of range")
    return rec & 1, rec >> 1


# -- configuration & results --------------------------------------------------


@dataclass(frozen=True)
class NetConfig:
    bb84: Bb84Config = field(default_factory=Bb84Config)
    key_len: int = 128
    mode: str = "offline"
    block_mode: str = "ctr"
    key_refresh: str = "block"
    box_refresh: str = "message"
    auto_pump: bool = True  # master only: pump enough qubits for the payload

    def params(self):
        return {"key_len": self.key_len, "mode": self.mode, "block_mode": self.block_mode,
                "key_refresh": self.key_refresh, "box_refresh": self.box_refresh}


@dataclass
class SessionSummary:
    role: str
    outcome: Outcome = Outcome.COMPLETE
    reason: str = ""
    qber: float | None = None
    n_pump: int = 0
    n_sifted: int = 0
    key_bits: int = 0
    key_digest: str = ""
    params: dict = field(default_factory=dict)
    data: bytes | None = None


def _bits_required(params, n_bytes):
    """Key bits (after confirmation) a PARAMS choice needs for ``n_bytes`` of data."""
    return modes.message_bits_needed(params["mode"], params["key_len"], params["block_mode"], n_bytes,
                                     params["key_refresh"], params["box_refresh"])


def _context(params, key_bits):
    stream = QuantumKeyStream.from_bits(key_bits)
    if params["mode"] == "offline":
        return modes.offline_init(stream, params["key_len"], params["block_mode"])
    return modes.online_init(stream, params["key_len"], params["block_mode"],
                             params["key_refresh"], params["box_refresh"])


# -- endpoints ----------------------------------------------------------------


RNG_STREAMS = {"master": 1, "slave": 2, "eve": 3}


class _Endpoint:
    role = ""

    def __init__(self, cfg):
        self.cfg = cfg
        # each party draws from its own stream; a shared one would correlate their choices
        self.rng = make_rng(cfg.bb84.rng_seed, RNG_STREAMS[self.role])
        self.summary = SessionSummary(role=self.role)
        self.phase = "init"
        self.done = False
        self._aborting = False
        self.key = None
        self.ctx = None

    def start(self):
        return []

    def receive(self, frame):
        if self.done:
            return []
        if frame.tag is Tag.ABORT:
            return self._on_abort(frame)
        if self._aborting:
            return []
        handler = getattr(self, f"_on_{self.phase}", None)
        try:
            if handler is None:
                raise ProtocolError(f"{self.role}: no frames expected in phase {self.phase}")
            return handler(frame)
        except MalformedFrame as exc:
            return self._abort(Outcome.MALFORMED, str(exc))
        except ProtocolError as exc:
            return self._abort(Outcome.ABORT_PROTOCOL, str(exc))

    def _expect(self, frame, *tags):
        if frame.tag not in tags:
            raise ProtocolError(f"{self.role}: got {frame.tag.name} in phase {self.phase}")

    def _abort(self, outcome, reason, **extra):
        self.summary.outcome = outcome
        self.summary.reason = reason
        self._aborting = True
        return [Frame(Tag.ABORT, _json({"outcome": outcome.value, "reason": reason, **extra}))]

    def _on_abort(self, frame):
        if self._aborting:
            # peer acknowledged our abort
            self.done = True
            return []
        try:
            info = _unjson(frame.payload)
            outcome = Outcome(info["outcome"])
        except (MalformedFrame, KeyError, ValueError, TypeError):
            info, outcome = {}, Outcome.ABORT_PROTOCOL
        self.summary.outcome = outcome
        self.summary.reason = info.get("reason", "peer aborted")
        if "qber" in info:
            self.summary.qber = info["qber"]
        self.done = True
        return [Frame(Tag.ABORT, _json({"outcome": outcome.value, "reason": "ack"}))]

    def _finish_key(self, key):
        final = key[CONFIRM_BITS:]
        self.key = final
        self.summary.key_bits = len(final)
        self.summary.key_digest = key_digest(final).hex()


class Master(_Endpoint):
    """Sender side: pumps qubits, chooses the QBER sample and the cipher
    parameters, then sends ``data`` encrypted."""

    role = "master"

    def __init__(self, cfg, data=b""):
        super().__init__(cfg)
        self.data = bytes(data)
        n_pump = cfg.bb84.n_pump
        if cfg.auto_pump:
            need = _bits_required(cfg.params(), len(self.data)) + CONFIRM_BITS
            n_pump = max(n_pump, pump_for_bits(need, cfg.bb84))
        self.n_pump = n_pump
        self.summary.n_pump = n_pump

    def start(self):
        self.phase = "hello"
        hello = {"version": PROTOCOL_VERSION, "n_pump": self.n_pump, "batch": QBATCH_SIZE}
        return [Frame(Tag.HELLO, _json(hello))]

    def _on_hello(self, frame):
        self._expect(frame, Tag.HELLO)
        if _unjson(frame.payload).get("version") != PROTOCOL_VERSION:
            raise ProtocolError("protocol version mismatch")
        self.bits, self.bases = prepare(self.rng, self.n_pump)
        self.phase = "bases"
        return [Frame(Tag.QBATCH, encode_qubits(self.bits[i:i + QBATCH_SIZE], self.bases[i:i + QBATCH_SIZE]))
                for i in range(0, self.n_pump, QBATCH_SIZE)]

    def _on_bases(self, frame):
        self._expect(frame, Tag.BASES)
        peer = np.unpackbits(np.frombuffer(frame.payload, np.uint8))[:self.n_pump]
        if len(peer) != self.n_pump:
            raise MalformedFrame("BASES payload too short")
        match = peer == self.bases
        self.sifted = self.bits[match]
        self.summary.n_sifted = len(self.sifted)
        self.sample = choose_sample(self.rng, len(self.sifted), self.cfg.bb84.sacrifice_fraction)
        sample_payload = (
            struct.pack(">I", len(self.sample))
            + self.sample.astype(">u4").tobytes()
            + np.packbits(self.sifted[self.sample]).tobytes()
        )
        self.phase = "qber"
        return [Frame(Tag.SIFT_IDX, np.packbits(match).tobytes()), Frame(Tag.QBER_SAMPLE, sample_payload)]

    def _on_qber(self, frame):
        self._expect(frame, Tag.QBER_SAMPLE)
        k = len(self.sample)
        peer = np.unpackbits(np.frombuffer(frame.payload, np.uint8))[:k]
        if len(peer) != k:
            raise MalformedFrame("QBER_SAMPLE payload too short")
        qber = estimate_qber(self.sifted[self.sample], peer)
        self.summary.qber = qber
        if qber > self.cfg.bb84.qber_abort_threshold:
            return self._abort(Outcome.ABORT_QBER, f"QBER {qber:.4f} above threshold", qber=qber)
        keep = np.ones(len(self.sifted), bool)
        keep[self.sample] = False
        self.raw_key = self.sifted[keep]
        self.phase = "confirm"
        return [Frame(Tag.KEY_CONFIRM, key_digest(self.raw_key))]

    def _on_confirm(self, frame):
        self._expect(frame, Tag.KEY_CONFIRM)
        if frame.payload != key_digest(self.raw_key):
            return self._abort(Outcome.ABORT_DIGEST, "key confirmation digest mismatch")
        self._finish_key(self.raw_key)
        params = self.cfg.params()
        params["nonce"] = self.rng.bytes(16).hex()
        params["length"] = len(self.data)
        self.summary.params = params
        if len(self.key) < _bits_required(params, len(self.data)):
            return self._abort(Outcome.ABORT_KEY, "not enough key material for requested parameters")
        self.phase = "params"
        return [Frame(Tag.PARAMS, _json(params))]

    def _on_params(self, frame):
        self._expect(frame, Tag.PARAMS)
        if _unjson(frame.payload) != self.summary.params:
            raise ProtocolError("slave did not accept the proposed parameters")
        params = self.summary.params
        ctx = self.ctx = _context(params, self.key)
        ct = modes.encrypt_message(ctx, self.data, bytes.fromhex(params["nonce"]))
        out = [Frame(Tag.DATA, ct[i:i + MAX_FRAME]) for i in range(0, len(ct), MAX_FRAME)]
        out.append(Frame(Tag.BYE, _json({"bytes": len(ct)})))
        self.phase = "bye"
        return out

    def _on_bye(self, frame):
        self._expect(frame, Tag.BYE)
        self.done = True
        return []


class Slave(_Endpoint):
    """Receiver side: measures qubits in random bases and decrypts the data."""

    role = "slave"

    def start(self):
        self.phase = "hello"
        return []

    def _on_hello(self, frame):
        self._expect(frame, Tag.HELLO)
        hello = _unjson(frame.payload)
        if hello.get("version") != PROTOCOL_VERSION:
            raise ProtocolError("protocol version mismatch")
        try:
            self.n_pump = int(hello["n_pump"])
        except (KeyError, TypeError, ValueError):
            raise MalformedFrame("HELLO without n_pump") from None
        self.summary.n_pump = self.n_pump
        self._values, self._bases = [], []
        self._received = 0
        self.phase = "qubits"
        return [Frame(Tag.HELLO, _json({"version": PROTOCOL_VERSION}))]

    def _on_qubits(self, frame):
        self._expect(frame, Tag.QBATCH)
        values, bases = decode_qubits(frame.payload)
        if self._received + len(values) > self.n_pump:
            raise MalformedFrame("more qubits than announced")
        values = channel_noise(self.rng, values, self.cfg.bb84.p_noise)
        mine = self.rng.integers(0, 2, len(values), dtype=np.uint8)
        self._values.append(measure(self.rng, values, bases, mine))
        self._bases.append(mine)
        self._received += len(values)
        if self._received < self.n_pump:
            return []
        self.bits = np.concatenate(self._values)
        self.bases = np.concatenate(self._bases)
        self.phase = "sift"
        return [Frame(Tag.BASES, np.packbits(self.bases).tobytes())]

    def _on_sift(self, frame):
        self._expect(frame, Tag.SIFT_IDX)
        match = np.unpackbits(np.frombuffer(frame.payload, np.uint8))[:self.n_pump].astype(bool)
        if len(match) != self.n_pump:
            raise MalformedFrame("SIFT_IDX payload too short")
        self.sifted = self.bits[match]
        self.summary.n_sifted = len(self.sifted)
        self.phase = "qber"
        return []

    def _on_qber(self, frame):
        self._expect(frame, Tag.QBER_SAMPLE)
        payload = frame.payload
        if len(payload) < 4:
            raise MalformedFrame("QBER_SAMPLE payload too short")
        (k,) = struct.unpack(">I", payload[:4])
        if len(payload) < 4 + 4 * k + (k + 7) // 8:
            raise MalformedFrame("QBER_SAMPLE payload too short")
        idx = np.frombuffer(payload[4:4 + 4 * k], ">u4").astype(np.int64)
        if k and (idx.max() >= len(self.sifted) or len(np.unique(idx)) != k):
            raise MalformedFrame("QBER_SAMPLE indices invalid")
        theirs = np.unpackbits(np.frombuffer(payload[4 + 4 * k:], np.uint8))[:k]
        mine = self.sifted[idx]
        qber = estimate_qber(theirs, mine)
        self.summary.qber = qber
        if qber > self.cfg.bb84.qber_abort_threshold:
            return self._abort(Outcome.ABORT_QBER, f"QBER {qber:.4f} above threshold", qber=qber)
        keep = np.ones(len(self.sifted), bool)
        keep[idx] = False
        self.raw_key = self.sifted[keep]
        self.phase = "confirm"
        return [Frame(Tag.QBER_SAMPLE, np.packbits(mine).tobytes())]

    def _on_confirm(self, frame):
        self._expect(frame, Tag.KEY_CONFIRM)
        mine = key_digest(self.raw_key)
        if frame.payload != mine:
            return self._abort(Outcome.ABORT_DIGEST, "key confirmation digest mismatch")
        self._finish_key(self.raw_key)
        self.phase = "params"
        return [Frame(Tag.KEY_CONFIRM, mine)]

    def _on_params(self, frame):
        self._expect(frame, Tag.PARAMS)
        params = _unjson(frame.payload)
        try:
            if (params["mode"] not in ("online", "offline")
                    or params["key_len"] not in (128, 192, 256)
                    or params["block_mode"] not in modes.BLOCK_MODES
                    or params["key_refresh"] not in modes.KEY_REFRESH
                    or params["box_refresh"] not in modes.BOX_REFRESH):
                raise ValueError(params)
            need = _bits_required(params, int(params["length"]))
            bytes.fromhex(params["nonce"])
        except (KeyError, TypeError, ValueError):
            raise ProtocolError("unacceptable PARAMS") from None
        if len(self.key) < need:
            return self._abort(Outcome.ABORT_KEY, "not enough key material for requested parameters")
        self.summary.params = params
        self._ct = []
        self.phase = "data"
        return [Frame(Tag.PARAMS, _json(params))]

    def _on_data(self, frame):
        self._expect(frame, Tag.DATA, Tag.BYE)
        if frame.tag is Tag.DATA:
            self._ct.append(frame.payload)
            return []
        ct = b"".join(self._ct)
        params = self.summary.params
        try:
            ctx = self.ctx = _context(params, self.key)
            pt = modes.decrypt_message(ctx, ct, bytes.fromhex(params["nonce"]))
        except (KeyDepletionError, ValueError) as exc:
            return self._abort(Outcome.ABORT_KEY, f"decryption failed: {exc}")
        self.summary.data = pt
        self.done = True
        return [Frame(Tag.BYE, _json({"bytes": len(ct)}))]


# -- Eve ----------------------------------------------------------------------


class EveTap:
    """Intercept-resend attacker on master-to-slave frames.

    With ``scope="quantum"`` Eve measures a random ``fraction`` of the qubits
    in each QBATCH frame and resends her results. With ``scope="classical"``
    she only records classical frames and changes nothing.
    """

    def __init__(self, fraction, seed=0, scope="quantum"):
        if scope not in ("quantum", "classical"):
            raise ValueError("scope must be 'quantum' or 'classical'")
        self.fraction = fraction
        self.scope = scope
        self.rng = make_rng(seed, RNG_STREAMS["eve"])
        self.intercepted = 0
        self.observed = []

    def __call__(self, frame):
        if frame.tag is Tag.QBATCH:
            if self.scope != "quantum":
                return frame
            values, bases = decode_qubits(frame.payload)
            values, bases, mask = intercept_resend(self.rng, values, bases, self.fraction)
            self.intercepted += int(mask.sum())
            return Frame(Tag.QBATCH, encode_qubits(values, bases))
        if self.scope == "classical":
            self.observed.append(frame)
        return frame


# -- transcripts --------------------------------------------------------------


@dataclass(frozen=True)
class TranscriptEntry:
    seq: int
    direction: str  # "M>S" or "S>M"
    tag: str
    length: int
    digest: str

    def line(self):
        return f"{self.seq:06d} {self.direction} {self.tag} {self.length} {self.digest}"


def format_transcript(entries):
    return "".join(e.line() + "\n" for e in entries)


def parse_transcript(text):
    entries = []
    for line in text.splitlines():
        if not line.strip():
            continue
        seq, direction, tag, length, digest = line.split()
        entries.append(TranscriptEntry(int(seq), direction, tag, int(length), digest))
    return entries


_PHASE_ORDER = ["HELLO", "QBATCH", "BASES", "SIFT_IDX", "QBER_SAMPLE", "KEY_CONFIRM", "PARAMS", "DATA", "BYE"]


def validate_transcript(entries):
    """Return a list of phase-safety violations (empty means the transcript is clean).

    DATA may only appear after KEY_CONFIRM frames from both sides and after
    the slave accepted PARAMS; phases never move backwards; nothing but ABORT
    follows an ABORT.
    """
    problems = []
    confirmed = set()
    params_ok = False
    aborted = False
    rank = 0
    for e in entries:
        if e.tag == "ABORT":
            aborted = True
            continue
        if aborted:
            problems.append(f"{e.seq}: {e.tag} after ABORT")
        if e.tag not in _PHASE_ORDER:
            problems.append(f"{e.seq}: unknown tag {e.tag}")
            continue
        r = _PHASE_ORDER.index(e.tag)
        if r < rank:
            problems.append(f"{e.seq}: {e.tag} after a later phase")
        rank = max(rank, r)
        if e.tag == "KEY_CONFIRM":
            confirmed.add(e.direction)
        elif e.tag == "PARAMS" and e.direction == "S>M":
            params_ok = True
        elif e.tag == "DATA" and (confirmed != {"M>S", "S>M"} or not params_ok):
            problems.append(f"{e.seq}: DATA before successful KEY_CONFIRM and PARAMS")
    return problems


# -- drivers ------------------------------------------------------------------


def run_lockstep(master, slave, tap=None):
    """Deliver frames one at a time in FIFO order, in a single thread.

    Returns the transcript as recorded at delivery (after any tap).
    """
    transcript = []
    queue = deque(("M>S", f) for f in master.start())
    queue.extend(("S>M", f) for f in slave.start())
    while queue:
        direction, frame = queue.popleft()
        if direction == "M>S" and tap is not None:
            frame = tap(frame)
        transcript.append(TranscriptEntry(len(transcript), direction, frame.tag.name, len(frame.payload), frame.digest))
        dest, back = (slave, "S>M") if direction == "M>S" else (master, "M>S")
        queue.extend((back, f) for f in dest.receive(frame))
    return transcript


def negotiate(master_cfg, slave_cfg, data=b"", eve=None):
    """Run a full in-process session; returns (master summary, slave summary, transcript)."""
    master, slave = Master(master_cfg, data), Slave(slave_cfg)
    transcript = run_lockstep(master, slave, eve)
    return master.summary, slave.summary, transcript


class StreamTransport:
    """Frame transport over a connected stream socket."""

    def __init__(self, sock, tap=None):
        self.sock = sock
        self.tap = tap
        self.log = []
        self._lock = threading.Lock()

    def _record(self, direction, frame):
        with self._lock:
            self.log.append(TranscriptEntry(len(self.log), direction, frame.tag.name, len(frame.payload), frame.digest))

    def send_frame(self, frame, direction=""):
        if self.tap is not None:
            frame = self.tap(frame)
        if direction:
            self._record(direction, frame)
        try:
            self.sock.sendall(frame.encode())
        except OSError as exc:
            raise TransportError(str(exc)) from exc

    def _recv_exact(self, n):
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self.sock.recv(n - len(buf))
            except OSError as exc:
                raise TransportError(str(exc)) from exc
            if not chunk:
                raise TransportError("connection closed by peer")
            buf += chunk
        return bytes(buf)

    def recv_frame(self, direction=""):
        length, tag = decode_header(self._recv_exact(_HEADER.size))
        frame = Frame(tag, self._recv_exact(length))
        if direction:
            self._record(direction, frame)
        return frame

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


def transport_pair():
    """Two connected in-process transports (master side, slave side)."""
    a, b = socket.socketpair()
    return StreamTransport(a), StreamTransport(b)


def attach_eve(pair, eve_fraction, seed=0, scope="quantum"):
    """Tap the master side of ``pair`` so its outgoing frames pass through Eve."""
    master_t, slave_t = pair
    tap = EveTap(eve_fraction, seed, scope)
    master_t.tap = tap
    return (master_t, slave_t), tap


def _drive(endpoint, transport, sent, got):
    try:
        for f in endpoint.start():
            transport.send_frame(f, sent)
        while not endpoint.done:
            try:
                frame = transport.recv_frame(got)
            except MalformedFrame as exc:
                for f in endpoint._abort(Outcome.MALFORMED, str(exc)):
                    transport.send_frame(f, sent)
                break
            for f in endpoint.receive(frame):
                transport.send_frame(f, sent)
    except TransportError as exc:
        # a peer that closes right after acknowledging our ABORT is a clean end
        if not endpoint._aborting:
            endpoint.summary.outcome = Outcome.TRANSPORT
            endpoint.summary.reason = str(exc)
    return endpoint.summary


def run_master(transport, cfg, data=b""):
    return _drive(Master(cfg, data), transport, "M>S", "S>M")


def run_slave(transport, cfg):
    return _drive(Slave(cfg), transport, "S>M", "M>S")


def run_threaded(master_cfg, slave_cfg, data=b"", eve_fraction=None, eve_seed=0):
    """Both endpoints on their own thread over a socketpair."""
    pair = transport_pair()
    if eve_fraction is not None:
        pair, _ = attach_eve(pair, eve_fraction, eve_seed)
    result = {}
    t = threading.Thread(target=lambda: result.setdefault("slave", run_slave(pair[1], slave_cfg)))
    t.start()
    result["master"] = run_master(pair[0], master_cfg, data)
    t.join()
    for tr in pair:
        tr.close()
    return result["master"], result["slave"], pair[0].log


def relay(upstream_listen, downstream_addr, tap):
    """Man-in-the-middle relay: accept one master connection, forward frames
    to the slave at ``downstream_addr`` through ``tap`` and back untouched."""
    conn, _ = upstream_listen.accept()
    down = socket.create_connection(downstream_addr)
    m_side, s_side = StreamTransport(conn), StreamTransport(down, tap=tap)

    def pump(src, dst):
        try:
            while True:
                dst.send_frame(src.recv_frame())
        except ProtocolError:
            pass
        finally:
            for s in (conn, down):
                try:
                    s.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass

    threads = [threading.Thread(target=pump, args=(m_side, s_side)),
               threading.Thread(target=pump, args=(s_side, m_side))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    conn.close()
    down.close()


def summary_dict(summary):
    d = asdict(summary)
    d["outcome"] = summary.outcome.value
    d.pop("data")
    return d
