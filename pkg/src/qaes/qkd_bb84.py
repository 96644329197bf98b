"""Seeded BB84 simulation with channel noise and intercept-resend Eve.

Qubits are modeled as (value, basis) pairs. Measuring in the preparation
basis returns the value; measuring in the other basis returns a fair coin.
All randomness comes from one Philox-4x64 counter-based generator per
session (``numpy.random.Philox``), so a session is reproducible bit for bit
from its seed.
"""

import hashlib
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import KeyDepletionError

# qubits simulated per vectorized step; sessions larger than this are chunked
CHUNK_QUBITS = 1 << 22

# Key-generation time model: t = C0 + C1 * n_pump * (1 + NOISE_WEIGHT * p_noise + EVE_WEIGHT * eve_fraction)
# with C1 fixed by the calibration point (500 qubits, noise 0.05, no Eve) -> 0.23 ms.
QKG_OVERHEAD_MS = 0.03
NOISE_WEIGHT = 4.0
EVE_WEIGHT = 2.0
CAL_N_PUMP = 500
CAL_P_NOISE = 0.05
CAL_T_MS = 0.23


def make_rng(seed, stream=0):
    """Philox generator for ``seed``; nonzero ``stream`` gives an independent
    generator for another party sharing the same seed."""
    if stream:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class Bb84Config:
    n_pump: int = 500
    p_noise: float = 0.05
    eve_fraction: float = 0.0
    sacrifice_fraction: float = 0.2
    qber_abort_threshold: float = 0.11
    rng_seed: int = 0

    def __post_init__(self):
        if int(self.n_pump) != self.n_pump or self.n_pump < 16:
            raise ValueError(f"n_pump must be an integer >= 16, got {self.n_pump}")
        if not 0.0 <= self.p_noise <= 1.0:
            raise ValueError(f"p_noise must lie in [0, 1], got {self.p_noise}")
        if not 0.0 <= self.eve_fraction <= 1.0:
            raise ValueError(f"eve_fraction must lie in [0, 1], got {self.eve_fraction}")
        if not 0.0 < self.sacrifice_fraction < 1.0:
            raise ValueError(f"sacrifice_fraction must lie in (0, 1), got {self.sacrifice_fraction}")
        if not 0.0 <= self.qber_abort_threshold <= 1.0:
            raise ValueError(f"qber_abort_threshold must lie in [0, 1], got {self.qber_abort_threshold}")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError("rng_seed must fit in 64 bits")

    def to_text(self):
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())

    def digest(self):
        """Short stable identifier of the configuration (hex, 16 chars)."""
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    @classmethod
    def from_text(cls, text):
        """Parse ``key = value`` lines; ``#`` starts a comment. ``seed`` is
        accepted as an alias for ``rng_seed``."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key == "seed":
                key = "rng_seed"
            if key not in types:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            values[key] = int(val, 0) if types[key] in (int, "int") else float(val)
        return cls(**values)

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())


# -- qubit-level rules, shared with the network harness ---------------------


def prepare(rng, n):
    """Sender's random bits and bases (0 = rectilinear, 1 = diagonal)."""
    bits = rng.integers(0, 2, n, dtype=np.uint8)
    bases = rng.integers(0, 2, n, dtype=np.uint8)
    return bits, bases


def measure(rng, values, bases, meas_bases):
    coin = rng.integers(0, 2, len(values), dtype=np.uint8)
    return np.where(meas_bases == bases, values, coin).astype(np.uint8)


def intercept_resend(rng, values, bases, fraction):
    """Eve measures a random ``fraction`` of qubits in random bases and
    resends what she saw. Returns new (values, bases) and the intercept mask."""
    n = len(values)
    mask = rng.random(n) < fraction
    eve_bases = rng.integers(0, 2, n, dtype=np.uint8)
    seen = measure(rng, values, bases, eve_bases)
    return np.where(mask, seen, values).astype(np.uint8), np.where(mask, eve_bases, bases).astype(np.uint8), mask


def channel_noise(rng, values, p_noise):
    flips = rng.random(len(values)) < p_noise
    return values ^ flips.astype(np.uint8)


def choose_sample(rng, n_sifted, fraction):
    k = int(round(fraction * n_sifted))
    return np.sort(rng.choice(n_sifted, size=k, replace=False)) if k else np.zeros(0, np.int64)


def estimate_qber(sender_bits, receiver_bits):
    if len(sender_bits) == 0:
        return 0.0
    return float(np.count_nonzero(sender_bits != receiver_bits)) / len(sender_bits)


# -- session ----------------------------------------------------------------


@dataclass
class SessionTranscript:
    """Per-qubit record of one session, enough to replay sifting."""

    sender_bits: np.ndarray
    sender_bases: np.ndarray
    eve_mask: np.ndarray
    eve_bases: np.ndarray
    receiver_bases: np.ndarray
    receiver_bits: np.ndarray
    sample: np.ndarray  # indices into the sifted sequence


@dataclass
class Bb84SessionResult:
    sifted_key: np.ndarray  # usable sender-side bits after sacrifice
    qber_estimate: float
    n_sifted: int
    n_sacrificed: int
    t_qkg: float
    aborted: bool
    config: Bb84Config
    receiver_key: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    transcript: SessionTranscript | None = None

    @property
    def n_usable(self):
        return len(self.sifted_key)

    def key_stream(self):
        return QuantumKeyStream.from_bits(self.sifted_key)


def run_session(cfg, record=False):
    rng = make_rng(cfg.rng_seed)
    keys, rkeys, parts = [], [], []
    errors = sampled = n_sifted = 0
    for start in range(0, cfg.n_pump, CHUNK_QUBITS):
        n = min(CHUNK_QUBITS, cfg.n_pump - start)
        a_bits, a_bases = prepare(rng, n)
        values, bases, eve_mask = intercept_resend(rng, a_bits, a_bases, cfg.eve_fraction)
        values = channel_noise(rng, values, cfg.p_noise)
        b_bases = rng.integers(0, 2, n, dtype=np.uint8)
        b_bits = measure(rng, values, bases, b_bases)

        keep = a_bases == b_bases
        sa, sb = a_bits[keep], b_bits[keep]
        sample = choose_sample(rng, len(sa), cfg.sacrifice_fraction)
        errors += int(np.count_nonzero(sa[sample] != sb[sample]))
        sampled += len(sample)
        rest = np.ones(len(sa), dtype=bool)
        rest[sample] = False
        keys.append(sa[rest])
        rkeys.append(sb[rest])
        if record:
            eve_bases = np.where(eve_mask, bases, 0).astype(np.uint8)
            parts.append((a_bits, a_bases, eve_mask, eve_bases, b_bases, b_bits, sample + n_sifted))
        n_sifted += len(sa)

    qber = errors / sampled if sampled else 0.0
    aborted = qber > cfg.qber_abort_threshold
    empty = np.zeros(0, np.uint8)
    transcript = None
    if record:
        cols = [np.concatenate([p[i] for p in parts]) for i in range(7)]
        transcript = SessionTranscript(*cols)
    return Bb84SessionResult(
        sifted_key=empty if aborted else np.concatenate(keys),
        qber_estimate=qber,
        n_sifted=n_sifted,
        n_sacrificed=sampled,
        t_qkg=t_qkg_model(cfg),
        aborted=aborted,
        config=cfg,
        receiver_key=empty if aborted else np.concatenate(rkeys),
        transcript=transcript,
    )


def qkg_time_ms(n_pump, p_noise=0.0, eve_fraction=0.0):
    """Modeled key-generation time in ms; nondecreasing in every argument."""
    load = n_pump * (1 + NOISE_WEIGHT * p_noise + EVE_WEIGHT * eve_fraction)
    cal_load = CAL_N_PUMP * (1 + NOISE_WEIGHT * CAL_P_NOISE)
    return QKG_OVERHEAD_MS + (CAL_T_MS - QKG_OVERHEAD_MS) * (load / cal_load)


def t_qkg_model(cfg, usable_bits=None):
    # cost is driven by the qubits pumped; usable_bits only has to be consistent
    if usable_bits is not None and not 0 <= usable_bits <= cfg.n_pump:
        raise ValueError(f"usable_bits must lie in [0, n_pump], got {usable_bits}")
    return qkg_time_ms(cfg.n_pump, cfg.p_noise, cfg.eve_fraction)


def pump_for_bits(n_bits, cfg):
    """Qubits to pump so the expected usable key covers ``n_bits`` with margin."""
    per_qubit = 0.5 * (1 - cfg.sacrifice_fraction)
    return max(16, int(math.ceil(n_bits / per_qubit * 1.1)) + 256)


# -- transcript text format --------------------------------------------------

_HEADER = "# bb84-transcript v1"


def dump_transcript(t):
    lines = [f"{_HEADER} n={len(t.sender_bits)}",
             "# idx sender_bit sender_basis eve eve_basis receiver_basis receiver_bit"]
    for i in range(len(t.sender_bits)):
        lines.append(
            f"{i} {t.sender_bits[i]} {t.sender_bases[i]} {int(t.eve_mask[i])} "
            f"{t.eve_bases[i]} {t.receiver_bases[i]} {t.receiver_bits[i]}"
        )
    lines.append("sample " + " ".join(str(int(i)) for i in t.sample))
    return "\n".join(lines) + "\n"


def load_transcript(text):
    rows, sample = [], None
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        if line.startswith("sample"):
            sample = np.array([int(x) for x in line.split()[1:]], dtype=np.int64)
            continue
        rows.append([int(x) for x in line.split()[1:]])
    if sample is None:
        raise ValueError("transcript has no sample line")
    cols = np.array(rows, dtype=np.uint8).reshape(-1, 6).T
    return SessionTranscript(cols[0], cols[1], cols[2].astype(bool), cols[3], cols[4], cols[5], sample)


def replay_sift(t):
    """Re-derive sifted positions and the usable sender key from a transcript."""
    positions = np.flatnonzero(t.sender_bases == t.receiver_bases)
    sifted = t.sender_bits[positions]
    keep = np.ones(len(sifted), dtype=bool)
    keep[t.sample] = False
    return positions, sifted[keep]


# -- key stream ---------------------------------------------------------------


class QuantumKeyStream:
    """Ordered usable key bits consumed front to back, never re-served.

    Single consumer: concurrent ``take_bits`` calls are not supported.
    """

    def __init__(self, packed, nbits):
        self._packed = np.frombuffer(bytes(packed), dtype=np.uint8)
        if nbits > 8 * len(self._packed):
            raise ValueError("nbits exceeds packed data")
        self._nbits = int(nbits)
        self.cursor = 0

    @classmethod
    def from_bits(cls, bits):
        bits = np.asarray(bits, dtype=np.uint8)
        return cls(np.packbits(bits).tobytes(), len(bits))

    @classmethod
    def from_bytes(cls, data):
        return cls(data, 8 * len(data))

    def __len__(self):
        return self._nbits

    @property
    def remaining(self):
        return self._nbits - self.cursor

    def replay(self):
        """A fresh stream over the same bits, positioned at the start."""
        return QuantumKeyStream(self._packed.tobytes(), self._nbits)

    def _reserve(self, n):
        if n <= 0:
            raise ValueError("must take a positive number of bits")
        if n > self.remaining:
            raise KeyDepletionError(n, self.remaining)
        start = self.cursor
        self.cursor += n
        return start

    def take_bits(self, n):
        start = self._reserve(n)
        lo, hi = start // 8, (start + n + 7) // 8
        bits = np.unpackbits(self._packed[lo:hi])
        off = start - 8 * lo
        return bits[off:off + n]

    def take_bytes(self, nbytes):
        """Next ``8 * nbytes`` bits packed MSB-first."""
        start = self.cursor
        if start % 8 == 0:
            self._reserve(8 * nbytes)
            return self._packed[start // 8:start // 8 + nbytes].tobytes()
        return np.packbits(self.take_bits(8 * nbytes)).tobytes()

    def peek_all(self):
        return np.unpackbits(self._packed)[:self._nbits]


# -- bit sanity checks (frequency and runs) -----------------------------------


def monobit_p_value(bits):
    bits = np.asarray(bits, dtype=np.int64)
    n = len(bits)
    s = abs(int(np.sum(2 * bits - 1)))
    return math.erfc(s / math.sqrt(2 * n))


def runs_p_value(bits):
    bits = np.asarray(bits, dtype=np.int64)
    n = len(bits)
    pi = bits.mean()
    if abs(pi - 0.5) >= 2 / math.sqrt(n):
        return 0.0
    runs = 1 + int(np.count_nonzero(bits[1:] != bits[:-1]))
    num = abs(runs - 2 * n * pi * (1 - pi))
    return math.erfc(num / (2 * math.sqrt(2 * n) * pi * (1 - pi)))
