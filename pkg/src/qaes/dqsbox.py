"""Key-dependent S-boxes and the row-correlation independence analysis.

A box is built from 256 bits of key material by shuffling 0..255 with
Fisher-Yates, drawing bytes from AES-256 in counter mode (standard S-box)
keyed with that material. Byte draws use rejection sampling so each swap
index is uniform.
"""

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .aes_core import BlockKeying, encrypt_blocks, expand_key
from .errors import DegenerateRowError

KEY_MATERIAL_BITS = 256
_KEYSTREAM_BLOCKS = 64  # 1 KiB; a shuffle needs ~360 bytes on average

FIXTURE_DIR = Path(__file__).parent / "fixtures"


@dataclass(frozen=True, eq=False)
class DqsBox:
    forward: np.ndarray
    inverse: np.ndarray
    seed_digest: str = ""

    def __post_init__(self):
        fwd = np.asarray(self.forward, dtype=np.uint8)
        if fwd.shape != (256,) or not np.array_equal(np.sort(fwd), np.arange(256)):
            raise ValueError("DQS-Box forward table is not a permutation of 0..255")
        inv = np.asarray(self.inverse, dtype=np.uint8)
        if not np.array_equal(inv[fwd], np.arange(256)):
            raise ValueError("inverse table does not invert forward table")
        fwd.flags.writeable = False
        inv.flags.writeable = False
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "inverse", inv)

    @classmethod
    def from_permutation(cls, forward, seed_digest=""):
        fwd = np.asarray(forward, dtype=np.uint8)
        return cls(fwd, np.argsort(fwd).astype(np.uint8), seed_digest)

    def __eq__(self, other):
        if not isinstance(other, DqsBox):
            return NotImplemented
        return np.array_equal(self.forward, other.forward)

    def __hash__(self):
        return hash(self.forward.tobytes())

    def grid(self):
        return self.forward.reshape(16, 16)


def _key_bytes(key_material):
    if isinstance(key_material, (bytes, bytearray, memoryview)):
        data = bytes(key_material)
        if len(data) * 8 != KEY_MATERIAL_BITS:
            raise ValueError(f"DQS-Box needs {KEY_MATERIAL_BITS} bits of key material, got {len(data) * 8}")
        return data
    bits = np.asarray(key_material, dtype=np.uint8)
    if bits.shape != (KEY_MATERIAL_BITS,) or bits.max(initial=0) > 1:
        raise ValueError(f"DQS-Box needs {KEY_MATERIAL_BITS} bits of key material, got shape {bits.shape}")
    return np.packbits(bits).tobytes()


def _ctr_stream(rks, start, nblocks):
    counters = np.zeros((nblocks, 16), dtype=np.uint8)
    for i in range(nblocks):
        counters[i] = np.frombuffer((start + i).to_bytes(16, "big"), dtype=np.uint8)
    return encrypt_blocks(counters, BlockKeying.uniform(nblocks, rks)).reshape(-1)


def generate_box(key_material):
    """Deterministically derive a bijective S-box from 256 bits (32 bytes)."""
    key = _key_bytes(key_material)
    rks = expand_key(key)
    stream = _ctr_stream(rks, 0, _KEYSTREAM_BLOCKS)
    perm, used = _kernels.keyed_shuffle(stream)
    while used < 0:
        # astronomically rare; extend the counter stream and redo the shuffle
        more = _ctr_stream(rks, len(stream) // 16, _KEYSTREAM_BLOCKS)
        stream = np.concatenate([stream, more])
        perm, used = _kernels.keyed_shuffle(stream)
    digest = hashlib.sha256(key).hexdigest()[:16]
    return DqsBox.from_permutation(perm, digest)


def box_diagnostics(box):
    """Fixed-point count and differential uniformity (exhaustive over all a, x)."""
    f = np.asarray(getattr(box, "forward", box), dtype=np.int64)
    x = np.arange(256)
    fixed_points = int(np.count_nonzero(f == x))
    a = np.arange(1, 256)[:, None]
    diffs = f[x[None, :] ^ a] ^ f[None, :]
    counts = np.zeros((255, 256), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(255), 256), diffs.ravel()), 1)
    du = int(counts[:, 1:].max())
    return {"fixed_points": fixed_points, "differential_uniformity": du}


# -- correlation analysis ---------------------------------------------------


def standardize_row(row):
    """y = (x - m) / s with m = (max - min) / 2 and s = sqrt((max - min)^2 / 16).

    Note m is the half-range, not the arithmetic mean.
    """
    x = np.asarray(row, dtype=np.float64)
    if x.shape != (16,):
        raise ValueError(f"row must have 16 entries, got shape {x.shape}")
    spread = x.max() - x.min()
    if spread == 0:
        raise DegenerateRowError("row is constant; standard deviation is zero")
    mean = spread / 2
    std = np.sqrt(spread**2 / 16)
    return (x - mean) / std


def _spread_std(v):
    v = np.asarray(v, dtype=np.float64)
    return float(np.sqrt((v.max() - v.min()) ** 2 / 16))


@dataclass
class CorrelationProfile:
    """Row-by-row comparison of two 16x16 grids.

    ``per_row_corr`` is the normalized dot product of the standardized rows,
    so a row compared with itself scores exactly 1. ``pearson`` and
    ``scaled_dot`` (the same dot product divided by 16 instead of by the norms)
    are reported alongside for comparison. Rows where either side is constant
    are flagged in ``degenerate`` and carry NaN.
    """

    per_row_corr: np.ndarray
    per_row_independence: np.ndarray
    mean_independence: float
    spread_ratio: float
    pearson: np.ndarray
    pearson_independence: np.ndarray
    scaled_dot: np.ndarray
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(16, bool))

    @property
    def mean_abs_corr(self):
        return float(np.nanmean(np.abs(self.per_row_corr)))


def _as_grid(x):
    if isinstance(x, DqsBox):
        return x.grid().astype(np.float64)
    g = np.asarray(x, dtype=np.float64)
    if g.shape != (16, 16):
        raise ValueError(f"expected a 16x16 grid, got shape {g.shape}")
    return g


def correlation_profile(a, b):
    ga, gb = _as_grid(a), _as_grid(b)
    corr = np.full(16, np.nan)
    scaled = np.full(16, np.nan)
    pearson = np.full(16, np.nan)
    degenerate = np.zeros(16, dtype=bool)
    for i in range(16):
        try:
            ya, yb = standardize_row(ga[i]), standardize_row(gb[i])
        except DegenerateRowError:
            degenerate[i] = True
            continue
        dot = float(ya @ yb)
        corr[i] = np.clip(dot / np.sqrt(float(ya @ ya) * float(yb @ yb)), -1.0, 1.0)
        scaled[i] = dot / 16
        pearson[i] = np.corrcoef(ga[i], gb[i])[0, 1]
    independence = (1 - np.abs(corr)) * 100
    ok = corr[~degenerate]
    mean_ind = float(np.mean(independence[~degenerate])) if ok.size else float("nan")
    max_a = ga.max()
    ratio = _spread_std(ok) / max_a if ok.size and max_a != 0 else float("nan")
    return CorrelationProfile(
        per_row_corr=corr,
        per_row_independence=independence,
        mean_independence=mean_ind,
        spread_ratio=float(ratio),
        pearson=pearson,
        pearson_independence=(1 - np.abs(pearson)) * 100,
        scaled_dot=scaled,
        degenerate=degenerate,
    )


# -- fixture grids ----------------------------------------------------------


class GridFormatError(ValueError):
    pass


def parse_grid(text):
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            vals = [int(tok, 16) for tok in line.split()]
        except ValueError:
            raise GridFormatError(f"line {lineno}: non-hex token") from None
        if len(vals) != 16 or any(not 0 <= v <= 255 for v in vals):
            raise GridFormatError(f"line {lineno}: need 16 byte values, got {len(vals)}")
        rows.append(vals)
    if len(rows) != 16:
        raise GridFormatError(f"need 16 rows, got {len(rows)}")
    return np.array(rows, dtype=np.uint8)


def read_grid(path):
    return parse_grid(Path(path).read_text())


def format_grid(grid):
    g = np.asarray(grid).reshape(16, 16)
    return "".join(" ".join(f"0x{int(v):02x}" for v in row) + "\n" for row in g)


def example_boxes():
    """The two published 16x16 example boxes (statistical fixtures only)."""
    return read_grid(FIXTURE_DIR / "dqs_box1.txt"), read_grid(FIXTURE_DIR / "dqs_box2.txt")
