"""Offline transition store: binary/CSV I/O, minibatch sampling, normalisation.

Binary layout (all little-endian)::

    b"CDCD"                 magic
    u32  version            (currently 1)
    u32  name_len, bytes    environment name, UTF-8
    u32  dS, u32 dA, u64 n
    f64  s[n, dS]           row-major
    f64  a[n, dA]
    f64  r[n]
    f64  s_next[n, dS]
    u8   terminal[n], truncated[n], episode_start[n]
    u64  checksum           blake2b (8-byte digest) of everything after the header

CSV layout: a header row naming ``s0..s{dS-1}, a0..a{dA-1}, r,
ns0..ns{dS-1}, terminal, truncated, episode_start`` followed by one
transition per row; flags are 0/1.
"""

import csv
import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateReferenceError, FormatError

MAGIC = b"CDCD"
VERSION = 1
ACTION_TOL = 1e-6


@dataclass
class TransitionDataset:
    env_name: str
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    truncated: np.ndarray
    episode_starts: np.ndarray
    version: int = VERSION

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=np.float64)
        self.actions = np.ascontiguousarray(self.actions, dtype=np.float64)
        self.rewards = np.ascontiguousarray(self.rewards, dtype=np.float64).reshape(-1)
        self.next_states = np.ascontiguousarray(self.next_states, dtype=np.float64)
        self.terminals = np.ascontiguousarray(self.terminals, dtype=bool).reshape(-1)
        self.truncated = np.ascontiguousarray(self.truncated, dtype=bool).reshape(-1)
        self.episode_starts = np.ascontiguousarray(self.episode_starts, dtype=bool).reshape(-1)
        n = self.rewards.shape[0]
        if n < 1:
            raise ValueError("a dataset needs at least one transition")
        if self.states.ndim != 2 or self.actions.ndim != 2:
            raise ValueError("states and actions must be 2-D")
        cols = (self.states, self.actions, self.next_states, self.terminals,
                self.truncated, self.episode_starts)
        if any(c.shape[0] != n for c in cols) or self.next_states.shape != self.states.shape:
            raise ValueError("column lengths differ")
        for c in (self.states, self.actions, self.rewards, self.next_states):
            if not np.all(np.isfinite(c)):
                raise ValueError("dataset contains non-finite entries")
        if np.any(np.abs(self.actions) > 1.0 + ACTION_TOL):
            raise ValueError("actions outside the [-1, 1] box")

    def __len__(self):
        return self.rewards.shape[0]

    @property
    def state_dim(self):
        return self.states.shape[1]

    @property
    def action_dim(self):
        return self.actions.shape[1]

    def subset(self, idx):
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.terminals[idx], self.truncated[idx],
                     np.asarray(idx))

    def equals(self, other):
        return (self.env_name == other.env_name and self.version == other.version
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("states", "actions", "rewards", "next_states",
                                  "terminals", "truncated", "episode_starts")))


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    truncated: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return self.rewards.shape[0]


def _checksum(payload):
    return struct.unpack("<Q", hashlib.blake2b(payload, digest_size=8).digest())[0]


def to_bytes(ds):
    name = ds.env_name.encode("utf-8")
    header = (MAGIC + struct.pack("<II", ds.version, len(name)) + name
              + struct.pack("<IIQ", ds.state_dim, ds.action_dim, len(ds)))
    payload = b"".join([
        ds.states.astype("<f8").tobytes(),
        ds.actions.astype("<f8").tobytes(),
        ds.rewards.astype("<f8").tobytes(),
        ds.next_states.astype("<f8").tobytes(),
        ds.terminals.astype(np.uint8).tobytes(),
        ds.truncated.astype(np.uint8).tobytes(),
        ds.episode_starts.astype(np.uint8).tobytes(),
    ])
    return header + payload + struct.pack("<Q", _checksum(payload))


def from_bytes(buf):
    buf = memoryview(bytes(buf))
    if len(buf) < 12 or bytes(buf[:4]) != MAGIC:
        raise FormatError("bad magic: not a CDCD dataset file")
    version, name_len = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported dataset format version {version} (expected {VERSION})")
    off = 12
    if len(buf) < off + name_len + 16:
        raise FormatError("truncated header")
    try:
        name = bytes(buf[off:off + name_len]).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("environment name is not valid UTF-8") from exc
    off += name_len
    dS, dA, n = struct.unpack_from("<IIQ", buf, off)
    off += 16
    need = 8 * n * (2 * dS + dA + 1) + 3 * n
    if len(buf) != off + need + 8:
        raise FormatError(f"file length {len(buf)} does not match header (n={n}, dS={dS}, dA={dA})")
    payload = bytes(buf[off:off + need])
    (stored,) = struct.unpack_from("<Q", buf, off + need)
    if stored != _checksum(payload):
        raise FormatError("checksum mismatch")

    pos = 0

    def take(count, dtype, shape):
        nonlocal pos
        size = count * np.dtype(dtype).itemsize
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=pos).reshape(shape)
        pos += size
        return arr.copy()

    s = take(n * dS, "<f8", (n, dS))
    a = take(n * dA, "<f8", (n, dA))
    r = take(n, "<f8", (n,))
    s2 = take(n * dS, "<f8", (n, dS))
    term = take(n, np.uint8, (n,)).astype(bool)
    trunc = take(n, np.uint8, (n,)).astype(bool)
    start = take(n, np.uint8, (n,)).astype(bool)
    return TransitionDataset(name, s, a, r, s2, term, trunc, start, version=version)


def save(ds, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(ds))


def load(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def csv_header(dS, dA):
    return ([f"s{i}" for i in range(dS)] + [f"a{i}" for i in range(dA)] + ["r"]
            + [f"ns{i}" for i in range(dS)] + ["terminal", "truncated", "episode_start"])


def save_csv(ds, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(csv_header(ds.state_dim, ds.action_dim))
        for i in range(len(ds)):
            w.writerow([repr(float(x)) for x in ds.states[i]]
                       + [repr(float(x)) for x in ds.actions[i]]
                       + [repr(float(ds.rewards[i]))]
                       + [repr(float(x)) for x in ds.next_states[i]]
                       + [int(ds.terminals[i]), int(ds.truncated[i]), int(ds.episode_starts[i])])


def load_csv(path, env_name="external"):
    """Import transitions from CSV; dimensions are read from the header."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError("empty CSV file")
    header = rows[0]
    dS = sum(1 for h in header if h.startswith("s") and h[1:].isdigit())
    dA = sum(1 for h in header if h.startswith("a") and h[1:].isdigit())
    if header != csv_header(dS, dA):
        raise FormatError(f"unexpected CSV header; expected {csv_header(dS, dA)}")
    data = np.array([[float(x) for x in row] for row in rows[1:]], dtype=np.float64)
    if data.size == 0:
        raise FormatError("CSV contains no transitions")
    c = np.cumsum([0, dS, dA, 1, dS, 1, 1, 1])
    return TransitionDataset(env_name, data[:, c[0]:c[1]], data[:, c[1]:c[2]], data[:, c[2]],
                             data[:, c[3]:c[4]], data[:, c[4]] != 0, data[:, c[5]] != 0,
                             data[:, c[6]] != 0)


def sample_minibatch(ds, size, rng):
    """Uniform-with-replacement minibatch of ``size`` transitions."""
    if size < 1:
        raise ValueError("minibatch size must be >= 1")
    if len(ds) == 0:
        raise ValueError("cannot sample from an empty dataset")
    idx = rng.integers(0, len(ds), size=size)
    return ds.subset(idx)


def normalized_score(raw, random_score, expert_score):
    """``100 * (raw - random) / (expert - random)``."""
    if expert_score == random_score:
        raise DegenerateReferenceError("expert and random reference scores are equal")
    return 100.0 * (raw - random_score) / (expert_score - random_score)
