"""Single-level set-associative LRU cache over a word-address stream.

Misses are classified per cache line (cold vs. replacement) and loads per word:
a word's first explicit request is a cold load even when a line fill already
brought it in, and a request for a previously requested word that is no longer
resident is a replacement load.
"""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field

import numba
import numpy as np

HIT, COLD_MISS, REPLACEMENT_MISS = 0, 1, 2
NO_LOAD, COLD_LOAD, REPLACEMENT_LOAD = 0, 1, 2

# counter columns
_C_COLD_LOAD, _C_REPL_LOAD, _C_COLD_MISS, _C_REPL_MISS, _C_HIT = range(5)

MAX_ADDRESS = 1 << 40


class MissKind(enum.IntEnum):
    Hit = HIT
    ColdMiss = COLD_MISS
    ReplacementMiss = REPLACEMENT_MISS


class LoadKind(enum.IntEnum):
    None_ = NO_LOAD
    ColdLoad = COLD_LOAD
    ReplacementLoad = REPLACEMENT_LOAD


@dataclass(frozen=True)
class CacheConfig:
    associativity: int
    sets: int
    line_words: int

    def __post_init__(self):
        for name in ("associativity", "sets", "line_words"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def size(self) -> int:
        return self.associativity * self.sets * self.line_words

    @property
    def lines(self) -> int:
        return self.associativity * self.sets

    @classmethod
    def parse(cls, text: str) -> "CacheConfig":
        """Parse ``"a,z,w"``, e.g. ``"2,512,4"``."""
        parts = text.split(",")
        if len(parts) != 3:
            raise ValueError(f"cache geometry must be a,z,w, got {text!r}")
        return cls(*(int(p) for p in parts))

    @classmethod
    def fully_associative(cls, size: int, line_words: int = 1) -> "CacheConfig":
        return cls(size // line_words, 1, line_words)

    @classmethod
    def direct_mapped(cls, size: int, line_words: int = 1) -> "CacheConfig":
        return cls(1, size // line_words, line_words)

    def __str__(self):
        return f"{self.associativity},{self.sets},{self.line_words}"


def map_address(addr: int, config: CacheConfig) -> tuple[int, int]:
    """Return ``(set index, word offset in line)`` for a word address."""
    if addr < 0:
        raise ValueError("address must be non-negative")
    line, offset = divmod(addr, config.line_words)
    return line % config.sets, offset


@dataclass(frozen=True)
class AccessOutcome:
    kind: MissKind
    load_kind: LoadKind

    @property
    def is_miss(self) -> bool:
        return self.kind != MissKind.Hit

    @property
    def is_load(self) -> bool:
        return self.load_kind != LoadKind.None_


@numba.njit(cache=True)
def _simulate(addrs, ids, w, z, tags, stamps, clock, requested, line_seen, line_way, counters, outcomes):
    record = outcomes.shape[0] > 0
    ways = tags.shape[1]
    t = clock[0]
    for i in range(addrs.shape[0]):
        a = addrs[i]
        line = a // w
        s = line % z
        t += 1
        way = line_way[line]
        if way >= 0:
            kind = HIT
            stamps[s, way] = t
        else:
            kind = COLD_MISS if line_seen[line] == 0 else REPLACEMENT_MISS
            line_seen[line] = 1
            victim = 0
            best = stamps[s, 0]
            for j in range(1, ways):
                if stamps[s, j] < best:
                    best = stamps[s, j]
                    victim = j
            old = tags[s, victim]
            if old >= 0:
                line_way[old] = -1
            tags[s, victim] = line
            stamps[s, victim] = t
            line_way[line] = victim
        if requested[a] == 0:
            load = COLD_LOAD
            requested[a] = 1
        elif kind != HIT:
            load = REPLACEMENT_LOAD
        else:
            load = NO_LOAD
        c = ids[i]
        if load == COLD_LOAD:
            counters[c, 0] += 1
        elif load == REPLACEMENT_LOAD:
            counters[c, 1] += 1
        if kind == COLD_MISS:
            counters[c, 2] += 1
        elif kind == REPLACEMENT_MISS:
            counters[c, 3] += 1
        else:
            counters[c, 4] += 1
        if record:
            outcomes[i] = kind * 3 + load
    clock[0] = t


@dataclass(frozen=True)
class ArrayCounts:
    cold_loads: int = 0
    replacement_loads: int = 0
    cold_misses: int = 0
    replacement_misses: int = 0
    hits: int = 0

    @property
    def loads(self) -> int:
        return self.cold_loads + self.replacement_loads

    @property
    def misses(self) -> int:
        return self.cold_misses + self.replacement_misses

    @property
    def accesses(self) -> int:
        return self.misses + self.hits

    def __add__(self, other: "ArrayCounts") -> "ArrayCounts":
        return ArrayCounts(
            self.cold_loads + other.cold_loads,
            self.replacement_loads + other.replacement_loads,
            self.cold_misses + other.cold_misses,
            self.replacement_misses + other.replacement_misses,
            self.hits + other.hits,
        )


CSV_COLUMNS = ("array_id", "cold_loads", "replacement_loads", "loads", "misses", "hits")


@dataclass(frozen=True)
class MissReport:
    arrays: dict[str, ArrayCounts] = field(default_factory=dict)

    def __getitem__(self, array_id: str) -> ArrayCounts:
        return self.arrays.get(array_id, ArrayCounts())

    @property
    def total(self) -> ArrayCounts:
        out = ArrayCounts()
        for counts in self.arrays.values():
            out = out + counts
        return out

    def rows(self) -> list[tuple]:
        out = []
        for name, c in list(self.arrays.items()) + [("total", self.total)]:
            out.append((name, c.cold_loads, c.replacement_loads, c.loads, c.misses, c.hits))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(self.rows())
        return buf.getvalue()


class CacheState:
    """Mutable cache contents plus per-word request history."""

    def __init__(self, config: CacheConfig, capacity: int = 1024):
        self.config = config
        self._capacity = 0
        self._array_names: list[str] = []
        self.reset()
        self._ensure_capacity(capacity)

    def reset(self):
        cfg = self.config
        self.tags = np.full((cfg.sets, cfg.associativity), -1, dtype=np.int64)
        self.stamps = np.full((cfg.sets, cfg.associativity), -1, dtype=np.int64)
        self.clock = np.zeros(1, dtype=np.int64)
        self.requested = np.zeros(self._capacity, dtype=np.uint8)
        nlines = self._capacity // cfg.line_words + 1
        self.line_seen = np.zeros(nlines, dtype=np.uint8)
        self.line_way = np.full(nlines, -1, dtype=np.int64)
        self.counters = np.zeros((max(len(self._array_names), 1), 5), dtype=np.int64)
        return self

    def _ensure_capacity(self, n_words: int):
        if n_words > MAX_ADDRESS:
            raise OverflowError(f"address {n_words - 1} exceeds the simulated address space")
        if n_words <= self._capacity:
            return
        new = max(n_words, 2 * self._capacity)
        w = self.config.line_words
        nlines = new // w + 1
        self.requested = _grow(self.requested, new, 0)
        self.line_seen = _grow(self.line_seen, nlines, 0)
        self.line_way = _grow(self.line_way, nlines, -1)
        self._capacity = new

    def array_index(self, name: str) -> int:
        if name not in self._array_names:
            self._array_names.append(name)
            if self.counters.shape[0] < len(self._array_names):
                self.counters = _grow(self.counters, len(self._array_names), 0)
        return self._array_names.index(name)

    def run(self, addrs: np.ndarray, ids: np.ndarray | int = 0, record: bool = False) -> np.ndarray | None:
        """Feed a batch of word addresses; ``ids`` are indices from :meth:`array_index`.

        With ``record=True`` returns one outcome code ``kind * 3 + load_kind`` per access.
        """
        addrs = np.ascontiguousarray(addrs, dtype=np.int64)
        if addrs.size == 0:
            return np.zeros(0, dtype=np.int8) if record else None
        if addrs.min() < 0:
            raise ValueError("negative address in stream")
        if np.isscalar(ids):
            ids = np.full(addrs.shape, ids, dtype=np.int64)
        ids = np.ascontiguousarray(ids, dtype=np.int64)
        if ids.max() >= self.counters.shape[0]:
            raise ValueError("unregistered array index")
        self._ensure_capacity(int(addrs.max()) + 1)
        outcomes = np.zeros(addrs.shape[0] if record else 0, dtype=np.int8)
        cfg = self.config
        _simulate(addrs, ids, cfg.line_words, cfg.sets, self.tags, self.stamps, self.clock,
                  self.requested, self.line_seen, self.line_way, self.counters, outcomes)
        return outcomes if record else None

    def access(self, addr: int, array_id: str = "u") -> AccessOutcome:
        idx = self.array_index(array_id)
        code = int(self.run(np.array([addr]), idx, record=True)[0])
        return decode_outcome(code)

    def report(self) -> MissReport:
        arrays = {}
        for i, name in enumerate(self._array_names):
            arrays[name] = ArrayCounts(*(int(v) for v in self.counters[i]))
        return MissReport(arrays)

    def resident_lines(self) -> int:
        return int((self.tags >= 0).sum())

    def is_resident(self, addr: int) -> bool:
        line = addr // self.config.line_words
        return line < self.line_way.shape[0] and self.line_way[line] >= 0


def _grow(arr: np.ndarray, n: int, fill) -> np.ndarray:
    out = np.full((n,) + arr.shape[1:], fill, dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out


def decode_outcome(code: int) -> AccessOutcome:
    return AccessOutcome(MissKind(code // 3), LoadKind(code % 3))


def simulate_stream(addrs, config: CacheConfig, array_id: str = "u") -> MissReport:
    """Run a single-array address stream through a fresh cache."""
    state = CacheState(config)
    state.run(np.asarray(addrs), state.array_index(array_id))
    return state.report()
