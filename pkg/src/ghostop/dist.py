"""Running boundary programs over several ranks.

The global data region is block-partitioned; rank ``p`` owns ``R_dp`` and
stores ``R_fp``, its owned box dilated by the halo width and clipped to the
global full region.  Every rank lowers the same program restricted to
``R_fp``.  Columns owned elsewhere are fetched once per step through a
:class:`CommSchedule`, which both endpoints derive from the same shared
configuration, so no negotiation traffic is needed.
"""
from __future__ import annotations

import itertools
import queue
import threading
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ConfigurationError, TransportError, UsageError
from .expr import Binding, eval_int
from .region import Region, RegionSet, bounding_box, intersect, subtract
from .runtime import ExecutionPlan, GridVar, build_plan, lookup
from .staging import DYNAMIC_LOOP, STATIC_FUSED, BoundaryProgram

__all__ = [
    "Partition", "RankLayout", "partition_grid", "auto_proc_grid",
    "Transport", "InProcessFabric", "Bucket", "CommSchedule", "plan_communication",
    "exchange", "execute_distributed", "scatter", "gather",
]


# ---------------------------------------------------------------- partition

@dataclass(frozen=True)
class RankLayout:
    rank: int
    coords: tuple[int, ...]
    owned: Region
    full: Region

    @property
    def halo(self) -> RegionSet:
        return RegionSet(subtract(self.full, self.owned))


def _split(n: int, parts: int) -> list[int]:
    """Block cut points; the first ``n % parts`` blocks get one extra member."""
    q, r = divmod(n, parts)
    cuts = [0]
    for k in range(parts):
        cuts.append(cuts[-1] + q + (1 if k < r else 0))
    return cuts


@dataclass
class Partition:
    global_data: Region
    global_full: Region
    proc_grid: tuple[int, ...]
    halo_width: tuple[int, ...]
    ranks: list[RankLayout]
    cuts: list[list[int]] = field(repr=False, default_factory=list)

    @property
    def size(self) -> int:
        return len(self.ranks)

    def owner_array(self, cols: Sequence[np.ndarray]) -> np.ndarray:
        """Owning rank per column, ``-1`` outside the global data region."""
        _, ok = lookup(self.global_data, cols)
        coords = []
        for (s, _, t), cuts, c in zip(self.global_data.dims, self.cuts, cols):
            q = (np.asarray(c, dtype=np.int64) - s) // t
            coords.append(np.clip(np.searchsorted(cuts, q, side="right") - 1, 0, len(cuts) - 2))
        rank = np.ravel_multi_index(coords, self.proc_grid) if coords else np.zeros(0, dtype=np.int64)
        return np.where(ok, rank, -1)

    def owner(self, idx) -> int:
        return int(self.owner_array([np.array([i]) for i in idx])[0])

    def column_owner(self, cols: Sequence[np.ndarray], full_column: bool = False) -> np.ndarray:
        """Owner of each column; ghost columns go to the owner of the nearest data cell."""
        if not full_column:
            return self.owner_array(cols)
        clamped = []
        for (s, _, t), last, c in zip(self.global_data.dims, self.global_data.lasts, cols):
            c = np.asarray(c, dtype=np.int64)
            clamped.append(np.clip(s + (c - s) // t * t, s, last))
        own = self.owner_array(clamped)
        _, in_full = lookup(self.global_full, cols)
        return np.where(in_full, own, -1)

    def describe(self) -> str:
        lines = [f"partition {self.size} ranks grid={self.proc_grid} halo={self.halo_width}"]
        for r in self.ranks:
            lines.append(f"  rank {r.rank} owned={r.owned} stored={r.full}")
        return "\n".join(lines)


def partition_grid(global_data: Region, proc_grid: Sequence[int], halo_width: Sequence[int] | int,
                   global_full: Region | None = None) -> Partition:
    nd = global_data.ndim
    proc_grid = tuple(int(p) for p in proc_grid)
    if isinstance(halo_width, int):
        halo_width = (halo_width,) * nd
    halo_width = tuple(int(h) for h in halo_width)
    if len(proc_grid) != nd or len(halo_width) != nd:
        raise UsageError("proc_grid and halo_width need one entry per dimension")
    if global_full is None:
        global_full = global_data
    if not global_data.issubset(global_full):
        raise ConfigurationError("data region must lie inside the full region")
    cuts = []
    for d, (n, p) in enumerate(zip(global_data.shape, proc_grid)):
        if p < 1:
            raise ConfigurationError(f"proc_grid[{d}] must be positive")
        if p > n:
            raise ConfigurationError(f"{p} ranks along dimension {d} exceed its {n} cells")
        cuts.append(_split(n, p))
    ranks = []
    for r, coords in enumerate(itertools.product(*(range(p) for p in proc_grid))):
        dims = []
        for (s, _, t), cut, c in zip(global_data.dims, cuts, coords):
            dims.append((s + cut[c] * t, s + cut[c + 1] * t, t))
        owned = Region(dims)
        full = intersect(owned.dilate(halo_width), global_full).trimmed()
        ranks.append(RankLayout(r, coords, owned, full))
    return Partition(global_data, global_full, proc_grid, halo_width, ranks, cuts)


def auto_proc_grid(size: int, shape: Sequence[int]) -> tuple[int, ...]:
    """Factor ``size`` over dimensions, always splitting the longest blocks."""
    grid = [1] * len(shape)
    n = size
    f = 2
    factors = []
    while n > 1:
        while n % f == 0:
            factors.append(f)
            n //= f
        f += 1
    for f in sorted(factors, reverse=True):
        order = sorted(range(len(shape)), key=lambda d: (-shape[d] / grid[d], d))
        for d in order:
            if shape[d] >= grid[d] * f:
                grid[d] *= f
                break
        else:
            raise ConfigurationError(f"cannot split {tuple(shape)} over {size} ranks")
    return tuple(grid)


# ---------------------------------------------------------------- transport

class Transport:
    """Point-to-point byte messages between ranks."""

    rank: int
    size: int

    def send(self, to: int, tag, payload: bytes) -> None:
        raise NotImplementedError

    def recv(self, frm: int, tag) -> bytes:
        raise NotImplementedError

    def barrier(self) -> None:
        raise NotImplementedError


class InProcessFabric:
    """Reliable in-order queues between threads standing in for ranks."""

    def __init__(self, size: int, timeout: float = 30.0):
        if size < 1:
            raise UsageError("fabric needs at least one rank")
        self.size = size
        self.timeout = timeout
        self._queues: dict = {}
        self._lock = threading.Lock()
        self._barrier = threading.Barrier(size)
        self.stats = {"messages": 0, "bytes": 0, "setup_messages": 0}

    def _queue(self, key) -> queue.Queue:
        with self._lock:
            q = self._queues.get(key)
            if q is None:
                q = self._queues[key] = queue.Queue()
            return q

    def endpoint(self, rank: int) -> "Endpoint":
        if not 0 <= rank < self.size:
            raise UsageError(f"rank {rank} outside fabric of {self.size}")
        return Endpoint(self, rank)

    def reset_stats(self) -> None:
        with self._lock:
            for k in self.stats:
                self.stats[k] = 0

    def _record(self, tag, n: int) -> None:
        with self._lock:
            self.stats["messages"] += 1
            self.stats["bytes"] += n
            if isinstance(tag, tuple) and tag and tag[0] == "setup":
                self.stats["setup_messages"] += 1


class Endpoint(Transport):
    def __init__(self, fabric: InProcessFabric, rank: int):
        self.fabric = fabric
        self.rank = rank
        self.size = fabric.size

    def send(self, to, tag, payload):
        if not 0 <= to < self.size:
            raise TransportError(f"rank {self.rank}: no such destination {to}")
        self.fabric._record(tag, len(payload))
        self.fabric._queue((self.rank, to, tag)).put(bytes(payload))

    def recv(self, frm, tag):
        if not 0 <= frm < self.size:
            raise TransportError(f"rank {self.rank}: no such source {frm}")
        try:
            return self.fabric._queue((frm, self.rank, tag)).get(timeout=self.fabric.timeout)
        except queue.Empty:
            raise TransportError(f"rank {self.rank}: timed out waiting for {tag} from {frm}") from None

    def barrier(self):
        try:
            self.fabric._barrier.wait(timeout=self.fabric.timeout)
        except threading.BrokenBarrierError:
            raise TransportError(f"rank {self.rank}: barrier broken") from None


# ---------------------------------------------------------------- schedule

@dataclass
class Bucket:
    """Columns one rank sends another for one (entity, gid) group."""

    sender: int
    receiver: int
    group: tuple[str, int]
    box: Region
    cols: np.ndarray          # (n, ndim) global indices, send order
    send_addr: np.ndarray     # sender-local x addresses
    recv_addr: np.ndarray     # receiver x-buffer addresses (halo or scratch)
    tag: int = 0

    @property
    def count(self) -> int:
        return len(self.cols)


def _demands(program: BoundaryProgram, box: Region, ent, term):
    """``(cols, gids)`` arrays for one term on one box, in cell/entry order."""
    nd = program.column_space.ndim
    if term.mode == STATIC_FUSED:
        idx = box.index_arrays()
        n = box.count()
        b = Binding(idx, program.params, ent.arrays)
        cols, gids = [], []
        for e in term.entries:
            cols.append(np.stack([np.broadcast_to(np.asarray(eval_int(c, b), dtype=np.int64), (n,))
                                  for c in e.col], axis=1))
            gids.append(np.broadcast_to(np.asarray(eval_int(e.gid, b), dtype=np.int64), (n,)))
        if not cols:
            return np.zeros((0, nd), dtype=np.int64), np.zeros(0, dtype=np.int64)
        return np.concatenate(cols), np.concatenate(gids)
    if term.mode == DYNAMIC_LOOP:
        cols, gids = [], []
        for idx in box.enumerate():
            for col, gid, _ in ent.row_iter.structure(idx):
                cols.append(col)
                gids.append(gid)
        return np.array(cols, dtype=np.int64).reshape(-1, nd), np.array(gids, dtype=np.int64)
    return np.zeros((0, nd), dtype=np.int64), np.zeros(0, dtype=np.int64)


class CommSchedule:
    """Per (sender, receiver, group) exact element lists, built once."""

    def __init__(self, program: BoundaryProgram, part: Partition, buckets: list[Bucket],
                 scratch: list[int], remote: list):
        self.program = program
        self.part = part
        self.buckets = buckets
        self.scratch = scratch
        self._remote = remote      # per rank: (sorted keys, addresses)
        self._plans: dict = {}
        self.builds = 0

    def sends(self, rank: int) -> list[Bucket]:
        return [b for b in self.buckets if b.sender == rank]

    def recvs(self, rank: int) -> list[Bucket]:
        return [b for b in self.buckets if b.receiver == rank]

    @property
    def messages(self) -> int:
        return len(self.buckets)

    @property
    def elements(self) -> int:
        return sum(b.count for b in self.buckets)

    def x_map(self, rank: int):
        part = self.part
        lay = part.ranks[rank]
        keys, addrs = self._remote[rank]
        frame = _key_frame(self.program, part)
        full_column = self.program.full_column

        def x_map(cols):
            own = part.column_owner(cols, full_column)
            out = np.empty(len(own), dtype=np.int64)
            mine = own == rank
            if mine.any():
                a, ok = lookup(lay.full, [c[mine] for c in cols])
                if not ok.all():
                    raise ConfigurationError(f"rank {rank}: owned column not stored locally")
                out[mine] = a
            if (~mine).any():
                k, _ = lookup(frame, [c[~mine] for c in cols])
                pos = np.searchsorted(keys, k)
                pos = np.minimum(pos, max(len(keys) - 1, 0))
                if len(keys) == 0 or not np.array_equal(keys[pos], k):
                    raise ConfigurationError(f"rank {rank}: remote column missing from schedule")
                out[~mine] = addrs[pos]
            return out
        return x_map

    def plan(self, rank: int) -> ExecutionPlan:
        plan = self._plans.get(rank)
        if plan is None:
            lay = self.part.ranks[rank]
            plan = self._plans[rank] = build_plan(self.program, self.x_map(rank), lay.full, restrict=lay.full)
        return plan

    def summary(self) -> str:
        lines = [f"schedule: {self.messages} messages, {self.elements} elements per step"]
        for b in self.buckets:
            lines.append(
                f"  {b.sender} -> {b.receiver} group={b.group[0]}:{b.group[1]} "
                f"box={b.box} elements={b.count} box_cells={b.box.count()}"
            )
        return "\n".join(lines)


def _key_frame(program: BoundaryProgram, part: Partition) -> Region:
    regs = [part.global_full, program.column_space]
    lo = [min(r.starts[d] for r in regs) for d in range(part.global_full.ndim)]
    hi = [max(r.lasts[d] for r in regs) for d in range(part.global_full.ndim)]
    return bounding_box([lo, hi])


def plan_communication(program: BoundaryProgram, part: Partition) -> CommSchedule:
    """Enumerate every rank's column demands and bucket the remote ones.

    Buckets are keyed by (owner, entity, gid) and visited in sorted order;
    a column demanded by several groups is sent only with the first.
    Columns are sent in row-major order of their global index.
    """
    ents = program.entities
    nd = part.global_full.ndim
    frame = _key_frame(program, part)
    buckets: list[Bucket] = []
    scratch, remote = [], []
    for lay in part.ranks:
        p = lay.rank
        demand = defaultdict(list)
        for piece in program.pieces:
            box = (piece.box & lay.full).trimmed()
            if box.is_empty():
                continue
            for term in piece.kernel.terms:
                ent = ents[term.entity]
                cols, gids = _demands(program, box, ent, term)
                if not len(cols):
                    continue
                n_group = getattr(ent, "n_group", 1)
                if np.any((gids < 0) | (gids >= n_group)):
                    raise ConfigurationError(f"{ent.name}: gid outside [0, {n_group})")
                own = part.column_owner(list(cols.T), program.full_column)
                if np.any(own < 0):
                    bad = tuple(int(v) for v in cols[np.flatnonzero(own < 0)[0]])
                    raise ConfigurationError(f"{ent.name}: column {bad} is owned by no rank")
                far = own != p
                for o, g, c in zip(own[far], gids[far], cols[far]):
                    demand[(int(o), term.entity, int(g))].append(c)
        seen: set = set()
        n_local = lay.full.count()
        slot = n_local
        rk, ra = [], []
        for key in sorted(demand):
            o, k, g = key
            arr = np.unique(np.array(demand[key], dtype=np.int64).reshape(-1, nd), axis=0)
            keep = [tuple(c) not in seen for c in arr]
            arr = arr[np.array(keep, dtype=bool)] if len(arr) else arr
            if not len(arr):
                continue
            seen.update(tuple(c) for c in arr)
            cl = list(arr.T)
            send_addr, ok = lookup(part.ranks[o].full, cl)
            if not ok.all():
                raise ConfigurationError(f"rank {o} does not store columns it owns")
            local, here = lookup(lay.full, cl)
            recv = np.empty(len(arr), dtype=np.int64)
            recv[here] = local[here]
            nfar = int((~here).sum())
            recv[~here] = np.arange(slot, slot + nfar)
            slot += nfar
            fk, _ = lookup(frame, cl)
            rk.append(fk)
            ra.append(recv)
            buckets.append(Bucket(o, p, (ents[k].name, g), bounding_box([tuple(c) for c in arr]),
                                  arr, send_addr, recv))
        scratch.append(slot - n_local)
        keys = np.concatenate(rk) if rk else np.zeros(0, dtype=np.int64)
        addrs = np.concatenate(ra) if ra else np.zeros(0, dtype=np.int64)
        order = np.argsort(keys, kind="stable")
        remote.append((keys[order], addrs[order]))
    for t, b in enumerate(buckets):
        b.tag = t
    return CommSchedule(program, part, buckets, scratch, remote)


# ---------------------------------------------------------------- execution

def _xbuf(sched: CommSchedule, rank: int, x: GridVar) -> np.ndarray:
    n = sched.scratch[rank]
    if n == 0:
        return x.flat
    return np.concatenate([x.flat, np.zeros(n * x.ncomp)])


def exchange_rank(sched: CommSchedule, ep: Transport, x: GridVar, xbuf: np.ndarray, backend=None) -> None:
    """Post all sends of one rank, then receive into halo or scratch slots."""
    k = backend or kernels.backend
    nc = x.ncomp
    for b in sched.sends(ep.rank):
        out = np.empty(b.count * nc)
        k.pack(x.flat, b.send_addr, out, nc)
        ep.send(b.receiver, ("data", b.tag), out.astype("<f8").tobytes())
    for b in sched.recvs(ep.rank):
        raw = ep.recv(b.sender, ("data", b.tag))
        buf = np.frombuffer(raw, "<f8")
        if buf.size != b.count * nc:
            raise TransportError(f"rank {ep.rank}: message {b.tag} has {buf.size} values, expected {b.count * nc}")
        k.unpack(xbuf, b.recv_addr, np.ascontiguousarray(buf, dtype=np.float64), nc)
        # halo slots live in x itself; keep x in step with the buffer
    if xbuf is not x.flat and xbuf.size:
        x.flat[:] = xbuf[: x.flat.size]


def _check_layout(sched: CommSchedule, vars_: Sequence[GridVar], what: str) -> None:
    part = sched.part
    if len(vars_) != part.size:
        raise UsageError(f"{what}: expected {part.size} ranks, got {len(vars_)}")
    for lay, v in zip(part.ranks, vars_):
        if v.full_region != lay.full:
            raise UsageError(f"{what}[{lay.rank}] stores {v.full_region}, schedule expects {lay.full}")


def _run_ranks(size: int, fn):
    if size == 1:
        return [fn(0)]
    with ThreadPoolExecutor(max_workers=size) as pool:
        futures = [pool.submit(fn, r) for r in range(size)]
        return [f.result() for f in futures]


def exchange(sched: CommSchedule, fabric: InProcessFabric, xs: Sequence[GridVar], backend=None):
    """Fill every rank's halo/scratch; returns the per-rank x buffers."""
    _check_layout(sched, xs, "x")

    def work(r):
        buf = _xbuf(sched, r, xs[r])
        exchange_rank(sched, fabric.endpoint(r), xs[r], buf, backend)
        return buf
    return _run_ranks(sched.part.size, work)


def execute_distributed(program: BoundaryProgram, part: Partition, sched: CommSchedule,
                        fabric: InProcessFabric, xs: Sequence[GridVar], ys: Sequence[GridVar],
                        backend=None) -> list[GridVar]:
    if sched.program is not program or sched.part is not part:
        raise UsageError("schedule was built for a different program or partition")
    _check_layout(sched, xs, "x")
    _check_layout(sched, ys, "y")
    if fabric.size != part.size:
        raise UsageError(f"fabric has {fabric.size} ranks, partition {part.size}")

    def work(r):
        x, y = xs[r], ys[r]
        buf = _xbuf(sched, r, x)
        exchange_rank(sched, fabric.endpoint(r), x, buf, backend)
        plan = sched.plan(r)
        if x is y and plan.reads_written:
            buf = buf.copy()
        plan.run(y.flat, buf, y.ncomp, backend)
        return y
    return _run_ranks(part.size, work)


def scatter(part: Partition, g: GridVar) -> list[GridVar]:
    """Per-rank copies of the stored part of a global variable."""
    out = []
    for lay in part.ranks:
        v = GridVar(lay.full, lay.owned, g.ncomp, name=g.name)
        v.values[:] = g.read(lay.full)
        out.append(v)
    return out


def gather(part: Partition, locals_: Sequence[GridVar], template: GridVar) -> GridVar:
    """Owned cells from their owner, other stored cells from the lowest rank holding them."""
    g = template.copy()
    done = np.zeros(g.full_region.count(), dtype=bool)
    for lay, v in zip(part.ranks, locals_):
        a = g.region_addresses(lay.owned)
        g.values[a] = v.read(lay.owned)
        done[a] = True
    for lay, v in zip(part.ranks, locals_):
        a = g.region_addresses(lay.full)
        new = ~done[a]
        g.values[a[new]] = v.values[new]
        done[a] = True
    return g
