"""Strided integer boxes and disjoint unions of them.

A :class:`Region` is the product of one ``(start, stop, step)`` slice per
grid dimension.  Index ``i`` is a member when ``start <= i < stop`` and
``(i - start) % step == 0`` in every dimension.  Data, ghost, full and
per-rank halo regions are all described with it.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import UnsupportedOperationError, UsageError

Index = tuple[int, ...]


@dataclass(frozen=True)
class Region:
    dims: tuple[tuple[int, int, int], ...]

    def __init__(self, dims: Iterable[Sequence[int]]):
        norm = []
        for d in dims:
            if len(d) == 2:
                start, stop, step = d[0], d[1], 1
            else:
                start, stop, step = d
            start, stop, step = int(start), int(stop), int(step)
            if step < 1:
                raise UsageError(f"region step must be >= 1, got {step}")
            norm.append((start, stop, step))
        if any(stop <= start for start, stop, _ in norm):
            norm = [(0, 0, 1)] * len(norm)
        object.__setattr__(self, "dims", tuple(norm))

    @classmethod
    def box(cls, *triples: Sequence[int]) -> "Region":
        return cls(triples)

    @classmethod
    def empty(cls, ndim: int) -> "Region":
        return cls([(0, 0, 1)] * ndim)

    @classmethod
    def from_bounds(cls, lo: Sequence[int], hi: Sequence[int], step=None) -> "Region":
        """Box covering ``lo <= i < hi``."""
        step = step or [1] * len(lo)
        return cls(zip(lo, hi, step))

    # -- basic queries -------------------------------------------------
    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def starts(self) -> Index:
        return tuple(d[0] for d in self.dims)

    @property
    def steps(self) -> Index:
        return tuple(d[2] for d in self.dims)

    @property
    def shape(self) -> Index:
        """Number of members along each dimension."""
        return tuple(max(0, -(-(stop - start) // step)) for start, stop, step in self.dims)

    @property
    def lasts(self) -> Index:
        return tuple(start + (n - 1) * step for (start, _, step), n in zip(self.dims, self.shape))

    def is_empty(self) -> bool:
        return any(n == 0 for n in self.shape)

    def count(self) -> int:
        return math.prod(self.shape)

    def __len__(self) -> int:
        return self.count()

    def _check_dim(self, n: int) -> None:
        if n != self.ndim:
            raise UsageError(f"dimensionality mismatch: {n} vs region of {self.ndim}")

    def contains(self, idx: Sequence[int]) -> bool:
        self._check_dim(len(idx))
        return all(
            start <= i < stop and (i - start) % step == 0
            for i, (start, stop, step) in zip(idx, self.dims)
        )

    __contains__ = contains

    def enumerate(self) -> Iterator[Index]:
        """Members in lexicographic order, last dimension fastest."""
        if self.is_empty():
            return iter(())
        return itertools.product(*(range(*d) for d in self.dims))

    def __iter__(self) -> Iterator[Index]:
        return self.enumerate()

    def index_arrays(self) -> list[np.ndarray]:
        """Flattened coordinate arrays of all members, lexicographic order."""
        if self.is_empty():
            return [np.zeros(0, dtype=np.int64) for _ in self.dims]
        axes = [np.arange(*d, dtype=np.int64) for d in self.dims]
        return [g.ravel() for g in np.meshgrid(*axes, indexing="ij")]

    def ordinal(self, idx: Sequence[int]) -> int:
        """Row-major position of a member (mixed-radix over ``shape``)."""
        if not self.contains(idx):
            raise UsageError(f"{tuple(idx)} is not a member of {self}")
        k = 0
        for i, (start, _, step), n in zip(idx, self.dims, self.shape):
            k = k * n + (i - start) // step
        return k

    def unravel(self, k: int) -> Index:
        if not 0 <= k < self.count():
            raise UsageError(f"ordinal {k} out of range for {self}")
        out = []
        for (start, _, step), n in zip(reversed(self.dims), reversed(self.shape)):
            k, r = divmod(k, n)
            out.append(start + r * step)
        return tuple(reversed(out))

    def strides(self) -> Index:
        """Ordinal increment per unit step along each dimension."""
        out, acc = [], 1
        for n in reversed(self.shape):
            out.append(acc)
            acc *= n
        return tuple(reversed(out))

    # -- algebra -------------------------------------------------------
    def translate(self, offset: Sequence[int]) -> "Region":
        self._check_dim(len(offset))
        if self.is_empty():
            return self
        return Region((s + o, e + o, t) for (s, e, t), o in zip(self.dims, offset))

    def dilate(self, widths: Sequence[int]) -> "Region":
        """Grow by ``widths[d]`` members on both sides of each dimension."""
        self._check_dim(len(widths))
        if self.is_empty():
            return self
        return Region(
            (s - w * t, last + (w + 1) * t, t)
            for (s, _, t), last, w in zip(self.dims, self.lasts, widths)
        )

    def trimmed(self) -> "Region":
        """Same members with every stop pulled in to ``last + 1``."""
        if self.is_empty():
            return self
        return Region((s, last + 1, t) for (s, _, t), last in zip(self.dims, self.lasts))

    def issubset(self, other: "Region") -> bool:
        return self.is_empty() or intersect(self, other).count() == self.count()

    def __and__(self, other: "Region") -> "Region":
        return intersect(self, other)

    def __str__(self) -> str:
        return "×".join(f"({s},{e},{t})" for s, e, t in self.dims)

    def __repr__(self) -> str:
        return f"Region({self})"


_TRIPLE = re.compile(r"\(\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\)")


def parse_region(text: str) -> Region:
    """Inverse of ``str(Region)``; accepts ``×``, ``x`` or ``*`` as separator."""
    parts = re.split(r"\s*[×x*]\s*", text.strip())
    dims = []
    for p in parts:
        m = _TRIPLE.fullmatch(p)
        if not m:
            raise UsageError(f"cannot parse region component {p!r}")
        dims.append(tuple(int(g) for g in m.groups()))
    return Region(dims)


def _crt(s1: int, t1: int, s2: int, t2: int):
    """Smallest non-negative residue solving x≡s1 (t1), x≡s2 (t2), or None."""
    g = math.gcd(t1, t2)
    if (s2 - s1) % g:
        return None
    lcm = t1 // g * t2
    m = t2 // g
    k = ((s2 - s1) // g * pow(t1 // g, -1, m)) % m if m > 1 else 0
    return (s1 + t1 * k) % lcm, lcm


def intersect(a: Region, b: Region) -> Region:
    if a.ndim != b.ndim:
        raise UsageError(f"dimensionality mismatch: {a.ndim} vs {b.ndim}")
    if a.is_empty() or b.is_empty():
        return Region.empty(a.ndim)
    dims = []
    for (s1, e1, t1), (s2, e2, t2) in zip(a.dims, b.dims):
        sol = _crt(s1, t1, s2, t2)
        if sol is None:
            return Region.empty(a.ndim)
        x0, step = sol
        lo = max(s1, s2)
        start = lo + (x0 - lo) % step
        stop = min(e1, e2)
        if start >= stop:
            return Region.empty(a.ndim)
        dims.append((start, stop, step))
    return Region(dims)


def subtract(a: Region, b: Region) -> list[Region]:
    """Disjoint boxes covering ``a \\ b``.

    Dimensions are swept in order 0..n-1: along each one the slab of ``a``
    below and above the overlap is split off, then ``a`` is narrowed to the
    overlap and the sweep continues with the next dimension.
    """
    if a.ndim != b.ndim:
        raise UsageError(f"dimensionality mismatch: {a.ndim} vs {b.ndim}")
    if a.is_empty():
        return []
    if b.is_empty():
        return [a]
    if a.steps != b.steps:
        raise UnsupportedOperationError(f"subtract needs equal steps, got {a.steps} and {b.steps}")
    inter = intersect(a, b)
    if inter.is_empty():
        return [a]
    out = []
    cur = list(a.dims)
    for d, ((s, e, t), (is_, _, _), ilast) in enumerate(zip(a.dims, inter.dims, inter.lasts)):
        if is_ > s:
            out.append(Region(cur[:d] + [(s, is_, t)] + cur[d + 1:]))
        if ilast + t < e:
            out.append(Region(cur[:d] + [(ilast + t, e, t)] + cur[d + 1:]))
        cur[d] = (is_, ilast + 1, t)
    return out


def bounding_box(points: Sequence[Sequence[int]]) -> Region:
    """Smallest step-1 box containing every point."""
    if len(points) == 0:
        raise UsageError("bounding_box of an empty point list")
    arr = np.asarray(points, dtype=np.int64)
    if arr.ndim != 2:
        raise UsageError("points must share one dimensionality")
    return Region.from_bounds(arr.min(axis=0).tolist(), (arr.max(axis=0) + 1).tolist())


@dataclass(frozen=True)
class RegionSet:
    """A union of pairwise-disjoint boxes."""

    boxes: tuple[Region, ...]

    def __init__(self, boxes: Iterable[Region] = ()):
        object.__setattr__(self, "boxes", tuple(b for b in boxes if not b.is_empty()))

    def count(self) -> int:
        return sum(b.count() for b in self.boxes)

    def __len__(self) -> int:
        return len(self.boxes)

    def __iter__(self) -> Iterator[Region]:
        return iter(self.boxes)

    def is_empty(self) -> bool:
        return not self.boxes

    def contains(self, idx: Sequence[int]) -> bool:
        return any(b.contains(idx) for b in self.boxes)

    __contains__ = contains

    def enumerate(self) -> Iterator[Index]:
        for b in self.boxes:
            yield from b.enumerate()

    def is_disjoint(self) -> bool:
        return all(
            intersect(a, b).is_empty() for a, b in itertools.combinations(self.boxes, 2)
        )

    def __str__(self) -> str:
        return " ∪ ".join(str(b) for b in self.boxes) or "∅"


def decompose_disjoint(boxes: Iterable[Region]) -> RegionSet:
    """Pairwise-disjoint boxes with the same union as ``boxes``.

    Each box in turn has every previously accepted box subtracted from it,
    so earlier boxes keep their shape.  Boxes must share one step vector.
    """
    boxes = [b for b in boxes if not b.is_empty()]
    if boxes:
        steps = boxes[0].steps
        if any(b.steps != steps for b in boxes):
            raise UnsupportedOperationError("decompose_disjoint needs a uniform step")
    accepted: list[Region] = []
    for b in boxes:
        pieces = [b]
        for prev in accepted:
            pieces = [p for q in pieces for p in subtract(q, prev)]
            if not pieces:
                break
        accepted.extend(pieces)
    return RegionSet(sorted(accepted, key=lambda r: r.dims))


def boxes_from_mask(mask: np.ndarray, frame: Region) -> list[Region]:
    """Greedy box cover of the true cells of ``mask``.

    ``mask`` has shape ``frame.shape`` (one entry per member of ``frame``).
    The first true cell in lexicographic order seeds a box that grows along
    the last dimension, then each earlier one, while the slab stays true.
    Boxes come out in lexicographic order of their first cell.
    """
    mask = np.array(mask, dtype=bool, copy=True).reshape(frame.shape)
    nd = mask.ndim
    starts, steps = frame.starts, frame.steps
    out = []
    flat = mask.reshape(-1)
    pos = 0
    while True:
        hits = np.flatnonzero(flat[pos:])
        if hits.size == 0:
            break
        pos += int(hits[0])
        first = np.unravel_index(pos, mask.shape)
        ext = [1] * nd
        for d in reversed(range(nd)):
            sl = [slice(f, f + e) for f, e in zip(first, ext)]
            if d == nd - 1:
                row = mask[tuple(sl[:-1]) + (slice(first[d], None),)].reshape(-1)
                stop = np.flatnonzero(~row)
                ext[d] = int(stop[0]) if stop.size else row.size
                continue
            while first[d] + ext[d] < mask.shape[d]:
                sl[d] = slice(first[d] + ext[d], first[d] + ext[d] + 1)
                if not mask[tuple(sl)].all():
                    break
                ext[d] += 1
        sl = tuple(slice(f, f + e) for f, e in zip(first, ext))
        mask[sl] = False
        out.append(Region(
            (s + t * f, s + t * (f + e - 1) + 1, t)
            for s, t, f, e in zip(starts, steps, first, ext)
        ))
    return out
