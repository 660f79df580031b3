"""Shrink boundary pieces to the cells downstream stencils actually read.

A piece of a boundary program writes every cell of its box, but the
computation that consumes the output usually touches only part of the
ghost ring (a 5-point stencil never reads the corners).  Given
constant-offset read footprints, each piece is cut down to

    U = box ∩ ∪_reads (inner_domain + offset)

and re-split into disjoint boxes.  Kernels are left unchanged, so values
written to the surviving cells are identical to the unpruned run.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

from .errors import UsageError
from .region import Region, RegionSet, decompose_disjoint, intersect
from .staging import BoundaryProgram, Piece

log = logging.getLogger(__name__)

__all__ = [
    "StencilFootprint", "DependenceSet", "compute_effective_space", "apply_pruning",
    "decompose_disjoint", "five_point", "nine_point",
]


@dataclass(frozen=True)
class StencilFootprint:
    """Reads of a consuming computation over ``inner_domain``.

    ``reads`` is a sequence of ``(variable, offset)`` pairs; a read at cell
    ``i`` touches ``i + offset`` of that variable.
    """

    inner_domain: Region
    reads: tuple[tuple[str, tuple[int, ...]], ...]

    def __init__(self, inner_domain: Region, reads):
        norm = []
        for var, off in reads:
            off = tuple(int(o) for o in off)
            if len(off) != inner_domain.ndim:
                raise UsageError(f"offset {off} does not match a {inner_domain.ndim}-D domain")
            norm.append((str(var), off))
        object.__setattr__(self, "inner_domain", inner_domain)
        object.__setattr__(self, "reads", tuple(norm))

    def offsets(self, var: str | None = None) -> list[tuple[int, ...]]:
        return [o for v, o in self.reads if var is None or v == var]

    def read_regions(self, var: str) -> list[Region]:
        return [self.inner_domain.translate(o) for o in self.offsets(var)]


def five_point(inner: Region, var: str = "y", axes=None) -> StencilFootprint:
    """Center plus the two neighbors along each of ``axes`` (default all)."""
    nd = inner.ndim
    offs = [(0,) * nd]
    for d in (range(nd) if axes is None else axes):
        for s in (-1, 1):
            o = [0] * nd
            o[d] = s
            offs.append(tuple(o))
    return StencilFootprint(inner, [(var, o) for o in offs])


def nine_point(inner: Region, var: str = "y", axes=None) -> StencilFootprint:
    """Every offset in ``{-1, 0, 1}`` along ``axes`` (default all), zero elsewhere."""
    nd = inner.ndim
    axes = list(range(nd)) if axes is None else list(axes)
    offs = []
    for combo in itertools.product((-1, 0, 1), repeat=len(axes)):
        o = [0] * nd
        for a, v in zip(axes, combo):
            o[a] = v
        offs.append(tuple(o))
    return StencilFootprint(inner, [(var, o) for o in offs])


@dataclass
class DependenceSet:
    """Effective write region per piece, in piece order."""

    effective: list[RegionSet] = field(default_factory=list)
    disabled: bool = False

    def count(self) -> int:
        return sum(rs.count() for rs in self.effective)


def compute_effective_space(program: BoundaryProgram,
                            footprints: Sequence[StencilFootprint]) -> DependenceSet:
    var = program.output_var
    reads: list[Region] = []
    for fp in footprints:
        regs = fp.read_regions(var)
        if not regs:
            raise UsageError(f"footprint does not read the program output {var!r}")
        reads.extend(regs)

    # Ghosts fed back into the program's own dynamic column reads are not
    # described by constant offsets, so nothing can be dropped safely.
    if program.full_column and program.input_var == program.output_var:
        log.info("pruning disabled: program reads its own full region")
        return DependenceSet([RegionSet([p.box]) for p in program.pieces], disabled=True)

    out = []
    for p in program.pieces:
        parts = [intersect(p.box, r) for r in reads]
        out.append(decompose_disjoint(b.trimmed() for b in parts if not b.is_empty()))
    return DependenceSet(out)


def apply_pruning(program: BoundaryProgram, deps: DependenceSet) -> BoundaryProgram:
    """Replace each piece box by its effective boxes; drop emptied pieces."""
    if len(deps.effective) != len(program.pieces):
        raise UsageError("dependence set was computed for a different program")
    pieces = []
    for p, rs in zip(program.pieces, deps.effective):
        if len(rs.boxes) == 1 and rs.boxes[0] == p.box:
            pieces.append(p)
            continue
        for b in rs.boxes:
            pieces.append(Piece(b, p.kernel, p.branch))
    stats = dict(program.stats)
    stats["pruned_cells"] = program.cells() - sum(p.box.count() for p in pieces)
    return replace(program, pieces=tuple(pieces), stats=stats, pruned=True)
