"""Bounded emptiness and entailment checks for resolvable predicates.

Predicates are decided over a concrete, finite :class:`Region`.  A cheap
interval pass runs first: the predicate is put in negation normal form,
atoms containing ``max``/``min`` are case-split, and every conjunction
narrows per-dimension index ranges until a range empties or an atom is
definitely false.  When intervals are inconclusive the predicate is
evaluated on every cell of the domain, which makes the verdict exact.
"""
from __future__ import annotations

import enum
import math

import numpy as np

from .errors import StagingError
from .expr import (
    Add, And, BoolExpr, BoolLit, Binding, Eq, FoldContext, Idx, InArea, IntExpr, Lit,
    Lt, Max, MulLit, Not, Or, _MinMax, _canonical, eval_bool, linear_form, params_of,
)
from .region import Region

INF = math.inf
_SPLIT_DEPTH = 3
_NARROW_PASSES = 8


class Verdict(enum.Enum):
    PROVED_FALSE = "ProvedFalse"
    NOT_PROVED_FALSE = "NotProvedFalse"

    def __bool__(self):
        return self is Verdict.PROVED_FALSE


def _check(p: BoolExpr, params) -> BoolExpr:
    if not p.resolvable:
        raise StagingError(f"predicate is not stage-1 resolvable: {p}")
    missing = params_of(p) - set(params or {})
    if missing:
        raise StagingError(f"unbound parameters {sorted(missing)} in {p}")
    return p.fold(FoldContext(params=dict(params or {})))


# -- normal form --------------------------------------------------------

def nnf(p: BoolExpr, neg: bool = False) -> BoolExpr:
    """Negation normal form over ``Lt``/``Eq`` atoms (``InArea`` expanded)."""
    if isinstance(p, BoolLit):
        return BoolLit(p.value != neg)
    if isinstance(p, Not):
        return nnf(p.arg, not neg)
    if isinstance(p, InArea):
        return nnf(p.expand(), neg)
    if isinstance(p, (And, Or)):
        parts = [nnf(a, neg) for a in p.args]
        as_and = isinstance(p, And) != neg
        return And(parts) if as_and else Or(parts)
    if isinstance(p, Lt):
        return Lt(p.b, Add(p.a, Lit(1))) if neg else p
    if isinstance(p, Eq):
        return Or((Lt(p.a, p.b), Lt(p.b, p.a))) if neg else p
    raise StagingError(f"unexpected predicate node {p!r}")


def _find_minmax(e: IntExpr):
    if isinstance(e, _MinMax):
        return e
    for c in e.children():
        found = _find_minmax(c)
        if found is not None:
            return found
    return None


def _replace(e: IntExpr, target: IntExpr, repl: IntExpr) -> IntExpr:
    if e == target:
        return repl
    if isinstance(e, Add):
        return Add(_replace(e.a, target, repl), _replace(e.b, target, repl))
    if isinstance(e, MulLit):
        return MulLit(_replace(e.a, target, repl), e.k)
    if isinstance(e, _MinMax) or hasattr(e, "k"):
        kids = [_replace(c, target, repl) for c in e.children()]
        if isinstance(e, _MinMax):
            return type(e)(*kids)
        return type(e)(kids[0], e.k)
    return e


def split_minmax(p: BoolExpr, depth: int = _SPLIT_DEPTH) -> BoolExpr:
    """Rewrite atoms holding ``max``/``min`` into guarded linear branches."""
    if isinstance(p, (And, Or)):
        return type(p)([split_minmax(a, depth) for a in p.args])
    if not isinstance(p, (Lt, Eq)) or depth == 0:
        return p
    node = _find_minmax(p.a) or _find_minmax(p.b)
    if node is None:
        return p
    a, b = node.a, node.b
    sub = lambda r: type(p)(_replace(p.a, node, r), _replace(p.b, node, r))
    if isinstance(node, Max):
        first, second = Lt(b, Add(a, Lit(1))), Lt(a, b)
    else:
        first, second = Lt(a, Add(b, Lit(1))), Lt(b, a)
    return Or((
        And((first, split_minmax(sub(a), depth - 1))),
        And((second, split_minmax(sub(b), depth - 1))),
    ))


# -- interval refutation -----------------------------------------------

def _diff(atom) -> IntExpr:
    return _canonical(Add(atom.a, MulLit(atom.b, -1)))


def _atom_false(atom, ctx: FoldContext) -> bool:
    lo, hi = _diff(atom).interval(ctx)
    if isinstance(atom, Lt):
        return lo >= 0
    return lo > 0 or hi < 0


def _contains_dim(e: IntExpr, d: int) -> bool:
    if isinstance(e, Idx):
        return e.dim == d
    return any(_contains_dim(c, d) for c in e.children())


def _narrow(atom, ranges: dict) -> bool | None:
    """Tighten ``ranges`` from one atom; ``None`` when a range empties."""
    coeffs, const = linear_form(_diff(atom))
    ctx = FoldContext(ranges=ranges)
    changed = False
    for var, c in coeffs.items():
        if not isinstance(var, Idx):
            continue
        d = var.dim
        others = [(k, v) for k, v in coeffs.items() if k != var]
        if any(_contains_dim(k, d) for k, _ in others):
            continue
        rlo, rhi = const, const
        for k, v in others:
            klo, khi = MulLit(k, v).interval(ctx)
            rlo, rhi = rlo + klo, rhi + khi
        # c*i + rest < 0   or   c*i + rest == 0
        if isinstance(atom, Lt):
            bound_lo, bound_hi = -INF, -1 - rlo
        else:
            bound_lo, bound_hi = -rhi, -rlo
        if c < 0:
            bound_lo, bound_hi = -bound_hi, -bound_lo
        ac = abs(c)
        new_lo = math.ceil(bound_lo / ac) if bound_lo not in (INF, -INF) else bound_lo
        new_hi = math.floor(bound_hi / ac) if bound_hi not in (INF, -INF) else bound_hi
        lo, hi = ranges.get(d, (-INF, INF))
        lo2, hi2 = max(lo, new_lo), min(hi, new_hi)
        if lo2 > hi2:
            return None
        if (lo2, hi2) != (lo, hi):
            ranges[d] = (lo2, hi2)
            changed = True
    return changed


def refute(p: BoolExpr, ranges: dict) -> bool:
    """True if intervals alone show ``p`` (in NNF) is unsatisfiable."""
    if isinstance(p, BoolLit):
        return not p.value
    if isinstance(p, (Lt, Eq)):
        if _atom_false(p, FoldContext(ranges=ranges)):
            return True
        return _narrow(p, dict(ranges)) is None
    if isinstance(p, Or):
        return all(refute(a, ranges) for a in p.args)
    ranges = dict(ranges)
    atoms = [a for a in p.args if isinstance(a, (Lt, Eq))]
    for _ in range(_NARROW_PASSES):
        changed = False
        for a in atoms:
            r = _narrow(a, ranges)
            if r is None:
                return True
            changed |= r
        if not changed:
            break
    return any(refute(a, ranges) for a in p.args)


def domain_ranges(domain: Region) -> dict:
    return {d: (s, last) for d, ((s, _, _), last) in enumerate(zip(domain.dims, domain.lasts))}


class Prover:
    """Decides predicates over one domain, memoizing exhaustive cell masks."""

    def __init__(self, domain: Region, params=None):
        self.domain = domain
        self.params = dict(params or {})
        self._ranges = domain_ranges(domain)
        self._masks: dict = {}
        self._binding = None
        self.stats = {"interval": 0, "exhaustive": 0}

    def _bind(self) -> Binding:
        if self._binding is None:
            self._binding = Binding(self.domain.index_arrays(), self.params)
        return self._binding

    def mask(self, p: BoolExpr) -> np.ndarray:
        """Flat boolean array over the domain's cells (lexicographic)."""
        hit = self._masks.get(p)
        if hit is not None:
            return hit
        n = self.domain.count()
        if isinstance(p, And):
            m = np.ones(n, dtype=bool)
            for a in p.args:
                m &= self.mask(a)
        elif isinstance(p, Or):
            m = np.zeros(n, dtype=bool)
            for a in p.args:
                m |= self.mask(a)
        elif isinstance(p, Not):
            m = ~self.mask(p.arg)
        else:
            v = eval_bool(p, self._bind())
            m = np.broadcast_to(np.asarray(v, dtype=bool), (n,)).copy()
        self._masks[p] = m
        return m

    def intervals_refute(self, p: BoolExpr) -> bool:
        if self.domain.is_empty():
            return True
        return refute(split_minmax(nnf(p)), self._ranges)

    def prove_false(self, p: BoolExpr) -> Verdict:
        return self.decide(_check(p, self.params))

    def decide(self, p: BoolExpr) -> Verdict:
        """Like :meth:`prove_false` for a predicate already checked and folded."""
        if self.intervals_refute(p):
            self.stats["interval"] += 1
            return Verdict.PROVED_FALSE
        self.stats["exhaustive"] += 1
        if self.mask(p).any():
            return Verdict.NOT_PROVED_FALSE
        return Verdict.PROVED_FALSE

    def entails(self, p: BoolExpr, q: BoolExpr) -> bool:
        return self.prove_false(And((p, Not(q)))) is Verdict.PROVED_FALSE


def prove_false(p: BoolExpr, domain: Region, params=None) -> Verdict:
    """``PROVED_FALSE`` iff ``p`` holds on no cell of ``domain``."""
    return Prover(domain, params).prove_false(p)


def entails(p: BoolExpr, q: BoolExpr, domain: Region, params=None) -> bool:
    """Whether ``p -> q`` holds on every cell of ``domain``."""
    return Prover(domain, params).entails(p, q)
