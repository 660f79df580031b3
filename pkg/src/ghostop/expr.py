"""Staged expression trees for boundary descriptions.

Three expression kinds exist:

* :class:`IntExpr` -- integer index arithmetic.  The subset built from
  literals, index variables, parameters, ``+``, multiplication / floor
  division / modulo by a literal, ``max`` and ``min`` is *resolvable*: it
  can be decided at staging time.  :class:`Load` and :class:`RtBin` read
  runtime storage or combine two runtime values and are never resolvable.
* :class:`BoolExpr` -- comparisons and connectives over integers, plus
  :class:`InArea` membership tests against a :class:`~ghostop.region.Region`.
* :class:`WeightExpr` -- float64 entry values.

Evaluation works with plain Python integers or with NumPy index arrays, so
the same tree can be evaluated for one cell or for a whole box at once.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import UsageError
from .region import Region

INF = math.inf


@dataclass
class Binding:
    """Values for the free variables of an expression.

    ``index`` holds one entry per grid dimension (ints or equally shaped
    integer arrays); ``params`` binds symbolic sizes; ``arrays`` exposes
    runtime storage to :class:`Load` / :class:`FLoad` nodes.
    """

    index: Sequence[Any] = ()
    params: Mapping[str, int] = field(default_factory=dict)
    arrays: Mapping[str, np.ndarray] = field(default_factory=dict)

    def idx(self, d: int):
        if d >= len(self.index):
            raise UsageError(f"index variable i{d} is unbound")
        return self.index[d]

    def param(self, name: str):
        try:
            return self.params[name]
        except KeyError:
            raise UsageError(f"parameter {name!r} is unbound") from None

    def array(self, name: str) -> np.ndarray:
        try:
            return self.arrays[name]
        except KeyError:
            raise UsageError(f"array {name!r} is not registered") from None


@dataclass
class FoldContext:
    """Facts available while folding: index ranges, the enclosing box, params."""

    ranges: Mapping[int, tuple[float, float]] = field(default_factory=dict)
    box: Region | None = None
    params: Mapping[str, int] = field(default_factory=dict)

    @classmethod
    def for_box(cls, box: Region, params=None) -> "FoldContext":
        ranges = {d: (s, last) for d, ((s, _, _), last) in enumerate(zip(box.dims, box.lasts))}
        return cls(ranges=ranges, box=box, params=dict(params or {}))


def _lit(v) -> "IntExpr":
    if isinstance(v, IntExpr):
        return v
    if isinstance(v, (int, np.integer)):
        return Lit(int(v))
    raise TypeError(f"cannot use {v!r} as an integer expression")


def _weighty(v) -> bool:
    return isinstance(v, (float, np.floating, WeightExpr))


# ---------------------------------------------------------------- integers

class IntExpr:
    __slots__ = ()
    resolvable = True

    def _as_weight(self):
        return FromInt(self)

    def __add__(self, o):
        if _weighty(o):
            return self._as_weight() + o
        return Add(self, _lit(o))

    def __radd__(self, o):
        if _weighty(o):
            return o + self._as_weight()
        return Add(_lit(o), self)

    def __sub__(self, o):
        if _weighty(o):
            return self._as_weight() - o
        return Add(self, MulLit(_lit(o), -1))

    def __rsub__(self, o):
        if _weighty(o):
            return o - self._as_weight()
        return Add(_lit(o), MulLit(self, -1))

    def __neg__(self):
        return MulLit(self, -1)

    def __mul__(self, o):
        if _weighty(o):
            return self._as_weight() * o
        if isinstance(o, (int, np.integer)):
            return MulLit(self, int(o))
        if isinstance(o, Lit):
            return MulLit(self, o.value)
        return RtBin("mul", self, _lit(o))

    def __rmul__(self, o):
        if _weighty(o):
            return o * self._as_weight()
        return self.__mul__(o)

    def __truediv__(self, o):
        return self._as_weight() / o

    def __floordiv__(self, o):
        if isinstance(o, (int, np.integer)):
            return DivLit(self, int(o))
        return RtBin("floordiv", self, _lit(o))

    def __mod__(self, o):
        if isinstance(o, (int, np.integer)):
            return ModLit(self, int(o))
        return RtBin("mod", self, _lit(o))

    def children(self) -> tuple["IntExpr", ...]:
        return ()


@dataclass(frozen=True)
class Lit(IntExpr):
    value: int

    def ev(self, b):
        return self.value

    def fold(self, ctx):
        return self

    def interval(self, ctx):
        return (self.value, self.value)

    def __str__(self):
        return str(self.value)


@dataclass(frozen=True)
class Idx(IntExpr):
    dim: int

    def ev(self, b):
        return b.idx(self.dim)

    def fold(self, ctx):
        lo, hi = ctx.ranges.get(self.dim, (-INF, INF))
        if lo == hi:
            return Lit(int(lo))
        return self

    def interval(self, ctx):
        return ctx.ranges.get(self.dim, (-INF, INF))

    def __str__(self):
        return f"i{self.dim}"


@dataclass(frozen=True)
class Param(IntExpr):
    name: str

    def ev(self, b):
        return b.param(self.name)

    def fold(self, ctx):
        if self.name in ctx.params:
            return Lit(int(ctx.params[self.name]))
        return self

    def interval(self, ctx):
        if self.name in ctx.params:
            v = ctx.params[self.name]
            return (v, v)
        return (-INF, INF)

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Add(IntExpr):
    a: IntExpr
    b: IntExpr

    @property
    def resolvable(self):
        return self.a.resolvable and self.b.resolvable

    def children(self):
        return (self.a, self.b)

    def ev(self, b):
        return self.a.ev(b) + self.b.ev(b)

    def fold(self, ctx):
        return _canonical(Add(self.a.fold(ctx), self.b.fold(ctx)))

    def interval(self, ctx):
        (a0, a1), (b0, b1) = self.a.interval(ctx), self.b.interval(ctx)
        return (a0 + b0, a1 + b1)

    def __str__(self):
        if isinstance(self.b, MulLit) and self.b.k < 0:
            neg = MulLit(self.b.a, -self.b.k) if self.b.k != -1 else self.b.a
            return f"({self.a} - {neg})"
        if isinstance(self.b, Lit) and self.b.value < 0:
            return f"({self.a} - {-self.b.value})"
        return f"({self.a} + {self.b})"


@dataclass(frozen=True)
class MulLit(IntExpr):
    a: IntExpr
    k: int

    @property
    def resolvable(self):
        return self.a.resolvable

    def children(self):
        return (self.a,)

    def ev(self, b):
        return self.a.ev(b) * self.k

    def fold(self, ctx):
        return _canonical(MulLit(self.a.fold(ctx), self.k))

    def interval(self, ctx):
        if self.k == 0:
            return (0, 0)
        lo, hi = self.a.interval(ctx)
        lo, hi = lo * self.k, hi * self.k
        return (min(lo, hi), max(lo, hi))

    def __str__(self):
        if self.k == -1:
            return f"-{self.a}"
        return f"{self.a}*{self.k}"


def _floor_div(v, k):
    if v in (INF, -INF):
        return v if k > 0 else -v
    return v // k


@dataclass(frozen=True)
class DivLit(IntExpr):
    """Floor division by a nonzero literal."""

    a: IntExpr
    k: int

    def __post_init__(self):
        if self.k == 0:
            raise UsageError("division by literal zero")

    @property
    def resolvable(self):
        return self.a.resolvable

    def children(self):
        return (self.a,)

    def ev(self, b):
        return self.a.ev(b) // self.k

    def fold(self, ctx):
        a = self.a.fold(ctx)
        if isinstance(a, Lit):
            return Lit(a.value // self.k)
        if self.k == 1:
            return a
        lin = linear_form(a)
        if lin is not None:
            coeffs, const = lin
            if all(c % self.k == 0 for c in coeffs.values()):
                scaled = {key: c // self.k for key, c in coeffs.items()}
                return _rebuild(scaled, const // self.k)
        lo, hi = a.interval(ctx)
        if lo not in (INF, -INF) and hi not in (INF, -INF) and lo // self.k == hi // self.k:
            return Lit(int(lo // self.k))
        return DivLit(a, self.k)

    def interval(self, ctx):
        lo, hi = self.a.interval(ctx)
        lo, hi = _floor_div(lo, self.k), _floor_div(hi, self.k)
        return (min(lo, hi), max(lo, hi))

    def __str__(self):
        return f"({self.a} // {self.k})"


@dataclass(frozen=True)
class ModLit(IntExpr):
    """Non-negative remainder modulo a positive literal."""

    a: IntExpr
    k: int

    def __post_init__(self):
        if self.k <= 0:
            raise UsageError("modulo literal must be positive")

    @property
    def resolvable(self):
        return self.a.resolvable

    def children(self):
        return (self.a,)

    def ev(self, b):
        return self.a.ev(b) % self.k

    def fold(self, ctx):
        a = self.a.fold(ctx)
        if isinstance(a, Lit):
            return Lit(a.value % self.k)
        if self.k == 1:
            return Lit(0)
        lin = linear_form(a)
        if lin is not None:
            coeffs, const = lin
            if all(c % self.k == 0 for c in coeffs.values()):
                return Lit(const % self.k)
        lo, hi = a.interval(ctx)
        if lo not in (INF, -INF) and hi not in (INF, -INF) and lo // self.k == hi // self.k:
            return _canonical(Add(a, Lit(-int(lo // self.k) * self.k)))
        return ModLit(a, self.k)

    def interval(self, ctx):
        lo, hi = self.a.interval(ctx)
        if lo not in (INF, -INF) and hi not in (INF, -INF) and lo // self.k == hi // self.k:
            return (lo % self.k, hi % self.k)
        return (0, self.k - 1)

    def __str__(self):
        return f"({self.a} % {self.k})"


class _MinMax(IntExpr):
    __slots__ = ()
    fn: Any = None
    name = ""

    @property
    def resolvable(self):
        return self.a.resolvable and self.b.resolvable

    def children(self):
        return (self.a, self.b)

    def ev(self, b):
        r = type(self).fn(self.a.ev(b), self.b.ev(b))
        return int(r) if np.ndim(r) == 0 else r

    def fold(self, ctx):
        a, b = self.a.fold(ctx), self.b.fold(ctx)
        if isinstance(a, Lit) and isinstance(b, Lit):
            return Lit(int(type(self).fn(a.value, b.value)))
        if a == b:
            return a
        (a0, a1), (b0, b1) = a.interval(ctx), b.interval(ctx)
        diff = linear_form(_canonical(Add(a, MulLit(b, -1))))
        if diff is not None and not diff[0]:
            a0 = a1 = diff[1]
            b0 = b1 = 0
        a_wins = a0 >= b1 if self.name == "max" else a1 <= b0
        b_wins = b0 >= a1 if self.name == "max" else b1 <= a0
        if a_wins:
            return a
        if b_wins:
            return b
        return type(self)(a, b)

    def interval(self, ctx):
        (a0, a1), (b0, b1) = self.a.interval(ctx), self.b.interval(ctx)
        f = max if self.name == "max" else min
        return (f(a0, b0), f(a1, b1))

    def __str__(self):
        return f"{self.name}({self.a}, {self.b})"


@dataclass(frozen=True)
class Max(_MinMax):
    a: IntExpr
    b: IntExpr
    fn = staticmethod(np.maximum)
    name = "max"


@dataclass(frozen=True)
class Min(_MinMax):
    a: IntExpr
    b: IntExpr
    fn = staticmethod(np.minimum)
    name = "min"


@dataclass(frozen=True)
class Load(IntExpr):
    """Integer read from runtime storage; taints resolvability."""

    array: str
    addr: IntExpr
    resolvable = False

    def children(self):
        return (self.addr,)

    def ev(self, b):
        return b.array(self.array)[self.addr.ev(b)]

    def fold(self, ctx):
        return Load(self.array, self.addr.fold(ctx))

    def interval(self, ctx):
        return (-INF, INF)

    def __str__(self):
        return f"load({self.array}, {self.addr})"


_RT_OPS = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "floordiv": lambda a, b: a // b,
    "mod": lambda a, b: a % b,
    "max": np.maximum,
    "min": np.minimum,
}


@dataclass(frozen=True)
class RtBin(IntExpr):
    """Binary operation between runtime integers; never resolvable."""

    op: str
    a: IntExpr
    b: IntExpr
    resolvable = False

    def __post_init__(self):
        if self.op not in _RT_OPS:
            raise UsageError(f"unknown runtime operator {self.op!r}")

    def children(self):
        return (self.a, self.b)

    def ev(self, b):
        return _RT_OPS[self.op](self.a.ev(b), self.b.ev(b))

    def fold(self, ctx):
        a, b = self.a.fold(ctx), self.b.fold(ctx)
        if isinstance(a, Lit) and isinstance(b, Lit):
            return Lit(int(_RT_OPS[self.op](a.value, b.value)))
        return RtBin(self.op, a, b)

    def interval(self, ctx):
        return (-INF, INF)

    def __str__(self):
        return f"{self.op}({self.a}, {self.b})"


# -- affine normal form -------------------------------------------------

def _atom_key(e: IntExpr):
    if isinstance(e, Idx):
        return (0, e.dim, "")
    if isinstance(e, Param):
        return (1, 0, e.name)
    return (2, 0, str(e))


def linear_form(e: IntExpr):
    """``(coeffs, const)`` with ``e == sum(c * atom) + const``.

    Atoms are index variables, parameters and any non-additive subtree.
    Returns ``None`` only for ``None`` input; every tree has a linear form
    over its opaque atoms.
    """
    coeffs: dict[IntExpr, int] = {}
    const = 0

    def walk(node, scale):
        nonlocal const
        if isinstance(node, Lit):
            const += scale * node.value
        elif isinstance(node, Add):
            walk(node.a, scale)
            walk(node.b, scale)
        elif isinstance(node, MulLit):
            walk(node.a, scale * node.k)
        else:
            coeffs[node] = coeffs.get(node, 0) + scale

    if e is None:
        return None
    walk(e, 1)
    return {k: c for k, c in coeffs.items() if c != 0}, const


def affine_in_index(e: IntExpr):
    """``({dim: coeff}, const)`` if ``e`` is affine in index variables only."""
    coeffs, const = linear_form(e)
    out = {}
    for atom, c in coeffs.items():
        if not isinstance(atom, Idx):
            return None
        out[atom.dim] = c
    return out, const


def _rebuild(coeffs, const) -> IntExpr:
    expr = None
    for atom in sorted(coeffs, key=_atom_key):
        c = coeffs[atom]
        term = atom if c == 1 else MulLit(atom, c)
        expr = term if expr is None else Add(expr, term)
    if expr is None:
        return Lit(const)
    return Add(expr, Lit(const)) if const else expr


def _canonical(e: IntExpr) -> IntExpr:
    coeffs, const = linear_form(e)
    return _rebuild(coeffs, const)


# ---------------------------------------------------------------- booleans

class BoolExpr:
    __slots__ = ()

    def __and__(self, o):
        return And((self, o))

    def __or__(self, o):
        return Or((self, o))

    def __invert__(self):
        return Not(self)

    def int_leaves(self):
        return ()

    @property
    def resolvable(self):
        return all(_int_resolvable(e) for e in self.int_leaves()) and all(
            c.resolvable for c in self.bool_children()
        )

    def bool_children(self):
        return ()


def _int_resolvable(e: IntExpr) -> bool:
    return e.resolvable


@dataclass(frozen=True)
class BoolLit(BoolExpr):
    value: bool

    def ev(self, b):
        return self.value

    def fold(self, ctx):
        return self

    def __str__(self):
        return "true" if self.value else "false"


TRUE, FALSE = BoolLit(True), BoolLit(False)


@dataclass(frozen=True)
class Lt(BoolExpr):
    a: IntExpr
    b: IntExpr

    def int_leaves(self):
        return (self.a, self.b)

    def ev(self, b):
        return self.a.ev(b) < self.b.ev(b)

    def fold(self, ctx):
        a, b = self.a.fold(ctx), self.b.fold(ctx)
        lo, hi = _canonical(Add(a, MulLit(b, -1))).interval(ctx)
        if hi < 0:
            return TRUE
        if lo >= 0:
            return FALSE
        return Lt(a, b)

    def __str__(self):
        return f"({self.a} < {self.b})"


@dataclass(frozen=True)
class Eq(BoolExpr):
    a: IntExpr
    b: IntExpr

    def int_leaves(self):
        return (self.a, self.b)

    def ev(self, b):
        return self.a.ev(b) == self.b.ev(b)

    def fold(self, ctx):
        a, b = self.a.fold(ctx), self.b.fold(ctx)
        lo, hi = _canonical(Add(a, MulLit(b, -1))).interval(ctx)
        if lo == hi == 0:
            return TRUE
        if lo > 0 or hi < 0:
            return FALSE
        return Eq(a, b)

    def __str__(self):
        return f"({self.a} = {self.b})"


@dataclass(frozen=True)
class And(BoolExpr):
    args: tuple[BoolExpr, ...]

    def __init__(self, args):
        object.__setattr__(self, "args", tuple(args))

    def bool_children(self):
        return self.args

    def ev(self, b):
        out = True
        for a in self.args:
            out = np.logical_and(out, a.ev(b))
        return out

    def fold(self, ctx):
        out = []
        for a in self.args:
            f = a.fold(ctx)
            if f == FALSE:
                return FALSE
            if f == TRUE:
                continue
            out.extend(f.args if isinstance(f, And) else [f])
        if not out:
            return TRUE
        return out[0] if len(out) == 1 else And(out)

    def __str__(self):
        return "(" + " and ".join(map(str, self.args)) + ")"


@dataclass(frozen=True)
class Or(BoolExpr):
    args: tuple[BoolExpr, ...]

    def __init__(self, args):
        object.__setattr__(self, "args", tuple(args))

    def bool_children(self):
        return self.args

    def ev(self, b):
        out = False
        for a in self.args:
            out = np.logical_or(out, a.ev(b))
        return out

    def fold(self, ctx):
        out = []
        for a in self.args:
            f = a.fold(ctx)
            if f == TRUE:
                return TRUE
            if f == FALSE:
                continue
            out.extend(f.args if isinstance(f, Or) else [f])
        if not out:
            return FALSE
        return out[0] if len(out) == 1 else Or(out)

    def __str__(self):
        return "(" + " or ".join(map(str, self.args)) + ")"


@dataclass(frozen=True)
class Not(BoolExpr):
    arg: BoolExpr

    def bool_children(self):
        return (self.arg,)

    def ev(self, b):
        return np.logical_not(self.arg.ev(b))

    def fold(self, ctx):
        a = self.arg.fold(ctx)
        if isinstance(a, BoolLit):
            return BoolLit(not a.value)
        if isinstance(a, Not):
            return a.arg
        return Not(a)

    def __str__(self):
        return f"not {self.arg}"


@dataclass(frozen=True)
class InArea(BoolExpr):
    """Membership of the current index vector in a strided box."""

    region: Region

    def ev(self, b):
        out = True
        for d, (s, e, t) in enumerate(self.region.dims):
            i = b.idx(d)
            cond = (i >= s) & (i < e)
            if t != 1:
                cond = cond & ((i - s) % t == 0)
            out = np.logical_and(out, cond)
        return out

    def fold(self, ctx):
        if self.region.is_empty():
            return FALSE
        if ctx.box is not None:
            if ctx.box.issubset(self.region):
                return TRUE
            if (ctx.box & self.region).is_empty():
                return FALSE
        return self

    def expand(self) -> BoolExpr:
        """Equivalent conjunction of ``Lt``/``Eq`` tests."""
        parts = []
        for d, (s, e, t) in enumerate(self.region.dims):
            i = Idx(d)
            parts += [Not(Lt(i, Lit(s))), Lt(i, Lit(e))]
            if t != 1:
                parts.append(Eq(ModLit(Add(i, Lit(-s)), t), Lit(0)))
        return And(parts)

    def __str__(self):
        return f"in{self.region}"


def conj(*ps: BoolExpr) -> BoolExpr:
    return And(ps) if len(ps) != 1 else ps[0]


def disj(*ps: BoolExpr) -> BoolExpr:
    return Or(ps) if len(ps) != 1 else ps[0]


def in_area(region: Region) -> InArea:
    return InArea(region)


# ---------------------------------------------------------------- weights

class WeightExpr:
    __slots__ = ()

    def _bin(self, op, o, swap=False):
        o = _wlit(o)
        return FBin(op, o, self) if swap else FBin(op, self, o)

    def __add__(self, o):
        return self._bin("add", o)

    def __radd__(self, o):
        return self._bin("add", o, True)

    def __sub__(self, o):
        return self._bin("sub", o)

    def __rsub__(self, o):
        return self._bin("sub", o, True)

    def __mul__(self, o):
        return self._bin("mul", o)

    def __rmul__(self, o):
        return self._bin("mul", o, True)

    def __truediv__(self, o):
        return self._bin("div", o)

    def int_leaves(self):
        return ()

    @property
    def resolvable(self):
        return False


def _wlit(v) -> "WeightExpr":
    if isinstance(v, WeightExpr):
        return v
    if isinstance(v, IntExpr):
        return FromInt(v)
    return FLit(float(v))


@dataclass(frozen=True)
class FLit(WeightExpr):
    value: float

    def ev(self, b):
        return self.value

    def fold(self, ctx):
        return self

    def __str__(self):
        return repr(float(self.value))


@dataclass(frozen=True)
class FromInt(WeightExpr):
    """An integer expression used as a float64 value."""

    arg: IntExpr

    def int_leaves(self):
        return (self.arg,)

    def ev(self, b):
        v = self.arg.ev(b)
        return np.asarray(v, dtype=np.float64) if np.ndim(v) else float(v)

    def fold(self, ctx):
        a = self.arg.fold(ctx)
        return FLit(float(a.value)) if isinstance(a, Lit) else FromInt(a)

    def __str__(self):
        return f"float({self.arg})"


@dataclass(frozen=True)
class FLoad(WeightExpr):
    array: str
    addr: IntExpr

    def int_leaves(self):
        return (self.addr,)

    def ev(self, b):
        return b.array(self.array)[self.addr.ev(b)]

    def fold(self, ctx):
        return FLoad(self.array, self.addr.fold(ctx))

    def __str__(self):
        return f"load({self.array}, {self.addr})"


_F_OPS = {
    "add": (lambda a, b: a + b, "+"),
    "sub": (lambda a, b: a - b, "-"),
    "mul": (lambda a, b: a * b, "*"),
    "div": (lambda a, b: a / b, "/"),
}


@dataclass(frozen=True)
class FBin(WeightExpr):
    op: str
    a: WeightExpr
    b: WeightExpr

    def __post_init__(self):
        if self.op not in _F_OPS:
            raise UsageError(f"unknown weight operator {self.op!r}")

    def int_leaves(self):
        return self.a.int_leaves() + self.b.int_leaves()

    def ev(self, b):
        return _F_OPS[self.op][0](self.a.ev(b), self.b.ev(b))

    def fold(self, ctx):
        a, b = self.a.fold(ctx), self.b.fold(ctx)
        if isinstance(a, FLit) and isinstance(b, FLit):
            return FLit(float(_F_OPS[self.op][0](a.value, b.value)))
        if self.op in ("add", "sub") and b == FLit(0.0):
            return a
        if self.op in ("mul", "div") and b == FLit(1.0):
            return a
        if self.op == "add" and a == FLit(0.0):
            return b
        if self.op == "mul" and a == FLit(1.0):
            return b
        return FBin(self.op, a, b)

    def __str__(self):
        return f"({self.a} {_F_OPS[self.op][1]} {self.b})"


# ---------------------------------------------------------------- API

def _scalar(v):
    if np.ndim(v) == 0:
        return v.item() if isinstance(v, np.generic) else v
    return v


def eval_int(e: IntExpr, b: Binding):
    return _scalar(e.ev(b))


def eval_bool(e: BoolExpr, b: Binding):
    v = e.ev(b)
    return bool(v) if np.ndim(v) == 0 else np.asarray(v, dtype=bool)


def eval_weight(e: WeightExpr, b: Binding):
    v = e.ev(b)
    return float(v) if np.ndim(v) == 0 else np.asarray(v, dtype=np.float64)


def fold(e, ctx: FoldContext | None = None):
    """Collapse literal-only subtrees and apply range facts from ``ctx``."""
    return e.fold(ctx or FoldContext())


def is_resolvable(e) -> bool:
    return bool(e.resolvable)


def interval(e: IntExpr, ctx: FoldContext | None = None):
    return e.interval(ctx or FoldContext())


def index_vars(e) -> set[int]:
    """Index dimensions referenced anywhere in ``e``."""
    out: set[int] = set()

    def walk(node):
        if isinstance(node, Idx):
            out.add(node.dim)
        elif isinstance(node, InArea):
            out.update(range(node.region.ndim))
        if isinstance(node, IntExpr):
            for c in node.children():
                walk(c)
        elif isinstance(node, (BoolExpr, WeightExpr)):
            for c in node.int_leaves():
                walk(c)
            if isinstance(node, BoolExpr):
                for c in node.bool_children():
                    walk(c)
            elif isinstance(node, FBin):
                walk(node.a)
                walk(node.b)

    walk(e)
    return out


def params_of(e) -> set[str]:
    out: set[str] = set()

    def walk(node):
        if isinstance(node, Param):
            out.add(node.name)
        if isinstance(node, IntExpr):
            for c in node.children():
                walk(c)
        elif isinstance(node, BoolExpr):
            for c in node.int_leaves():
                walk(c)
            for c in node.bool_children():
                walk(c)
        elif isinstance(node, WeightExpr):
            for c in node.int_leaves():
                walk(c)
            if isinstance(node, FBin):
                walk(node.a)
                walk(node.b)

    walk(e)
    return out


def reads_arrays(e) -> bool:
    """True if ``e`` loads from runtime storage anywhere."""
    if isinstance(e, (Load, FLoad)):
        return True
    if isinstance(e, IntExpr):
        return any(reads_arrays(c) for c in e.children())
    if isinstance(e, FBin):
        return reads_arrays(e.a) or reads_arrays(e.b)
    if isinstance(e, (BoolExpr, WeightExpr)):
        kids = list(e.int_leaves())
        if isinstance(e, BoolExpr):
            kids += list(e.bool_children())
        return any(reads_arrays(c) for c in kids)
    return False


def dump(e) -> str:
    """Stable single-line text form used by golden files."""
    return str(e)


# -- text syntax --------------------------------------------------------
#
# Configuration files write expressions in Python syntax: ``9 - i2``,
# ``max(i0, 3)``, ``(i1 + 2) % 5``.  Names ``i<d>`` are index variables,
# other names are parameters.

def _name(node: ast.Name):
    n = node.id
    if n[0] == "i" and n[1:].isdigit():
        return Idx(int(n[1:]))
    return Param(n)


def _int_literal(node) -> int:
    if isinstance(node, ast.Constant) and isinstance(node.value, int):
        return node.value
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return -_int_literal(node.operand)
    raise UsageError(f"expected an integer literal, got {ast.unparse(node)!r}")


def _to_int(node) -> IntExpr:
    if isinstance(node, ast.Constant) and isinstance(node.value, int) and not isinstance(node.value, bool):
        return Lit(node.value)
    if isinstance(node, ast.Name):
        return _name(node)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return MulLit(_to_int(node.operand), -1)
    if isinstance(node, ast.BinOp):
        op = node.op
        if isinstance(op, ast.Add):
            return Add(_to_int(node.left), _to_int(node.right))
        if isinstance(op, ast.Sub):
            return Add(_to_int(node.left), MulLit(_to_int(node.right), -1))
        if isinstance(op, ast.Mult):
            try:
                return MulLit(_to_int(node.left), _int_literal(node.right))
            except UsageError:
                return MulLit(_to_int(node.right), _int_literal(node.left))
        if isinstance(op, ast.FloorDiv):
            return DivLit(_to_int(node.left), _int_literal(node.right))
        if isinstance(op, ast.Mod):
            return ModLit(_to_int(node.left), _int_literal(node.right))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and len(node.args) == 2:
        cls = {"max": Max, "min": Min}.get(node.func.id)
        if cls:
            return cls(_to_int(node.args[0]), _to_int(node.args[1]))
    raise UsageError(f"unsupported integer expression {ast.unparse(node)!r}")


def _to_weight(node) -> WeightExpr:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return FLit(float(node.value))
    if isinstance(node, ast.Name):
        return FromInt(_name(node))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return FBin("sub", FLit(0.0), _to_weight(node.operand))
    if isinstance(node, ast.BinOp):
        ops = {ast.Add: "add", ast.Sub: "sub", ast.Mult: "mul", ast.Div: "div"}
        op = ops.get(type(node.op))
        if op:
            return FBin(op, _to_weight(node.left), _to_weight(node.right))
        return FromInt(_to_int(node))
    if isinstance(node, ast.Call):
        return FromInt(_to_int(node))
    raise UsageError(f"unsupported weight expression {ast.unparse(node)!r}")


def parse_int(text: str | int) -> IntExpr:
    if isinstance(text, int):
        return Lit(text)
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise UsageError(f"cannot parse {text!r}: {exc.msg}") from None
    return _to_int(tree.body)


def parse_weight(text: str | float) -> WeightExpr:
    if isinstance(text, (int, float)):
        return FLit(float(text))
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise UsageError(f"cannot parse {text!r}: {exc.msg}") from None
    return _to_weight(tree.body)
