import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ghostop.expr import (
    And, Binding, DivLit, Eq, FromInt, Idx, InArea, Lit, Load, Lt, Max, ModLit, MulLit, Not, Param,
    dump, eval_bool, eval_int, eval_weight, fold, is_resolvable, parse_int, parse_weight,
)
from ghostop.region import Region


def test_eval_examples():
    assert eval_int(MulLit(Idx(0), 2) + Lit(3), Binding((4,))) == 11
    assert eval_int(Max(Idx(0), Idx(1)), Binding((2, 5))) == 5
    col = [Lit(2), parse_int("9 - i2"), Idx(1)]
    assert tuple(eval_int(c, Binding((1, 0, 5))) for c in col) == (2, 4, 0)


def test_fold_examples():
    assert fold(Lit(2) + Lit(3)) == Lit(5)
    assert fold(MulLit(Lit(1) + Lit(1), 3)) == Lit(6)
    assert fold(Idx(0) + Lit(0)) == Idx(0)


def test_resolvable():
    assert is_resolvable(ModLit(Idx(0), 2))
    assert not is_resolvable(Load("ptr", Idx(0)))
    assert is_resolvable(And([Lt(Idx(0), Lit(5)), Not(Eq(Idx(1), Lit(0)))]))


def test_floor_semantics():
    b = Binding((-3,))
    assert eval_int(DivLit(Idx(0), 2), b) == -2
    assert eval_int(ModLit(Idx(0), 5), b) == 2


def test_weight_promotion():
    w = FromInt(Idx(0)) + FromInt(Idx(1))
    assert eval_weight(w, Binding((1, 2))) == 3.0
    assert eval_weight(Idx(0) + Idx(1) * 0.5, Binding((1, 3))) == 2.5


def test_parse_round_trip():
    for text in ["9 - i2", "(i0 + 1) % 4", "max(i0, i1) // 2", "n - i0"]:
        e = parse_int(text)
        assert parse_int(dump(e)) == e
    assert eval_weight(parse_weight("0.5 * i0 + 1"), Binding((2,))) == 2.0


def test_unbound_param():
    from ghostop.errors import UsageError
    with pytest.raises(UsageError):
        eval_int(Param("n") + 1, Binding((0,)))


def test_vectorized_eval():
    r = Region.box((0, 3, 1), (0, 4, 1))
    b = Binding(r.index_arrays())
    v = eval_bool(InArea(Region.box((1, 2, 1), (0, 4, 1))), b)
    assert int(np.sum(v)) == 4


exprs = st.recursive(
    st.one_of(st.integers(-5, 5).map(Lit), st.integers(0, 1).map(Idx)),
    lambda c: st.one_of(
        st.tuples(c, c).map(lambda p: p[0] + p[1]),
        st.tuples(c, st.integers(-3, 3)).map(lambda p: MulLit(p[0], p[1])),
        st.tuples(c, st.integers(1, 4)).map(lambda p: ModLit(p[0], p[1])),
        st.tuples(c, st.integers(1, 4)).map(lambda p: DivLit(p[0], p[1])),
        st.tuples(c, c).map(lambda p: Max(p[0], p[1])),
    ),
    max_leaves=8,
)


@settings(max_examples=300, deadline=None)
@given(exprs, st.integers(-6, 6), st.integers(-6, 6))
def test_fold_preserves_value(e, i, j):
    b = Binding((i, j))
    assert eval_int(fold(e), b) == eval_int(e, b)
