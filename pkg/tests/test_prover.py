from ghostop.expr import And, Idx, InArea, Lit, Lt, Not, Or
from ghostop.prover import Prover, Verdict, entails, prove_false
from ghostop.region import Region

FULL = Region.box((1, 2, 1), (-1, 6, 1), (-1, 6, 1))
DATA = Region.box((1, 2, 1), (0, 5, 1), (0, 5, 1))
RIGHT = Region.box((1, 2, 1), (0, 5, 1), (5, 6, 1))
LEFT = Region.box((1, 2, 1), (0, 5, 1), (-1, 0, 1))


def test_contradiction():
    p = Lt(Idx(0), Lit(0))
    assert prove_false(And([p, Not(p)]), FULL) is Verdict.PROVED_FALSE


def test_disjoint_areas():
    assert prove_false(And([InArea(RIGHT), InArea(LEFT)]), FULL) is Verdict.PROVED_FALSE
    assert prove_false(And([InArea(FULL), Not(InArea(DATA))]), FULL) is Verdict.NOT_PROVED_FALSE


def test_entails():
    assert entails(InArea(RIGHT), InArea(FULL), FULL)
    assert entails(InArea(LEFT), InArea(LEFT), FULL)
    assert not entails(InArea(FULL), InArea(DATA), FULL)


def test_verdict_matches_enumeration():
    pr = Prover(FULL)
    preds = [InArea(LEFT), InArea(RIGHT), Not(InArea(DATA)), Lt(Idx(1) + Idx(2), Lit(0)),
             Or([InArea(LEFT), Lt(Lit(3), Idx(2))])]
    for a in preds:
        for b in preds:
            p = And([a, b])
            truth = bool(pr.mask(p).any())
            assert (pr.prove_false(p) is Verdict.PROVED_FALSE) == (not truth)
