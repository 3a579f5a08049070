import numpy as np
import pytest

from planahead.errors import ValidationError
from planahead.lexical import SparseVector
from planahead.losses import (
    PrefixWeightSchedule,
    TripletScores,
    margin_mse,
    multi_objective_seq_loss,
    prefix_margin_mse,
    unified_loss,
)
from planahead.rq_codebook import CodebookSet
from planahead.scorer import QueryEncoding, ScorerConfig, prefix_score, seq_score

MIX = ScorerConfig("prefix_mixing", beta=0.5)


def test_margin_mse_examples():
    assert margin_mse(TripletScores(3.0, 1.0, 2.0)) == 0.0
    assert margin_mse(TripletScores(2.0, 1.0, 0.0)) == 1.0
    with pytest.raises(ValidationError):
        TripletScores(float("inf"), 0.0, 0.0)


def test_margin_mse_matches_reference(rng):
    for p, n, m in rng.standard_normal((100, 3)).tolist():
        d = (p - n) - m
        assert margin_mse(TripletScores(p, n, m)) == d * d


def test_prefix_margin_examples():
    assert prefix_margin_mse(2.0, 0.5, 1.0, 1.0) == margin_mse(TripletScores(2.0, 0.5, 1.0))
    assert prefix_margin_mse(0.7, 0.7, 5.0, 0.0) == 0.0
    with pytest.raises(ValidationError):
        prefix_margin_mse(1.0, 0.0, 1.0, 1.5)


def test_schedule_validation():
    assert PrefixWeightSchedule({4: 0.5, 8: 1.0}, 8).lengths == (4, 8)
    with pytest.raises(ValidationError):
        PrefixWeightSchedule({4: 0.5}, 8)
    with pytest.raises(ValidationError):
        PrefixWeightSchedule({8: 0.9}, 8)
    with pytest.raises(ValidationError):
        PrefixWeightSchedule({2: 0.8, 4: 0.5, 8: 1.0}, 8)
    with pytest.raises(ValidationError):
        PrefixWeightSchedule({0: 0.0, 8: 1.0}, 8)


def test_schedule_interpolated():
    s = PrefixWeightSchedule.interpolated([2, 4], 8)
    assert s.weights == {2: 0.25, 4: 0.5, 8: 1.0}


@pytest.fixture
def model(rng):
    cb = CodebookSet(rng.standard_normal((8, 16, 12)))
    q = QueryEncoding(rng.standard_normal(12), SparseVector({}, 1))
    return cb, q


def test_multi_objective_full_only_is_margin_mse(model, rng):
    cb, q = model
    pos, neg = rng.integers(0, 16, size=(2, 8)).tolist()
    got = multi_objective_seq_loss(q, pos, neg, cb, MIX, PrefixWeightSchedule({8: 1.0}, 8), 0.3)
    ts = TripletScores(seq_score(q, pos, cb, MIX), seq_score(q, neg, cb, MIX), 0.3)
    assert got == margin_mse(ts)


def test_multi_objective_identical_ids(model):
    cb, q = model
    ids = [1] * 8
    sched = PrefixWeightSchedule({4: 0.5, 8: 1.0}, 8)
    assert multi_objective_seq_loss(q, ids, ids, cb, MIX, sched, 0.0) == 0.0


def test_multi_objective_unrolled(model, rng):
    cb, q = model
    sched = PrefixWeightSchedule({4: 0.5, 8: 1.0}, 8)
    for _ in range(10):
        pos, neg = rng.integers(0, 16, size=(2, 8)).tolist()
        margin = float(rng.normal())
        d4 = prefix_score(q, pos[:4], cb, MIX) - prefix_score(q, neg[:4], cb, MIX) - 0.5 * margin
        d8 = seq_score(q, pos, cb, MIX) - seq_score(q, neg, cb, MIX) - 1.0 * margin
        assert multi_objective_seq_loss(q, pos, neg, cb, MIX, sched, margin) == d4 * d4 + d8 * d8


def test_multi_objective_rejects_wrong_L(model):
    cb, q = model
    with pytest.raises(ValidationError):
        multi_objective_seq_loss(q, [0] * 8, [0] * 8, cb, MIX, PrefixWeightSchedule({4: 1.0}, 4), 0.0)


def test_unified_examples(rng):
    assert unified_loss(TripletScores(1.0, 1.0, 0.0), 0.0) == 0.0
    assert unified_loss(TripletScores(2.0, 1.0, 0.0), 2.0) == 3.0
    for p, n, m, s in rng.standard_normal((50, 4)).tolist():
        s = abs(s)
        assert unified_loss(TripletScores(p, n, m), s) == ((p - n) - m) ** 2 + s
    with pytest.raises(ValidationError):
        unified_loss(TripletScores(1.0, 1.0, 0.0), float("nan"))
