import numpy as np
import pytest

from planahead.errors import ValidationError
from planahead.lexical import SparseVector
from planahead.rq_codebook import CodebookSet, rq_reconstruct
from planahead.scorer import (
    QueryEncoding,
    ScorerConfig,
    prefix_score,
    prefix_scores_batch,
    seq_score,
    step_hidden,
    step_score,
)

DOT = ScorerConfig("dot_product")
MIX = ScorerConfig("prefix_mixing", beta=0.7)


def make(rng, L=4, V=8, D=6):
    cb = CodebookSet(rng.standard_normal((L, V, D)).astype(np.float32))
    q = QueryEncoding(rng.standard_normal(D), SparseVector({}, 10), "q")
    return cb, q


def reference_seq(q, codes, cb, beta):
    """Scalar re-derivation of the mixing scorer, one step at a time."""
    tables = cb.tables.astype(np.float64)
    total = 0.0
    for i, c in enumerate(codes):
        u = np.zeros(cb.dim)
        for j in range(i):
            u = u + tables[j][codes[j]]
        norm = float(np.sqrt(sum(x * x for x in u)))
        h = q.dense + (beta * u / norm if norm > 0 else 0.0)
        total += sum(float(a) * float(b) for a, b in zip(h, tables[i][c]))
    return total


def test_dot_product_hidden_is_query(rng):
    cb, q = make(rng)
    for prefix in ([], [1], [1, 2, 3]):
        assert np.array_equal(step_hidden(q, prefix, cb, DOT), q.dense)


def test_mixing_empty_prefix_is_query(rng):
    cb, q = make(rng)
    assert np.array_equal(step_hidden(q, [], cb, ScorerConfig("prefix_mixing", 0.5)), q.dense)


def test_mixing_single_prefix(rng):
    cb, q = make(rng)
    e = cb.tables[0][3].astype(np.float64)
    h = step_hidden(q, [3], cb, ScorerConfig("prefix_mixing", 1.0))
    np.testing.assert_allclose(h, q.dense + e / np.linalg.norm(e), rtol=1e-14)


def test_hidden_rejects_full_prefix(rng):
    cb, q = make(rng)
    with pytest.raises(ValidationError):
        step_hidden(q, [0, 0, 0, 0], cb, MIX)


def test_step_score_examples(rng):
    t = np.zeros((1, 3, 4))
    t[0, 0] = [0.6, 0.8, 0.0, 0.0]
    cb = CodebookSet(t)
    e = cb.tables64[0][0]
    assert step_score(e, cb, 1, 0) == pytest.approx(float(e @ e), rel=1e-15)
    assert step_score(np.array([0.0, 0.0, 1.0, 0.0]), cb, 1, 0) == 0.0
    with pytest.raises(ValidationError):
        step_score(e, cb, 2, 0)
    with pytest.raises(ValidationError):
        step_score(e, cb, 1, 3)


def test_step_score_matches_scalar_loop(rng):
    cb, _ = make(rng, D=16)
    h = rng.standard_normal(16)
    ref = 0.0
    for a, b in zip(h, cb.tables64[2][5]):
        ref += a * b
    assert step_score(h, cb, 3, 5) == ref


def test_dot_product_identity(rng):
    cb, q = make(rng, L=6, V=16, D=24)
    for _ in range(50):
        codes = rng.integers(0, 16, size=6).tolist()
        expected = float(q.dense @ rq_reconstruct(codes, cb))
        assert seq_score(q, codes, cb, DOT) == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_zero_query_scores_zero(rng):
    cb, _ = make(rng)
    q = QueryEncoding(np.zeros(cb.dim), SparseVector({}, 1))
    assert seq_score(q, [1, 2, 3, 4], cb, DOT) == 0.0


def test_mixing_matches_unrolled_reference(rng):
    cb, q = make(rng, L=5, V=8, D=10)
    for _ in range(30):
        codes = rng.integers(0, 8, size=5).tolist()
        assert seq_score(q, codes, cb, MIX) == pytest.approx(reference_seq(q, codes, cb, MIX.beta), rel=1e-12)


def test_prefix_score_examples(rng):
    cb, q = make(rng)
    codes = [1, 5, 2, 7]
    assert prefix_score(q, codes, cb, MIX) == seq_score(q, codes, cb, MIX)
    assert prefix_score(q, [6], cb, MIX) == step_score(q.dense, cb, 1, 6)
    with pytest.raises(ValidationError):
        prefix_score(q, [], cb, MIX)
    with pytest.raises(ValidationError):
        prefix_score(q, [8], cb, MIX)


def test_prefix_score_is_additive(rng):
    cb, q = make(rng)
    for cfg in (DOT, MIX):
        for _ in range(20):
            codes = rng.integers(0, 8, size=4).tolist()
            running = 0.0
            for i in range(4):
                running += step_score(step_hidden(q, codes[:i], cb, cfg), cb, i + 1, codes[i])
                assert running == prefix_score(q, codes[: i + 1], cb, cfg)


def test_batch_equals_single(rng):
    cb, q = make(rng)
    batch = rng.integers(0, 8, size=(40, 3))
    scores = prefix_scores_batch(q.dense, batch, cb, MIX)
    for row, s in zip(batch.tolist(), scores.tolist()):
        assert prefix_score(q, row, cb, MIX) == s


def test_seq_score_rejects_bad_ids(rng):
    cb, q = make(rng)
    with pytest.raises(ValidationError):
        seq_score(q, [1, 2, 3], cb, DOT)
    with pytest.raises(ValidationError):
        seq_score(q, [1, 2, 3, -1], cb, DOT)


def test_config_validation():
    with pytest.raises(ValidationError):
        ScorerConfig("transformer")
    with pytest.raises(ValidationError):
        ScorerConfig("prefix_mixing", beta=float("nan"))
    with pytest.raises(ValidationError):
        QueryEncoding(np.array([np.nan]), SparseVector({}, 1))
