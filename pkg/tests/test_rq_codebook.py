import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planahead.errors import (
    ArtifactError,
    CapacityError,
    CollisionError,
    InsufficientDataError,
    ValidationError,
)
from planahead.rq_codebook import (
    CodebookSet,
    assign_unique_docids,
    level_errors,
    load_codebooks,
    load_docids,
    load_vectors,
    rq_encode,
    rq_encode_batch,
    rq_reconstruct,
    rq_train,
    save_codebooks,
    save_docids,
    save_vectors,
)


def brute_nearest_codes(vec, cb):
    """Per-level exhaustive scan with plain Python arithmetic."""
    residual = [float(x) for x in vec]
    codes = []
    for table in cb.tables:
        best, best_d = None, None
        for code, row in enumerate(table):
            d = 0.0
            for r, c in zip(residual, row):
                d += (r - float(c)) ** 2
            if best_d is None or d < best_d:
                best, best_d = code, d
        codes.append(best)
        residual = [r - float(c) for r, c in zip(residual, table[best])]
    return tuple(codes)


def clustered(rng, n, d, k=8, spread=0.3):
    centres = rng.standard_normal((k, d)) * 3
    return centres[rng.integers(0, k, n)] + spread * rng.standard_normal((n, d))


def test_train_with_k_equal_n_reproduces_points(rng):
    x = rng.standard_normal((12, 5)).astype(np.float32)
    cb = rq_train(x, L=1, V=12, kmeans_iters=5, seed=0)
    for v in x:
        np.testing.assert_array_equal(rq_reconstruct(rq_encode(v, cb), cb), v.astype(np.float64))
    assert level_errors(x, cb)[0] == 0.0


def test_full_scale_shape_accepted(rng):
    x = rng.standard_normal((2048, 4))
    cb = rq_train(x, L=8, V=2048, kmeans_iters=1, seed=0)
    assert (cb.levels, cb.codebook_size, cb.dim) == (8, 2048, 4)


def test_second_level_reduces_residual(rng):
    x = clustered(rng, 100, 6)
    cb = rq_train(x, L=2, V=4, kmeans_iters=20, seed=3)
    # residual norms measured directly from the trained tables
    r1, r2 = [], []
    for v in x:
        c1 = int(np.argmin(((cb.tables[0] - v) ** 2).sum(axis=1)))
        res = v - cb.tables[0][c1]
        c2 = int(np.argmin(((cb.tables[1] - res) ** 2).sum(axis=1)))
        r1.append((res**2).sum())
        r2.append(((res - cb.tables[1][c2]) ** 2).sum())
    assert np.mean(r2) <= np.mean(r1)


@pytest.mark.parametrize("seed", range(5))
def test_monotone_refinement(rng, seed):
    x = clustered(rng, 300, 8, k=12)
    errs = level_errors(x, rq_train(x, L=4, V=8, kmeans_iters=10, seed=seed))
    assert np.all(np.diff(errs) <= 0)


def test_training_is_deterministic(rng):
    x = clustered(rng, 200, 6)
    a = rq_train(x, 3, 16, 10, seed=7)
    b = rq_train(x, 3, 16, 10, seed=7)
    assert a.tables.tobytes() == b.tables.tobytes()
    np.testing.assert_array_equal(assign_unique_docids(x, a), assign_unique_docids(x, b))


def test_train_errors(rng):
    with pytest.raises(InsufficientDataError):
        rq_train(rng.standard_normal((3, 2)), L=1, V=4)
    bad = rng.standard_normal((10, 2))
    bad[3, 1] = np.nan
    with pytest.raises(ValidationError):
        rq_train(bad, L=1, V=2)


def test_encode_exact_representation():
    t1 = np.zeros((8, 3), np.float32)
    t2 = np.zeros((8, 3), np.float32)
    t1[3] = [4, 0, 0]
    t2[7] = [0, 1, 0]
    cb = CodebookSet(np.stack([t1, t2]))
    assert rq_encode(t1[3] + t2[7], cb) == (3, 7)
    np.testing.assert_array_equal(rq_reconstruct([3, 7], cb), [4, 1, 0])


def test_encode_zero_vector_picks_zero_centroid(rng):
    tables = rng.standard_normal((3, 5, 4)).astype(np.float32) + 5
    tables[:, 0] = 0
    assert rq_encode(np.zeros(4), CodebookSet(tables)) == (0, 0, 0)


def test_encode_tie_breaks_to_lowest_code():
    tables = np.array([[[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]]], dtype=np.float32)
    assert rq_encode([0.0, 0.0], CodebookSet(tables)) == (0,)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_encode_matches_exhaustive_scan(seed):
    rng = np.random.default_rng(seed)
    cb = CodebookSet(rng.standard_normal((3, 6, 4)))
    v = rng.standard_normal(4) * 2
    assert rq_encode(v, cb) == brute_nearest_codes(v, cb)


def test_batch_encode_matches_single(rng):
    x = rng.standard_normal((64, 5))
    cb = CodebookSet(rng.standard_normal((3, 9, 5)))
    batch = rq_encode_batch(x, cb)
    assert [tuple(r) for r in batch.tolist()] == [rq_encode(v, cb) for v in x]


def test_encode_and_reconstruct_validation(rng):
    cb = CodebookSet(rng.standard_normal((2, 4, 3)))
    with pytest.raises(ValidationError):
        rq_encode(np.zeros(5), cb)
    with pytest.raises(ValidationError):
        rq_reconstruct([0, 4], cb)
    with pytest.raises(ValidationError):
        rq_reconstruct([0], cb)
    np.testing.assert_array_equal(rq_reconstruct([1, 2], CodebookSet(np.zeros((2, 4, 3)))), np.zeros(3))


def test_round_trip_error_bounded_by_norm_with_zero_centroids(rng):
    tables = rng.standard_normal((3, 6, 4)).astype(np.float32)
    tables[:, 0] = 0
    cb = CodebookSet(tables)
    for v in rng.standard_normal((50, 4)):
        err = ((rq_reconstruct(rq_encode(v, cb), cb) - v) ** 2).sum()
        assert err <= (v**2).sum()


def test_unique_docids_no_collisions_is_plain_encoding(rng):
    cb = CodebookSet(rng.standard_normal((1, 32, 3)))
    x = cb.tables[0, :20] + 0.01
    codes = rq_encode_batch(x, cb)
    assert codes[:, 0].tolist() == list(range(20))
    np.testing.assert_array_equal(assign_unique_docids(x, cb), codes)


def test_identical_vectors_get_distinct_codes():
    cb = CodebookSet(np.array([[[0.0], [1.0]]]))
    x = np.array([[0.9], [0.9]])
    assert assign_unique_docids(x, cb).tolist() == [[1], [0]]


def test_unique_docids_on_clustered_corpus(rng):
    x = clustered(rng, 1000, 8, k=20, spread=0.05)
    cb = rq_train(x, L=8, V=32, kmeans_iters=10, seed=0)
    plain = rq_encode_batch(x, cb)
    unique = assign_unique_docids(x, cb)
    assert len({tuple(r) for r in unique.tolist()}) == 1000
    err_plain = ((x - np.array([rq_reconstruct(r, cb) for r in plain])) ** 2).sum(axis=1).mean()
    err_unique = ((x - np.array([rq_reconstruct(r, cb) for r in unique])) ** 2).sum(axis=1).mean()
    assert err_unique <= 1.05 * err_plain


def test_capacity_and_collision_errors():
    cb = CodebookSet(np.zeros((1, 2, 1)))
    with pytest.raises(CapacityError):
        assign_unique_docids(np.zeros((3, 1)), cb)
    cb = CodebookSet(np.zeros((2, 2, 1)))
    with pytest.raises(CollisionError):
        # four identical vectors all share the first code; only 2 final codes exist
        assign_unique_docids(np.zeros((4, 1)), cb)


def test_persistence_round_trip(tmp_path, rng):
    cb = CodebookSet(rng.standard_normal((3, 5, 4)))
    save_codebooks(tmp_path / "c.pagc", cb)
    raw = (tmp_path / "c.pagc").read_bytes()
    assert raw[:4] == b"PAGC"
    assert np.frombuffer(raw[4:20], "<u4").tolist() == [1, 3, 5, 4]
    assert len(raw) == 20 + 3 * 5 * 4 * 4
    assert load_codebooks(tmp_path / "c.pagc").tables.tobytes() == cb.tables.tobytes()

    codes = rng.integers(0, 5, (7, 3))
    save_docids(tmp_path / "d.pagi", codes)
    raw = (tmp_path / "d.pagi").read_bytes()
    assert raw[:4] == b"PAGI" and np.frombuffer(raw[4:16], "<u4").tolist() == [1, 7, 3]
    np.testing.assert_array_equal(load_docids(tmp_path / "d.pagi"), codes)

    vecs = rng.standard_normal((4, 3)).astype(np.float32)
    save_vectors(tmp_path / "v.pagv", vecs)
    np.testing.assert_array_equal(load_vectors(tmp_path / "v.pagv"), vecs)


def test_load_rejects_bad_files(tmp_path):
    with pytest.raises(ArtifactError, match="missing"):
        load_codebooks(tmp_path / "nope.pagc")
    (tmp_path / "bad.pagc").write_bytes(b"XXXX" + bytes(16))
    with pytest.raises(ArtifactError, match="magic"):
        load_codebooks(tmp_path / "bad.pagc")
