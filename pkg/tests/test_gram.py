import numpy as np
import pytest

from trajspec import gram, store


def _power_iteration_eigs(a, n_eigs, iters=300_000, seed=0):
    """Independent oracle: shifted power iteration with deflation."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    shift = np.trace(a)  # keeps the iteration matrix positive definite
    b = a + shift * np.eye(n)
    rng = np.random.default_rng(seed)
    eigs = []
    for _ in range(n_eigs):
        v = rng.normal(size=n)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            w = b @ v
            nw = np.linalg.norm(w)
            if nw == 0:
                break
            v = w / nw
            lam = float(v @ b @ v)
        eigs.append(lam - shift)
        b = b - (lam * np.outer(v, v))
    return np.array(eigs)


def test_dot_matrix_orthonormal_pair():
    d = gram.dot_matrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
    np.testing.assert_allclose(d.values, np.eye(2))


def test_dot_matrix_duplicate_vectors_rank_one():
    d = gram.dot_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    np.testing.assert_allclose(d.values, [[2, 2], [2, 2]])
    spec = gram.eig_sym(gram.window_gram(d, 0, 2))
    np.testing.assert_allclose(spec.eigenvalues, [4, 0], atol=1e-12)


def test_dot_matrix_matches_double_loop_oracle():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(50, 1000))
    d = gram.dot_matrix(x, chunk=256)  # force multiple chunks
    naive = np.empty((50, 50))
    for i in range(50):
        for j in range(50):
            acc = 0.0
            for k in range(1000):
                acc += x[i, k] * x[j, k]
            naive[i, j] = acc
    np.testing.assert_allclose(d.values, naive, rtol=1e-10)


def test_dot_matrix_length_mismatch_fatal():
    with pytest.raises(ValueError):
        gram.dot_matrix([np.ones(3), np.ones(4)])


def test_window_gram_extraction_and_bounds():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(50, 64))
    d = gram.dot_matrix(x)
    g = gram.window_gram(d, 0, 10)
    np.testing.assert_array_equal(g.values, d.values[:10, :10])
    g_last = gram.window_gram(d, 40, 10)
    assert g_last.window_start == 40
    with pytest.raises(ValueError):
        gram.window_gram(d, 41, 10)


def test_eig_sym_diagonal():
    g = gram.GramMatrix(np.diag([4.0, 1.0]), 0, 2)
    spec = gram.eig_sym(g)
    np.testing.assert_allclose(spec.eigenvalues, [4, 1])
    np.testing.assert_allclose(spec.singular_values, [2, 1])


def test_eig_sym_matches_constructed_spectrum():
    rng = np.random.default_rng(3)
    lam = np.sort(rng.uniform(0.1, 10.0, size=12))[::-1]
    q, _ = np.linalg.qr(rng.normal(size=(12, 12)))
    a = (q * lam) @ q.T
    spec = gram.eig_sym(gram.GramMatrix(a, 0, 12))
    np.testing.assert_allclose(spec.eigenvalues, lam, rtol=1e-10)


def test_eig_sym_matches_power_iteration_oracle():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(10, 40))
    a = x @ x.T
    spec = gram.eig_sym(gram.GramMatrix(a, 0, 10))
    oracle = _power_iteration_eigs(a, 10)
    np.testing.assert_allclose(spec.eigenvalues, oracle, rtol=1e-9,
                               atol=1e-9 * np.trace(a))


def test_eig_sym_trace_preserved():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(16, 50))
    a = x @ x.T
    spec = gram.eig_sym(gram.GramMatrix(a, 0, 16))
    assert spec.eigenvalues.sum() == pytest.approx(np.trace(a), rel=1e-8)
    assert np.all(np.diff(spec.eigenvalues) <= 1e-12)


def test_eig_sym_clamps_small_negatives_rejects_large():
    a = np.diag([1.0, -1e-12])
    spec = gram.eig_sym(gram.GramMatrix(a, 0, 2))
    assert spec.eigenvalues[1] == 0.0
    with pytest.raises(ValueError, match="positive semidefinite"):
        gram.eig_sym(gram.GramMatrix(np.diag([1.0, -0.5]), 0, 2))


def test_eig_sym_rejects_asymmetry_and_oversize():
    with pytest.raises(ValueError, match="symmetric"):
        gram.eig_sym(gram.GramMatrix(np.array([[1.0, 5.0], [0.0, 1.0]]),
                                     0, 2))
    big = np.eye(gram.MAX_WINDOW + 1)
    with pytest.raises(ValueError, match="exceeds"):
        gram.eig_sym(gram.GramMatrix(big, 0, big.shape[0]))


def test_gram_covariance_equivalence():
    # nonzero spectrum of X X^T equals that of X^T X (dense LAPACK oracle)
    rng = np.random.default_rng(9)
    x = rng.normal(size=(10, 100))
    d = gram.dot_matrix(x)
    spec = gram.eig_sym(gram.window_gram(d, 0, 10))
    cov_eigs = np.linalg.eigvalsh(x.T @ x)[::-1][:10]
    np.testing.assert_allclose(spec.eigenvalues, cov_eigs, rtol=1e-8)


def test_window_consistency_with_direct_recompute():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(30, 200))
    d = gram.dot_matrix(x)
    for t0 in (0, 7, 20):
        spec = gram.eig_sym(gram.window_gram(d, t0, 10))
        direct = gram.eig_sym(
            gram.GramMatrix(x[t0:t0 + 10] @ x[t0:t0 + 10].T, t0, 10))
        np.testing.assert_allclose(spec.eigenvalues, direct.eigenvalues,
                                   rtol=1e-9, atol=1e-9)


@pytest.fixture()
def small_store(tmp_path):
    rng = np.random.default_rng(21)
    n_steps, sizes = 8, {"a.w": 40, "b.w": 24}
    theta = np.zeros(sum(sizes.values()))
    for i in range(n_steps):
        split = {}
        pos = 0
        for k, sz in sizes.items():
            split[k] = theta[pos:pos + sz]
            pos += sz
        store.write_raw_checkpoint(tmp_path, i * 100, split)
        theta = theta + rng.normal(size=theta.shape)
    return store.build_manifest(tmp_path)


def test_streamed_dot_matrix_matches_in_memory(small_store):
    m = small_store
    deltas = np.stack([d.values for d in store.iter_deltas(m)])
    want = gram.dot_matrix(deltas)
    got = gram.dot_matrix_from_store(m, chunk=16)
    np.testing.assert_allclose(got.values, want.values, rtol=1e-12)
    assert got.source == "full"
    assert got.step_map == [(i * 100, (i + 1) * 100) for i in range(7)]


def test_group_dot_matrix_partition_additivity(small_store):
    m = small_store
    spans = store.group_spans(m, [("a", r"a\."), ("b", r"b\.")])
    full = gram.dot_matrix_from_store(m)
    parts = [gram.group_dot_matrix(m, s, chunk=16) for s in spans]
    assert parts[0].source == "group:a"
    total = parts[0].values + parts[1].values
    np.testing.assert_allclose(total, full.values, rtol=1e-9)


def test_group_dot_matrix_zero_group(small_store, tmp_path):
    m = small_store
    # zero out group b's coordinates in every checkpoint: group dots vanish
    spans = store.group_spans(m, [("b", r"b\.")])
    span_b = spans[0]
    for s in m.steps:
        path = m.root / s.blob_path
        vals = np.fromfile(path, dtype="<f4")
        for off, ln in span_b.ranges:
            vals[off:off + ln] = 0.0
        vals.tofile(path)
        s_new = store.StepEntry(s.step_index, s.blob_path, s.param_count,
                                store._sha256_file(path))
        m.steps[m.steps.index(s)] = s_new
    d = gram.group_dot_matrix(m, span_b, chunk=16)
    np.testing.assert_array_equal(d.values, 0.0)


def test_group_dot_matrix_full_span_equals_full(small_store):
    m = small_store
    span = store.group_spans(m, [("all", r".*")])[0]
    full = gram.dot_matrix_from_store(m)
    grp = gram.group_dot_matrix(m, span, chunk=16)
    np.testing.assert_allclose(grp.values, full.values, rtol=1e-12)


def test_group_dot_matrix_empty_span_error(small_store):
    with pytest.raises(store.StoreError, match="spans no"):
        gram.group_dot_matrix(small_store, store.KeySpan("none", []))


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    x = rng.normal(size=(6, 30))
    d = gram.dot_matrix(x, source="sketched:abc", step_map=[(i, i + 1)
                                                            for i in range(6)])
    gram.save_dot_matrix(d, tmp_path)
    back = gram.load_dot_matrix(tmp_path, "sketched:abc")
    np.testing.assert_array_equal(back.values, d.values)
    assert back.source == d.source
    assert back.step_map == d.step_map


def test_check_dot_matrix_flags_corruption():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(5, 20))
    d = gram.dot_matrix(x)
    gram.check_dot_matrix(d)  # healthy
    d.values[0, 0] = -3.0
    with pytest.raises(ValueError):
        gram.check_dot_matrix(d)
