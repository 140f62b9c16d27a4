import numpy as np
import pytest
from scipy import special, stats

from trajspec import rng


def test_pure_function_of_indices():
    # regenerating any slice must reproduce the same variates
    full = rng.gauss_block(seed=7, row=3, start=0, n=10_000)
    part = rng.gauss_block(seed=7, row=3, start=4096, n=128)
    assert np.array_equal(full[4096:4224], part)
    single = rng.gauss_block(seed=7, row=3, start=9999, n=1)
    assert full[9999] == single[0]


def test_rows_and_seeds_decorrelated():
    a = rng.gauss_block(seed=1, row=0, start=0, n=200_000)
    b = rng.gauss_block(seed=1, row=1, start=0, n=200_000)
    c = rng.gauss_block(seed=2, row=0, start=0, n=200_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.01
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.01


def test_distribution_is_standard_normal():
    x = rng.gauss_block(seed=42, row=0, start=0, n=500_000)
    assert abs(x.mean()) < 0.01
    assert abs(x.std() - 1.0) < 0.01
    # KS on a subsample keeps the test fast and keeps power reasonable
    ks = stats.kstest(x[:100_000], "norm")
    assert ks.pvalue > 1e-3


def test_inverse_cdf_absolute_accuracy():
    # the normal transform must agree with scipy's ndtri to < 1e-9 absolute,
    # including deep tails reachable from a 53-bit uniform
    u = np.concatenate([
        np.linspace(2.0**-54, 1 - 2.0**-53, 20_001),
        10.0 ** np.linspace(-16, -2, 2000),
        1 - 10.0 ** np.linspace(-16, -2, 2000),
    ])
    out = np.empty(1)
    got = np.empty_like(u)
    for i, ui in enumerate(u):
        # drive the scalar path through a crafted counter is impractical;
        # evaluate the same polynomial via the public block on a stubbed
        # uniform instead would re-test the hash. Evaluate directly:
        got[i] = _ppnd_reference(ui)
    expected = special.ndtri(u)
    assert np.max(np.abs(got - expected)) < 1e-9


def _ppnd_reference(u):
    # scalar re-statement of the kernel's PPND16 logic, used to check the
    # coefficients; the kernel itself is checked end to end below
    q = u - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
            + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
            + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
            + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
            + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
            + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
            + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = u if q < 0 else 1.0 - u
    r = np.sqrt(-np.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
            + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
            + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
            + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
            + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
            + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
            + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
            + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
            + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
            + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
            + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
            + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
            + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0 else val


def test_kernel_matches_reference_transform():
    # end-to-end: kernel variates equal hash -> reference PPND16 closely
    # (the kernel's fused central path may differ by strict-IEEE rounding)
    n = 50_000
    x = rng.gauss_block(seed=3, row=5, start=0, n=n)
    key = rng._seed_key(np.uint64(3))
    idx = np.arange(n, dtype=np.uint64) + (np.uint64(5) << np.uint64(40))
    z = key + idx * np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    u = (z >> np.uint64(11)) * 1.1102230246251565e-16 + 5.551115123125783e-17
    want = np.array([_ppnd_reference(ui) for ui in u])
    # fastmath FMA contraction can differ from the strict reference by a few
    # ulp in the far tail; the 1e-9 accuracy contract has orders of headroom
    assert np.max(np.abs(x - want)) < 1e-10


def test_stream_dot_matches_explicit_dot():
    v = np.random.default_rng(0).standard_normal(20_000)
    g = rng.gauss_block(seed=11, row=2, start=0, n=20_000)
    got = rng.stream_dot(seed=11, row=2, values=v)
    assert got == pytest.approx(float(v @ g), rel=1e-12)


@pytest.mark.parametrize("chunks", [[4096, 4096, 4096, 2000],
                                    [8192, 6096],  # ragged tail only
                                    [1024] * 13 + [976],  # sub-block
                                    [100, 5000, 9188],  # arbitrary ragged
                                    [14288]])
def test_accumulator_chunk_invariance_bit_exact(chunks):
    p = 14_288
    v = np.random.default_rng(1).standard_normal(p)
    ref = np.array([rng.stream_dot(seed=9, row=j, values=v) for j in range(3)])
    acc = rng.StreamDotAccumulator(seed=9, rows=3)
    pos = 0
    for c in chunks:
        acc.update(v[pos:pos + c])
        pos += c
    assert pos == p
    got = acc.finalize()
    assert np.array_equal(got, ref)


def test_accumulator_rejects_update_after_finalize():
    acc = rng.StreamDotAccumulator(seed=0, rows=1)
    acc.update(np.ones(100))
    acc.finalize()
    with pytest.raises(RuntimeError):
        acc.update(np.ones(100))


def test_project_rows_matches_stream_dot():
    v = np.random.default_rng(2).standard_normal(9000)
    got = rng.project_rows(seed=5, d=8, values=v)
    want = np.array([rng.stream_dot(seed=5, row=j, values=v) for j in range(8)])
    assert np.array_equal(got, want)


def test_counter_range_guards():
    with pytest.raises(ValueError):
        rng.gauss_block(seed=0, row=rng.MAX_ROW, start=0, n=1)
    with pytest.raises(ValueError):
        rng.gauss_block(seed=0, row=0, start=rng.MAX_INDEX - 1, n=2)
