import numpy as np
import pytest
from scipy import stats

from sketchals.rng import make_rng
from sketchals.sketching import (
    CompositeSketchOp,
    CountSketchOp,
    TensorSketchOp,
    composite_apply,
    lev_apply,
    lev_apply_krp,
    lev_build,
    ts_apply_kron,
    ts_apply_rhs,
)
from sketchals.linalg import leverage_scores

rng = np.random.default_rng(31)


def orthonormal(s, r, gen):
    return np.linalg.qr(gen.standard_normal((s, r)))[0]


# --- CountSketch ---------------------------------------------------------------


def test_countsketch_well_formed_and_norm_preserving_in_expectation():
    x = rng.standard_normal((30, 1))
    ratios = []
    for seed in range(300):
        op = CountSketchOp.build(30, 16, make_rng(seed))
        assert op.hash.shape == (30,) and set(np.unique(op.signs)) <= {-1, 1}
        assert np.all((0 <= op.hash) & (op.hash < 16))
        sx = op.apply(x)
        ratios.append(np.sum(sx**2) / np.sum(x**2))
    assert 0.9 <= np.mean(ratios) <= 1.1


# --- TensorSketch structure ------------------------------------------------------


def test_tensorsketch_composed_hash_and_sign_exhaustive():
    op = TensorSketchOp.build((3, 4, 2), 5, make_rng(7))
    flat = np.arange(24)
    multi = np.unravel_index(flat, (3, 4, 2))
    h = op.combined_hash(multi)
    s = op.combined_sign(multi)
    for i, (i1, i2, i3) in enumerate(zip(*multi)):
        expected_h = (
            op.modes[0].hash[i1] + op.modes[1].hash[i2] + op.modes[2].hash[i3]
        ) % 5
        expected_s = (
            op.modes[0].signs[i1] * op.modes[1].signs[i2] * op.modes[2].signs[i3]
        )
        assert h[i] == expected_h
        assert s[i] == expected_s


def test_tensorsketch_single_mode_is_countsketch():
    op = TensorSketchOp.build((9,), 4, make_rng(3))
    a = rng.standard_normal((9, 3))
    assert np.allclose(ts_apply_kron(op, [a]), op.modes[0].apply(a))


def test_ts_apply_kron_materialized_oracle_small():
    # s=2, R=1, two modes, m=4, fixed seed: exact agreement with S @ kron
    op = TensorSketchOp.build((2, 2), 4, make_rng(11))
    a = np.array([[1.0], [2.0]])
    b = np.array([[3.0], [-1.0]])
    expected = op.materialize() @ np.kron(a, b)
    got = ts_apply_kron(op, [a, b])
    assert np.allclose(got, expected, atol=1e-12)


@pytest.mark.parametrize("m", [3, 8, 16])
def test_ts_apply_kron_materialized_oracle_sweep(m):
    for seed in range(10):
        op = TensorSketchOp.build((4, 4), m, make_rng(100 + seed))
        factors = [rng.standard_normal((4, 2)) for _ in range(2)]
        expected = op.materialize() @ np.kron(factors[0], factors[1])
        assert np.allclose(ts_apply_kron(op, factors), expected, atol=1e-8)


def test_ts_apply_kron_fft_and_direct_agree():
    op = TensorSketchOp.build((5, 3, 4), 12, make_rng(13))
    factors = [rng.standard_normal((s, 2)) for s in (5, 3, 4)]
    fft = ts_apply_kron(op, factors, method="fft")
    direct = ts_apply_kron(op, factors, method="direct")
    assert np.allclose(fft, direct, atol=1e-10)


def test_ts_apply_kron_zero_factor():
    op = TensorSketchOp.build((3, 3), 8, make_rng(17))
    out = ts_apply_kron(op, [np.zeros((3, 2)), rng.standard_normal((3, 2))])
    assert np.allclose(out, 0.0, atol=1e-14)


def test_ts_apply_kron_extent_mismatch():
    op = TensorSketchOp.build((3, 3), 8, make_rng(19))
    with pytest.raises(ValueError):
        ts_apply_kron(op, [np.zeros((4, 2)), np.zeros((3, 2))])


# --- TensorSketch right-hand side -------------------------------------------------


def test_ts_apply_rhs_single_nonzero_definition():
    import scipy.sparse as sp

    op = TensorSketchOp.build((3, 4), 6, make_rng(23))
    row, val = 7, 2.5  # multi-index (1, 3)
    b = sp.coo_matrix(([val], ([row], [0])), shape=(12, 1))
    out = ts_apply_rhs(op, b)
    multi = np.unravel_index(np.array([row]), (3, 4))
    h = op.combined_hash(multi)[0]
    s = op.combined_sign(multi)[0]
    expected = np.zeros((6, 1))
    expected[h, 0] = s * val
    assert np.array_equal(out, expected)


def test_ts_apply_rhs_dense_matches_materialized():
    op = TensorSketchOp.build((3, 4), 7, make_rng(29))
    b = rng.standard_normal((12, 5))
    assert np.allclose(ts_apply_rhs(op, b), op.materialize() @ b, atol=1e-10)
    # chunked path agrees too
    assert np.allclose(ts_apply_rhs(op, b, chunk=5), op.materialize() @ b, atol=1e-10)


def test_ts_apply_rhs_empty_sparse():
    import scipy.sparse as sp

    op = TensorSketchOp.build((3, 4), 6, make_rng(31))
    b = sp.coo_matrix((12, 3))
    assert np.array_equal(ts_apply_rhs(op, b), np.zeros((6, 3)))


def test_ts_unbiasedness_over_seeds():
    gen = np.random.default_rng(37)
    x = gen.standard_normal((25, 1))
    ratios = []
    for seed in range(500):
        op = TensorSketchOp.build((5, 5), 64, make_rng(seed))
        sx = ts_apply_rhs(op, x)
        ratios.append(float(np.sum(sx**2) / np.sum(x**2)))
    assert 0.9 <= np.mean(ratios) <= 1.1


# --- leverage-score samplers ---------------------------------------------------


def test_lev_build_uniform_scores_chi_squared():
    # rows of this orthonormal pair all have identical leverage scores
    a = np.array([[1.0, 1], [1, -1], [1, 1], [1, -1]]) / 2.0
    sampler = lev_build([a, a], 10_000, "random", make_rng(0))
    counts = np.bincount(sampler.flat_indices(), minlength=16)
    stat = ((counts - 625.0) ** 2 / 625.0).sum()
    assert stats.chi2.sf(stat, 15) > 0.01


def test_lev_build_degenerate_mode_is_constant():
    concentrated = np.zeros((5, 1))
    concentrated[2, 0] = 1.0
    other = orthonormal(5, 2, np.random.default_rng(1))
    sampler = lev_build([concentrated, other], 50, "random", make_rng(2))
    assert np.all(sampler.indices[:, 0] == 2)


def test_lev_build_deterministic_brute_force_top3():
    gen = np.random.default_rng(3)
    factors = [gen.standard_normal((4, 2)) for _ in range(2)]
    scores = [leverage_scores(f).scores for f in factors]
    products = [
        (scores[0][i] * scores[1][j], (i, j)) for i in range(4) for j in range(4)
    ]
    products.sort(key=lambda t: (-t[0], t[1]))
    expected = [idx for _, idx in products[:3]]
    sampler = lev_build(factors, 3, "deterministic", make_rng(0))
    assert [tuple(row) for row in sampler.indices] == expected
    assert np.array_equal(sampler.weights, np.ones(3))


def test_lev_build_random_weights_formula():
    gen = np.random.default_rng(5)
    factors = [orthonormal(6, 2, gen) for _ in range(2)]
    sampler = lev_build(factors, 40, "random", make_rng(9))
    probs = [leverage_scores(f).scores / 2.0 for f in factors]
    for j in range(40):
        p = probs[0][sampler.indices[j, 0]] * probs[1][sampler.indices[j, 1]]
        assert sampler.weights[j] == pytest.approx(1.0 / np.sqrt(40 * p), rel=1e-10)


def test_lev_build_errors():
    gen = np.random.default_rng(6)
    factors = [orthonormal(4, 2, gen) for _ in range(2)]
    with pytest.raises(ValueError):
        lev_build(factors, 0, "random", make_rng(0))
    with pytest.raises(ValueError):
        lev_build(factors, 17, "deterministic", make_rng(0))  # only 16 rows exist


def test_lev_apply_full_deterministic_sampling_is_permutation():
    gen = np.random.default_rng(7)
    factors = [orthonormal(4, 2, gen) for _ in range(2)]
    bt = gen.standard_normal((16, 3))
    sampler = lev_build(factors, 16, "deterministic", make_rng(0))
    z, y = lev_apply(sampler, factors, bt)
    p = np.kron(factors[0], factors[1])
    flat = sampler.flat_indices()
    assert sorted(flat) == list(range(16))
    assert np.allclose(z, p[flat], atol=1e-12)
    assert np.allclose(y, bt[flat], atol=1e-12)


def test_lev_apply_single_sample_kron_row():
    gen = np.random.default_rng(8)
    factors = [orthonormal(5, 2, gen) for _ in range(2)]
    sampler = lev_build(factors, 1, "random", make_rng(4))
    bt = gen.standard_normal((25, 2))
    z, y = lev_apply(sampler, factors, bt)
    i, j = sampler.indices[0]
    w = sampler.weights[0]
    assert np.allclose(z[0], w * np.kron(factors[0][i], factors[1][j]), atol=1e-12)
    assert np.allclose(y[0], w * bt[i * 5 + j], atol=1e-12)


def test_lev_apply_sparse_rhs_rows():
    import scipy.sparse as sp

    gen = np.random.default_rng(9)
    factors = [orthonormal(4, 2, gen) for _ in range(2)]
    dense = gen.standard_normal((16, 3)) * (gen.uniform(size=(16, 3)) < 0.4)
    bt = sp.csr_matrix(dense)
    sampler = lev_build(factors, 8, "random", make_rng(5))
    _, y_sparse = lev_apply(sampler, factors, bt)
    _, y_dense = lev_apply(sampler, factors, dense)
    assert np.allclose(y_sparse, y_dense, atol=1e-12)


def test_lev_apply_krp_hadamard_rows():
    gen = np.random.default_rng(10)
    factors = [orthonormal(5, 2, gen) for _ in range(2)]
    sampler = lev_build(factors, 6, "random", make_rng(6))
    bt = gen.standard_normal((25, 3))
    z, _ = lev_apply_krp(sampler, factors, bt)
    for j in range(6):
        i1, i2 = sampler.indices[j]
        expected = sampler.weights[j] * factors[0][i1] * factors[1][i2]
        assert np.allclose(z[j], expected, atol=1e-12)


def test_lev_normal_equations_trend():
    gen = np.random.default_rng(42)
    factors = [orthonormal(10, 2, gen) for _ in range(2)]
    p = np.kron(factors[0], factors[1])
    bt = gen.standard_normal((100, 6))
    gram = p.T @ p
    errs = []
    for m in (8, 32, 128):
        tot = 0.0
        for seed in range(20):
            s = lev_build(factors, m, "random", make_rng(31 * m + seed))
            z, _ = lev_apply(s, factors, bt)
            tot += np.linalg.norm(z.T @ z - gram) / np.linalg.norm(gram)
        errs.append(tot / 20)
    assert errs[0] >= errs[1] >= errs[2]


def test_lev_sampler_expectation_of_sts_is_identity():
    gen = np.random.default_rng(2)
    factors = [orthonormal(8, 5, gen) for _ in range(2)]
    diag = np.zeros(64)
    for seed in range(200):
        s = lev_build(factors, 256, "random", make_rng(seed))
        np.add.at(diag, s.flat_indices(), s.weights**2)
    diag /= 200
    assert np.abs(diag - 1.0).max() <= 0.15


def test_kronecker_leverage_factorization():
    # product of per-mode scores equals the scores of the materialized chain
    for seed in range(20):
        gen = np.random.default_rng(600 + seed)
        factors = [orthonormal(6, 2, gen) for _ in range(2)]
        per_mode = [leverage_scores(f).scores for f in factors]
        product = np.kron(per_mode[0], per_mode[1])
        direct = leverage_scores(np.kron(factors[0], factors[1])).scores
        assert np.allclose(product, direct, atol=1e-10)


def test_sketched_unconstrained_ls_residual_trend_both_sketches():
    gen = np.random.default_rng(77)
    factors = [orthonormal(10, 2, gen) for _ in range(2)]
    p = np.kron(factors[0], factors[1])
    x_true = gen.standard_normal((4, 6))
    signal = p @ x_true
    b = signal + 0.3 * np.linalg.norm(signal) / np.sqrt(600) * gen.standard_normal((100, 6))
    res_exact = np.linalg.norm(p @ np.linalg.lstsq(p, b, rcond=None)[0] - b)
    for kind in ("lev", "ts"):
        errs = []
        for m in (8, 32, 128):
            tot = 0.0
            for seed in range(20):
                if kind == "lev":
                    s = lev_build(factors, m, "random", make_rng(7000 + 31 * m + seed))
                    z, y = lev_apply(s, factors, b)
                else:
                    op = TensorSketchOp.build((10, 10), m, make_rng(9000 + 31 * m + seed))
                    z = ts_apply_kron(op, factors)
                    y = ts_apply_rhs(op, b)
                x = np.linalg.lstsq(z, y, rcond=None)[0]
                tot += np.linalg.norm(p @ x - b) / res_exact - 1.0
            errs.append(tot / 20)
        assert errs[0] >= errs[1] >= errs[2], (kind, errs)


# --- composite sketch ------------------------------------------------------------


def test_composite_zero_matrix():
    op = CompositeSketchOp.build(20, 4, 8, make_rng(1))
    assert np.array_equal(composite_apply(np.zeros((5, 20)), op), np.zeros((5, 4)))


def test_composite_identity_stage_reduces_to_gaussian():
    op = CompositeSketchOp.build(6, 3, 6, make_rng(2))
    op.stage.hash = np.arange(6)
    op.stage.signs = np.ones(6, dtype=np.int64)
    m = rng.standard_normal((4, 6))
    assert np.allclose(composite_apply(m, op), m @ op.gauss, atol=1e-12)


def test_composite_matches_materialized_oracle():
    op = CompositeSketchOp.build(10, 3, 7, make_rng(3))
    t_mat = np.zeros((10, 7))
    t_mat[np.arange(10), op.stage.hash] = op.stage.signs
    m = rng.standard_normal((5, 10))
    expected = m @ t_mat @ op.gauss
    assert np.allclose(composite_apply(m, op), expected, atol=1e-10)
    import scipy.sparse as sp

    m_sp = sp.csr_matrix(m * (np.abs(m) > 0.5))
    expected_sp = m_sp.toarray() @ t_mat @ op.gauss
    assert np.allclose(composite_apply(m_sp, op), expected_sp, atol=1e-10)


def test_composite_width_invariant():
    with pytest.raises(ValueError):
        CompositeSketchOp.build(10, 5, 3, make_rng(0))
    op = CompositeSketchOp.build(10, 3, 7, make_rng(1))
    with pytest.raises(ValueError):
        composite_apply(np.zeros((4, 11)), op)
