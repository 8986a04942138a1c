import numpy as np
import pytest

from sketchals.linalg import rsvd_lrls
from sketchals.rng import make_rng
from sketchals.sketching import lev_apply, lev_build
from sketchals.synth import SynthSpec, generate
from sketchals.tensors import TuckerModel, fitness, matricize, matricize_t, ttm, ttmc
from sketchals.tucker import (
    TuckerConfig,
    hooi,
    hosvd_init,
    init_rrf,
    load_tucker,
    ref_tucker_ts,
    save_tucker,
    sketched_tucker_als,
)

rng = np.random.default_rng(555)


def orthonormal(s, r, gen):
    return np.linalg.qr(gen.standard_normal((s, r)))[0]


def tensor1(s, r_true, seed):
    return generate(SynthSpec(family="tucker-dense", s=s, r_true=r_true, seed=seed))


def assert_orthonormal_factors(model, tol=1e-8):
    for a in model.factors:
        assert np.linalg.norm(a.T @ a - np.eye(a.shape[1])) <= tol


# --- hosvd_init -----------------------------------------------------------------


def test_hosvd_init_exact_tensor_one_hooi_sweep():
    t = tensor1(15, 3, seed=0)
    model, trace = hooi(t, TuckerConfig(ranks=(3, 3, 3), max_sweeps=1))
    assert trace.fitness[0] >= 0.999


def test_hosvd_init_superdiagonal_identity_columns():
    t = np.zeros((4, 4, 4))
    for i in range(4):
        t[i, i, i] = 1.0
    factors = hosvd_init(t, (2, 2, 2))
    for a in factors:
        # each column is a standard basis vector
        assert np.allclose(np.abs(a).max(axis=0), 1.0)
        assert np.allclose(np.abs(a).sum(axis=0), 1.0)


def test_hosvd_init_orthonormal_on_random_and_sparse():
    t = rng.standard_normal((8, 7, 6))
    for a in hosvd_init(t, (3, 3, 3)):
        assert np.linalg.norm(a.T @ a - np.eye(3)) <= 1e-8
    st = generate(SynthSpec(family="tucker-sparse", s=12, r_true=3, p=0.3, seed=4))
    for a in hosvd_init(st, (3, 3, 3)):
        assert np.linalg.norm(a.T @ a - np.eye(3)) <= 1e-8


def test_hosvd_init_pads_past_numerical_rank():
    t = tensor1(10, 2, seed=1)  # numerical rank 2 in every unfolding
    factors = hosvd_init(t, (5, 5, 5))
    for a in factors:
        assert np.linalg.norm(a.T @ a - np.eye(5)) <= 1e-8


# --- init_rrf -------------------------------------------------------------------


def test_init_rrf_captures_exact_rank_subspace():
    gen = np.random.default_rng(2)
    u = orthonormal(20, 3, gen)
    tn = u @ gen.standard_normal((3, 80))
    q = init_rrf(tn, 3, 3 + 8, make_rng(0))
    resid = np.linalg.norm(tn - q @ (q.T @ tn)) / np.linalg.norm(tn)
    assert resid <= 1e-6


def test_init_rrf_identity_input():
    q = init_rrf(np.eye(12), 4, 6, make_rng(1))
    assert q.shape == (12, 4)
    assert np.linalg.norm(q.T @ q - np.eye(4)) <= 1e-10


def test_init_rrf_width_validation():
    with pytest.raises(ValueError):
        init_rrf(np.eye(8), 5, 4, make_rng(0))


def test_rrf_basis_near_optimal_residual():
    # scaled-down version of the range-finder guarantee: the full-width basis
    # residual stays within (1 + 0.5x) of the best rank-R residual
    from sketchals.sketching import CompositeSketchOp, composite_apply

    r, eps = 5, 0.5
    width = r + int(np.ceil(r / eps))
    hits = 0
    for seed in range(20):
        gen = np.random.default_rng(900 + seed)
        m = orthonormal(100, r, gen) @ (gen.standard_normal((r, 400)) * 3.0)
        m += 0.5 * gen.standard_normal((100, 400))
        svals = np.linalg.svd(m, compute_uv=False)
        best_sq = float(np.sum(svals[r:] ** 2))
        op = CompositeSketchOp.build(400, width, r * r + width, make_rng(seed))
        b = composite_apply(m, op)
        q, _ = np.linalg.qr(b)
        resid_sq = np.linalg.norm(m - q @ (q.T @ m)) ** 2
        if resid_sq <= (1 + eps) * best_sq:
            hits += 1
    assert hits >= 19


# --- hooi -----------------------------------------------------------------------


def test_hooi_exact_rank_two_sweeps():
    t = tensor1(20, 4, seed=3)
    model, trace = hooi(t, TuckerConfig(ranks=(4, 4, 4), max_sweeps=2))
    assert trace.fitness[-1] >= 0.999
    assert_orthonormal_factors(model)


def test_hooi_full_rank_recovers_tensor():
    t = rng.standard_normal((5, 4, 3))
    model, trace = hooi(t, TuckerConfig(ranks=(5, 4, 3), max_sweeps=1))
    assert trace.fitness[0] == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(model.reconstruct(), t, atol=1e-8)


def test_hooi_residuals_non_increasing():
    for seed in range(5):
        t = tensor1(16, 6, seed=40 + seed)  # decomposition rank below true rank
        norm_t = np.linalg.norm(t)
        _, trace = hooi(t, TuckerConfig(ranks=(4, 4, 4), max_sweeps=4))
        res = trace.residuals
        for a, b in zip(res, res[1:]):
            assert b <= a + 1e-10 * norm_t


def test_hooi_fitness_curve_monotone_and_plateaued():
    # scaled-down fitness/sweep curve: monotone, flat by the last sweep
    t = tensor1(60, 8, seed=9)
    _, trace = hooi(t, TuckerConfig(ranks=(5, 5, 5), max_sweeps=5))
    fits = trace.fitness
    assert all(b >= a - 1e-9 for a, b in zip(fits, fits[1:]))
    assert abs(fits[-1] - fits[-2]) < 1e-3
    assert 0.0 < fits[-1] < 1.0


def test_hooi_rejects_sketch_config():
    with pytest.raises(ValueError):
        hooi(np.zeros((2, 2, 2)), TuckerConfig(ranks=(1, 1, 1), sketch="tensorsketch"))


def test_convergence_tol_early_stop():
    t = tensor1(20, 4, seed=21)
    _, full = hooi(t, TuckerConfig(ranks=(4, 4, 4), max_sweeps=6))
    assert len(full.fitness) == 6  # tol 0 never stops early
    _, stopped = hooi(t, TuckerConfig(ranks=(4, 4, 4), max_sweeps=6, convergence_tol=1e-6))
    assert len(stopped.fitness) < 6


# --- sketched ALS ------------------------------------------------------------------


@pytest.mark.parametrize(
    "sketch", ["tensorsketch", "leverage-random", "leverage-deterministic"]
)
def test_sketched_tucker_exact_rank(sketch):
    t = tensor1(30, 3, seed=11)
    cfg = TuckerConfig(ranks=(3, 3, 3), max_sweeps=5, sketch=sketch, sketch_factor=16, seed=1)
    model, trace = sketched_tucker_als(t, cfg)
    assert trace.fitness[-1] >= 0.99
    assert_orthonormal_factors(model)


def test_sketched_subproblem_with_all_rows_matches_hooi_subproblem():
    # deterministic sampler covering every row with unit weights: the sketched
    # rank-constrained solve must equal the exact HOOI subproblem optimum
    gen = np.random.default_rng(12)
    t = gen.standard_normal((10, 10, 10))
    factors = [orthonormal(10, 3, gen) for _ in range(3)]
    others = [factors[1], factors[2]]
    sampler = lev_build(others, 100, "deterministic", make_rng(0))
    z, y = lev_apply(sampler, others, matricize_t(t, 0))
    core_t, a = rsvd_lrls(z, y, 3, make_rng(1))
    x_sketch = core_t @ a.T
    y_exact = ttmc(t, factors, skip=0)
    b_full = matricize(y_exact, 0).T  # unconstrained optimum (P orthonormal)
    uu, ss, vv = np.linalg.svd(b_full, full_matrices=False)
    x_exact = (uu[:, :3] * ss[:3]) @ vv[:3]
    assert np.linalg.norm(x_sketch - x_exact) <= 1e-6 * np.linalg.norm(x_exact)


def test_sketched_tucker_bit_reproducible():
    t = tensor1(20, 4, seed=13)
    cfg = TuckerConfig(ranks=(3, 3, 3), max_sweeps=3, sketch="leverage-random",
                       sketch_factor=8, seed=7)
    m1, tr1 = sketched_tucker_als(t, cfg)
    m2, tr2 = sketched_tucker_als(t, cfg)
    assert tr1.fitness == tr2.fitness
    assert np.array_equal(m1.core, m2.core)
    for a, b in zip(m1.factors, m2.factors):
        assert np.array_equal(a, b)


def test_sketched_tucker_random_init_supported():
    t = tensor1(20, 4, seed=14)
    cfg = TuckerConfig(ranks=(4, 4, 4), max_sweeps=4, sketch="leverage-random",
                       sketch_factor=16, init="random", seed=3)
    _, trace = sketched_tucker_als(t, cfg)
    assert trace.fitness[-1] >= 0.95


def test_sketched_tucker_sketch_size_invariant():
    t = tensor1(10, 3, seed=15)
    cfg = TuckerConfig(ranks=(3, 3, 3), max_sweeps=2, sketch="tensorsketch",
                       sketch_size=8)  # below R^2 = 9
    with pytest.raises(ValueError):
        sketched_tucker_als(t, cfg)


def test_sketched_tucker_sparse_input():
    st = generate(SynthSpec(family="tucker-sparse", s=25, r_true=3, p=0.4, seed=16))
    cfg = TuckerConfig(ranks=(3, 3, 3), max_sweeps=4, sketch="leverage-random",
                       sketch_factor=16, seed=2)
    model, trace = sketched_tucker_als(st, cfg)
    assert trace.fitness[-1] >= 0.9
    assert_orthonormal_factors(model)


# --- reference baseline --------------------------------------------------------------


def test_ref_tucker_ts_exact_rank():
    t = tensor1(25, 3, seed=17)
    cfg = TuckerConfig(ranks=(3, 3, 3), max_sweeps=5, sketch="tensorsketch",
                       sketch_factor=16, seed=5)
    model, trace = ref_tucker_ts(t, cfg)
    assert trace.fitness[-1] >= 0.95
    assert_orthonormal_factors(model)


def test_ref_tucker_ts_one_sweep_trace_finite():
    t = tensor1(15, 4, seed=18)
    cfg = TuckerConfig(ranks=(3, 3, 3), max_sweeps=1, sketch="tensorsketch",
                       sketch_factor=8, seed=6)
    _, trace = ref_tucker_ts(t, cfg)
    assert len(trace.fitness) == 1
    assert np.isfinite(trace.fitness[0])
    assert len(trace.residuals) == 4  # three factor solves plus the core solve


def test_ref_tucker_ts_requires_tensorsketch():
    with pytest.raises(ValueError):
        ref_tucker_ts(np.zeros((2, 2, 2)),
                      TuckerConfig(ranks=(1, 1, 1), sketch="leverage-random", sketch_size=4))


# --- serialization -----------------------------------------------------------------


def test_tucker_save_load_round_trip(tmp_path):
    t = tensor1(12, 3, seed=19)
    model, trace = hooi(t, TuckerConfig(ranks=(3, 3, 3), max_sweeps=2))
    out = tmp_path / "model"
    save_tucker(out, model, {"final_fitness": repr(trace.fitness[-1]), "seed": "0"})
    back = load_tucker(out)
    assert np.allclose(back.core, model.core)
    for a, b in zip(back.factors, model.factors):
        assert np.allclose(a, b)
    manifest = (out / "manifest.txt").read_text()
    assert "ranks=3 3 3" in manifest and "final_fitness=" in manifest
