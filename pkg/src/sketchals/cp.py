"""CP decomposition drivers.

* :func:`cp_als` - exact CP-ALS via the normal equations (MTTKRP against the
  Hadamard product of the factor Grams), unit-normalized columns with the
  scales accumulated in the model weights.
* :func:`sketched_cp_als` - the same scheme with every subproblem solved on
  leverage-score-sampled rows of the Khatri-Rao system.
* :func:`cp_via_sketched_tucker` - Tucker compression (exact or sketched)
  followed by CP-ALS on the small core; the returned factors are the products
  of the Tucker and core-CP factors.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from .rng import make_rng, split_rng
from .sketching import lev_apply_krp, lev_build
from .tensors import (
    CPModel,
    fitness,
    matricize,
    matricize_t,
    mttkrp,
    read_matrix,
    tensor_norm,
    write_matrix,
)
from .tucker import (
    SweepTrace,
    TuckerConfig,
    hooi,
    hosvd_init,
    init_rrf,
    sketched_tucker_als,
)


@dataclass
class CPConfig:
    rank: int
    max_sweeps: int | None = None  # defaults: 30 direct, 25 on a Tucker core
    sketch: str | None = None  # None | leverage-random
    sketch_size: int | None = None
    sketch_factor: float | None = None  # K, with m = K * R^2
    init: str | None = None  # random | rrf | hosvd-of-core
    seed: int = 0
    tucker_sweeps: int = 5

    def __post_init__(self):
        if self.sketch not in (None, "leverage-random"):
            raise ValueError(f"unknown sketch kind {self.sketch!r} for CP")

    def resolved_sweeps(self, on_core=False):
        if self.max_sweeps is not None:
            return self.max_sweeps
        return 25 if on_core else 30

    def resolved_sketch_size(self):
        if self.sketch_size is not None:
            return int(self.sketch_size)
        if self.sketch_factor is not None:
            return int(math.ceil(self.sketch_factor * self.rank**2))
        raise ValueError("sketched CP needs sketch_size or sketch_factor")


def _init_factors(t, rank, init, rng, rrf_width=None):
    ndim = t.ndim if hasattr(t, "ndim") else len(t.shape)
    shape = t.shape
    if init == "random":
        return [rng.uniform(size=(shape[n], rank)) for n in range(ndim)]
    if init == "rrf":
        width = rrf_width or max(rank + 8, 2 * rank)
        return [
            init_rrf(matricize(t, n), rank, min(width, shape[n]), rng)
            if shape[n] > rank
            else np.linalg.qr(rng.standard_normal((shape[n], rank)))[0]
            for n in range(ndim)
        ]
    if init == "hosvd-of-core":
        return hosvd_init(t, [min(rank, s) for s in shape], rng)
    raise ValueError(f"unknown init {init!r} for CP")


def _normalize_columns(a):
    norms = np.linalg.norm(a, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return a / safe, norms


def _subproblem_residual(norm_t_sq, a_scaled, m_mat, gram_others):
    cross = float(np.sum(a_scaled * m_mat))
    norm_model_sq = float(np.sum((a_scaled.T @ a_scaled) * gram_others))
    return np.sqrt(max(norm_t_sq - 2.0 * cross + norm_model_sq, 0.0))


def cp_als(t, config, on_core=False):
    """Exact CP-ALS.  Mode n update solves the normal equations
    A <- mttkrp(T, factors, n) @ pinv(hadamard of the other Grams)."""
    if config.sketch is not None:
        raise ValueError("cp_als is the unsketched driver; got a sketch config")
    return _cp_als_impl(t, config, sketched=False, on_core=on_core)


def sketched_cp_als(t, config):
    """Leverage-score sketched CP-ALS: each mode solves an unconstrained least
    squares problem on rows of the Khatri-Rao system sampled from the product
    of the per-mode leverage-score distributions."""
    if config.sketch != "leverage-random":
        raise ValueError("sketched_cp_als needs sketch='leverage-random'")
    return _cp_als_impl(t, config, sketched=True, on_core=False)


def _cp_als_impl(t, config, sketched, on_core):
    shape = t.shape
    ndim = len(shape)
    rank = config.rank
    if rank < 1:
        raise ValueError("rank must be positive")
    norm_t = tensor_norm(t)
    if norm_t == 0.0:
        raise ValueError("CP decomposition of a zero-norm tensor is undefined")
    norm_t_sq = norm_t**2
    rng_init, rng_sketch = split_rng(config.seed, 2)
    init = config.init or ("hosvd-of-core" if on_core else "rrf")
    rrf_width = None
    if config.sketch_factor is not None:
        rrf_width = max(rank, int(math.ceil(math.sqrt(config.sketch_factor) * rank)))
    elif config.sketch_size is not None:
        k_factor = config.sketch_size / rank**2
        rrf_width = max(rank, int(math.ceil(math.sqrt(k_factor) * rank)))
    factors = _init_factors(t, rank, init, rng_init, rrf_width=rrf_width)
    factors = [np.asarray(a, dtype=np.float64) for a in factors]
    weights = np.ones(rank)
    m = config.resolved_sketch_size() if sketched else None
    if sketched and m < rank:
        raise ValueError(f"sketch size {m} below rank {rank}")
    grams = [a.T @ a for a in factors]
    # the tensor never changes; its transposed unfoldings are built once
    unfoldings_t = [matricize_t(t, n) for n in range(ndim)] if sketched else None
    trace = SweepTrace()
    for _ in range(config.resolved_sweeps(on_core)):
        tic = time.perf_counter()
        for n in range(ndim):
            others = [factors[k] for k in range(ndim) if k != n]
            if sketched:
                sampler = lev_build(others, m, "random", rng_sketch)
                z, y = lev_apply_krp(sampler, others, unfoldings_t[n])
                sol, *_ = np.linalg.lstsq(z, y, rcond=None)
                a_scaled = sol.T
            else:
                gram_others = np.ones((rank, rank))
                for k in range(ndim):
                    if k != n:
                        gram_others *= grams[k]
                m_mat = mttkrp(t, factors, n)
                a_scaled = m_mat @ np.linalg.pinv(gram_others, rcond=1e-12)
                trace.residuals.append(
                    _subproblem_residual(norm_t_sq, a_scaled, m_mat, gram_others)
                )
            factors[n], weights = _normalize_columns(a_scaled)
            grams[n] = factors[n].T @ factors[n]
        model = CPModel([a.copy() for a in factors], weights.copy())
        fit = fitness(t, model)
        if sketched:
            trace.residuals.append((1.0 - fit) * norm_t)
        trace.wall_s.append(time.perf_counter() - tic)
        trace.fitness.append(float(fit))
    return CPModel(factors, weights), trace


def cp_via_sketched_tucker(t, config):
    """CP through Tucker compression.

    Runs Tucker-ALS at ranks (R, ..., R) for config.tucker_sweeps (exact HOOI
    when config.sketch is None, sketched with leverage sampling otherwise),
    then CP-ALS on the core with HOSVD-of-core initialization, and multiplies
    the factor chains together.  The trace carries the Tucker-stage fitness
    per sweep followed by the final CP fitness against the input tensor, with
    stage_split marking the boundary; residuals are the core-stage CP
    residuals (measured against the core).
    """
    shape = t.shape
    ndim = len(shape)
    rank = config.rank
    if any(rank > s for s in shape):
        raise ValueError("rank exceeds a tensor extent")
    seed_tucker, seed_cp = (s.generate_state(1)[0] for s in np.random.SeedSequence(config.seed).spawn(2))
    tucker_cfg = TuckerConfig(
        ranks=(rank,) * ndim,
        max_sweeps=config.tucker_sweeps,
        sketch="leverage-random" if config.sketch else None,
        sketch_size=config.sketch_size,
        sketch_factor=config.sketch_factor,
        init="rrf" if config.sketch else "hosvd",
        seed=int(seed_tucker),
    )
    if config.sketch:
        tmodel, ttrace = sketched_tucker_als(t, tucker_cfg)
    else:
        tmodel, ttrace = hooi(t, tucker_cfg)
    core_cfg = replace(config, sketch=None, sketch_size=None, sketch_factor=None,
                       init="hosvd-of-core", seed=int(seed_cp))
    cmodel, ctrace = cp_als(tmodel.core, core_cfg, on_core=True)
    factors = [b @ a for b, a in zip(tmodel.factors, cmodel.factors)]
    normalized = []
    weights = cmodel.weights.copy()
    for a in factors:
        unit, norms = _normalize_columns(a)
        normalized.append(unit)
        weights *= norms
    model = CPModel(normalized, weights)
    trace = SweepTrace(
        fitness=list(ttrace.fitness) + [fitness(t, model)],
        residuals=list(ctrace.residuals),
        wall_s=list(ttrace.wall_s) + [sum(ctrace.wall_s)],
        stage_split=len(ttrace.fitness),
    )
    return model, trace


def save_cp(dirpath, model, manifest=None):
    """Write factor_n.mat (1-based), weights.mat, and a key=value manifest."""
    os.makedirs(dirpath, exist_ok=True)
    for n, a in enumerate(model.factors):
        write_matrix(os.path.join(dirpath, f"factor_{n + 1}.mat"), a)
    write_matrix(os.path.join(dirpath, "weights.mat"), model.weights.reshape(1, -1))
    lines = {"rank": str(model.rank)}
    lines.update(manifest or {})
    with open(os.path.join(dirpath, "manifest.txt"), "w") as fh:
        for key, val in lines.items():
            fh.write(f"{key}={val}\n")


def load_cp(dirpath):
    factors = []
    n = 1
    while os.path.exists(os.path.join(dirpath, f"factor_{n}.mat")):
        factors.append(read_matrix(os.path.join(dirpath, f"factor_{n}.mat")))
        n += 1
    weights = read_matrix(os.path.join(dirpath, "weights.mat")).ravel()
    return CPModel(factors, weights)
