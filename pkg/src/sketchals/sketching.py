"""Sketching operators for Kronecker-structured least squares.

Provides CountSketch, TensorSketch (applied to Kronecker chains through
per-mode CountSketches and FFTs), leverage-score row sampling over Kronecker
or Khatri-Rao chains (random and deterministic variants), and the composite
CountSketch-then-Gaussian operator used by the range-finder initialization.

Row indices of a length-k chain are linearized like the matricization columns
in :mod:`sketchals.tensors`: modes ascending, first mode slowest.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import leverage_scores

_MERSENNE = np.uint64((1 << 31) - 1)


def _poly_hash(coeffs, n):
    """Evaluate a random polynomial over GF(2^31 - 1) at 0..n-1 (Horner)."""
    x = np.arange(n, dtype=np.uint64)
    acc = np.full(n, coeffs[0], dtype=np.uint64)
    for c in coeffs[1:]:
        acc = (acc * x + np.uint64(c)) % _MERSENNE
    return acc


def _hash_family(n, m, rng, degree):
    """Bucket map [n] -> [m] from a degree-`degree` polynomial family."""
    coeffs = rng.integers(0, int(_MERSENNE), size=degree + 1, dtype=np.int64)
    return (_poly_hash(coeffs, n) % np.uint64(m)).astype(np.int64)


def _sign_family(n, rng, degree):
    """Sign map [n] -> {-1,+1} from a degree-`degree` polynomial family."""
    coeffs = rng.integers(0, int(_MERSENNE), size=degree + 1, dtype=np.int64)
    return (1 - 2 * (_poly_hash(coeffs, n) % np.uint64(2))).astype(np.int64)


@dataclass
class CountSketchOp:
    """Bucket-and-sign projection: row i of the input lands in bucket hash[i]."""

    m: int
    hash: np.ndarray
    signs: np.ndarray

    @classmethod
    def build(cls, n, m, rng):
        return cls(m, rng.integers(0, m, size=n), 1 - 2 * rng.integers(0, 2, size=n))

    def apply(self, mat):
        """S @ mat for a dense (n, c) matrix, result (m, c)."""
        mat = np.asarray(mat)
        out = np.zeros((self.m, mat.shape[1]))
        np.add.at(out, self.hash, self.signs[:, None] * mat)
        return out


@dataclass
class TensorSketchOp:
    """TensorSketch over a chain of modes with the given extents.

    Per-mode bucket maps come from a 3-wise independent (degree-3 polynomial)
    family and per-mode signs from a 4-wise independent (degree-4) family; the
    composed bucket of a multi-index is the sum of per-mode buckets mod m and
    the composed sign is the product of per-mode signs.
    """

    m: int
    extents: tuple
    modes: list  # per-mode CountSketchOp

    @classmethod
    def build(cls, extents, m, rng):
        modes = [
            CountSketchOp(m, _hash_family(s, m, rng, 3), _sign_family(s, rng, 4))
            for s in extents
        ]
        return cls(m, tuple(int(s) for s in extents), modes)

    @property
    def n_rows(self):
        return int(np.prod(self.extents))

    def combined_hash(self, multi_idx):
        h = np.zeros(len(multi_idx[0]), dtype=np.int64)
        for k, idx in enumerate(multi_idx):
            h += self.modes[k].hash[idx]
        return h % self.m

    def combined_sign(self, multi_idx):
        s = np.ones(len(multi_idx[0]), dtype=np.int64)
        for k, idx in enumerate(multi_idx):
            s *= self.modes[k].signs[idx]
        return s

    def materialize(self):
        """Explicit (m, prod extents) sketch matrix; for tests and tiny inputs."""
        flat = np.arange(self.n_rows)
        multi = np.unravel_index(flat, self.extents)
        out = np.zeros((self.m, self.n_rows))
        out[self.combined_hash(multi), flat] = self.combined_sign(multi)
        return out


def ts_apply_kron(ts, factors, method="auto"):
    """Apply a TensorSketch to the Kronecker chain of the factors.

    Equals ts.materialize() @ kron(factors...) without forming either: each
    factor is CountSketched, the chain is combined by circular convolution
    (via FFT, or directly for small m), column blocks ordered first factor
    slowest.
    """
    if len(factors) != len(ts.extents):
        raise ValueError("factor count does not match sketch mode count")
    for k, f in enumerate(factors):
        if f.shape[0] != ts.extents[k]:
            raise ValueError(
                f"factor {k} has {f.shape[0]} rows, sketch extent is {ts.extents[k]}"
            )
    sketched = [ts.modes[k].apply(f) for k, f in enumerate(factors)]
    if len(sketched) == 1:
        return sketched[0]
    if method == "auto":
        method = "direct" if ts.m < 64 else "fft"
    if method == "fft":
        cur = np.fft.fft(sketched[0], axis=0)
        for nxt in sketched[1:]:
            nxt_hat = np.fft.fft(nxt, axis=0)
            cur = (cur[:, :, None] * nxt_hat[:, None, :]).reshape(ts.m, -1)
        return np.fft.ifft(cur, axis=0).real
    if method == "direct":
        m = ts.m
        shift = (np.arange(m)[:, None] - np.arange(m)[None, :]) % m  # (t, j)
        cur = sketched[0]
        for nxt in sketched[1:]:
            rolled = nxt[shift]  # (t, j, q)
            cur = np.einsum("jp,tjq->tpq", cur, rolled).reshape(m, -1)
        return cur
    raise ValueError(f"unknown method {method!r}")


def ts_apply_rhs(ts, b, chunk=1 << 20):
    """Apply a TensorSketch to a tall right-hand side in one pass over nonzeros.

    b has prod(extents) rows and may be dense or scipy-sparse; each (row, col)
    entry is routed to (combined bucket of the row's multi-index, col) with the
    composed sign.
    """
    n_rows = ts.n_rows
    if b.shape[0] != n_rows:
        raise ValueError(f"rhs has {b.shape[0]} rows, sketch expects {n_rows}")
    out = np.zeros((ts.m, b.shape[1]))
    if sp.issparse(b):
        coo = b.tocoo()
        multi = np.unravel_index(coo.row, ts.extents)
        h = ts.combined_hash(multi)
        s = ts.combined_sign(multi)
        np.add.at(out, (h, coo.col), s * coo.data)
        return out
    b = np.asarray(b)
    for lo in range(0, n_rows, chunk):
        hi = min(lo + chunk, n_rows)
        multi = np.unravel_index(np.arange(lo, hi), ts.extents)
        h = ts.combined_hash(multi)
        s = ts.combined_sign(multi)
        np.add.at(out, h, s[:, None] * b[lo:hi])
    return out


@dataclass
class LevSamplerOp:
    """Row sampler over a Kronecker/Khatri-Rao chain from per-mode leverage scores."""

    m: int
    extents: tuple
    profiles: list  # per-mode LeverageProfile
    variant: str  # "random" | "deterministic"
    indices: np.ndarray  # (m, n_modes) sampled multi-indices
    weights: np.ndarray  # (m,) rescale weights

    def flat_indices(self):
        return np.ravel_multi_index(self.indices.T, self.extents)


def lev_build(factors, m, variant, rng):
    """Build a leverage-score row sampler for the chain of the given factors.

    The random variant draws each mode component independently from that
    factor's leverage-score distribution and rescales rows by 1/sqrt(m p);
    the deterministic variant selects the m largest per-mode score products
    (best-first search over score-sorted lists, ties broken by lexicographic
    multi-index) with unit weights.
    """
    if m < 1:
        raise ValueError("sample count must be positive")
    profiles = [leverage_scores(f) for f in factors]
    extents = tuple(f.shape[0] for f in factors)
    if variant == "random":
        probs = []
        for p in profiles:
            q = np.maximum(p.scores, 0.0)
            probs.append(q / q.sum())
        cols = [rng.choice(len(p), size=m, p=p) for p in probs]
        indices = np.stack(cols, axis=1)
        p_prod = np.ones(m)
        for k, p in enumerate(probs):
            p_prod *= p[indices[:, k]]
        weights = 1.0 / np.sqrt(m * p_prod)
        return LevSamplerOp(m, extents, profiles, variant, indices, weights)
    if variant == "deterministic":
        indices = _top_m_products([p.scores for p in profiles], m)
        return LevSamplerOp(m, extents, profiles, variant, indices, np.ones(m))
    raise ValueError(f"unknown variant {variant!r}")


def _top_m_products(score_lists, m):
    """Multi-indices of the m largest products, one score list per mode.

    Best-first frontier search over per-mode descending-sorted lists, no full
    enumeration.  Ties are broken by lexicographic order of the original
    multi-index.
    """
    total = int(np.prod([len(s) for s in score_lists]))
    if m > total:
        raise ValueError(f"cannot select {m} rows from {total}")
    orders = []
    sorted_scores = []
    for s in score_lists:
        order = np.lexsort((np.arange(len(s)), -np.asarray(s)))
        orders.append(order)
        sorted_scores.append(np.asarray(s)[order])
    start = tuple(0 for _ in score_lists)
    first = tuple(int(orders[k][0]) for k in range(len(score_lists)))
    prod0 = float(np.prod([s[0] for s in sorted_scores]))
    heap = [(-prod0, first, start)]
    seen = {start}
    out = []
    while len(out) < m:
        neg, orig, pos = heapq.heappop(heap)
        out.append(orig)
        for k in range(len(pos)):
            if pos[k] + 1 >= len(sorted_scores[k]):
                continue
            nxt = pos[:k] + (pos[k] + 1,) + pos[k + 1 :]
            if nxt in seen:
                continue
            seen.add(nxt)
            prod = float(np.prod([sorted_scores[j][nxt[j]] for j in range(len(nxt))]))
            norig = tuple(int(orders[j][nxt[j]]) for j in range(len(nxt)))
            heapq.heappush(heap, (-prod, norig, nxt))
    return np.array(out, dtype=np.int64)


def _fetch_rows(bt, flat, weights):
    if sp.issparse(bt):
        rows = np.asarray(bt.tocsr()[flat].todense())
    else:
        rows = np.asarray(bt)[flat]
    return weights[:, None] * rows


def lev_apply(sampler, factors, bt):
    """Sampled-and-rescaled (Z, Y) for a Kronecker chain left-hand side.

    Row j of Z is weight_j times the Kronecker product of the sampled factor
    rows; row j of Y is the same multiple of the matching row of bt.
    """
    if tuple(f.shape[0] for f in factors) != sampler.extents:
        raise ValueError("factors do not match the sampler's extents")
    if bt.shape[0] != int(np.prod(sampler.extents)):
        raise ValueError("rhs row count does not match the sampled chain")
    idx = sampler.indices
    z = factors[0][idx[:, 0]]
    for k in range(1, len(factors)):
        rows = factors[k][idx[:, k]]
        z = (z[:, :, None] * rows[:, None, :]).reshape(sampler.m, -1)
    z = sampler.weights[:, None] * z
    y = _fetch_rows(bt, sampler.flat_indices(), sampler.weights)
    return z, y


def lev_apply_krp(sampler, factors, bt):
    """Same as :func:`lev_apply` but for a Khatri-Rao (column-matched) chain:
    Z rows are Hadamard products of the sampled factor rows."""
    if tuple(f.shape[0] for f in factors) != sampler.extents:
        raise ValueError("factors do not match the sampler's extents")
    idx = sampler.indices
    z = factors[0][idx[:, 0]].copy()
    for k in range(1, len(factors)):
        z *= factors[k][idx[:, k]]
    z = sampler.weights[:, None] * z
    y = _fetch_rows(bt, sampler.flat_indices(), sampler.weights)
    return z, y


@dataclass
class CompositeSketchOp:
    """CountSketch stage followed by a Gaussian stage, applied from the right.

    Sketches the columns of an (n, s) matrix down to k1: the CountSketch
    buckets the s columns into k2 >= k1 groups with signs, the Gaussian stage
    (entries with variance 1/k1) mixes the groups down to k1.
    """

    k1: int
    k2: int
    stage: CountSketchOp
    gauss: np.ndarray

    @classmethod
    def build(cls, n_cols, k1, k2, rng):
        if k2 < k1:
            raise ValueError(f"intermediate width {k2} below target width {k1}")
        stage = CountSketchOp.build(n_cols, k2, rng)
        gauss = rng.standard_normal((k2, k1)) / np.sqrt(k1)
        return cls(k1, k2, stage, gauss)


def composite_apply(mat, op):
    """mat @ (countsketch stage) @ (gaussian stage), touching each nonzero once."""
    if mat.shape[1] != len(op.stage.hash):
        raise ValueError(
            f"matrix has {mat.shape[1]} columns, sketch expects {len(op.stage.hash)}"
        )
    t_mat = sp.csr_matrix(
        (op.stage.signs, (np.arange(mat.shape[1]), op.stage.hash)),
        shape=(mat.shape[1], op.k2),
    )
    if sp.issparse(mat):
        stage1 = np.asarray((mat @ t_mat).todense())
    else:
        stage1 = (t_mat.T @ np.asarray(mat).T).T
    return stage1 @ op.gauss
