"""Dense and sparse order-N tensors plus the contraction kernels used everywhere.

Dense tensors are plain ``numpy.ndarray`` objects (row-major, float64).
Sparse tensors are coordinate-format :class:`SparseTensor` objects.  Matrices
are 2-D ndarrays; a "coordinate form" matrix is a ``scipy.sparse`` matrix.

Matricization convention: the mode-n unfolding T_(n) has shape
``s_n x prod(other extents)`` and its columns enumerate the remaining modes in
ascending order with the earliest remaining mode varying slowest (C order).
Under this convention the unfolding of a core-times-factors product equals the
ascending Kronecker chain of the factors times the unfolded core, which is the
identity every solver in this package relies on (and which the test suite pins
down explicitly).

All indices are 0-based internally; the text file formats are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class SparseTensor:
    """Order-N tensor in coordinate (COO) format.

    coords is an (nnz, N) integer array of 0-based indices, stored sorted
    lexicographically; duplicate coordinates are rejected.  values is the
    matching (nnz,) float array.  Instances are immutable after construction
    (per-mode matricizations are cached lazily, which is safe to share).
    """

    def __init__(self, shape, coords, values):
        shape = tuple(int(s) for s in shape)
        if len(shape) < 1 or any(s < 1 for s in shape):
            raise ValueError(f"invalid shape {shape}")
        coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
        values = np.asarray(values, dtype=np.float64).ravel()
        if coords.size == 0:
            coords = coords.reshape(0, len(shape))
        if coords.shape[1] != len(shape):
            raise ValueError("coordinate width does not match tensor order")
        if coords.shape[0] != values.shape[0]:
            raise ValueError("number of coordinates does not match number of values")
        if coords.size and ((coords < 0).any() or (coords >= np.asarray(shape)).any()):
            raise ValueError("coordinate out of range")
        order = np.lexsort(coords.T[::-1])
        coords = coords[order]
        values = values[order]
        if coords.shape[0] > 1 and (np.diff(coords, axis=0) == 0).all(axis=1).any():
            raise ValueError("duplicate coordinates")
        self.shape = shape
        self.coords = coords
        self.values = values
        self.coords.setflags(write=False)
        self.values.setflags(write=False)
        self._unfoldings: dict = {}
        self._mode_sort: dict = {}

    @property
    def ndim(self):
        return len(self.shape)

    @property
    def nnz(self):
        return self.values.shape[0]

    @property
    def density(self):
        return self.nnz / float(np.prod(self.shape))

    def norm(self):
        return float(np.linalg.norm(self.values))

    def to_dense(self):
        out = np.zeros(self.shape)
        out[tuple(self.coords.T)] = self.values
        return out

    @classmethod
    def from_dense(cls, a, tol=0.0):
        a = np.asarray(a, dtype=np.float64)
        mask = np.abs(a) > tol
        coords = np.argwhere(mask)
        return cls(a.shape, coords, a[mask])

    def mode_sort(self, n):
        """Cached stable argsort of the nonzeros by their mode-n index."""
        if n not in self._mode_sort:
            order = np.argsort(self.coords[:, n], kind="stable")
            order.setflags(write=False)
            self._mode_sort[n] = order
        return self._mode_sort[n]

    def __repr__(self):
        return f"SparseTensor(shape={self.shape}, nnz={self.nnz})"


@dataclass
class TuckerModel:
    """Core tensor plus per-mode factor matrices with orthonormal columns."""

    core: np.ndarray
    factors: list

    @property
    def ranks(self):
        return tuple(self.core.shape)

    def reconstruct(self):
        out = self.core
        for n, a in enumerate(self.factors):
            out = ttm(out, a, n)
        return out


@dataclass
class CPModel:
    """Rank-R CP model: unit-column factor matrices and per-component weights."""

    factors: list
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.ones(self.factors[0].shape[1])
        self.weights = np.asarray(self.weights, dtype=np.float64)

    @property
    def rank(self):
        return self.factors[0].shape[1]

    def reconstruct(self):
        subs = "abcdefgh"[: len(self.factors)]
        expr = ",".join(f"{c}z" for c in subs) + ",z->" + subs
        return np.einsum(expr, *self.factors, self.weights, optimize=True)


def tensor_norm(t):
    if isinstance(t, SparseTensor):
        return t.norm()
    return float(np.linalg.norm(np.asarray(t)))


def _other_modes(ndim, n):
    return [m for m in range(ndim) if m != n]


def matricize(t, n):
    """Mode-n unfolding, shape s_n x prod(remaining extents).

    Dense input yields an ndarray, sparse input a scipy CSR matrix (cached on
    the tensor).  Remaining modes are linearized in ascending order, earliest
    mode slowest.
    """
    if isinstance(t, SparseTensor):
        key = ("m", n)
        if key not in t._unfoldings:
            t._unfoldings[key] = _sparse_unfold(t, n, transpose=False)
        return t._unfoldings[key]
    t = np.asarray(t)
    if not 0 <= n < t.ndim:
        raise ValueError(f"mode {n} out of range for order-{t.ndim} tensor")
    return np.moveaxis(t, n, 0).reshape(t.shape[n], -1)


def matricize_t(t, n):
    """Transposed mode-n unfolding T_(n)^T, shape prod(remaining) x s_n."""
    if isinstance(t, SparseTensor):
        key = ("t", n)
        if key not in t._unfoldings:
            t._unfoldings[key] = _sparse_unfold(t, n, transpose=True)
        return t._unfoldings[key]
    return matricize(t, n).T


def _sparse_unfold(t, n, transpose):
    if not 0 <= n < t.ndim:
        raise ValueError(f"mode {n} out of range for order-{t.ndim} tensor")
    others = _other_modes(t.ndim, n)
    rest_shape = [t.shape[m] for m in others]
    if t.nnz:
        cols = np.ravel_multi_index([t.coords[:, m] for m in others], rest_shape)
    else:
        cols = np.zeros(0, dtype=np.int64)
    rows = t.coords[:, n]
    ncols = int(np.prod(rest_shape))
    if transpose:
        mat = sp.coo_matrix((t.values, (cols, rows)), shape=(ncols, t.shape[n]))
    else:
        mat = sp.coo_matrix((t.values, (rows, cols)), shape=(t.shape[n], ncols))
    return mat.tocsr()


def fold(mat, n, shape):
    """Inverse of :func:`matricize`: rebuild the tensor from its mode-n unfolding."""
    shape = tuple(shape)
    rest = [shape[m] for m in _other_modes(len(shape), n)]
    return np.moveaxis(np.asarray(mat).reshape([shape[n]] + rest), 0, n)


def ttm(t, mat, n):
    """Mode-n tensor-times-matrix: contracts extent s_n against cols(mat)."""
    t = np.asarray(t)
    mat = np.asarray(mat)
    if mat.shape[1] != t.shape[n]:
        raise ValueError(
            f"ttm mode {n}: matrix has {mat.shape[1]} columns, tensor extent is {t.shape[n]}"
        )
    new_shape = list(t.shape)
    new_shape[n] = mat.shape[0]
    return fold(mat @ matricize(t, n), n, new_shape)


def ttmc(t, factors, skip=None, chunk=1 << 16):
    """Tensor times matrix-chain: contract every mode m != skip with factors[m]^T.

    factors[m] has shape (s_m, R_m); the result replaces each contracted
    extent by R_m.  With skip=None all modes are contracted.  Sparse input is
    processed by iterating its nonzeros in chunks, accumulating each nonzero's
    Kronecker row-product into the unfolded output, so no intermediate with
    more than O(chunk * prod R) entries is formed for the skip-mode case.
    """
    ndim = t.ndim if isinstance(t, SparseTensor) else np.asarray(t).ndim
    if skip is not None and not 0 <= skip < ndim:
        raise ValueError(f"skip mode {skip} out of range")
    for m in range(ndim):
        if m == skip:
            continue
        fm = factors[m]
        sm = t.shape[m]
        if fm.shape[0] != sm:
            raise ValueError(
                f"ttmc mode {m}: factor has {fm.shape[0]} rows, tensor extent is {sm}"
            )
    if not isinstance(t, SparseTensor):
        out = np.asarray(t)
        for m in range(ndim):
            if m != skip:
                out = ttm(out, factors[m].T, m)
        return out
    if skip is None:
        return _sparse_ttmc_all(t, factors)
    return _sparse_ttmc_skip(t, factors, skip, chunk)


def _sparse_ttmc_all(t, factors):
    # Contract the first mode through the sparse unfolding (one sparse-dense
    # GEMM over the nonzeros), then finish densely on the much smaller result.
    mat = matricize_t(t, 0)  # prod(rest) x s_0, CSR
    w = (mat @ factors[0]).T  # R_0 x prod(rest)
    rest_shape = [t.shape[m] for m in range(1, t.ndim)]
    out = w.reshape([factors[0].shape[1]] + rest_shape)
    for m in range(1, t.ndim):
        out = ttm(out, factors[m].T, m)
    return out


def _sparse_ttmc_skip(t, factors, skip, chunk):
    others = _other_modes(t.ndim, skip)
    r_dims = [factors[m].shape[1] for m in others]
    out_cols = int(np.prod(r_dims))
    out = np.zeros((t.shape[skip], out_cols))
    if t.nnz == 0:
        return fold(out, skip, _skip_shape(t, factors, skip))
    order = t.mode_sort(skip)
    rows = t.coords[order, skip]
    for lo in range(0, t.nnz, chunk):
        hi = min(lo + chunk, t.nnz)
        idx = order[lo:hi]
        contrib = t.values[idx][:, None]
        for m in others:
            fm = factors[m][t.coords[idx, m]]  # (c, R_m)
            contrib = (contrib[:, :, None] * fm[:, None, :]).reshape(hi - lo, -1)
        seg = rows[lo:hi]
        starts = np.flatnonzero(np.r_[True, seg[1:] != seg[:-1]])
        sums = np.add.reduceat(contrib, starts, axis=0)
        out[seg[starts]] += sums
    return fold(out, skip, _skip_shape(t, factors, skip))


def _skip_shape(t, factors, skip):
    return [t.shape[m] if m == skip else factors[m].shape[1] for m in range(t.ndim)]


def khatri_rao(mats):
    """Column-wise Kronecker product of matrices sharing a column count.

    Output has prod(rows) rows; row blocks follow the input order with the
    first matrix varying slowest (matching the matricization convention).
    """
    mats = [np.asarray(m) for m in mats]
    k = mats[0].shape[1]
    if any(m.shape[1] != k for m in mats):
        raise ValueError("khatri_rao inputs must share the column count")
    out = mats[0]
    for m in mats[1:]:
        out = (out[:, None, :] * m[None, :, :]).reshape(-1, k)
    return out


_EINSUM_LETTERS = "abcdefghijkl"


def mttkrp(t, factors, n):
    """Matricized tensor times Khatri-Rao product of the factors excluding mode n.

    Returns T_(n) @ khatri_rao([factors[m] for m != n]), shape (s_n, R).
    """
    ndim = t.ndim if isinstance(t, SparseTensor) else np.asarray(t).ndim
    others = _other_modes(ndim, n)
    r = factors[others[0]].shape[1]
    for m in others:
        if factors[m].shape[0] != t.shape[m]:
            raise ValueError(
                f"mttkrp mode {m}: factor has {factors[m].shape[0]} rows, extent is {t.shape[m]}"
            )
        if factors[m].shape[1] != r:
            raise ValueError("mttkrp factors must share the column count")
    if isinstance(t, SparseTensor):
        return matricize(t, n) @ khatri_rao([factors[m] for m in others])
    if n == 0:
        # the mode-0 unfolding is a copy-free view, so one GEMM is fastest
        return matricize(t, 0) @ khatri_rao([factors[m] for m in others])
    subs = _EINSUM_LETTERS[:ndim]
    expr = (
        subs
        + ","
        + ",".join(f"{subs[m]}z" for m in others)
        + "->"
        + subs[n]
        + "z"
    )
    return np.einsum(expr, np.asarray(t), *[factors[m] for m in others], optimize=True)


def fitness(t, model):
    """Decomposition fitness 1 - ||T - reconstruction||_F / ||T||_F.

    Never densifies the reconstruction: the residual norm is assembled from
    ||T||^2 - 2<T, model> + ||model||^2, with the model norm taken from the
    core (Tucker, orthonormal factors) or the Hadamard product of factor Gram
    matrices (CP).
    """
    norm_t = tensor_norm(t)
    if norm_t == 0.0:
        raise ValueError("fitness undefined for a zero-norm tensor")
    if isinstance(model, TuckerModel):
        projected = ttmc(t, model.factors, skip=None)
        cross = float(np.vdot(projected, model.core))
        norm_model_sq = float(np.vdot(model.core, model.core))
    elif isinstance(model, CPModel):
        scaled = model.factors[0] * model.weights
        m0 = mttkrp(t, model.factors, 0)
        cross = float(np.sum(scaled * m0))
        gram = np.ones((model.rank, model.rank))
        for a in model.factors[1:]:
            gram *= a.T @ a
        norm_model_sq = float(np.sum((scaled.T @ scaled) * gram))
    else:
        raise TypeError(f"unsupported model type {type(model)!r}")
    resid_sq = norm_t**2 - 2.0 * cross + norm_model_sq
    # cancellation can leave a tiny negative residual; clamp before the sqrt
    if resid_sq < 0.0:
        resid_sq = 0.0
    return 1.0 - np.sqrt(resid_sq) / norm_t


# ---------------------------------------------------------------------------
# text file formats
#
# sparse:  "order N  shape s1 ... sN  nnz K"   then K lines "i1 ... iN value"
# dense:   "order N  shape s1 ... sN  dense"   then values in row-major order
# indices in files are 1-based.
# ---------------------------------------------------------------------------


def write_tensor(path, t):
    with open(path, "w") as fh:
        if isinstance(t, SparseTensor):
            shape = " ".join(str(s) for s in t.shape)
            fh.write(f"order {t.ndim}  shape {shape}  nnz {t.nnz}\n")
            for idx, val in zip(t.coords, t.values):
                fh.write(" ".join(str(i + 1) for i in idx) + f" {float(val)!r}\n")
        else:
            t = np.asarray(t)
            shape = " ".join(str(s) for s in t.shape)
            fh.write(f"order {t.ndim}  shape {shape}  dense\n")
            flat = t.ravel()
            for lo in range(0, flat.size, 8):
                fh.write(" ".join(repr(float(v)) for v in flat[lo : lo + 8]) + "\n")


def read_tensor(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 4 or header[0] != "order" or header[2] != "shape":
            raise ValueError(f"malformed tensor header in {path}")
        ndim = int(header[1])
        shape = tuple(int(v) for v in header[3 : 3 + ndim])
        tail = header[3 + ndim :]
        body = fh.read().split()
        if tail and tail[0] == "dense":
            data = np.array([float(v) for v in body])
            return data.reshape(shape)
        if len(tail) != 2 or tail[0] != "nnz":
            raise ValueError(f"malformed tensor header in {path}")
        nnz = int(tail[1])
        vals = np.array([float(v) for v in body]).reshape(nnz, ndim + 1)
        coords = vals[:, :ndim].astype(np.int64) - 1
        return SparseTensor(shape, coords, vals[:, ndim])


def write_matrix(path, mat):
    mat = np.asarray(mat)
    with open(path, "w") as fh:
        fh.write(f"{mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_matrix(path):
    with open(path) as fh:
        rows, cols = (int(v) for v in fh.readline().split())
        data = np.array([float(v) for v in fh.read().split()])
    return data.reshape(rows, cols)
