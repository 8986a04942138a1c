"""Sketch size versus least-squares accuracy for the two sketch families.

Solves a rank-constrained Kronecker least squares problem exactly, then with
TensorSketch and leverage-score sampling at growing sketch sizes, reporting
the mean relative residual excess over 10 seeds.  Both curves should decay
roughly like 1/sqrt(m), with leverage sampling a bit ahead at equal m.
"""

import numpy as np

from sketchals import TensorSketchOp, lev_apply, lev_build, rsvd_lrls
from sketchals import ts_apply_kron, ts_apply_rhs
from sketchals.rng import make_rng

S, RANK, SEEDS = 40, 3, 10

gen = np.random.default_rng(0)
factors = [np.linalg.qr(gen.standard_normal((S, RANK)))[0] for _ in range(2)]
p = np.kron(factors[0], factors[1])
w = gen.standard_normal((RANK * RANK, 25))
signal = p @ w
noise = gen.standard_normal((S * S, 25))
b = signal + 0.5 * np.linalg.norm(signal) / np.linalg.norm(noise) * noise

x_ls = p.T @ b
uu, ss, vv = np.linalg.svd(x_ls, full_matrices=False)
x_exact = (uu[:, :RANK] * ss[:RANK]) @ vv[:RANK]
res_exact = np.linalg.norm(p @ x_exact - b)
print(f"chain: {p.shape[0]} rows x {p.shape[1]} cols, exact rank-{RANK} "
      f"residual {res_exact:.4f}\n")

print(f"{'m':>6s}  {'leverage excess':>16s}  {'tensorsketch excess':>20s}")
for m in (RANK**2, 4 * RANK**2, 16 * RANK**2, 64 * RANK**2):
    excess = {"lev": 0.0, "ts": 0.0}
    for seed in range(SEEDS):
        sampler = lev_build(factors, m, "random", make_rng(11 * m + seed))
        z, y = lev_apply(sampler, factors, b)
        core_t, v = rsvd_lrls(z, y, RANK, make_rng(seed))
        excess["lev"] += np.linalg.norm(p @ (core_t @ v.T) - b) / res_exact - 1.0
        op = TensorSketchOp.build((S, S), m, make_rng(17 * m + seed))
        z = ts_apply_kron(op, factors)
        y = ts_apply_rhs(op, b)
        core_t, v = rsvd_lrls(z, y, RANK, make_rng(seed))
        excess["ts"] += np.linalg.norm(p @ (core_t @ v.T) - b) / res_exact - 1.0
    print(f"{m:>6d}  {excess['lev'] / SEEDS:>16.4f}  {excess['ts'] / SEEDS:>20.4f}")
