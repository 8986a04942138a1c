"""Why leverage-score sampling needs the range-finder initialization.

Builds a sparse tensor spiked with a few huge entries (high coherence: a
handful of rows carry most of the information).  With random initial factors,
the leverage distribution is uninformative, the spikes go unsampled sweep
after sweep, and the sketched solves never lock on.  Initializing from a
one-pass randomized range finder fixes this.
"""

import numpy as np

from sketchals import SynthSpec, TuckerConfig, generate, hooi, sketched_tucker_als

S, R, K = 150, 5, 16

fits = {"hooi": [], "lev + random init": [], "lev + rrf init": []}
for seed in range(5):
    spec = SynthSpec(family="coherent", coherent_base="sparse", s=S, r_true=6,
                     alpha=1.2, p=0.02, n_spikes=10, seed=seed)
    tensor = generate(spec)
    _, tr = hooi(tensor, TuckerConfig(ranks=(R,) * 3, seed=seed))
    fits["hooi"].append(tr.fitness[-1])
    for init, label in (("random", "lev + random init"), ("rrf", "lev + rrf init")):
        cfg = TuckerConfig(ranks=(R,) * 3, sketch="leverage-random",
                           sketch_factor=K, init=init, seed=seed)
        try:
            _, tr = sketched_tucker_als(tensor, cfg)
            fits[label].append(tr.fitness[-1])
        except Exception as exc:
            print(f"seed {seed} {label}: solve failed ({exc})")
            fits[label].append(0.0)

print(f"{'method':20s}  final fitness per seed            median")
for name, vals in fits.items():
    row = "  ".join(f"{v:6.3f}" for v in vals)
    print(f"{name:20s}  {row}   {np.median(vals):6.3f}")
print("\nrandom-init leverage sampling collapses on this tensor while the")
print("rrf-initialized runs track HOOI")
