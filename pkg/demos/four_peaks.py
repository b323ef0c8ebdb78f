"""
Fitting a tensor density to annealed samples
============================================

At weak coupling the (x2, x1) marginal of the chain has four peaks near
(+-1, +-1): the two sites are almost independent double wells. This demo
samples with the ensemble annealer, fits a hierarchical Fourier tensor
model by sketching, and reads the peak masses off the fitted marginal.

The model marginal is exact (a tensor contraction), so it is smooth where
a histogram of 1000 samples would be noisy.
"""

from pathlib import Path

import numpy as np

from gibbsfht.config import load
from gibbsfht.fht import FourierBasis, build_tree, fht_integral, marginal_2d
from gibbsfht.pipeline import FOUR_PEAKS, mass_in_balls, sample, sample_mass_in_balls
from gibbsfht.sketch import sketch_fit

cfg = load(Path(__file__).parent.parent / "configs" / "desk_1d_weak.toml")
ais, _ = sample(cfg)
x = ais.samples
print(f"{x.shape[0]} samples in d={x.shape[1]}")

# %%
# One pass over the samples gives every core.
f = cfg.fht
model = sketch_fit(x, build_tree(cfg.potential.d), FourierBasis(f.q, f.half_width), f.rank)
print("integral after normalisation:", fht_integral(model))
print("largest bond rank:", max(model.ranks().values()))

# %%
# Peak masses in 0.5-radius balls, model against raw samples.
model_mass = mass_in_balls(model, 1, 0, FOUR_PEAKS)
sample_mass = sample_mass_in_balls(x, 1, 0, FOUR_PEAKS)
print(f"\n{'peak':>10} {'model':>7} {'samples':>8}")
for (a, b), m, e in zip(FOUR_PEAKS, model_mass, sample_mass):
    print(f"({a:+.0f}, {b:+.0f})   {m:7.3f} {e:8.3f}")

# %%
# A coarse text rendering of the model marginal.
grid = np.linspace(-2.5, 2.5, 21)
dens = marginal_2d(model, 1, 0, grid, grid, clip=True)
shades = " .:-=+*#%@"
print()
for row in dens[::-1]:
    print("".join(shades[min(9, int(9 * v / dens.max()))] for v in row))
