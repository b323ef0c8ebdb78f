"""
Sketching recovers a known low-rank density
===========================================

A mixture of two product densities is exactly a rank-2 hierarchical tensor.
Drawing samples from it and refitting with rank 2 should give back the
same function. The error shrinks like one over the square root of the
sample count; there is no optimisation loop to tune.
"""

import numpy as np

from gibbsfht.fht import FhtModel, FourierBasis, build_tree, fht_eval
from gibbsfht.sketch import sketch_fit

rng = np.random.default_rng(0)
d, w = 8, 2.5
basis = FourierBasis(1, w)
tree = build_tree(d)

# %%
# Component c has per-site density (1 + tilt[c] sqrt(w) psi_2(t)) / (2w),
# where psi_2 is the first sine mode of the basis. The two tilts point in
# opposite directions; the mixture weights are 0.4 and 0.6.
tilt = np.array([0.8, -0.8])
weights = np.array([0.4, 0.6])
leaf = np.zeros((basis.n, 2))
leaf[0] = 1 / np.sqrt(2 * w)
leaf[2] = tilt * np.sqrt(w) / (2 * w)
cores = {(tree.levels, k): leaf for k in range(d)}
diag = np.zeros((2, 2, 2))
diag[0, 0, 0] = diag[1, 1, 1] = 1.0
for level in range(1, tree.levels):
    cores.update({node: diag for node in tree.nodes(level)})
cores[(0, 0)] = np.diag(weights)
truth = FhtModel(tree, basis, cores)


def draw(count):
    """Rejection sampling, one coordinate at a time (sites are independent)."""
    comp = rng.choice(2, size=count, p=weights)
    out = np.empty((count, d))
    for k in range(d):
        todo = np.arange(count)
        while todo.size:
            t = rng.uniform(-w, w, todo.size)
            f = 1 + tilt[comp[todo]] * np.sqrt(w) * basis(t)[:, 2]
            ok = rng.random(todo.size) * 1.8 < f
            out[todo[ok], k] = t[ok]
            todo = todo[~ok]
    return out


# %%
# Relative error at random points for growing sample sizes.
points = rng.uniform(-w, w, (200, d))
ref = fht_eval(truth, points)
for count in (10**3, 10**4, 10**5):
    fit = sketch_fit(draw(count), tree, basis, 2)
    err = np.abs(fht_eval(fit, points) - ref).max() / np.abs(ref).max()
    print(f"N = {count:>6}: max relative error {err:.3f}")
