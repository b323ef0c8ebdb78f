"""Functional hierarchical tensors over a binary dimension tree.

A model represents

    p(x) = sum_{i_1..i_d} C[i_1, ..., i_d] psi_{i_1}(x_1) ... psi_{i_d}(x_d)

where the coefficient tensor ``C`` is a hierarchical (binary-tree) tensor
network and ``psi`` is an orthonormal Fourier basis on ``[-w, w]``.

Tree nodes are addressed as ``(level, k)`` with level 0 the root and level
``L`` the ``d = 2**L`` leaves; node ``(l, k)`` covers leaf positions
``k * 2**(L-l) .. (k+1) * 2**(L-l) - 1``. Core shapes:

* leaf ``(L, k)``: ``(n, r)`` with ``r`` the rank of the edge to its parent;
* interior node: ``(r_left, r_right, r_parent)``;
* root: ``(r_left, r_right)``.

Leaf positions and lattice sites may differ (``SiteOrder.MORTON2D``); the
public functions take points in site order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class SiteOrder(IntEnum):
    IDENTITY = 0
    MORTON2D = 1


def morton_order(m):
    """Row-major site index for each Z-order position of an ``m x m`` grid."""
    bits = m.bit_length() - 1
    if m < 1 or 1 << bits != m:
        raise ValueError(f"Morton order needs a power-of-two side, got {m}")
    sites = np.empty(m * m, dtype=np.int64)
    for z in range(m * m):
        row = col = 0
        for b in range(bits):
            col |= ((z >> (2 * b)) & 1) << b
            row |= ((z >> (2 * b + 1)) & 1) << b
        sites[z] = row * m + col
    return sites


@dataclass(frozen=True, eq=False)
class DimensionTree:
    levels: int
    site_order: SiteOrder
    leaf_sites: np.ndarray  # leaf position -> site index

    @property
    def d(self):
        return 1 << self.levels

    def nodes(self, level):
        return [(level, k) for k in range(1 << level)]

    def all_nodes(self):
        """Every node in level order, left to right, root first."""
        return [node for l in range(self.levels + 1) for node in self.nodes(l)]

    def block(self, node):
        """Leaf positions covered by ``node``."""
        level, k = node
        width = 1 << (self.levels - level)
        return np.arange(k * width, (k + 1) * width)

    def sites(self, node):
        return self.leaf_sites[self.block(node)]

    def children(self, node):
        level, k = node
        return (level + 1, 2 * k), (level + 1, 2 * k + 1)

    def is_leaf(self, node):
        return node[0] == self.levels

    def to_leaf_order(self, x):
        return np.asarray(x)[..., self.leaf_sites]

    def __eq__(self, other):
        return (
            isinstance(other, DimensionTree)
            and self.levels == other.levels
            and self.site_order == other.site_order
            and np.array_equal(self.leaf_sites, other.leaf_sites)
        )


def build_tree(d, site_order=SiteOrder.IDENTITY) -> DimensionTree:
    levels = int(d).bit_length() - 1
    if d < 2 or 1 << levels != d:
        raise ValueError(f"d must be a power of two >= 2, got {d}")
    site_order = SiteOrder(site_order)
    if site_order is SiteOrder.MORTON2D:
        m = math.isqrt(d)
        if m * m != d:
            raise ValueError(f"Morton ordering needs d = m*m, got {d}")
        leaf_sites = morton_order(m)
    else:
        leaf_sites = np.arange(d)
    return DimensionTree(levels, site_order, leaf_sites)


@dataclass(frozen=True)
class FourierBasis:
    """Orthonormal sine-cosine basis on ``[-w, w]`` with ``n = 2q + 1`` terms.

    Index 0 is the constant; ``2k - 1`` and ``2k`` are the cosine and sine of
    frequency ``k``.
    """

    q: int
    half_width: float = 2.5

    @property
    def n(self):
        return 2 * self.q + 1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        w = self.half_width
        out = np.empty(t.shape + (self.n,))
        out[..., 0] = 1.0 / math.sqrt(2.0 * w)
        if self.q:
            k = np.arange(1, self.q + 1)
            phase = np.pi * k * (t[..., None] + w) / w
            amp = 1.0 / math.sqrt(w)
            out[..., 1::2] = amp * np.cos(phase)
            out[..., 2::2] = amp * np.sin(phase)
        return out

    def integrals(self):
        """``int psi_i`` over ``[-w, w]``: only the constant survives."""
        v = np.zeros(self.n)
        v[0] = math.sqrt(2.0 * self.half_width)
        return v

    def moments(self, power, nodes=512):
        """``int t**power psi_i(t) dt`` by Gauss-Legendre quadrature."""
        t, wt = np.polynomial.legendre.leggauss(nodes)
        t = t * self.half_width
        wt = wt * self.half_width
        return (wt * t**power) @ self(t)


def eval_basis(basis, t):
    return basis(t)


class FhtModel:
    """A functional hierarchical tensor; see the module docstring for layout."""

    def __init__(self, tree: DimensionTree, basis: FourierBasis, cores: dict):
        self.tree = tree
        self.basis = basis
        self.cores = {node: np.asarray(c, dtype=float) for node, c in cores.items()}
        self._check()

    def _check(self):
        tree, n = self.tree, self.basis.n
        missing = [node for node in tree.all_nodes() if node not in self.cores]
        if missing:
            raise ValueError(f"missing cores for nodes {missing[:4]}")
        for node in tree.all_nodes():
            core = self.cores[node]
            if tree.is_leaf(node):
                if core.ndim != 2 or core.shape[0] != n:
                    raise ValueError(f"leaf core {node} has shape {core.shape}, expected ({n}, r)")
                continue
            expect = 2 if node == (0, 0) else 3
            if core.ndim != expect:
                raise ValueError(f"core {node} has {core.ndim} modes, expected {expect}")
            left, right = tree.children(node)
            if core.shape[0] != self.rank(left) or core.shape[1] != self.rank(right):
                raise ValueError(
                    f"core {node} shape {core.shape} inconsistent with child ranks "
                    f"({self.rank(left)}, {self.rank(right)})"
                )

    @property
    def d(self):
        return self.tree.d

    def rank(self, node):
        """Rank of the edge between ``node`` and its parent."""
        core = self.cores[node]
        return core.shape[-1]

    def ranks(self):
        return {node: self.rank(node) for node in self.tree.all_nodes() if node != (0, 0)}

    def with_core(self, node, core):
        cores = dict(self.cores)
        cores[node] = core
        return FhtModel(self.tree, self.basis, cores)

    def contract(self, leaf_vectors):
        """Contract the network against one vector per leaf.

        ``leaf_vectors[j]`` has shape ``(..., n)``; leading shapes broadcast
        against each other. Returns the contracted values with the broadcast
        leading shape.
        """
        tree = self.tree
        vec = {}
        for k in range(tree.d):
            vec[(tree.levels, k)] = np.asarray(leaf_vectors[k]) @ self.cores[(tree.levels, k)]
        for level in range(tree.levels - 1, -1, -1):
            for node in tree.nodes(level):
                left, right = tree.children(node)
                a, b = vec.pop(left), vec.pop(right)
                core = self.cores[node]
                outer = a[..., :, None] * b[..., None, :]
                flat = outer.reshape(outer.shape[:-2] + (-1,))
                if level == 0:
                    return flat @ core.reshape(-1)
                vec[node] = flat @ core.reshape(-1, core.shape[2])
        raise AssertionError("unreachable")

    def __call__(self, x):
        return fht_eval(self, x)


def fht_eval(model: FhtModel, x):
    """Evaluate the model at points ``x`` of shape ``(..., d)`` (site order)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.d:
        raise ValueError(f"expected trailing dimension {model.d}, got {x.shape}")
    psi = model.basis(model.tree.to_leaf_order(x))
    return model.contract([psi[..., j, :] for j in range(model.d)])


def fht_integral(model: FhtModel) -> float:
    iv = model.basis.integrals()
    return float(model.contract([iv] * model.d))


def normalize(model: FhtModel) -> FhtModel:
    z = fht_integral(model)
    if z == 0 or not np.isfinite(z):
        raise ValueError(f"cannot normalize a model with integral {z}")
    root = (0, 0)
    return model.with_core(root, model.cores[root] / z)


def _leaf_position(model, site):
    if not 0 <= site < model.d:
        raise IndexError(f"site index {site} out of range for d={model.d}")
    return int(np.flatnonzero(model.tree.leaf_sites == site)[0])


def marginal_2d(model: FhtModel, i, j, grid_i, grid_j, clip=False):
    """Exact two-variable marginal of the model on a tensor grid.

    Returns a ``(len(grid_i), len(grid_j))`` array of density values of
    ``(x_i, x_j)``. All other variables are integrated over ``[-w, w]``.
    With ``clip`` negative values are set to zero.
    """
    if i == j:
        raise ValueError("marginal_2d needs two distinct indices")
    pi, pj = _leaf_position(model, i), _leaf_position(model, j)
    iv = model.basis.integrals()
    vectors = [iv] * model.d
    vectors[pi] = model.basis(np.asarray(grid_i, dtype=float))[:, None, :]
    vectors[pj] = model.basis(np.asarray(grid_j, dtype=float))[None, :, :]
    out = model.contract(vectors)
    return np.maximum(out, 0.0) if clip else out


def marginal_1d(model: FhtModel, i, grid, clip=False):
    pi = _leaf_position(model, i)
    vectors = [model.basis.integrals()] * model.d
    vectors[pi] = model.basis(np.asarray(grid, dtype=float))
    out = model.contract(vectors)
    return np.maximum(out, 0.0) if clip else out


def model_moments(model: FhtModel, pairs=()):
    """Means ``E[x_i]`` (all sites) and ``E[x_i x_j]`` for ``pairs``.

    Uses 512-point Gauss-Legendre quadrature per variable, normalised by the
    model integral. Returns ``(means, {(i, j): value})``.
    """
    iv = model.basis.integrals()
    m1, m2 = model.basis.moments(1), model.basis.moments(2)
    z = fht_integral(model)
    means = np.empty(model.d)
    for site in range(model.d):
        vectors = [iv] * model.d
        vectors[_leaf_position(model, site)] = m1
        means[site] = model.contract(vectors) / z
    second = {}
    for i, j in pairs:
        vectors = [iv] * model.d
        if i == j:
            vectors[_leaf_position(model, i)] = m2
        else:
            vectors[_leaf_position(model, i)] = m1
            vectors[_leaf_position(model, j)] = m1
        second[(i, j)] = float(model.contract(vectors)) / z
    return means, second


def fht_sample(model: FhtModel, count, rng, grid_resolution=512, max_retries=10,
               chunk=2048):
    """Draw ``count`` points by sequential conditional sampling.

    Leaf variables are drawn in tree order; each conditional density is
    evaluated at ``grid_resolution`` cell centres on ``[-w, w]``, clipped at
    zero, and sampled by inverse CDF with uniform jitter inside the cell.
    Draws that hit a conditional with no positive mass are restarted, at
    most ``max_retries`` times.
    """
    if grid_resolution < 64:
        raise ValueError("grid_resolution must be at least 64")
    w = model.basis.half_width
    width = 2.0 * w / grid_resolution
    centres = -w + width * (np.arange(grid_resolution) + 0.5)
    grid_psi = model.basis(centres)[None, :, :]
    iv = model.basis.integrals()
    d = model.d

    def draw(m):
        out = np.full((m, d), np.nan)
        ok = np.ones(m, dtype=bool)
        for j in range(d):
            vectors = [iv] * d
            for s in range(j):
                vectors[s] = model.basis(out[:, s])[:, None, :]
            vectors[j] = grid_psi
            dens = np.maximum(np.nan_to_num(model.contract(vectors)), 0.0)
            mass = dens.sum(axis=1)
            ok &= mass > 0
            cdf = np.cumsum(dens, axis=1)
            u = rng.random(m) * np.where(ok, mass, 1.0)
            cell = np.minimum((cdf < u[:, None]).sum(axis=1), grid_resolution - 1)
            out[:, j] = -w + width * (cell + rng.random(m))
            out[~ok, j] = 0.0
        return out, ok

    leaf = np.empty((count, d))
    for start in range(0, count, chunk):
        m = min(chunk, count - start)
        block, ok = draw(m)
        for _ in range(max_retries):
            if ok.all():
                break
            redo, ok_redo = draw(int((~ok).sum()))
            idx = np.flatnonzero(~ok)
            block[idx] = redo
            ok[idx] = ok_redo
        else:
            if not ok.all():
                raise RuntimeError("conditional density with no positive mass; model too negative")
        leaf[start:start + m] = block
    x = np.empty_like(leaf)
    x[:, model.tree.leaf_sites] = leaf
    return x
