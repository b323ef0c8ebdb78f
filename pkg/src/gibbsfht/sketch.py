"""Density estimation by hierarchical tensor sketching.

For each tree edge with variable block ``I`` two families of sketch
functions are drawn: ``s_I`` on ``x_I`` and ``s_Ic`` on the complement. The
fit uses three kinds of Monte-Carlo moments:

* ``Z_I = E[s_I s_Ic]`` per edge, whose truncated SVD fixes the gauge;
* ``B_q = E[s_a s_b s_Ic]`` per interior node ``q`` with children ``a, b``
  (the root uses ``E[s_a s_b]``);
* ``E[psi(x_j) s_jc]`` per leaf.

Each core then follows from a small over-determined linear solve; no
iterative optimisation is involved.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import SingularGaugeError
from .fht import FhtModel, normalize

log = logging.getLogger(__name__)

ROOT = (0, 0)


@dataclass
class BlockSketch:
    """``s(x, mu) = sum_t mixing[mu, t] prod_{(v, b) in term t} psi_b(x_v)``.

    ``term_vars`` / ``term_basis`` have shape ``(terms, max_support)`` with
    ``-1`` padding; an all-padding row is the constant term 1. Variables are
    leaf positions.
    """

    term_vars: np.ndarray
    term_basis: np.ndarray
    mixing: np.ndarray

    @property
    def size(self):
        return self.mixing.shape[0]

    def features(self, psi):
        """Term values for basis evaluations ``psi`` of shape ``(N, d, n)``."""
        out = np.ones((psi.shape[0], self.term_vars.shape[0]))
        for col in range(self.term_vars.shape[1]):
            v, b = self.term_vars[:, col], self.term_basis[:, col]
            used = v >= 0
            if used.any():
                out[:, used] *= psi[:, v[used], b[used]]
        return out

    def __call__(self, psi):
        return self.features(psi) @ self.mixing.T


@dataclass
class SketchSpec:
    """Sketch families per edge node: ``inner[node]`` on the block,
    ``outer[node]`` on its complement."""

    inner: dict
    outer: dict
    ranks: dict
    seed: int | None = None


def _node_ranks(tree, basis, ranks):
    out = {}
    for node in tree.all_nodes():
        if node == ROOT:
            continue
        r = ranks.get(node) if isinstance(ranks, dict) else ranks
        if r is None or int(r) < 1:
            raise ValueError(f"invalid rank {r} for node {node}")
        out[node] = int(r)
    return out


def _block_terms(rng, variables, extra, max_degree, max_support):
    """Constant, every single-variable mode, then ``extra`` random products."""
    modes = np.arange(1, 2 * max_degree + 1)
    singles = len(variables) * len(modes)
    count = 1 + singles + (extra if len(variables) > 1 and max_support > 1 else 0)
    term_vars = -np.ones((count, max_support), dtype=np.int64)
    term_basis = -np.ones((count, max_support), dtype=np.int64)
    term_vars[1:1 + singles, 0] = np.repeat(variables, len(modes))
    term_basis[1:1 + singles, 0] = np.tile(modes, len(variables))
    for t in range(1 + singles, count):
        size = int(rng.integers(2, min(max_support, len(variables)) + 1))
        term_vars[t, :size] = rng.choice(variables, size=size, replace=False)
        term_basis[t, :size] = rng.choice(modes, size=size)
    return term_vars, term_basis


def _single_variable_terms(var, degree):
    modes = np.arange(0, 2 * degree + 1)
    term_vars = np.where(modes == 0, -1, var)[:, None].astype(np.int64)
    term_basis = np.where(modes == 0, -1, modes)[:, None].astype(np.int64)
    return term_vars, term_basis


def make_sketches(tree, basis, ranks, oversampling=2.0, seed=0, max_degree=2,
                  max_support=3) -> SketchSpec:
    """Random sparse Fourier-feature sketches, deterministic in ``seed``.

    Each edge with rank ``r`` gets ``ceil(oversampling * r)`` sketch
    functions on each side, Gaussian mixtures of a term pool. The pool holds
    the constant, every non-constant mode of degree at most ``max_degree``
    of every variable in the block, and a few random products of up to
    ``max_support`` such modes. Single-variable blocks use every mode up to
    the degree needed to reach the sketch size.
    """
    if oversampling < 1.5:
        raise ValueError(f"oversampling must be >= 1.5, got {oversampling}")
    max_degree = min(max_degree, basis.q)
    if max_degree < 1:
        raise ValueError("sketches need a basis with q >= 1")
    rank_map = _node_ranks(tree, basis, ranks)
    rng = np.random.default_rng(seed)
    everything = np.arange(tree.d)
    inner, outer = {}, {}
    for node in tree.all_nodes():
        if node == ROOT:
            continue
        size = math.ceil(oversampling * rank_map[node])
        block = tree.block(node)
        complement = np.setdiff1d(everything, block)
        extra = max(2 * size, 8)
        if len(block) == 1:
            deg = min(basis.q, max(max_degree, math.ceil((size - 1) / 2)))
            tv, tb = _single_variable_terms(block[0], deg)
        else:
            tv, tb = _block_terms(rng, block, extra, max_degree, max_support)
        inner[node] = BlockSketch(tv, tb, rng.standard_normal((size, tv.shape[0])))
        tv, tb = _block_terms(rng, complement, extra, max_degree, max_support)
        outer[node] = BlockSketch(tv, tb, rng.standard_normal((size, tv.shape[0])))
    return SketchSpec(inner, outer, rank_map, seed)


def constant_sketches(tree, size=1) -> SketchSpec:
    """Sketches whose every function is the constant 1 (testing aid)."""
    one = BlockSketch(-np.ones((1, 1), dtype=np.int64), -np.ones((1, 1), dtype=np.int64),
                      np.ones((size, 1)))
    nodes = [node for node in tree.all_nodes() if node != ROOT]
    return SketchSpec({n: one for n in nodes}, {n: one for n in nodes},
                      {n: 1 for n in nodes}, None)


@dataclass
class MomentEstimates:
    z: dict          # edge node -> (r~_I, r~_Ic)
    b: dict          # interior node -> (r~_a, r~_b, r~_Ic); root -> (r~_a, r~_b)
    leaf: dict       # leaf node -> (n, r~_Ic)
    count: int


def _is_uniform(weights):
    return weights is None or np.all(weights == weights.flat[0])


def estimate_moments(samples, sketches: SketchSpec, tree, basis, weights=None,
                     chunk=20000) -> MomentEstimates:
    """Monte-Carlo moments for the sketched systems, in one pass.

    With ``weights`` every average is the self-normalised ``sum w f / sum w``;
    constant weights reproduce the unweighted result exactly.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("need a non-empty (count, d) sample array")
    if x.shape[1] != tree.d:
        raise ValueError(f"samples have dimension {x.shape[1]}, tree expects {tree.d}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (x.shape[0],) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be a finite vector with one entry per sample")
        if np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("weights must be non-negative with a positive sum")
    if _is_uniform(weights):
        weights = None
    x = tree.to_leaf_order(x)
    edge_nodes = [node for node in tree.all_nodes() if node != ROOT]
    interior = [node for node in tree.all_nodes() if not tree.is_leaf(node)]
    leaves = tree.nodes(tree.levels)
    acc_z = {node: 0.0 for node in edge_nodes}
    acc_b = {node: 0.0 for node in interior}
    acc_leaf = {node: 0.0 for node in leaves}
    total = 0.0
    for start in range(0, x.shape[0], chunk):
        psi = basis(x[start:start + chunk])
        w = None if weights is None else weights[start:start + chunk]
        inner = {node: sketches.inner[node](psi) for node in edge_nodes}
        outer = {node: sketches.outer[node](psi) for node in edge_nodes}
        if w is not None:
            outer = {node: v * w[:, None] for node, v in outer.items()}
            total += w.sum()
        else:
            total += psi.shape[0]
        for node in edge_nodes:
            acc_z[node] = acc_z[node] + inner[node].T @ outer[node]
        for node in interior:
            a, b = tree.children(node)
            if node == ROOT:
                sb = inner[b] if w is None else inner[b] * w[:, None]
                acc_b[node] = acc_b[node] + inner[a].T @ sb
            else:
                ab = inner[a][:, :, None] * inner[b][:, None, :]
                acc_b[node] = acc_b[node] + np.einsum("nab,nf->abf", ab, outer[node])
        for node in leaves:
            acc_leaf[node] = acc_leaf[node] + psi[:, node[1], :].T @ outer[node]
    return MomentEstimates(
        {k: v / total for k, v in acc_z.items()},
        {k: v / total for k, v in acc_b.items()},
        {k: v / total for k, v in acc_leaf.items()},
        x.shape[0],
    )


def _signs(u):
    """Sign per column making its first non-negligible entry positive."""
    idx = np.argmax(np.abs(u) > 1e-14 * np.abs(u).max(axis=0, initial=0), axis=0)
    s = np.sign(u[idx, np.arange(u.shape[1])])
    s[s == 0] = 1.0
    return s


def gauge_from_svd(z, rank, tol=1e-8, node=None):
    """Left gauge ``U_r diag(s_r)`` from the truncated SVD of ``z``.

    Singular values below ``tol * s_1`` lower the effective rank (with a
    warning). Columns follow a fixed sign convention.
    """
    z = np.asarray(z, dtype=float)
    if rank > min(z.shape):
        raise ValueError(f"rank {rank} exceeds cross-moment shape {z.shape}")
    u, s, _ = np.linalg.svd(z, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise SingularGaugeError(f"all-zero cross-moment matrix at node {node}")
    keep = int(np.sum(s[:rank] > tol * s[0]))
    if keep < rank:
        warnings.warn(
            f"node {node}: effective rank {keep} < requested {rank}", RuntimeWarning,
            stacklevel=2,
        )
    u = u[:, :keep] * _signs(u[:, :keep])
    return u * s[:keep]


def complement_gauge(z, gauge):
    """The matching gauge on the complement side: ``(pinv(A) z)^T``."""
    return (np.linalg.pinv(gauge) @ z).T


def _checked_pinv(a, tol, what):
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[-1] == 0 or s[-1] <= tol * s[0]:
        cond = np.inf if s.size == 0 or s[-1] == 0 else s[0] / s[-1]
        raise SingularGaugeError(f"{what}: gauge condition number {cond:.3g} too large")
    return np.linalg.pinv(a)


def solve_core(b, a_left, a_right, a_parent=None, tol=1e-8, node=None):
    """Solve ``sum A_a A_b A_f G = B`` mode-wise with pseudo-inverses.

    ``a_parent=None`` solves the two-mode root system.
    """
    what = f"node {node}" if node is not None else "core solve"
    pa = _checked_pinv(a_left, tol, what)
    pb = _checked_pinv(a_right, tol, what)
    if a_parent is None:
        return pa @ b @ pb.T
    pf = _checked_pinv(a_parent, tol, what)
    return np.einsum("ia,jb,kc,abc->ijk", pa, pb, pf, b)


def solve_leaf(b_leaf, a_parent, tol=1e-8, node=None):
    """Leaf core ``C = B_leaf pinv(A_f)^T`` of shape ``(n, r)``."""
    what = f"node {node}" if node is not None else "leaf solve"
    return b_leaf @ _checked_pinv(a_parent, tol, what).T


def sketch_fit(samples, tree, basis, ranks, oversampling=2.0, seed=0, tol=1e-8,
               weights=None, sketches=None) -> FhtModel:
    """Fit a normalised FHT density to samples in one pass."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("sketch_fit needs at least one sample")
    if sketches is None:
        sketches = make_sketches(tree, basis, ranks, oversampling, seed)
    worst = max(
        basis.n * r if tree.is_leaf(node) else r**3 for node, r in sketches.ranks.items()
    )
    if x.shape[0] < 10 * worst:
        log.warning("only %d samples for up to %d unknowns per node", x.shape[0], worst)
    outside = np.abs(x) > basis.half_width
    if outside.any():
        log.info("%d sample coordinates fall outside the basis domain", int(outside.sum()))
    moments = estimate_moments(x, sketches, tree, basis, weights)
    model = fit_from_moments(moments, sketches, tree, basis, tol)
    log.debug("fitted ranks: %s", {str(k): v for k, v in model.ranks().items()})
    return normalize(model)


def fit_from_moments(moments: MomentEstimates, sketches: SketchSpec, tree, basis, tol=1e-8,
                     order=None) -> FhtModel:
    """Gauge every edge and solve every core; the result is not normalised.

    Node solves are independent of each other, so ``order`` (any permutation
    of the tree nodes) changes nothing but the visiting sequence.
    """
    gauge_in, gauge_out = {}, {}
    for node, z in moments.z.items():
        gauge_in[node] = gauge_from_svd(z, sketches.ranks[node], tol, node)
        gauge_out[node] = complement_gauge(z, gauge_in[node])
    cores = {}
    for node in tree.all_nodes() if order is None else order:
        if tree.is_leaf(node):
            cores[node] = solve_leaf(moments.leaf[node], gauge_out[node], tol, node)
            continue
        a, b = tree.children(node)
        parent = None if node == ROOT else gauge_out[node]
        cores[node] = solve_core(moments.b[node], gauge_in[a], gauge_in[b], parent, tol, node)
    return FhtModel(tree, basis, cores)
