import numpy as np
import pytest

from gibbsfht.fht import FhtModel, FourierBasis, build_tree, normalize

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record a one-line acceptance verdict; printed in the terminal summary."""

    def add(number, title, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def gauss_legendre(a, b, n):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * t + 0.5 * (b + a), 0.5 * (b - a) * w


def random_model(rng, d, rank, q=2, half_width=2.5, site_order=0):
    """Random FhtModel with every edge rank equal to ``rank``."""
    tree = build_tree(d, site_order)
    basis = FourierBasis(q, half_width)
    cores = {}
    for node in tree.all_nodes():
        if tree.is_leaf(node):
            cores[node] = rng.standard_normal((basis.n, rank))
        elif node == (0, 0):
            cores[node] = rng.standard_normal((rank, rank))
        else:
            cores[node] = rng.standard_normal((rank, rank, rank))
    return FhtModel(tree, basis, cores)


def separable_model(densities, q, half_width=2.5):
    """Rank-1 FhtModel whose leaves are projections of 1-D densities.

    ``densities`` is a list of callables on ``[-w, w]``; each is projected on
    the Fourier basis by quadrature and the product is normalised.
    """
    d = len(densities)
    tree = build_tree(d)
    basis = FourierBasis(q, half_width)
    t, w = gauss_legendre(-half_width, half_width, 1024)
    psi = basis(t)
    cores = {}
    for node in tree.all_nodes():
        if tree.is_leaf(node):
            coef = psi.T @ (w * densities[node[1]](t))
            cores[node] = coef[:, None]
        elif node == (0, 0):
            cores[node] = np.ones((1, 1))
        else:
            cores[node] = np.ones((1, 1, 1))
    return normalize(FhtModel(tree, basis, cores))


def double_well_1d(t, k=2.0):
    return np.exp(-k * (1 - t * t) ** 2)


class ProductMixture:
    """Mixture of product densities written exactly as a rank-R FhtModel.

    Component ``c`` has per-variable density
    ``(1 + sum_b coef[c, v, b] sqrt(w) psi_{b+1}(t)) / (2w)``; the absolute
    coefficients sum to at most 0.9, so every factor stays positive.
    Component 0 tilts the first sine mode up, component 1 down, which keeps
    the components well separated.
    """

    def __init__(self, rng, d=8, q=3, weights=(0.4, 0.6), half_width=2.5):
        self.d, self.w = d, half_width
        self.basis = FourierBasis(q, half_width)
        self.weights = np.asarray(weights, dtype=float)
        self.rank = len(weights)
        n = self.basis.n
        coef = rng.uniform(-1, 1, (self.rank, d, n - 1))
        coef *= 0.45 / np.abs(coef).sum(-1, keepdims=True)
        coef[0, :, 1] += 0.45
        coef[1:, :, 1] -= 0.45
        self.coef = coef
        tree = build_tree(d)
        w = half_width
        cores = {}
        for k in range(d):
            c = np.empty((n, self.rank))
            c[0] = np.sqrt(2 * w) / (2 * w)
            c[1:] = (coef[:, k] * np.sqrt(w) / (2 * w)).T
            cores[(tree.levels, k)] = c
        diag = np.zeros((self.rank,) * 3)
        diag[np.arange(self.rank), np.arange(self.rank), np.arange(self.rank)] = 1.0
        for level in range(1, tree.levels):
            cores.update({node: diag for node in tree.nodes(level)})
        cores[(0, 0)] = np.diag(self.weights)
        self.model = FhtModel(tree, self.basis, cores)

    def sample(self, count, rng):
        comp = rng.choice(self.rank, size=count, p=self.weights)
        x = np.empty((count, self.d))
        for c in range(self.rank):
            idx = np.flatnonzero(comp == c)
            for k in range(self.d):
                got = np.empty(0)
                while got.size < idx.size:
                    m = 2 * (idx.size - got.size) + 16
                    t = rng.uniform(-self.w, self.w, m)
                    f = 1 + (self.basis(t)[:, 1:] * np.sqrt(self.w)) @ self.coef[c, k]
                    got = np.concatenate([got, t[rng.random(m) * 1.9 < f]])
                x[idx, k] = got[:idx.size]
        return x

    def _component_features(self, sketch):
        """``E_c[s(x)]`` per component, shape ``(R, size)``."""
        tree = self.model.tree
        out = np.ones((self.rank, sketch.term_vars.shape[0]))
        for col in range(sketch.term_vars.shape[1]):
            for t, (v, b) in enumerate(zip(sketch.term_vars[:, col], sketch.term_basis[:, col])):
                if v >= 0:
                    out[:, t] *= self.model.cores[(tree.levels, v)][b, :]
        return out @ sketch.mixing.T

    def exact_moments(self, sketches):
        """The sketched moments computed analytically from the model."""
        from gibbsfht.sketch import MomentEstimates

        tree, wts = self.model.tree, self.weights
        feat_in = {node: self._component_features(s) for node, s in sketches.inner.items()}
        feat_out = {node: self._component_features(s) for node, s in sketches.outer.items()}
        z = {node: np.einsum("c,ca,cb->ab", wts, feat_in[node], feat_out[node])
             for node in feat_in}
        b, leaf = {}, {}
        for node in tree.all_nodes():
            if tree.is_leaf(node):
                leaf[node] = np.einsum("c,ic,cb->ib", wts, self.model.cores[node], feat_out[node])
                continue
            left, right = tree.children(node)
            if node == (0, 0):
                b[node] = np.einsum("c,ca,cb->ab", wts, feat_in[left], feat_in[right])
            else:
                b[node] = np.einsum("c,ca,cb,cf->abf", wts, feat_in[left], feat_in[right],
                                    feat_out[node])
        return MomentEstimates(z, b, leaf, 0)


def bootstrap_fits(x, tree, basis, specs, points, rng, chunks=100, reps=200):
    """Fitted densities at ``points`` plus chunk-bootstrap replicates.

    Moments are additive over samples, so each chunk's moment sums are
    computed once and every replicate refits from a resampled sum. The
    replicates therefore carry the Monte-Carlo error at the full sample size.
    Returns ``(full, boot)`` with shapes ``(len(specs), P)`` and
    ``(reps, len(specs), P)``.
    """
    from gibbsfht.sketch import MomentEstimates, estimate_moments, fit_from_moments

    full, boot = [], []
    draws = [np.bincount(rng.integers(0, chunks, chunks), minlength=chunks).astype(float)
             for _ in range(reps)]
    for spec in specs:
        parts = [estimate_moments(p, spec, tree, basis) for p in np.array_split(x, chunks)]
        counts = np.array([p.count for p in parts], dtype=float)
        sums = {name: {k: np.array([getattr(p, name)[k] * p.count for p in parts])
                       for k in getattr(parts[0], name)} for name in ("z", "b", "leaf")}

        def fit(w, spec=spec, sums=sums, counts=counts):
            total = w @ counts
            tables = {name: {k: np.tensordot(w, v, 1) / total for k, v in table.items()}
                      for name, table in sums.items()}
            moments = MomentEstimates(tables["z"], tables["b"], tables["leaf"], int(total))
            return normalize(fit_from_moments(moments, spec, tree, basis))(points)

        full.append(fit(np.ones(chunks)))
        boot.append([fit(w) for w in draws])
    return np.array(full), np.array(boot).transpose(1, 0, 2)
