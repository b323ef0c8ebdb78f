"""Sample and model diagnostics: the +/-1 symmetry ratio, 2-D histograms,
total-variation distance and moment tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fht import FhtModel, model_moments


@dataclass(frozen=True)
class RatioReport:
    u_plus: float
    u_minus: float
    iota: float
    sample_count: int


def log_bumps(samples):
    """``log g_+`` and ``log g_-`` per sample, ``g_pm = exp(-2/d sum (y -+ 1)^2)``."""
    y = np.asarray(samples, dtype=float)
    d = y.shape[-1]
    return (-2.0 / d * np.sum((y - 1.0) ** 2, axis=-1),
            -2.0 / d * np.sum((y + 1.0) ** 2, axis=-1))


def ratio_from_log_bumps(log_gp, log_gm) -> RatioReport:
    log_gp, log_gm = np.ravel(log_gp), np.ravel(log_gm)
    if log_gp.size == 0:
        raise ValueError("ratio of an empty sample set")
    shift = max(log_gp.max(), log_gm.max())
    sp = np.mean(np.exp(log_gp - shift))
    sm = np.mean(np.exp(log_gm - shift))
    if not sp + sm > 0:
        raise ValueError("both bump statistics vanish")
    scale = np.exp(shift)
    return RatioReport(float(sp * scale), float(sm * scale), float(sp / (sp + sm)), log_gp.size)


def plus_minus_ratio(samples) -> RatioReport:
    """Symmetry ratio ``iota = u_+ / (u_+ + u_-)`` of a ``(count, d)`` sample."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("plus_minus_ratio needs a non-empty (count, d) array")
    return ratio_from_log_bumps(*log_bumps(samples))


@dataclass(frozen=True)
class Histogram2D:
    density: np.ndarray
    edges_i: np.ndarray
    edges_j: np.ndarray
    outside: int

    @property
    def bin_area(self):
        return np.diff(self.edges_i)[:, None] * np.diff(self.edges_j)[None, :]

    @property
    def centres(self):
        return 0.5 * (self.edges_i[1:] + self.edges_i[:-1]), 0.5 * (self.edges_j[1:] + self.edges_j[:-1])


def empirical_marginal(samples, i, j, bins=50, box=(-2.5, 2.5)) -> Histogram2D:
    """Histogram of ``(x_i, x_j)`` over ``box x box``, normalised to a density.

    Samples outside the box are dropped and counted in ``outside``.
    """
    samples = np.asarray(samples, dtype=float)
    d = samples.shape[1]
    if i == j:
        raise ValueError("empirical_marginal needs two distinct indices")
    if not (0 <= i < d and 0 <= j < d):
        raise IndexError(f"indices ({i}, {j}) out of range for d={d}")
    if bins < 2:
        raise ValueError("bins must be at least 2")
    edges = np.linspace(box[0], box[1], bins + 1)
    counts, _, _ = np.histogram2d(samples[:, i], samples[:, j], bins=[edges, edges])
    inside = int(counts.sum())
    area = (edges[1] - edges[0]) ** 2
    density = counts / (inside * area) if inside else counts
    return Histogram2D(density, edges, edges.copy(), samples.shape[0] - inside)


def tv_distance(h1: Histogram2D, h2: Histogram2D) -> float:
    if not (np.array_equal(h1.edges_i, h2.edges_i) and np.array_equal(h1.edges_j, h2.edges_j)):
        raise ValueError("histograms use different binnings")
    return float(0.5 * np.sum(np.abs(h1.density - h2.density) * h1.bin_area))


@dataclass(frozen=True)
class MomentTable:
    means: np.ndarray
    second: dict  # (i, j) -> E[x_i x_j]

    def rows(self):
        for (i, j), v in self.second.items():
            yield i, j, float(self.means[i]), float(self.means[j]), v


def moment_table(source, pairs=()) -> MomentTable:
    """First moments of every variable and ``E[x_i x_j]`` for ``pairs``.

    ``source`` is a ``(count, d)`` sample array or an :class:`FhtModel`.
    """
    if isinstance(source, FhtModel):
        for i, j in pairs:
            for k in (i, j):
                if not 0 <= k < source.d:
                    raise IndexError(f"index {k} out of range for d={source.d}")
        means, second = model_moments(source, pairs)
        return MomentTable(means, second)
    x = np.asarray(source, dtype=float)
    d = x.shape[1]
    second = {}
    for i, j in pairs:
        if not (0 <= i < d and 0 <= j < d):
            raise IndexError(f"indices ({i}, {j}) out of range for d={d}")
        second[(i, j)] = float(np.mean(x[:, i] * x[:, j]))
    return MomentTable(x.mean(axis=0), second)
