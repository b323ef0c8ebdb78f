"""Periodic Ginzburg-Landau lattice potentials.

The discretised energy on a chain (``dim = 1``) or square grid (``dim = 2``)
with mesh width ``h`` is::

    V(x) = h**dim * ( lam/2 * sum_{v~w} ((x_v - x_w)/h)**2
                      + 1/(4 lam) * sum_v ((1 - x_v**2)**2 + a x_v**3) )

where ``v~w`` runs over unordered nearest-neighbour pairs of the periodic
lattice and ``lam = lambda_factor * h``. States are stored as flat vectors;
grid states use row-major order of the ``m x m`` lattice.

All methods accept batched input of shape ``(..., d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Geometry(str, Enum):
    CHAIN_1D = "chain1d"
    GRID_2D = "grid2d"


@dataclass(frozen=True)
class PotentialSpec:
    geometry: Geometry
    d: int
    lambda_factor: float
    cubic_a: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "geometry", Geometry(self.geometry))
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"d must be an integer >= 2, got {self.d}")
        if self.geometry is Geometry.GRID_2D:
            m = math.isqrt(self.d)
            if m * m != self.d:
                raise ValueError(f"Grid2D needs a perfect-square d, got {self.d}")
        if not self.lambda_factor > 0:
            raise ValueError(f"lambda_factor must be positive, got {self.lambda_factor}")

    @property
    def side(self) -> int:
        """Number of sites along one lattice axis."""
        if self.geometry is Geometry.GRID_2D:
            return math.isqrt(self.d)
        return self.d

    @property
    def dim(self) -> int:
        return 2 if self.geometry is Geometry.GRID_2D else 1

    @property
    def h(self) -> float:
        return 1.0 / self.side

    @property
    def lam(self) -> float:
        return self.lambda_factor * self.h


class GinzburgLandau:
    """Energy and analytic gradient of a periodic GL lattice model.

    Instances are immutable; ``energy`` and ``grad`` are pure functions of
    their input.
    """

    def __init__(self, spec: PotentialSpec):
        self.spec = spec
        self.d = spec.d
        h, lam = spec.h, spec.lam
        self._prefactor = h**spec.dim
        # bond coefficient after pulling out h**dim: lam/2 * (1/h)**2
        self._bond = 0.5 * lam / h**2
        self._local = 1.0 / (4.0 * lam)
        self._a = float(spec.cubic_a)
        self._shape = (spec.side, spec.side) if spec.dim == 2 else (spec.d,)

    def __repr__(self):
        s = self.spec
        return (
            f"GinzburgLandau({s.geometry.value}, d={s.d}, "
            f"lambda_factor={s.lambda_factor}, cubic_a={s.cubic_a})"
        )

    def _lattice(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.d,):
            raise ValueError(f"expected trailing dimension {self.d}, got shape {x.shape}")
        return x.reshape(x.shape[:-1] + self._shape)

    def _axes(self):
        return range(-len(self._shape), 0)

    def _site_energy(self, y):
        """Per-site energy density: forward bonds plus the local term."""
        w = 1.0 - y * y
        e = self._local * (w * w)
        if self._a:
            e += self._local * self._a * (y * y * y)
        for ax in self._axes():
            diff = y - np.roll(y, -1, axis=ax)
            e += self._bond * (diff * diff)
        return e

    def _total(self, e, x):
        # einsum reduces short trailing axes much faster than sum
        out = self._prefactor * np.einsum("...i->...", e.reshape(np.shape(x)))
        return float(out) if np.ndim(out) == 0 else out

    def energy(self, x):
        """Potential energy ``V(x)``; a float for 1-D input, else an array."""
        y = self._lattice(x)
        return self._total(self._site_energy(y), x)

    def grad(self, x):
        """Analytic gradient of :meth:`energy`, same shape as ``x``."""
        y = self._lattice(x)
        lap = 2.0 * len(self._shape) * y
        for ax in self._axes():
            lap -= np.roll(y, -1, axis=ax) + np.roll(y, 1, axis=ax)
        local = -4.0 * y * (1.0 - y * y)
        if self._a:
            local += 3.0 * self._a * y * y
        g = self._prefactor * (2.0 * self._bond * lap + self._local * local)
        return g.reshape(np.shape(x))

    def energy_and_grad(self, x):
        return self.energy(x), self.grad(x)


def build_potential(spec: PotentialSpec) -> GinzburgLandau:
    return GinzburgLandau(spec)


def energy(pot, x):
    return pot.energy(x)


def grad(pot, x):
    return pot.grad(x)
