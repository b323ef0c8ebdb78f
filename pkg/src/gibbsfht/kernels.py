"""Langevin kernels (ULA and MALA) for a tempered potential ``U = beta * V``.

Every kernel works on batches: ``x`` has shape ``(..., d)`` and each leading
index is an independent chain. Randomness comes only from the explicit
``numpy.random.Generator`` passed in.
"""

from __future__ import annotations

import numpy as np

from .errors import DivergenceError


class ScaledTarget:
    """The density ``exp(-beta * V)`` for a potential object ``V``.

    ``potential`` must provide ``energy(x)`` and ``grad(x)`` for batched
    input; ``energy_and_grad`` is used when present.
    """

    def __init__(self, potential, beta):
        if not beta > 0:
            raise ValueError(f"beta must be positive, got {beta}")
        self.potential = potential
        self.beta = float(beta)

    def energy(self, x):
        return self.beta * np.asarray(self.potential.energy(x))

    def grad(self, x):
        return self.beta * np.asarray(self.potential.grad(x))

    def energy_and_grad(self, x):
        both = getattr(self.potential, "energy_and_grad", None)
        if both is None:
            return self.energy(x), self.grad(x)
        u, g = both(x)
        return self.beta * np.asarray(u), self.beta * np.asarray(g)


def ula_step(x, target, dt, rng=None, noise=None):
    """One unadjusted Langevin step ``x - dt grad U(x) + sqrt(2 dt) xi``.

    ``noise`` overrides the Gaussian draw (pass zeros for the pure drift).
    Raises :class:`DivergenceError` if the gradient is not finite.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        g = target.grad(x)
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient in ULA step")
    if noise is None:
        noise = rng.standard_normal(x.shape)
    return x - dt * g + np.sqrt(2.0 * dt) * noise


def _sqnorm(v):
    return np.einsum("...i,...i->...", v, v)


def mala_log_accept(x, y, target, dt, cache_x=None, cache_y=None):
    """Log acceptance ratio ``log(alpha)`` for a MALA move ``x -> y``.

    ``cache_x`` / ``cache_y`` are optional ``(U, grad U)`` pairs. Proposals
    with non-finite energy or gradient get ``-inf``.
    """
    ux, gx = target.energy_and_grad(x) if cache_x is None else cache_x
    uy, gy = target.energy_and_grad(y) if cache_y is None else cache_y
    fwd = _sqnorm(y - x + dt * gx) / (4.0 * dt)
    rev = _sqnorm(x - y + dt * gy) / (4.0 * dt)
    with np.errstate(invalid="ignore", over="ignore"):
        log_ratio = (ux - uy) + (fwd - rev)
    # a non-finite gradient at y makes ``rev`` non-finite too
    log_ratio = np.where(np.isfinite(log_ratio), log_ratio, -np.inf)
    return np.minimum(0.0, log_ratio)


def _mala_update(x, cache, target, dt, rng, noise=None):
    ux, gx = cache
    if noise is None:
        noise = rng.standard_normal(x.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        y = x - dt * gx + np.sqrt(2.0 * dt) * noise
        uy, gy = target.energy_and_grad(y)
    log_alpha = mala_log_accept(x, y, target, dt, (ux, gx), (uy, gy))
    log_u = np.log(rng.random(np.shape(log_alpha)))
    accept = log_u < log_alpha
    acc = accept[..., None]
    x_new = np.where(acc, y, x)
    u_new = np.where(accept, uy, ux)
    g_new = np.where(acc, gy, gx)
    return x_new, (u_new, g_new), accept


def mala_step(x, target, dt, rng, noise=None):
    """One Metropolis-adjusted Langevin step.

    Returns ``(x_new, accepted)``. A rejected chain keeps its state exactly.
    """
    x = np.asarray(x, dtype=float)
    x_new, _, accept = _mala_update(x, target.energy_and_grad(x), target, dt, rng, noise)
    return x_new, accept


def run_mala(x, target, dt, steps, rng):
    """Apply ``steps`` MALA steps to every chain in ``x``.

    Returns ``(x, acceptance_rate)``; the rate is 1.0 when ``steps == 0``.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    x = np.array(x, dtype=float)
    if steps == 0:
        return x, 1.0
    cache = target.energy_and_grad(x)
    accepted = 0
    for _ in range(steps):
        x, cache, acc = _mala_update(x, cache, target, dt, rng)
        accepted += int(np.sum(acc))
    return x, accepted / (steps * max(1, int(np.prod(np.shape(x)[:-1]))))
