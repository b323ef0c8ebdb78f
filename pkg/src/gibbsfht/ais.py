"""Ensemble-based annealed importance sampling.

An ensemble of ``N`` particles is carried from ``p0 ~ exp(-beta0 V)`` to
``p ~ exp(-beta V)`` through ``L`` tempered levels. At each level every
particle in turn receives a block of ULA steps, a snooker (stretch) move
against the rest of the ensemble, and a birth-death reweighting move; the
level closes with ``K`` MALA steps on all particles.

Classical weighted AIS is provided by :func:`ais_weighted`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DivergenceError
from .kernels import ScaledTarget, run_mala, ula_step

log = logging.getLogger(__name__)


class ScheduleKind(str, Enum):
    LINEAR = "linear"
    GEOMETRIC = "geometric"


@dataclass(frozen=True)
class AnnealingSchedule:
    """Inverse temperatures ``beta_l = beta(l / L)`` along a monotone path.

    Linear: ``beta(t) = beta0 + t (beta - beta0)``.
    Geometric: ``beta(t) = beta0 (beta / beta0) ** t``.
    """

    beta0: float
    beta: float
    levels: int
    kind: ScheduleKind = ScheduleKind.GEOMETRIC

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))

    def beta_of_t(self, t):
        if self.kind is ScheduleKind.LINEAR:
            return self.beta0 + t * (self.beta - self.beta0)
        return self.beta0 * (self.beta / self.beta0) ** t

    def beta_at(self, level):
        if level == self.levels:
            return float(self.beta)
        return float(self.beta_of_t(level / self.levels))

    def dbeta_at(self, level):
        """Derivative ``d beta(t) / dt`` at ``t = level / L``."""
        if self.kind is ScheduleKind.LINEAR:
            return float(self.beta - self.beta0)
        return self.beta_at(level) * math.log(self.beta / self.beta0)

    def betas(self):
        return np.array([self.beta_at(l) for l in range(self.levels + 1)])


def make_schedule(beta0, beta, levels, kind=ScheduleKind.GEOMETRIC) -> AnnealingSchedule:
    if not 0 < beta0 < beta:
        raise ValueError(f"need 0 < beta0 < beta, got beta0={beta0}, beta={beta}")
    if int(levels) != levels or levels < 1:
        raise ValueError(f"levels must be a positive integer, got {levels}")
    return AnnealingSchedule(float(beta0), float(beta), int(levels), ScheduleKind(kind))


def stretch_draw(rng, a=2.0):
    """Draw ``r`` from ``g(z) ~ 1/sqrt(z)`` on ``[1/a, a]``."""
    return (1.0 + (a - 1.0) * rng.random()) ** 2 / a


def snooker_log_accept(r, d, u_current, u_proposal):
    """Log acceptance of a snooker move with line parameter ``r``."""
    with np.errstate(invalid="ignore"):
        val = (d - 1) * math.log(abs(r)) - u_proposal + u_current
    if not np.isfinite(val):
        return -math.inf if not val > 0 else 0.0
    return min(0.0, val)


def snooker_move(particles, k, target, rng, stretch=2.0, r=None):
    """Snooker move of particle ``k`` along the line through another particle.

    Picks ``k' != k`` uniformly, proposes ``y = (1 - r) x_k' + r x_k`` with
    ``r`` from the stretch distribution and accepts with probability
    ``min(1, |r|**(d-1) p(y) / p(x_k))``. ``particles`` is updated in place
    and returned together with the accept flag.
    """
    n, d = particles.shape
    if n < 2:
        log.warning("snooker move skipped: ensemble has fewer than 2 particles")
        return particles, False
    other = int(rng.integers(n - 1))
    if other >= k:
        other += 1
    if r is None:
        r = stretch_draw(rng, stretch)
    xk, xo = particles[k], particles[other]
    y = (1.0 - r) * xo + r * xk
    with np.errstate(over="ignore", invalid="ignore"):
        u_y = float(target.energy(y))
    la = snooker_log_accept(r, d, float(target.energy(xk)), u_y)
    accept = math.log(rng.random()) < la
    if accept:
        particles[k] = y
    return particles, accept


def birth_death(particles, k, schedule, level, potential, rng):
    """Birth-death reweighting of particle ``k`` at annealing level ``level``.

    Rates are ``gamma_j = dbeta(l/L) * V(x_j)``. A particle with above-mean
    rate is killed (replaced by a copy of a uniformly chosen other particle)
    with probability ``1 - exp(-(gamma_k - mean) / L)``; otherwise it is
    duplicated over a uniformly chosen other particle with probability
    ``1 - exp((gamma_k - mean) / L)``. Updates in place; returns
    ``(particles, event)`` with ``event`` in ``{None, "kill", "duplicate"}``.
    """
    n = particles.shape[0]
    if n < 2:
        log.warning("birth-death move skipped: ensemble has fewer than 2 particles")
        return particles, None
    gamma = schedule.dbeta_at(level) * np.asarray(potential.energy(particles))
    excess = gamma[k] - gamma.mean()
    L = schedule.levels
    other = int(rng.integers(n - 1))
    if other >= k:
        other += 1
    u = rng.random()
    if excess > 0:
        if u < -math.expm1(-excess / L):
            particles[k] = particles[other]
            return particles, "kill"
    elif u < -math.expm1(excess / L):
        particles[other] = particles[k]
        return particles, "duplicate"
    return particles, None


@dataclass(frozen=True)
class AisParams:
    """Step sizes and move counts for :func:`ais_run`.

    ``ula_substeps=None`` runs ``round(1 / (L dt))`` ULA steps per particle
    and level, i.e. Langevin time ``1/L``.
    """

    dt: float
    mala_steps: int = 700
    ula_substeps: int | None = None
    stretch: float = 2.0
    snooker: bool = True
    birth_death: bool = True

    def substeps(self, levels):
        if self.ula_substeps is not None:
            return int(self.ula_substeps)
        return max(1, round(1.0 / (levels * self.dt)))


@dataclass
class AisResult:
    particles: np.ndarray
    mala_acceptance: list = field(default_factory=list)
    snooker_acceptance: list = field(default_factory=list)
    kills: int = 0
    duplicates: int = 0


def ais_run(particles, schedule, potential, params: AisParams, rng, checkpoint=None,
            checkpoint_every=None) -> AisResult:
    """Run the ensemble AIS + MALA sampler from ``beta0`` to ``beta``.

    ``particles`` (shape ``(N, d)``) should already be distributed as
    ``exp(-beta0 V)``. If given, ``checkpoint(x, level, mala_steps_done)``
    is called after each level's ensemble step and every
    ``checkpoint_every`` MALA steps.
    """
    x = np.array(particles, dtype=float)
    n = x.shape[0]
    if n < 2 and (params.snooker or params.birth_death):
        log.warning("ensemble of size %d: running plain Langevin dynamics", n)
    substeps = params.substeps(schedule.levels)
    result = AisResult(x)
    for level in range(1, schedule.levels + 1):
        target = ScaledTarget(potential, schedule.beta_at(level))
        accepted = 0
        for i in range(n):
            xi = x[i]
            for _ in range(substeps):
                xi = ula_step(xi, target, params.dt, rng)
            if not np.all(np.isfinite(xi)):
                raise DivergenceError(f"particle {i} diverged at level {level}")
            x[i] = xi
            if params.snooker and n >= 2:
                _, acc = snooker_move(x, i, target, rng, params.stretch)
                accepted += acc
            if params.birth_death and n >= 2:
                _, event = birth_death(x, i, schedule, level, potential, rng)
                result.kills += event == "kill"
                result.duplicates += event == "duplicate"
        result.snooker_acceptance.append(accepted / n if params.snooker and n >= 2 else float("nan"))
        if checkpoint is not None:
            checkpoint(x, level, 0)
        done = 0
        rates = []
        chunk = checkpoint_every or params.mala_steps
        while done < params.mala_steps:
            steps = min(chunk, params.mala_steps - done)
            x, rate = run_mala(x, target, params.dt, steps, rng)
            rates.append(rate * steps)
            done += steps
            if checkpoint is not None and checkpoint_every:
                checkpoint(x, level, done)
        result.mala_acceptance.append(sum(rates) / params.mala_steps if params.mala_steps else 1.0)
        log.debug("level %d beta=%.4g mala acc=%.3f", level, target.beta,
                  result.mala_acceptance[-1])
    result.particles = x
    return result


@dataclass
class WeightedSamples:
    states: np.ndarray
    log_weights: np.ndarray

    def normalized_weights(self):
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()


def ais_weighted(x0, schedule, potential, dt, steps_per_level, rng) -> WeightedSamples:
    """Classical weighted AIS with MALA transitions at the interior levels.

    ``x0`` holds one exact draw from ``exp(-beta0 V)`` per chain. The log
    weight accumulates ``U_{l-1}(s) - U_l(s)`` for ``l = 1..L``, so the mean
    weight estimates ``Z_L / Z_0`` of the unnormalised ``exp(-U_l)``.
    """
    s = np.array(x0, dtype=float)
    log_w = np.zeros(s.shape[0])
    for level in range(1, schedule.levels + 1):
        v = np.asarray(potential.energy(s))
        log_w += (schedule.beta_at(level - 1) - schedule.beta_at(level)) * v
        if level < schedule.levels:
            target = ScaledTarget(potential, schedule.beta_at(level))
            s, _ = run_mala(s, target, dt, steps_per_level, rng)
    return WeightedSamples(s, log_w)
