"""Experiment stages behind the command line: sample, fit, diagnose.

Every stage is a pure function of the resolved config and the master seed.
Ensembles get independent streams spawned from ``SeedSequence(seed)`` and
their results are merged in ensemble order, so outputs do not depend on the
number of worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .ais import AisParams, ais_run, make_schedule
from .config import RunConfig
from .diagnostics import (
    empirical_marginal,
    log_bumps,
    moment_table,
    plus_minus_ratio,
    ratio_from_log_bumps,
)
from .errors import ConfigError
from .fht import FourierBasis, SiteOrder, build_tree, fht_eval, fht_sample, marginal_2d
from .formats import read_model, read_samples, write_model, write_samples
from .kernels import ScaledTarget, run_mala
from .lattice import Geometry, PotentialSpec, build_potential
from .sketch import sketch_fit

log = logging.getLogger(__name__)

GRID_POINTS = 200
GRID_BOX = (-2.5, 2.5)
HIST_BINS = 50
FIT_CHECKS = 5
MODEL_RATIO_SAMPLES = 10000


def potential_from_config(cfg: RunConfig):
    p = cfg.potential
    return build_potential(PotentialSpec(Geometry(p.geometry), p.d, p.lambda_factor, p.cubic_a))


def site_order(cfg: RunConfig) -> SiteOrder:
    order = cfg.fht.site_order
    if order == "auto":
        order = "morton2d" if cfg.potential.geometry == "grid2d" else "identity"
    return SiteOrder.MORTON2D if order == "morton2d" else SiteOrder.IDENTITY


def ula_substeps(cfg: RunConfig) -> int:
    s = cfg.sampler
    return s.ula_substeps or max(1, round(1.0 / (s.levels * s.step)))


def burnin_steps(cfg: RunConfig) -> int:
    return round(cfg.sampler.burnin_time / cfg.sampler.dt)


def baseline_steps(cfg: RunConfig) -> int:
    """MALA(beta) step count: explicit time, or the AIS run's per-particle budget."""
    s = cfg.sampler
    if s.baseline_time > 0:
        return round(s.baseline_time / s.dt)
    return burnin_steps(cfg) + s.levels * (ula_substeps(cfg) + s.mala_steps)


@dataclass
class Trace:
    """Checkpointed bump statistics of one ensemble (rows: checkpoints)."""

    phase: list = field(default_factory=list)
    level: list = field(default_factory=list)
    time: list = field(default_factory=list)
    log_gp: list = field(default_factory=list)
    log_gm: list = field(default_factory=list)

    def record(self, phase, level, time, x):
        gp, gm = log_bumps(x)
        self.phase.append(phase)
        self.level.append(level)
        self.time.append(time)
        self.log_gp.append(gp)
        self.log_gm.append(gm)


@dataclass
class EnsembleRun:
    particles: np.ndarray
    trace: Trace
    mala_acceptance: list
    snooker_acceptance: list


def initial_particles(cfg: RunConfig, rng):
    n, d = cfg.sampler.particles, cfg.potential.d
    mode = cfg.sampler.init
    if mode == "all_plus":
        return np.ones((n, d))
    if mode == "all_minus":
        return -np.ones((n, d))
    return rng.standard_normal((n, d))


def _mala_traced(x, target, cfg, steps, rng, trace, phase, level, t0):
    """``steps`` MALA steps with a checkpoint every ``trace_every`` steps."""
    s = cfg.sampler
    done, accepted = 0, 0.0
    while done < steps:
        chunk = min(s.trace_every, steps - done)
        x, rate = run_mala(x, target, s.step, chunk, rng)
        accepted += rate * chunk
        done += chunk
        trace.record(phase, level, t0 + done * s.dt, x)
    return x, accepted / steps if steps else 1.0


def run_ensemble(cfg: RunConfig, seed) -> EnsembleRun:
    """Burn-in MALA(beta0) followed by ensemble AIS, for one ensemble."""
    s = cfg.sampler
    rng = np.random.default_rng(seed)
    potential = potential_from_config(cfg)
    x = initial_particles(cfg, rng)
    trace = Trace()
    trace.record("burnin", 0, 0.0, x)
    x, _ = _mala_traced(x, ScaledTarget(potential, s.beta0), cfg, burnin_steps(cfg), rng,
                        trace, "burnin", 0, 0.0)
    t_start = burnin_steps(cfg) * s.dt
    substeps = ula_substeps(cfg)
    per_level = (substeps + s.mala_steps) * s.dt

    def checkpoint(xs, level, done):
        t = t_start + (level - 1) * per_level + (substeps + done) * s.dt
        trace.record("ais", level, t, xs)

    schedule = make_schedule(s.beta0, s.beta, s.levels, s.schedule)
    params = AisParams(s.step, s.mala_steps, substeps, s.stretch, s.snooker, s.birth_death)
    result = ais_run(x, schedule, potential, params, rng, checkpoint, s.trace_every)
    return EnsembleRun(result.particles, trace, result.mala_acceptance, result.snooker_acceptance)


def run_baseline(cfg: RunConfig, seed) -> EnsembleRun:
    """Plain MALA(beta) from the same initial state with the matching budget."""
    s = cfg.sampler
    rng = np.random.default_rng(seed)
    potential = potential_from_config(cfg)
    x = initial_particles(cfg, rng)
    trace = Trace()
    trace.record("baseline", 0, 0.0, x)
    x, rate = _mala_traced(x, ScaledTarget(potential, s.beta), cfg, baseline_steps(cfg), rng,
                           trace, "baseline", 0, 0.0)
    return EnsembleRun(x, trace, [rate], [])


def _map(fn, cfg, seeds, workers):
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
            return list(pool.map(fn, [cfg] * len(seeds), seeds))
    return [fn(cfg, seed) for seed in seeds]


def ensemble_seeds(seed, n_ensembles):
    """``(ais_seeds, baseline_seeds)`` spawned from the master seed."""
    ais_root, base_root = np.random.SeedSequence(seed).spawn(2)
    return ais_root.spawn(n_ensembles), base_root.spawn(n_ensembles)


@dataclass
class SamplingResult:
    samples: np.ndarray
    trace_rows: list
    runs: list


def pooled_trace(runs):
    """One row per checkpoint with the pooled ratio over all ensembles."""
    first = runs[0].trace
    rows = []
    for c in range(len(first.time)):
        gp = np.concatenate([r.trace.log_gp[c] for r in runs])
        gm = np.concatenate([r.trace.log_gm[c] for r in runs])
        rep = ratio_from_log_bumps(gp, gm)
        rows.append((first.phase[c], first.level[c], first.time[c], rep.iota, rep.u_plus,
                     rep.u_minus))
    return rows


def sample(cfg: RunConfig, baseline=False):
    """Run every ensemble (and optionally the baseline); returns ``(ais, baseline_or_None)``."""
    s = cfg.sampler
    if s.particles < 2:
        log.warning("ensemble of %d particle(s): snooker and birth-death moves disabled",
                    s.particles)
    ais_seeds, base_seeds = ensemble_seeds(cfg.io.seed, s.n_ensembles)
    runs = _map(run_ensemble, cfg, ais_seeds, cfg.io.workers)
    ais = SamplingResult(np.concatenate([r.particles for r in runs]), pooled_trace(runs), runs)
    log.info("AIS final iota = %.4f over %d particles", ais.trace_rows[-1][3], ais.samples.shape[0])
    base = None
    if baseline:
        runs = _map(run_baseline, cfg, base_seeds, cfg.io.workers)
        base = SamplingResult(np.concatenate([r.particles for r in runs]), pooled_trace(runs), runs)
        log.info("baseline final iota = %.4f", base.trace_rows[-1][3])
    return ais, base


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


TRACE_HEADER = ("phase", "level", "time", "iota", "u_plus", "u_minus")


def write_manifest(out, command, cfg: RunConfig, **extra):
    os.makedirs(out, exist_ok=True)
    doc = {"version": __version__, "command": command, "config": cfg.to_dict(), **extra}
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_sample(cfg: RunConfig, out, baseline=False):
    os.makedirs(out, exist_ok=True)
    ais, base = sample(cfg, baseline)
    write_samples(os.path.join(out, "samples.gls"), ais.samples)
    write_csv(os.path.join(out, "trace.csv"), TRACE_HEADER, ais.trace_rows)
    if base is not None:
        write_samples(os.path.join(out, "baseline_samples.gls"), base.samples)
        write_csv(os.path.join(out, "baseline_trace.csv"), TRACE_HEADER, base.trace_rows)
    return ais, base


def cmd_fit(cfg: RunConfig, samples_path, out):
    x, w = read_samples(samples_path)
    if x.shape[1] != cfg.potential.d:
        raise ConfigError(f"{samples_path}: sample dimension {x.shape[1]} != potential.d {cfg.potential.d}")
    d = x.shape[1]
    if d < 2 or d & (d - 1):
        raise ConfigError(f"fitting needs d to be a power of two, got {d}")
    tree = build_tree(d, site_order(cfg))
    f = cfg.fht
    model = sketch_fit(x, tree, FourierBasis(f.q, f.half_width), f.rank, f.oversampling,
                       f.sketch_seed, f.svd_tol, weights=w)
    os.makedirs(out, exist_ok=True)
    write_model(os.path.join(out, "model.fht"), model)
    ranks = model.ranks()
    for node in tree.all_nodes()[1:]:
        log.info("edge %s: effective rank %d", node, ranks[node])
    write_csv(os.path.join(out, "ranks.csv"), ("level", "k", "rank"),
              [(lvl, k, ranks[(lvl, k)]) for lvl, k in tree.all_nodes()[1:]])
    count = min(FIT_CHECKS, x.shape[0])
    values = fht_eval(model, x[:count])
    write_csv(os.path.join(out, "fit_checks.csv"), ("sample", "value"),
              [(i, float(v)) for i, v in enumerate(values)])
    return model


def _check_pairs(pairs, d):
    for i, j in pairs:
        if i == j or not (0 <= i < d and 0 <= j < d):
            raise ConfigError(f"invalid pair ({i + 1}, {j + 1}) for d={d} (pairs are 1-based)")


def cmd_diagnose(out, samples=None, model=None, pairs=(), baseline=None, seed=0):
    """Write ratio, moment and marginal CSVs. Pairs are 0-based here.

    ``samples`` / ``baseline`` are arrays or ``.gls`` paths, ``model`` an
    :class:`FhtModel` or ``.fht`` path.
    """
    if samples is None and model is None and baseline is None:
        raise ConfigError("diagnose needs a sample file or a model file")
    if isinstance(samples, (str, os.PathLike)):
        samples = read_samples(samples)[0]
    if isinstance(baseline, (str, os.PathLike)):
        baseline = read_samples(baseline)[0]
    if isinstance(model, (str, os.PathLike)):
        model = read_model(model)
    dims = {a.shape[1] for a in (samples, baseline) if a is not None}
    if model is not None:
        dims.add(model.d)
    if len(dims) != 1:
        raise ConfigError(f"inputs disagree on dimension: {sorted(dims)}")
    d = dims.pop()
    pairs = [tuple(p) for p in pairs]
    _check_pairs(pairs, d)
    os.makedirs(out, exist_ok=True)

    sources = [(name, arr) for name, arr in (("samples", samples), ("baseline", baseline))
               if arr is not None]
    ratio_rows, moment_rows, mean_rows = [], [], []
    for name, arr in sources:
        rep = plus_minus_ratio(arr)
        ratio_rows.append((name, rep.u_plus, rep.u_minus, rep.iota, rep.sample_count))
    if model is not None:
        if samples is None:
            drawn = fht_sample(model, MODEL_RATIO_SAMPLES, np.random.default_rng(seed))
            rep = plus_minus_ratio(drawn)
            ratio_rows.append(("model", rep.u_plus, rep.u_minus, rep.iota, rep.sample_count))
        sources.append(("model", model))
    for name, src in sources:
        table = moment_table(src, pairs)
        mean_rows += [(name, k + 1, float(m)) for k, m in enumerate(table.means)]
        moment_rows += [(name, i + 1, j + 1, mi, mj, v) for i, j, mi, mj, v in table.rows()]
    write_csv(os.path.join(out, "ratio.csv"),
              ("source", "u_plus", "u_minus", "iota", "sample_count"), ratio_rows)
    write_csv(os.path.join(out, "means.csv"), ("source", "site", "mean"), mean_rows)
    write_csv(os.path.join(out, "moments.csv"),
              ("source", "i", "j", "mean_i", "mean_j", "second"), moment_rows)

    grid = np.linspace(*GRID_BOX, GRID_POINTS)
    for i, j in pairs:
        tag = f"{i + 1}_{j + 1}"
        for name, src in sources:
            if name == "model":
                dens = marginal_2d(src, i, j, grid, grid)
                gi, gj = grid, grid
            else:
                h = empirical_marginal(src, i, j, HIST_BINS, GRID_BOX)
                dens = h.density
                gi, gj = h.centres
            rows = ((a, b, dens[p, q]) for p, a in enumerate(gi) for q, b in enumerate(gj))
            write_csv(os.path.join(out, f"marginal_{name}_{tag}.csv"),
                      (f"x{i + 1}", f"x{j + 1}", "density"), rows)
    return ratio_rows


def mass_in_balls(model, i, j, centres, radius=0.5, points=GRID_POINTS, box=GRID_BOX):
    """Fraction of a model's ``(x_i, x_j)`` marginal mass inside each ball.

    Uses the signed marginal on a trapezoid grid; the denominator is the
    total grid mass.
    """
    grid = np.linspace(*box, points)
    dens = marginal_2d(model, i, j, grid, grid)
    return _ball_fractions(dens, grid, centres, radius)


def _ball_fractions(dens, grid, centres, radius):
    w = np.full(grid.size, grid[1] - grid[0])
    w[0] = w[-1] = w[0] / 2
    cell = w[:, None] * w[None, :] * dens
    total = cell.sum()
    gi, gj = np.meshgrid(grid, grid, indexing="ij")
    return [float(cell[(gi - a) ** 2 + (gj - b) ** 2 <= radius**2].sum() / total)
            for a, b in centres]


def sample_mass_in_balls(samples, i, j, centres, radius=0.5):
    """Fraction of samples whose ``(x_i, x_j)`` lies in each ball."""
    x = np.asarray(samples)
    return [float(np.mean((x[:, i] - a) ** 2 + (x[:, j] - b) ** 2 <= radius**2))
            for a, b in centres]


FOUR_PEAKS = ((1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0))


def time_budget(cfg: RunConfig):
    """De-scaled time of the burn-in + AIS run, for reporting."""
    s = cfg.sampler
    return burnin_steps(cfg) * s.dt + s.levels * (ula_substeps(cfg) + s.mala_steps) * s.dt


__all__ = [
    "FOUR_PEAKS",
    "baseline_steps",
    "burnin_steps",
    "cmd_diagnose",
    "cmd_fit",
    "cmd_sample",
    "ensemble_seeds",
    "mass_in_balls",
    "potential_from_config",
    "run_baseline",
    "run_ensemble",
    "sample",
    "sample_mass_in_balls",
    "time_budget",
    "write_manifest",
]
