"""Standard runs and the acceptance criteria built on them.

Trajectories are cached on disk under ``$HKDV_LAB_CACHE`` (default
``~/.cache/hkdv_lab``), keyed by the configuration hash, and in memory for the
lifetime of the process.
"""

from __future__ import annotations

import os
import time
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .evolution import (
    NonlinearitySpec,
    Perturbation,
    Snapshot,
    SolverState,
    Trajectory,
    conserved_quantities,
    dyadic_schedule,
    evolve,
    outer_mass_fraction,
)
from .linear_dispersion import DispersionModel, propagate
from .persist import PersistError, load_trajectory, save_trajectory
from .spectral_core import Field, Grid, norm

# ---------------------------------------------------------------------------
# data and runs


def data_regularity(cfg: ExperimentConfig) -> float:
    """Sobolev index of the data-size norm: (m-1)/(2m), or (p-1)/(2p) with a perturbation."""
    if cfg.p is not None:
        return (cfg.p - 1) / (2 * cfg.p)
    return (cfg.m - 1) / (2 * cfg.m)


def data_size(u: Field, s: float) -> float:
    """||u||_{H^s} + ||x u||_{L^2}."""
    return norm(u, "hs", s=s) + norm(Field(u.grid, u.grid.x * u.values))


def initial_data(cfg: ExperimentConfig, grid: Grid | None = None) -> Field:
    grid = grid or Grid(cfg.n, cfg.length)
    x, w = grid.x, cfg.width
    if cfg.family == "gaussian":
        shape = np.exp(-(x**2) / (2 * w * w))
    elif cfg.family == "gaussian_derivative":
        shape = -(x / (w * w)) * np.exp(-(x**2) / (2 * w * w))
    else:
        shape = np.load(cfg.samples)
        if shape.shape != (grid.n,):
            raise ValueError(f"custom samples must have shape ({grid.n},), got {shape.shape}")
    base = Field(grid, shape)
    if cfg.epsilon == 0:
        return Field.zeros(grid)
    return base * (cfg.epsilon / data_size(base, data_regularity(cfg)))


def nonlinearity(cfg: ExperimentConfig) -> NonlinearitySpec:
    pert = Perturbation(cfg.p, cfg.coefficient) if cfg.p is not None and cfg.coefficient != 0 else None
    return NonlinearitySpec(cfg.m, 1.0 if cfg.nonlinear else 0.0, pert if cfg.nonlinear else None)


def schedule(cfg: ExperimentConfig) -> list[float]:
    return dyadic_schedule(0.0, cfg.t_end, per_octave=cfg.per_octave, t_first=1.0)


def conservation_observer(pert: Perturbation | None, m: int):
    def observe(snap: Snapshot, _state) -> dict:
        c = conserved_quantities(snap.u, m, pert)
        return {"mass": c.mass, "momentum": c.momentum, "energy": c.energy}

    return observe


def cache_root() -> Path:
    return Path(os.environ.get("HKDV_LAB_CACHE", Path.home() / ".cache" / "hkdv_lab"))


_MEMO: dict[str, Trajectory] = {}


def simulate(cfg: ExperimentConfig, use_cache: bool = True) -> Trajectory:
    """Trajectory from t = 0 with snapshots at t = 0 and on the dyadic schedule."""
    key = cfg.hash()
    if use_cache and key in _MEMO:
        return _MEMO[key]
    cdir = cache_root() / key[:16]
    if use_cache and (cdir / "snapshots.npy").exists():
        try:
            traj = load_trajectory(cdir)
            _MEMO[key] = traj
            return traj
        except PersistError:
            pass
    traj = _run(cfg)
    if use_cache:
        try:
            save_trajectory(traj, cdir)
        except PersistError:
            pass
        _MEMO[key] = traj
    return traj


def _run(cfg: ExperimentConfig) -> Trajectory:
    u0 = initial_data(cfg)
    model = DispersionModel(cfg.m)
    nl = nonlinearity(cfg)
    times = schedule(cfg)
    started = time.perf_counter()
    if not cfg.nonlinear:
        obs = conservation_observer(None, cfg.m)
        traj = Trajectory(model=model, nonlin=nl)
        for t in [0.0] + times:
            u = propagate(u0, t, model)
            snap = Snapshot(t, u)
            frac = outer_mass_fraction(u)
            traj.snapshots.append(snap)
            traj.diagnostics.append({"t": t, "wrap_fraction": frac, **obs(snap, None)})
            traj.wrap_fraction_max = max(traj.wrap_fraction_max, frac)
        if traj.wrap_fraction_max > 1e-8:
            traj.flags.append(f"wrap-around: outer-box L2 fraction {traj.wrap_fraction_max:.2e}")
    else:
        state = SolverState(0.0, u0, model, nl)
        traj = evolve(state, cfg.t_end, observers=[conservation_observer(nl.perturbation, cfg.m)],
                      schedule=times, dt0=cfg.dt0, tol=cfg.tol)
    traj.diagnostics[0]["wall_seconds"] = time.perf_counter() - started
    return traj


# standard configurations of the acceptance suite
PRODUCTION = ExperimentConfig()
ZERO_MASS = PRODUCTION.replace(family="gaussian_derivative")
PERTURBED = PRODUCTION.replace(p=4.2, coefficient=0.5)
FREE = PRODUCTION.replace(nonlinear=False)
