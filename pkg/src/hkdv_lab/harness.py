"""Command line entry point: ``hkdv-lab <subcommand> [options]``.

Every subcommand reads an optional key-value config (``--config``), applies
flag overrides (``--grid.n 4096`` or ``--set grid.n=4096``) and writes its
artifacts under the output directory, which ``HKDV_LAB_OUT`` overrides.

Exit codes: 0 when every check passes, 1 when any check fails, 2 on
configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, ExperimentConfig
from .persist import PersistError, RunManifest, save_trajectory, to_jsonable, write_csv, write_figure_note, write_series

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


# ---------------------------------------------------------------------------
# configuration


def _flag(key: str) -> str:
    return "--" + key


def _dest(key: str) -> str:
    return "cfg__" + key.replace(".", "__")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration (flags mirror config keys)")
    g.add_argument("--config", help="key = value config file")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    for key, (_, _, doc) in cfgmod.SCHEMA.items():
        g.add_argument(_flag(key), dest=_dest(key), metavar="V", help=doc)


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = cfgmod.load(args.config) if args.config else ExperimentConfig()
    items: dict[str, str] = {}
    for key in cfgmod.SCHEMA:
        v = getattr(args, _dest(key), None)
        if v is not None:
            items[key] = v
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=VALUE")
        k, v = item.split("=", 1)
        items[k.strip()] = v.strip()
    cfg = cfgmod.apply_overrides(cfg, items) if items else cfgmod.validate(cfg)
    env_out = os.environ.get("HKDV_LAB_OUT")
    if env_out:
        cfg = cfg.replace(out=env_out)
    return cfg


def _out(cfg: ExperimentConfig, sub: str) -> Path:
    d = Path(cfg.out) / sub
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PersistError(f"cannot create {d}: {exc}") from exc
    return d


def _manifest(cfg: ExperimentConfig) -> RunManifest:
    return RunManifest(config_hash=cfg.hash(), config=cfg.to_dict())


def _finish(man: RunManifest, d: Path) -> int:
    man.write(d)
    for e in man.ledger:
        print(f"[{'PASS' if e['pass'] else 'FAIL'}] {e['criterion']}")
    print(f"manifest: {d / 'manifest.json'}")
    return EXIT_PASS if man.all_pass() else EXIT_FAIL


# ---------------------------------------------------------------------------
# subcommands


def run_simulation(cfg: ExperimentConfig, directory: Path, use_cache: bool = True) -> RunManifest:
    """Evolve, persist and summarize one configuration; the manifest is deterministic."""
    from .evolution import sigma_norm
    from .experiments import simulate
    from .spectral_core import norm

    traj = simulate(cfg, use_cache=use_cache)
    save_trajectory(traj, directory / "trajectory")
    rows = []
    for s, diag in zip(traj.snapshots, traj.diagnostics):
        rows.append((s.t, norm(s.u), norm(s.u, "linf"), sigma_norm(s.u, cfg.m), diag["wrap_fraction"],
                     diag["mass"], diag["momentum"], diag["energy"]))
    write_csv(directory / "norms.csv", ["t", "l2", "linf", "sigma", "wrap_fraction", "mass", "momentum", "energy"],
              rows)
    man = _manifest(cfg)
    man.tables["norms"] = "norms.csv"
    arr = np.array([r[5:] for r in rows])
    drift = {}
    for i, name in enumerate(("mass", "momentum", "energy")):
        ref = abs(arr[0, i])
        drift[name] = float(np.max(np.abs(arr[:, i] - arr[0, i])) / ref) if ref > 0 else float(np.max(np.abs(arr[:, i])))
    man.conserved_drift = drift
    man.flags.extend(traj.flags)
    man.record("wrap-around monitor (outer-box fraction < 1e-8)", not traj.flags,
               max_fraction=traj.wrap_fraction_max)
    man.record("finite solution", bool(all(np.isfinite(r[1]) for r in rows)))
    return man


def cmd_simulate(args, cfg: ExperimentConfig) -> int:
    d = _out(cfg, f"simulate_{cfg.hash()[:12]}")
    man = run_simulation(cfg, d, use_cache=not args.no_cache)
    print(json.dumps(man.conserved_drift))
    return _finish(man, d)


def cmd_linear(args, cfg: ExperimentConfig) -> int:
    from .acceptance import linear_decay_series
    from .fitting import fit_decay_exponent

    d = _out(cfg, "linear")
    times = np.geomspace(args.t_min, args.t_max, args.samples)
    man = _manifest(cfg)
    for k, ser in linear_decay_series(cfg.m, times, sigma=args.sigma, ks=range(args.kmax + 1)).items():
        fit = fit_decay_exponent(ser)
        name = f"sup_d{k}.csv"
        write_series(d / name, ser, f"sup_abs_d{k}_u")
        man.tables[f"sup_d{k}"] = name
        expected = -(k + 1) / cfg.m
        man.add_constant(f"slope_k{k}", fit.slope)
        man.record(f"linear decay k={k}: slope {fit.slope:.4f} vs {expected:.4f} (tol {args.tol})",
                   abs(fit.slope - expected) <= args.tol, slope=fit.slope, expected=expected)
    write_figure_note(d / "figure.txt", "linear decay", "t (log)", "sup |d^k u| (log)",
                      sorted(man.tables.values()), "fitted slopes in manifest constants")
    return _finish(man, d)


def cmd_packets(args, cfg: ExperimentConfig) -> int:
    from .acceptance import C_STAR_M4, _flatness
    from .experiments import simulate
    from .wave_packets import measure_constants, probe, write_probe_table

    d = _out(cfg, f"packets_{cfg.hash()[:12]}")
    traj = simulate(cfg)
    consts = measure_constants(cfg.m) if cfg.m != 4 or args.measure else None
    c_star = consts.C_star if consts else C_STAR_M4
    man = _manifest(cfg)
    man.add_constant("C_star", c_star)
    if consts:
        man.add_constant("C_1", consts.C1)
        man.add_constant("C_2", consts.C2)
    probes = [probe(s.u, s.t, v, cfg.m, c_star) for v in cfg.velocities for s in traj.snapshots if s.t >= 1.0]
    write_probe_table(d / "probes.csv", probes)
    man.tables["probes"] = "probes.csv"
    ok, flat = _flatness(traj, cfg.epsilon, cfg.velocities)
    for v, r in flat.items():
        name = f"gamma_drift_v{v}.csv"
        write_series(d / name, r["series"], "gamma_drift")
        man.tables[f"gamma_drift_v{v}"] = name
        man.add_constant(f"C_fit_v{v}", r["C_fit"])
        man.record(f"gamma flatness v={v}: C_fit {r['C_fit']:.3f} <= 10", r["C_fit"] <= 10.0,
                   in_omega_count=r["in_omega_count"])
    man.flags.extend(traj.flags)
    write_figure_note(d / "figure.txt", "gamma drift", "t (log)", "|gamma(t,v) - gamma(1,v)| (log)",
                      [f"gamma_drift_v{v}.csv" for v in flat])
    return _finish(man, d)


def cmd_profile(args, cfg: ExperimentConfig) -> int:
    from .experiments import simulate
    from .self_similar import compare_Q, extract_Q, solve_Q_picard, write_profile_csv

    d = _out(cfg, f"profile_{cfg.hash()[:12]}")
    traj = simulate(cfg)
    u0 = traj.snapshots[0].u
    mass = float(np.sum(u0.values) * u0.grid.dx)
    qe = extract_Q(traj, cfg.m)
    man = _manifest(cfg)
    man.add_constant("mass", mass)
    man.add_constant("extract_spread", qe.diagnostics.get("extrapolation_spread"))
    profiles = [qe]
    tol_mass = 1e-3 * max(abs(mass), 1e-300)
    man.record("extracted mass within 1e-3 relative", abs(qe.mass - mass) <= tol_mass or mass == 0, mass=qe.mass)
    if not args.no_picard and mass != 0:
        qp = solve_Q_picard(mass, cfg.m)
        profiles.append(qp)
        sup, l2 = compare_Q(qe, qp, args.window)
        man.add_constant("sup_difference", sup)
        man.add_constant("picard_residual", qp.residual)
        man.record(f"extract vs Picard sup {sup:.2e} <= {5e-3 * cfg.epsilon:.1e}", sup <= 5e-3 * cfg.epsilon)
        man.record(f"Picard residual {qp.residual:.1e} <= 1e-6", qp.residual <= 1e-6)
    write_profile_csv(d / "profiles.csv", profiles, window=args.window)
    man.tables["profiles"] = "profiles.csv"
    man.flags.extend(traj.flags)
    write_figure_note(d / "figure.txt", "self-similar profile", "y", "Q(y)", ["profiles.csv"],
                      "one curve per provenance")
    return _finish(man, d)


def cmd_regions(args, cfg: ExperimentConfig) -> int:
    from .acceptance import REGION_NORMS, region_tables
    from .asymptotics import compensated_W
    from .experiments import nonlinearity, simulate
    from .self_similar import extract_Q

    d = _out(cfg, f"regions_{cfg.hash()[:12]}")
    traj = simulate(cfg)
    last = traj.snapshots[-1]
    Q = extract_Q(traj, cfg.m)
    W = compensated_W(last.u, last.t, cfg.m)
    rows = region_tables(traj, cfg.epsilon, args.const, nonlinearity(cfg).perturbation, Q=Q, W=W)
    keys = list(rows[0])
    write_csv(d / "regions.csv", keys, [[r[k] for k in keys] for r in rows])
    man = _manifest(cfg)
    man.tables["regions"] = "regions.csv"
    for name in REGION_NORMS:
        a = np.array([r[name] for r in rows])
        lo, hi = float((a / a[0]).min()), float((a / a[0]).max())
        man.record(f"{name} band [{lo:.3f}, {hi:.3f}] within [1/5, 5]", 0.2 <= lo and hi <= 5.0)
    man.flags.extend(traj.flags)
    write_figure_note(d / "figure.txt", "weighted region norms", "t (log)", "norm (log)", ["regions.csv"])
    return _finish(man, d)


def cmd_q0(args, cfg: ExperimentConfig) -> int:
    from .linear_dispersion import tabulate_q0

    d = _out(cfg, "q0")
    ys = np.linspace(args.ymin, args.ymax, args.count)
    path = tabulate_q0(d / f"q0_m{cfg.m}.csv", cfg.m, ys)
    print(f"wrote {path}")
    return EXIT_PASS


def cmd_report(args, cfg: ExperimentConfig) -> int:
    from .acceptance import CRITERIA, run_criterion

    d = _out(cfg, "report")
    ids = sorted(CRITERIA) if not args.only else [int(i) for i in args.only.split(",")]
    man = _manifest(cfg)
    results = []
    for i in ids:
        res = run_criterion(i)
        print(res.line(), flush=True)
        results.append(res)
        man.record(f"{i}. {res.title}", res.passed, summary=res.summary, seconds=res.seconds)
        for name, ser in _series_in(res.details):
            fname = f"c{i:02d}_{name}.csv"
            write_series(d / fname, ser)
            man.tables[f"c{i}_{name}"] = fname
    (d / "details.json").write_text(json.dumps(to_jsonable([r.to_dict() for r in results]), indent=1))
    man.write(d)
    print(f"manifest: {d / 'manifest.json'}")
    return EXIT_PASS if man.all_pass() else EXIT_FAIL


def _series_in(details, prefix: str = ""):
    """Yield (name, [(t, value), ...]) for every fitted series nested in ``details``."""
    if isinstance(details, dict):
        for k, v in details.items():
            name = f"{prefix}{k}".replace(".", "p")
            if _is_series(v):
                yield name, v
            else:
                yield from _series_in(v, name + "_")


def _is_series(v) -> bool:
    return (isinstance(v, list) and len(v) > 1
            and all(isinstance(r, (list, tuple)) and len(r) == 2 and all(isinstance(x, (int, float)) for x in r)
                    for r in v))


def _sweep_one(cfg_dict: dict, root: str, use_cache: bool) -> tuple[str, str, bool]:
    cfg = cfgmod.validate(ExperimentConfig(**{**cfg_dict, "velocities": tuple(cfg_dict["velocities"])}))
    d = Path(root) / f"run_{cfg.hash()[:12]}"
    d.mkdir(parents=True, exist_ok=True)
    man = run_simulation(cfg, d, use_cache=use_cache)
    path = man.write(d)
    return cfg.hash(), hashlib.sha256(path.read_bytes()).hexdigest(), man.all_pass()


def sweep_configs(base: ExperimentConfig, vary: list[str]) -> list[ExperimentConfig]:
    axes = []
    for item in vary:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=V1,V2,...")
        key, vals = item.split("=", 1)
        key = key.strip()
        if key not in cfgmod.SCHEMA:
            raise ConfigError(key, "unknown key")
        axes.append([(key, v.strip()) for v in vals.split(",") if v.strip()])
    return [cfgmod.apply_overrides(base, dict(combo)) for combo in itertools.product(*axes)]


def run_sweep(configs, root: Path, jobs: int, use_cache: bool = False) -> list[tuple[str, str, bool]]:
    payload = [(c.to_dict(), str(root), use_cache) for c in configs]
    if jobs <= 1:
        return [_sweep_one(*p) for p in payload]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_one, *zip(*payload)))


def cmd_sweep(args, cfg: ExperimentConfig) -> int:
    configs = sweep_configs(cfg, args.vary)
    root = _out(cfg, "sweep")
    results = run_sweep(configs, root, args.jobs, use_cache=not args.no_cache)
    man = _manifest(cfg)
    for c, (h, digest, ok) in zip(configs, results):
        man.record(f"run {h[:12]} (m={c.m}, eps={c.epsilon})", ok, manifest_sha256=digest)
    if args.check_serial:
        serial = run_sweep(configs, _out(cfg, "sweep_serial"), 1, use_cache=False)
        same = [a[1] == b[1] for a, b in zip(results, serial)]
        man.record("parallel manifests identical to serial", all(same))
    return _finish(man, root)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hkdv-lab", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="evolve and record snapshots, norms and conserved quantities")
    s.add_argument("--no-cache", action="store_true", help="recompute even if a cached trajectory exists")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("linear", help="free-flow decay rates of sup |d^k u|")
    s.add_argument("--t-min", type=float, default=10.0)
    s.add_argument("--t-max", type=float, default=1000.0)
    s.add_argument("--samples", type=int, default=9)
    s.add_argument("--kmax", type=int, default=1)
    s.add_argument("--sigma", type=float, default=0.5, help="Gaussian width of the data")
    s.add_argument("--tol", type=float, default=0.02)
    s.set_defaults(func=cmd_linear)

    s = sub.add_parser("packets", help="wave-packet probes and gamma flatness")
    s.add_argument("--measure", action="store_true", help="measure C_1, C_2, C_* instead of the stored m=4 value")
    s.set_defaults(func=cmd_packets)

    s = sub.add_parser("profile", help="extract Q, solve for it by Picard iteration and compare")
    s.add_argument("--window", type=float, default=5.0)
    s.add_argument("--no-picard", action="store_true")
    s.set_defaults(func=cmd_profile)

    s = sub.add_parser("regions", help="weighted norms in the three regions")
    s.add_argument("--const", type=float, default=1.0, help="boundary constant c")
    s.set_defaults(func=cmd_regions)

    s = sub.add_parser("q0", help="tabulate Q_0")
    s.add_argument("--ymin", type=float, default=-10.0)
    s.add_argument("--ymax", type=float, default=10.0)
    s.add_argument("--count", type=int, default=201)
    s.set_defaults(func=cmd_q0)

    s = sub.add_parser("report", help="run the acceptance suite and write the PASS/FAIL ledger")
    s.add_argument("--only", help="comma separated criterion numbers")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("sweep", help="run a parameter grid in parallel")
    s.add_argument("--vary", action="append", default=[], metavar="KEY=V1,V2", help="one sweep axis")
    s.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    s.add_argument("--no-cache", action="store_true")
    s.add_argument("--check-serial", action="store_true", help="rerun serially and compare manifests")
    s.set_defaults(func=cmd_sweep)

    for sp in sub.choices.values():
        _add_config_args(sp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (PersistError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
