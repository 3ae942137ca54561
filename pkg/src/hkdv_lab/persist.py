"""Run artifacts: binary snapshots, JSON manifests and CSV tables.

Snapshots are stored as one float64 ``.npy`` stack so a reload is bit-exact;
tables are plain CSV so they can be diffed and re-plotted without this
package.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .evolution import NonlinearitySpec, Perturbation, Snapshot, StepStats, Trajectory
from .linear_dispersion import DispersionModel
from .spectral_core import Field, Grid


class PersistError(OSError):
    pass


def code_version() -> str:
    for dist in metadata.packages_distributions().get("hkdv_lab", []):
        try:
            return metadata.version(dist)
        except metadata.PackageNotFoundError:
            continue
    return "unknown"


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


@dataclass
class RunManifest:
    """Self-describing record of one run; entries are only ever appended."""

    config_hash: str
    config: dict
    code_version: str = field(default_factory=code_version)
    constants: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> CSV file name
    conserved_drift: dict = field(default_factory=dict)
    ledger: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def record(self, name: str, passed: bool, **detail) -> None:
        self.ledger.append({"criterion": name, "pass": bool(passed), **to_jsonable(detail)})

    def add_constant(self, name: str, value) -> None:
        if name in self.constants:
            raise KeyError(f"constant {name!r} already recorded")
        self.constants[name] = to_jsonable(value)

    def all_pass(self) -> bool:
        return all(e["pass"] for e in self.ledger)

    def write(self, directory: str | Path) -> Path:
        path = _ensure_dir(directory) / "manifest.json"
        _write_text(path, json.dumps(to_jsonable(asdict(self)), indent=2, sort_keys=True))
        return path

    @classmethod
    def read(cls, directory: str | Path) -> "RunManifest":
        path = Path(directory) / "manifest.json"
        try:
            return cls(**json.loads(path.read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise PersistError(f"cannot read manifest {path}: {exc}") from exc


def _ensure_dir(directory: str | Path) -> Path:
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PersistError(f"cannot create {d}: {exc}") from exc
    if not os.access(d, os.W_OK):
        raise PersistError(f"{d} is not writable")
    return d


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise PersistError(f"cannot write {path}: {exc}") from exc


def save_trajectory(traj: Trajectory, directory: str | Path) -> Path:
    """snapshots.npy (stack of samples), times.npy and trajectory.json."""
    d = _ensure_dir(directory)
    if not traj.snapshots:
        raise ValueError("trajectory is empty")
    grid = traj.snapshots[0].u.grid
    stack = np.stack([s.u.values for s in traj.snapshots])
    try:
        np.save(d / "snapshots.npy", stack)
        np.save(d / "times.npy", traj.times)
    except OSError as exc:
        raise PersistError(f"cannot write snapshots to {d}: {exc}") from exc
    nl = traj.nonlin
    meta = {
        "grid": grid.to_dict(),
        "m": traj.model.m if traj.model else None,
        "nonlinearity": None if nl is None else {
            "m": nl.m,
            "strength": nl.strength,
            "perturbation": None if nl.perturbation is None else asdict(nl.perturbation),
        },
        "stats": asdict(traj.stats),
        "wrap_fraction_max": traj.wrap_fraction_max,
        "flags": traj.flags,
        "diagnostics": traj.diagnostics,
    }
    _write_text(d / "trajectory.json", json.dumps(to_jsonable(meta), indent=1))
    return d


def load_trajectory(directory: str | Path) -> Trajectory:
    d = Path(directory)
    try:
        stack = np.load(d / "snapshots.npy")
        times = np.load(d / "times.npy")
        meta = json.loads((d / "trajectory.json").read_text())
    except (OSError, ValueError) as exc:
        raise PersistError(f"cannot load trajectory from {d}: {exc}") from exc
    grid = Grid(int(meta["grid"]["n"]), float(meta["grid"]["length"]))
    nl = None
    if meta["nonlinearity"] is not None:
        p = meta["nonlinearity"]["perturbation"]
        nl = NonlinearitySpec(
            meta["nonlinearity"]["m"], meta["nonlinearity"]["strength"], Perturbation(**p) if p else None
        )
    return Trajectory(
        snapshots=[Snapshot(float(t), Field(grid, row)) for t, row in zip(times, stack)],
        diagnostics=meta["diagnostics"],
        model=DispersionModel(meta["m"]) if meta["m"] else None,
        nonlin=nl,
        stats=StepStats(**meta["stats"]),
        wrap_fraction_max=meta["wrap_fraction_max"],
        flags=list(meta["flags"]),
    )


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Floats are written with repr so the table reloads exactly."""
    path = Path(path)
    _ensure_dir(path.parent)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    except OSError as exc:
        raise PersistError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_series(path: str | Path, series: Sequence[tuple[float, float]], value_name: str = "value") -> Path:
    """Plot data for a decay fit: exactly the (t, value) pairs handed to the fitter."""
    return write_csv(path, ["t", value_name], [(float(t), float(v)) for t, v in series])


def write_figure_note(path: str | Path, title: str, x: str, y: str, files: Sequence[str], note: str = "") -> Path:
    """Plain-text description of an intended figure for the emitted data files."""
    text = f"figure: {title}\nx-axis: {x}\ny-axis: {y}\ndata: {', '.join(files)}\n"
    if note:
        text += f"note: {note}\n"
    path = Path(path)
    _write_text(path, text)
    return path


__all__ = [
    "PersistError",
    "RunManifest",
    "code_version",
    "to_jsonable",
    "save_trajectory",
    "load_trajectory",
    "write_csv",
    "read_csv",
    "write_series",
    "write_figure_note",
]
