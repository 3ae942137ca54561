import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkdv_lab import config as cfgmod
from hkdv_lab.config import ConfigError, ExperimentConfig
from hkdv_lab.evolution import NonlinearitySpec, Perturbation, SolverState, evolve
from hkdv_lab.linear_dispersion import DispersionModel
from hkdv_lab.persist import (
    PersistError,
    RunManifest,
    code_version,
    load_trajectory,
    read_csv,
    save_trajectory,
    to_jsonable,
    write_csv,
    write_figure_note,
    write_series,
)
from hkdv_lab.spectral_core import Field, Grid

BASE = ExperimentConfig()


class TestConfig:
    def test_dumps_round_trip(self):
        cfg = BASE.replace(p=4.5, coefficient=0.25, velocities=(0.25, 3.0), family="gaussian_derivative")
        assert cfgmod.parse_text(cfgmod.dumps(cfg)) == cfg

    def test_load_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nmodel.m = 5\ngrid.n = 1024  # trailing\nprobes.velocities = 1, 2\n")
        cfg = cfgmod.load(path)
        assert (cfg.m, cfg.n, cfg.velocities) == (5, 1024, (1.0, 2.0))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            cfgmod.load(tmp_path / "nope.cfg")

    @pytest.mark.parametrize(
        "text,key",
        [
            ("grid.n = 1000", "grid.n"),
            ("model.m = 3", "model.m"),
            ("model.p = 4.0", "model.p"),
            ("model.p = 4.05", "data.epsilon"),
            ("data.epsilon = 0.2", "data.epsilon"),
            ("data.family = box", "data.family"),
            ("data.family = custom", "data.samples"),
            ("model.nonlinear = maybe", "model.nonlinear"),
            ("grid.size = 4", "grid.size"),
            ("probes.velocities = 1, -1", "probes.velocities"),
        ],
    )
    def test_errors_name_the_key(self, text, key):
        with pytest.raises(ConfigError) as info:
            cfgmod.parse_text(text)
        assert info.value.key == key

    def test_missing_equals(self):
        with pytest.raises(ConfigError) as info:
            cfgmod.parse_text("grid.n 64")
        assert info.value.key == "line 1"

    def test_overrides(self):
        cfg = cfgmod.apply_overrides(BASE, {"solver.t_end": "16", "model.nonlinear": "off"})
        assert cfg.t_end == 16.0 and cfg.nonlinear is False

    def test_hash_ignores_output_dir(self):
        assert BASE.hash() == BASE.replace(out="elsewhere").hash()

    @pytest.mark.parametrize(
        "change",
        [{"m": 5}, {"epsilon": 0.04}, {"n": 1024}, {"t_end": 100.0}, {"velocities": (1.0,)}, {"seed": 1}],
    )
    def test_hash_changes_with_fields(self, change):
        assert BASE.replace(**change).hash() != BASE.hash()

    @settings(max_examples=20, deadline=None)
    @given(eps=st.floats(0.0, 0.12), width=st.floats(0.1, 10.0), n=st.sampled_from([16, 256, 4096]))
    def test_round_trip_preserves_hash(self, eps, width, n):
        cfg = BASE.replace(epsilon=eps, width=width, n=n)
        again = cfgmod.parse_text(cfgmod.dumps(cfg))
        assert again == cfg and again.hash() == cfg.hash()


@pytest.fixture
def small_traj():
    g = Grid(64, 32.0)
    u0 = Field.from_function(g, lambda x: 0.2 * np.exp(-(x**2) / 4))
    nl = NonlinearitySpec(4, perturbation=Perturbation(4.5, 0.3))
    return evolve(SolverState(0.0, u0, DispersionModel(4), nl), 2.0, observers=[lambda s, st: {"tag": 1}])


class TestTrajectoryFiles:
    def test_bit_exact_round_trip(self, small_traj, tmp_path):
        save_trajectory(small_traj, tmp_path)
        back = load_trajectory(tmp_path)
        np.testing.assert_array_equal(back.times, small_traj.times)
        for a, b in zip(back.snapshots, small_traj.snapshots):
            np.testing.assert_array_equal(a.u.values, b.u.values)
            assert a.u.grid == b.u.grid
        assert back.nonlin == small_traj.nonlin
        assert back.stats == small_traj.stats
        assert back.diagnostics == json.loads(json.dumps(to_jsonable(small_traj.diagnostics)))

    def test_empty(self, tmp_path):
        from hkdv_lab.evolution import Trajectory

        with pytest.raises(ValueError):
            save_trajectory(Trajectory(), tmp_path)

    def test_missing(self, tmp_path):
        with pytest.raises(PersistError):
            load_trajectory(tmp_path / "absent")

    def test_unwritable(self, small_traj, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(PersistError):
            save_trajectory(small_traj, blocker / "sub")


class TestManifest:
    def test_round_trip(self, tmp_path):
        man = RunManifest(BASE.hash(), BASE.to_dict())
        man.add_constant("C_star", np.float64(145.25))
        man.record("wrap", True, value=np.float64(1e-12))
        man.record("finite", False, values=np.array([1.0, 2.0]))
        man.write(tmp_path)
        back = RunManifest.read(tmp_path)
        assert back == RunManifest(**json.loads((tmp_path / "manifest.json").read_text()))
        assert back.constants == {"C_star": 145.25}
        assert back.ledger[1]["values"] == [1.0, 2.0]
        assert not back.all_pass()

    def test_constants_are_append_only(self):
        man = RunManifest("h", {})
        man.add_constant("a", 1)
        with pytest.raises(KeyError):
            man.add_constant("a", 2)

    def test_read_missing(self, tmp_path):
        with pytest.raises(PersistError):
            RunManifest.read(tmp_path)

    def test_version(self):
        assert code_version() != ""

    def test_jsonable(self):
        out = to_jsonable({1: (np.int64(2), 1 + 2j, float("inf"), np.bool_(True))})
        assert out == {"1": [2, {"re": 1.0, "im": 2.0}, "inf", True]}


class TestTables:
    def test_csv_exact_floats(self, tmp_path):
        vals = [0.1, 1 / 3, np.float64(2.0) ** -40]
        path = write_csv(tmp_path / "sub" / "a.csv", ["x", "label"], [(v, "k") for v in vals])
        head, rows = read_csv(path)
        assert head == ["x", "label"]
        assert [float(r[0]) for r in rows] == [float(v) for v in vals]

    def test_series(self, tmp_path):
        series = [(1.0, 0.5), (2.0, 0.25)]
        head, rows = read_csv(write_series(tmp_path / "s.csv", series, "sup"))
        assert head == ["t", "sup"]
        assert [(float(a), float(b)) for a, b in rows] == series

    def test_figure_note(self, tmp_path):
        text = write_figure_note(tmp_path / "f.txt", "decay", "t", "sup", ["s.csv"], note="log-log").read_text()
        assert "data: s.csv" in text and "note: log-log" in text


def test_config_dataclass_is_frozen():
    with pytest.raises(dataclasses.FrozenInstanceError):
        BASE.m = 5
