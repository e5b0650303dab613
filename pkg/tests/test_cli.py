import filecmp
from dataclasses import replace
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nvtflow import cli, eos
from nvtflow.config import Region, load_config, preset_names
from nvtflow.errors import ConfigError, SingularSystemError
from nvtflow.grid import Grid, GridSpec
from nvtflow.io import (read_field_csv, read_trace, snapshot_dir, write_field_csv, write_snapshot,
                        write_vtk)
from nvtflow.scenarios import build_initial_state, inside_fraction
from nvtflow.stepper import Stepper

SMALL = textwrap.dedent("""
    [grid]
    nx = 8
    ny = 8
    lx = 4.0e-9
    ly = 4.0e-9

    [mixture]
    components = ["CH4", "nC10"]
    temperature = 320.0
    diffusion = [1.0e-6, 1.0e-6]
    beta = [[0.0, 0.5], [0.5, 0.0]]

    [solver]
    dt = 1.0e-6
    n_steps = 3

    [flow]
    eta = 0.01
    xi = 0.01

    [scenario]
    kind = "square_droplet"
    n_gas = [7133.9, 26.5]
    n_liquid = [3513.2, 3814.6]
    half_width = 1.0e-9

    [output]
    directory = "out"
    snapshot_every = 2
""")


def write_cfg(tmp_path, text=SMALL, name="small.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def edit(text, old, new):
    assert old in text
    return text.replace(old, new)


# -- configuration

def test_presets_encode_the_scenarios():
    assert preset_names() == ["example1", "example2", "example3"]
    runs = {"example1": (320.0, 1e-6, 45, "square_droplet", "liquid", [7133.9, 26.5], [3513.2, 3814.6]),
            "example2": (330.0, 1e-5, 100, "ellipse_bubble", "gas", [7618.1, 44.5], [3833.6, 3684.3]),
            "example3": (330.0, 1e-5, 120, "two_bubbles", "gas", [7618.1, 44.5], [3833.6, 3684.3])}
    for name, (T, dt, steps, kind, inside, gas, liq) in runs.items():
        cfg = load_config(name)
        assert cfg.mixture.T == T and cfg.solver.dt == dt and cfg.solver.n_steps == steps
        assert cfg.scenario.kind == kind and cfg.scenario.inside == inside
        assert list(cfg.scenario.n_gas) == gas and list(cfg.scenario.n_liquid) == liq
        assert (cfg.grid.nx, cfg.grid.ny, cfg.grid.lx, cfg.grid.ly) == (40, 40, 2e-8, 2e-8)
        assert cfg.eta == 0.01 and cfg.xi == 0.01
        assert list(cfg.mixture.D) == [1e-6, 1e-6]
        assert cfg.mixture.beta[0, 1] == 0.5 and cfg.solver.lam == 1.0
        assert cfg.solver.nonlinear_tol == 1e-3 and cfg.solver.max_nonlinear_iters == 5


def test_default_geometries():
    e1, e2, e3 = (load_config(f"example{i}") for i in (1, 2, 3))
    assert e1.scenario.regions == (Region("rectangle", (1e-8, 1e-8), (5e-9, 5e-9)),)
    assert e2.scenario.regions == (Region("ellipse", (1e-8, 1e-8), (6e-9, 3.5e-9)),)
    assert [r.center for r in e3.scenario.regions] == [(6.5e-9, 1e-8), (1.35e-8, 1e-8)]
    assert all(r.size == (3.5e-9, 3.5e-9) for r in e3.scenario.regions)
    assert e1.scenario.smoothing == 2.0


def test_config_errors(tmp_path):
    bad = [
        edit(SMALL, "xi = 0.01", "xi = 0.006"),
        edit(SMALL, "eta = 0.01", "eta = 0.0"),
        edit(SMALL, 'kind = "square_droplet"', 'kind = "torus"'),
        edit(SMALL, "half_width = 1.0e-9", "half_width = 3.0e-9"),
        edit(SMALL, "n_gas = [7133.9, 26.5]", "n_gas = [7133.9]"),
        edit(SMALL, "n_gas = [7133.9, 26.5]", "n_gas = [-1.0, 26.5]"),
        edit(SMALL, "dt = 1.0e-6", "dt = -1.0"),
        edit(SMALL, "[flow]", "[flaw]"),
        edit(SMALL, '"nC10"]', '"H2O"]'),
        SMALL + "\n[broken\n",
    ]
    for text in bad:
        with pytest.raises(ConfigError):
            load_config(write_cfg(tmp_path, text))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_custom_regions_and_database(tmp_path):
    (tmp_path / "db.toml").write_text('[A]\nTc = 190.56\nPc = 4.599e6\nomega = 0.011\nMw = 0.016043\n'
                                      '[B]\nTc = 617.7\nPc = 2.103e6\nomega = 0.489\nMw = 0.142285\n')
    text = edit(SMALL, 'components = ["CH4", "nC10"]', 'components = ["A", "B"]\ndatabase = "db.toml"')
    text = edit(text, 'kind = "square_droplet"', 'kind = "custom"')
    text = edit(text, "half_width = 1.0e-9", textwrap.dedent("""
        regions = [
            { shape = "circle", center = [1.0e-9, 1.0e-9], radius = 0.5e-9 },
            { shape = "rectangle", center = [3.0e-9, 3.0e-9], half_widths = [0.5e-9, 0.8e-9] },
        ]"""))
    cfg = load_config(write_cfg(tmp_path, text))
    assert cfg.mixture.names == ["A", "B"]
    assert [r.shape for r in cfg.scenario.regions] == ["circle", "rectangle"]
    assert cfg.scenario.inside == "liquid"


def test_overrides(tmp_path):
    cfg = load_config(write_cfg(tmp_path)).with_overrides(out=tmp_path / "o", steps=7, dt=2e-6,
                                                          snapshot_every=1, fmt="both")
    assert cfg.solver.n_steps == 7 and cfg.solver.dt == 2e-6
    assert cfg.output.directory == tmp_path / "o"
    assert cfg.output.snapshot_every == 1 and cfg.output.format == "both"


# -- initial states

def test_square_droplet_sharp_compositions(tmp_path):
    text = edit(SMALL, "half_width = 1.0e-9", "half_width = 1.0e-9\nsmoothing = 0.0")
    cfg = load_config(write_cfg(tmp_path, text))
    st0 = build_initial_state(cfg)
    inside = np.zeros((8, 8), bool)
    inside[2:6, 2:6] = True
    assert np.all(st0.n[:, inside] == np.array([[3513.2], [3814.6]]))
    assert np.all(st0.n[:, ~inside] == np.array([[7133.9], [26.5]]))
    assert np.all(st0.u.vector() == 0)


def test_ellipse_bubble_has_gas_inside():
    cfg = load_config("example2")
    sharp = replace(cfg, scenario=replace(cfg.scenario, smoothing=0.0))
    n = build_initial_state(sharp).n
    assert list(n[:, 20, 20]) == [7618.1, 44.5]
    assert list(n[:, 0, 0]) == [3833.6, 3684.3]
    # ellipse is longer in x than in y
    assert n[0, 20 + 10, 20] > n[0, 20, 20 + 10]


def test_zero_size_region_gives_uniform_exterior():
    g = Grid(GridSpec(8, 8, 1.0, 1.0))
    frac = inside_fraction(g, (Region("circle", (0.5, 0.5), (0.0, 0.0)),), 2.0)
    assert np.all(frac == 0)


def test_smoothing_profile_is_monotone_across_interface():
    g = Grid(GridSpec(40, 40, 2e-8, 2e-8))
    frac = inside_fraction(g, (Region("rectangle", (1e-8, 1e-8), (5e-9, 5e-9)),), 2.0)
    row = frac[:20, 20]
    assert np.all(np.diff(row) >= 0)
    assert frac[20, 20] > 0.99 and frac[0, 0] < 1e-3


# -- snapshot files

def test_two_by_two_uniform_csv(tmp_path):
    g = Grid(GridSpec(2, 2, 2.0, 2.0))
    p = tmp_path / "v.csv"
    write_field_csv(p, g, np.full((2, 2), 0.1))
    lines = p.read_text().splitlines()
    assert lines[0] == "x,y,value"
    assert lines[1:] == ["0.5,0.5,0.10000000000000001", "1.5,0.5,0.10000000000000001",
                         "0.5,1.5,0.10000000000000001", "1.5,1.5,0.10000000000000001"]


@settings(max_examples=30, deadline=None)
@given(arrays(float, (5, 3), elements=st.floats(-1e300, 1e300, allow_subnormal=True)))
def test_csv_round_trip(tmp_path_factory, values):
    g = Grid(GridSpec(5, 3, 1e-8, 6e-9))
    p = tmp_path_factory.mktemp("rt") / "f.csv"
    write_field_csv(p, g, values)
    assert np.array_equal(read_field_csv(p, g), values)


def test_snapshot_of_initial_state_round_trips(tmp_path):
    text = edit(SMALL, "half_width = 1.0e-9", "half_width = 1.0e-9\nsmoothing = 0.0")
    cfg = load_config(write_cfg(tmp_path, text))
    g = Grid(cfg.grid)
    st0 = build_initial_state(cfg, g)
    c = eos.influence_matrix(cfg.mixture)
    d = write_snapshot(tmp_path / "o", g, cfg.mixture, c, st0, "both")
    names = sorted(p.name for p in d.iterdir())
    assert names == ["fields.vtk", "mu_1.csv", "mu_2.csv", "n_1.csv", "n_2.csv", "p.csv",
                     "u_x.csv", "u_y.csv"]
    for i in range(2):
        back = read_field_csv(d / f"n_{i + 1}.csv", g)
        assert np.array_equal(back, st0.n[i])
        assert set(np.unique(back)) == {cfg.scenario.n_gas[i], cfg.scenario.n_liquid[i]}


def test_vtk_layout(tmp_path):
    g = Grid(GridSpec(3, 2, 3.0, 2.0))
    f = np.arange(6.0).reshape(3, 2)
    write_vtk(tmp_path / "a.vtk", g, {"n_1": f, "u_x": f, "u_y": -f})
    lines = (tmp_path / "a.vtk").read_text().splitlines()
    assert lines[0].startswith("# vtk DataFile")
    assert "DATASET STRUCTURED_POINTS" in lines and "DIMENSIONS 3 2 1" in lines
    k = lines.index("SCALARS n_1 double 1")
    # x fastest: (0,0), (1,0), (2,0), (0,1), ...
    assert [float(v) for v in lines[k + 2:k + 8]] == [0.0, 2.0, 4.0, 1.0, 3.0, 5.0]
    assert "VECTORS u double" in lines


# -- runs

def test_zero_steps_writes_initial_only(tmp_path):
    cfg = load_config(write_cfg(tmp_path)).with_overrides(out=tmp_path / "o", steps=0)
    assert cli.run(cfg) == 0
    energy = (tmp_path / "o" / "energy.csv").read_text().splitlines()
    assert len(energy) == 2 and energy[0].startswith("step,t,F_bulk,F_grad,F,E,total,moles_1,moles_2")
    assert energy[1].startswith("0,0,")
    assert [p.name for p in (tmp_path / "o" / "snapshots").iterdir()] == ["step_000000"]


def test_run_outputs_and_strides(tmp_path):
    cfg = load_config(write_cfg(tmp_path)).with_overrides(out=tmp_path / "o")
    assert cli.run(cfg) == 0
    out = tmp_path / "o"
    e = read_trace(out / "energy.csv")
    assert list(e["step"]) == [0, 1, 2, 3]
    assert np.all(np.diff(e["total"]) <= 1e-8 * abs(e["total"][0]))
    s = read_trace(out / "steps.csv")
    assert list(s["step"]) == [1, 2, 3] and np.all(s["iterations"] <= 5)
    snaps = sorted(p.name for p in (out / "snapshots").iterdir())
    assert snaps == ["step_000000", "step_000002", "step_000003"]
    assert (out / "config.cfg").read_text() == SMALL


def test_run_is_deterministic(tmp_path):
    cfg = load_config(write_cfg(tmp_path))
    cli.run(cfg.with_overrides(out=tmp_path / "a"))
    cli.run(cfg.with_overrides(out=tmp_path / "b"))
    for name in ("energy.csv", "steps.csv"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)
    a, b = snapshot_dir(tmp_path / "a", 3), snapshot_dir(tmp_path / "b", 3)
    assert filecmp.cmp(a / "n_1.csv", b / "n_1.csv", shallow=False)


def test_solver_failure_keeps_partial_outputs(tmp_path, monkeypatch, capsys):
    real = Stepper.step

    def flaky(self, state):
        if state.step == 1:
            raise SingularSystemError("forced")
        return real(self, state)

    monkeypatch.setattr(Stepper, "step", flaky)
    cfg_path = write_cfg(tmp_path)
    rc = cli.main(["run", str(cfg_path), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "solver failed" in capsys.readouterr().err
    e = read_trace(tmp_path / "o" / "energy.csv")
    assert list(e["step"]) == [0, 1]


def test_main_exit_codes(tmp_path, capsys):
    assert cli.main(["presets"]) == 0
    assert "example1" in capsys.readouterr().out
    assert cli.main(["run", str(tmp_path / "nope.cfg")]) == 2
    p = write_cfg(tmp_path, edit(SMALL, "xi = 0.01", "xi = 0.001"))
    assert cli.main(["run", str(p)]) == 2
    p = write_cfg(tmp_path)
    rc = cli.main(["run", str(p), "--out", str(tmp_path / "o"), "--steps", "1", "--dt", "5e-7",
                   "--snapshot-every", "1", "--format", "vtk"])
    assert rc == 0
    assert (snapshot_dir(tmp_path / "o", 1) / "fields.vtk").exists()
    assert not (snapshot_dir(tmp_path / "o", 1) / "n_1.csv").exists()
    e = read_trace(tmp_path / "o" / "energy.csv")
    assert e["t"][-1] == 5e-7
