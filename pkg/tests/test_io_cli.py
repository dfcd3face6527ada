import json

import numpy as np
import pytest

from csvortex.cli import main
from csvortex.config import ConfigError, ExperimentConfig
from csvortex.fields import FieldState
from csvortex.snapshot import SnapshotError, read_snapshot, write_snapshot


def test_snapshot_roundtrip(tmp_path, grid_n1, vortex1):
    st = FieldState(vortex1["gauss"].gauge, vortex1["gauss"].higgs, 30.0, -1, 0.25)
    path = tmp_path / "state.snap"
    write_snapshot(path, st)
    back = read_snapshot(path)
    assert back.grid.nx == grid_n1.nx
    assert back.mu == 30.0 and back.sigma == -1 and back.tau == 0.25
    assert np.array_equal(back.gauge.a, st.gauge.a)
    assert np.array_equal(back.higgs.phi, st.higgs.phi)


def test_snapshot_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.snap"
    p.write_bytes(b"NOPE" + b"\0" * 100)
    with pytest.raises(SnapshotError):
        read_snapshot(p)


def test_snapshot_rejects_bad_version(tmp_path, vortex1):
    st = vortex1["gauss"]
    p = tmp_path / "v.snap"
    write_snapshot(p, st)
    raw = bytearray(p.read_bytes())
    raw[4] = 99  # version field
    p.write_bytes(bytes(raw))
    with pytest.raises(SnapshotError):
        read_snapshot(p)


def test_config_schema_validation():
    base = {
        "grid": {"area_factor": 8.0, "nx": 16, "ny": 16, "N": 1},
        "physics": {"mu": [10, 30], "sigma": 1},
        "initial": {"zeros": [[0.5, 0.5]], "fractional": True},
    }
    cfg = ExperimentConfig.from_dict(base)
    assert cfg.mu_list() == [10.0, 30.0]
    g = cfg.make_grid()
    assert g.area == pytest.approx(8 * np.pi)
    z = cfg.zeros(g)
    assert np.allclose(z[0], [0.5 * g.Lx, 0.5 * g.Ly])

    bad = dict(base, physics={"mu": 0.5, "sigma": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)
    bad2 = dict(base, initial={})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad2)
    bad3 = dict(base)
    bad3["grid"] = {"nx": 16, "ny": 16, "N": 1}
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad3)


def test_cli_solve_evolve_verify(tmp_path):
    zf = tmp_path / "zeros.txt"
    L = np.sqrt(8 * np.pi)
    zf.write_text(f"{0.5 * L} {0.5 * L}\n")
    snap = tmp_path / "v.snap"
    rc = main([
        "solve-vortex", "--zeros", str(zf), "--grid", "32",
        "--mu", "10", "--sigma", "1", "--out", str(snap),
    ])
    assert rc == 0
    sidecar = json.loads((tmp_path / "v.snap.json").read_text())
    assert {"energy", "residual", "iters", "bradlow_margin"} <= set(sidecar)

    diag = tmp_path / "diag.csv"
    rc = main([
        "evolve", "--in", str(snap), "--tau-end", "0.002",
        "--diag", str(diag),
    ])
    assert rc == 0
    lines = diag.read_text().splitlines()
    assert lines[0].startswith("tau,energy,V,U,l2phi")
    assert len(lines) >= 3


def test_cli_runtime_failure_exit_code(tmp_path):
    rc = main(["evolve", "--in", str(tmp_path / "missing.snap"),
               "--tau-end", "0.1", "--diag", str(tmp_path / "d.csv")])
    assert rc == 1


def test_cli_determinism(tmp_path):
    zf = tmp_path / "zeros.txt"
    L = np.sqrt(8 * np.pi)
    zf.write_text(f"{0.51 * L} {0.47 * L}\n")
    outs = []
    for tag in ("a", "b"):
        diag = tmp_path / f"diag_{tag}.csv"
        snap = tmp_path / f"v_{tag}.snap"
        assert main(["solve-vortex", "--zeros", str(zf), "--grid", "32",
                     "--mu", "10", "--sigma", "1", "--out", str(snap)]) == 0
        assert main(["evolve", "--in", str(snap), "--tau-end", "0.002",
                     "--diag", str(diag)]) == 0
        outs.append(diag.read_bytes())
    assert outs[0] == outs[1]
