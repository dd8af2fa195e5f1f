import csv
import json
import math

import numpy as np
import pytest
import yaml

from sdflow import cli
from sdflow.anisotropy import Isotropic
from sdflow.config import ConfigError, SimConfig, config_hash, load_config, parse_config
from sdflow.elasticity import LameMaterial
from sdflow.geometry import ReferenceCurve
from sdflow.stability import a_stable, critical_period

GRAPH = {"geometry": {"mode": "graph", "N": 32, "ell": 6.283185307179586, "initial": {"a": 1.0}}}


def _write(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return str(path)


def _merge(base, **blocks):
    doc = json.loads(json.dumps(base))
    for key, val in blocks.items():
        doc.setdefault(key, {})
        if isinstance(val, dict):
            doc[key].update(val)
        else:
            doc[key] = val
    return doc


def _csv_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# configuration --------------------------------------------------------------------


def test_minimal_config_defaults():
    cfg = parse_config(yaml.safe_dump(GRAPH))
    assert cfg.flow.dt.C_dt == 0.5
    assert cfg.stability.n_max == 8
    assert cfg.elasticity.trace_cutoff == "2N/3"
    assert cfg.elasticity.cutoff_index(cfg.geometry.N) == 32 // 3
    assert cfg.material.mu == 1.0 and cfg.material.lam == 1.0
    assert cfg.anisotropy.type == "isotropic" and cfg.seed == 0


def test_json_documents_are_accepted():
    assert parse_config(json.dumps(GRAPH)).geometry.N == 32


def test_all_violations_are_reported_with_paths():
    doc = _merge(GRAPH, geometry={"N": 100, "ell": -1.0}, material={"lambda": -2.0},
                 flow={"bogus": 1})
    with pytest.raises(ConfigError) as info:
        parse_config(yaml.safe_dump(doc))
    paths = [p for p, _ in info.value.errors]
    assert "geometry.N" in paths and "geometry.ell" in paths
    assert "material" in paths and "flow.bogus" in paths
    msg = dict(info.value.errors)["geometry.N"]
    assert "power of two" in msg


@pytest.mark.parametrize(
    "blocks, path",
    [
        ({"material": {"lambda": -2.0, "mu": 1.0}}, "material"),
        ({"material": {"lambda": 60.0}}, "material"),
        ({"anisotropy": {"type": "elliptic"}}, "anisotropy"),
        ({"elasticity": {"trace_cutoff": "half"}}, "elasticity.trace_cutoff"),
        ({"flow": {"dt": {"C_dt": 0}}}, "flow.dt.C_dt"),
        ({"surprise": 1}, "surprise"),
    ],
)
def test_single_violations(blocks, path):
    with pytest.raises(ConfigError) as info:
        parse_config(yaml.safe_dump(_merge(GRAPH, **blocks)))
    assert path in [p for p, _ in info.value.errors]


def test_flat_facet_anisotropy_is_rejected():
    th = [2 * math.pi * i / 32 for i in range(32)]
    phi = [1.0 + math.cos(2 * t) / 3.0 for t in th]
    with pytest.raises(ConfigError) as info:
        parse_config(yaml.safe_dump(_merge(GRAPH, anisotropy={"type": "table", "theta": th, "phi": phi})))
    assert "elliptic" in str(info.value)


def test_cross_block_rules():
    closed = {"geometry": {"mode": "closed", "N": 32, "circle": {"radius": 1.0}}}
    with pytest.raises(ConfigError):
        parse_config(yaml.safe_dump(_merge(closed, flow={"forcing": {"kind": "elastic"}})))
    with pytest.raises(ConfigError):
        parse_config(yaml.safe_dump(_merge(GRAPH, flow={"picard": {"enabled": True}})))
    with pytest.raises(ConfigError):
        parse_config(yaml.safe_dump(_merge(GRAPH, elasticity={"nx": 48})))
    with pytest.raises(ConfigError):
        parse_config("- just\n- a list\n")
    with pytest.raises(ConfigError):
        parse_config("geometry: {mode: graph")


def test_config_hash_is_stable_and_sensitive():
    a = parse_config(yaml.safe_dump(GRAPH))
    b = parse_config(json.dumps(GRAPH))
    c = parse_config(yaml.safe_dump(_merge(GRAPH, seed=1)))
    assert config_hash(a) == config_hash(b) == a.hash()
    assert len(a.hash()) == 16 and a.hash() != c.hash()


def test_builders(tmp_path):
    doc = _merge(GRAPH, geometry={"initial": {"a": 1.0, "modes": [{"n": 2, "amp": 0.1}], "noise": 1e-3}},
                 seed=7)
    cfg = parse_config(yaml.safe_dump(doc))
    curve = cfg.reference()
    h1 = cfg.initial_height(curve).values
    h2 = cfg.initial_height(curve).values
    assert np.array_equal(h1, h2)
    assert abs(np.mean(h1) - 1.0) < 1e-3
    setup = cfg.elastic_setup()
    assert setup.trace_cutoff == 10 and setup.ny == 32
    (tmp_path / "ref.json").write_text(json.dumps(ReferenceCurve.circle(32, radius=2.0).to_json()))
    closed = {"geometry": {"mode": "closed", "N": 32, "reference_file": "ref.json"}}
    cfg = load_config(_write(tmp_path, closed))
    assert isinstance(cfg, SimConfig)
    assert np.allclose(cfg.reference(base_dir=tmp_path).curvature, 0.5)


# run ---------------------------------------------------------------------------


def test_run_flat_film_energy_is_constant(tmp_path):
    doc = _merge(GRAPH, material={"e0": 0.1}, elasticity={"ny": 8},
                 flow={"T": 0.02, "dt": {"fixed": 0.001}, "forcing": {"kind": "elastic"}},
                 output={"snapshot_stride": 10})
    out = tmp_path / "out"
    assert cli.main(["run", "-c", _write(tmp_path, doc), "--out", str(out)]) == cli.EXIT_OK
    text = (out / "trajectory.csv").read_text()
    assert text.startswith("# sdflow run")
    assert f"# config_hash: {parse_config(yaml.safe_dump(doc)).hash()}" in text
    energy = np.array([float(r["energy"]) for r in _csv_rows(out / "trajectory.csv")])
    assert len(energy) == 21
    assert np.max(np.abs(energy - energy[0])) < 1e-10
    snap = json.loads((out / "snapshots" / "snapshot_00000.json").read_text())
    assert set(snap) == {"config_hash", "t", "h"} and len(snap["h"]) == 32


def test_run_outputs_are_byte_identical(tmp_path):
    doc = _merge(GRAPH, geometry={"initial": {"a": 1.0, "noise": 1e-3}}, seed=3,
                 flow={"T": 0.05, "dt": {"fixed": 0.005}}, output={"snapshot_stride": 5, "svg": True})
    cfg = _write(tmp_path, doc)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert cli.main(["run", "-c", cfg, "--out", str(out)]) == 0
    for name in ("trajectory.csv", "snapshots/snapshot_00000.json", "snapshots/snapshot_00001.json", "run.svg"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_run_closed_anisotropic(tmp_path):
    doc = {
        "geometry": {"mode": "closed", "N": 32, "circle": {"radius": 1.0},
                     "initial": {"modes": [{"n": 2, "amp": 0.05}]}},
        "anisotropy": {"type": "elliptic", "beta": 1.2},
        "flow": {"T": 0.01},
    }
    out = tmp_path / "out"
    assert cli.main(["run", "-c", _write(tmp_path, doc), "--out", str(out)]) == 0
    rows = _csv_rows(out / "trajectory.csv")
    assert "area_0" in rows[0]
    assert float(rows[-1]["t"]) == pytest.approx(0.01)


def test_run_breakdown_exit_code(tmp_path):
    doc = _merge(GRAPH, geometry={"initial": {"a": 0.1}},
                 flow={"T": 1.0, "dt": {"fixed": 0.001, "max_halvings": 2},
                       "forcing": {"kind": "prescribed", "modes": [{"n": 1, "amp": 100.0}]}})
    out = tmp_path / "out"
    assert cli.main(["run", "-c", _write(tmp_path, doc), "--out", str(out)]) == cli.EXIT_BREAKDOWN
    assert "# status: breakdown" in (out / "trajectory.csv").read_text()


def test_run_picard(tmp_path):
    doc = _merge(GRAPH, geometry={"initial": {"a": 1.0, "modes": [{"n": 1, "amp": 0.1}]}},
                 material={"e0": 0.05}, elasticity={"ny": 8},
                 flow={"T": 0.005, "dt": {"fixed": 0.001}, "forcing": {"kind": "elastic"},
                       "picard": {"enabled": True, "tol": 1e-10}})
    out = tmp_path / "out"
    assert cli.main(["run", "-c", _write(tmp_path, doc), "--out", str(out)]) == 0
    rep = json.loads((out / "picard.json").read_text())
    assert rep["converged"] and all(r < 1 for r in rep["ratios"])
    doc["flow"]["picard"].update(tol=1e-30, max_iter=2)
    assert cli.main(["run", "-c", _write(tmp_path, doc), "--out", str(out)]) == cli.EXIT_NONCONTRACTION
    assert json.loads((out / "picard.json").read_text())["status"] == "non-contraction"


def test_config_error_exit_code(tmp_path, capsys):
    bad = _merge(GRAPH, geometry={"N": 100})
    assert cli.main(["run", "-c", _write(tmp_path, bad)]) == cli.EXIT_CONFIG
    assert "geometry.N" in capsys.readouterr().err
    assert cli.main(["run", "-c", str(tmp_path / "missing.yaml")]) == cli.EXIT_CONFIG
    inadmissible = _merge(GRAPH, geometry={"initial": {"a": 0.05, "modes": [{"n": 1, "amp": 0.1}]}})
    assert cli.main(["run", "-c", _write(tmp_path, inadmissible)]) == cli.EXIT_CONFIG


# stability and sweep ----------------------------------------------------------------


def test_stability_without_mismatch_reports_inf(tmp_path, capsys):
    doc = _merge(GRAPH, elasticity={"ny": 4}, stability={"n_max": 2}, output={"svg": True})
    out = tmp_path / "out"
    assert cli.main(["stability", "-c", _write(tmp_path, doc), "--out", str(out)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["a_stable"] == "inf"
    saved = json.loads((out / "stability.json").read_text())
    assert saved == printed and saved["config_hash"] == parse_config(yaml.safe_dump(doc)).hash()
    assert (out / "stability.svg").read_text().startswith("<?xml")


def test_stability_rejects_closed_mode(tmp_path):
    doc = {"geometry": {"mode": "closed", "N": 32, "circle": {}}}
    assert cli.main(["stability", "-c", _write(tmp_path, doc)]) == cli.EXIT_CONFIG


def test_sweep_tracks_analytic_threshold(tmp_path):
    """8x8 phase map: the first unstable thickness in each column lies within
    one grid cell of ``a_stable(ell)``."""
    mat, e0 = LameMaterial(1.0, 1.0), 0.1
    lstar = critical_period(mat, e0, Isotropic())
    doc = _merge(GRAPH, geometry={"N": 32, "ell": 2 * lstar}, material={"e0": e0},
                 elasticity={"ny": 8}, stability={"n_max": 2})
    lo_l, hi_l = 1.6 * lstar, 2.4 * lstar
    ast_mid = a_stable(2 * lstar, mat, e0, Isotropic())
    lo_a, hi_a = 0.6 * ast_mid, 1.5 * ast_mid
    out = tmp_path / "out"
    argv = ["sweep", "-c", _write(tmp_path, doc), "--a", f"{lo_a}:{hi_a}:8", "--ell", f"{lo_l}:{hi_l}:8",
            "--out", str(out)]
    assert cli.main(argv) == 0
    rows = _csv_rows(out / "sweep.csv")
    assert len(rows) == 64
    cell = (hi_a - lo_a) / 7
    for ell in sorted({float(r["ell"]) for r in rows}):
        col = sorted((float(r["a"]), int(r["stable_fd"])) for r in rows if float(r["ell"]) == ell)
        flips = [a for (a, s), (_, s_prev) in zip(col[1:], col[:-1]) if s != s_prev]
        assert len(flips) == 1
        assert abs(flips[0] - a_stable(ell, mat, e0, Isotropic())) <= cell
    assert (out / "sweep.csv").read_text().startswith("# sdflow sweep")


def test_sweep_parallel_matches_serial(tmp_path):
    doc = _merge(GRAPH, material={"e0": 0.1}, elasticity={"ny": 4}, stability={"n_max": 1})
    cfg = _write(tmp_path, doc)
    args = ["--a", "0.5:1.5:2", "--ell", "5:7:2"]
    assert cli.main(["sweep", "-c", cfg, *args, "--out", str(tmp_path / "s")]) == 0
    assert cli.main(["sweep", "-c", cfg, *args, "--workers", "2", "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "s/sweep.csv").read_bytes() == (tmp_path / "p/sweep.csv").read_bytes()
    assert cli.main(["sweep", "-c", cfg, "--a", "1:0:3", "--ell", "5:7:2"]) == cli.EXIT_CONFIG


# validate -------------------------------------------------------------------------


def test_validate(tmp_path, capsys):
    out = tmp_path / "v"
    assert cli.main(["validate", "--trials", "50", "--seed", "2", "--out", str(out)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["pass"] and doc["trials"] == 50 and len(doc["config_hash"]) == 16
    assert all("pass" in ch for ch in doc["checks"])
    assert json.loads((out / "validate.json").read_text()) == doc
