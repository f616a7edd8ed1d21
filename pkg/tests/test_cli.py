import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from wedgescatter import cli, experiments
from wedgescatter.cli import EXIT_INVARIANT, EXIT_IO, EXIT_OK, EXIT_PRECONDITION, main
from wedgescatter.wedge import Wedge, causal_complement

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL_GEOMETRY = {
    "schema_version": 1, "experiment": "geometry", "seed": 3,
    "output": {"csv": "out/g.csv", "summary": "out/g.json"},
    "params": {"beta": 0.5, "region": {"shape": "disk", "radius": 1.0}, "n_samples": 2000,
               "plot_points": 50, "trials": 20},
}

SMALL_COMMUTATOR = {
    "schema_version": 1, "experiment": "commutator", "seed": 0,
    "output": {"csv": "c.csv", "summary": "c.json"},
    "params": {"model": {"spatial_dim": 1, "n_modes": 16, "half_width": 1.2, "n_max": 2},
               "left": {"center": [-0.6], "width": 0.4}, "right": {"center": [0.6], "width": 0.4},
               "tau": {"start": 1.0, "stop": 8.0, "count": 4}},
}


def write(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml") if not p.name.endswith("_plot.yaml")))
def test_shipped_configs_validate(name, capsys):
    assert main(["validate", str(CONFIGS / name)]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "ok"


def test_validate_reports_schema_errors(tmp_path, capsys):
    bad = dict(SMALL_GEOMETRY, params={"beta": "fast"})
    assert main(["validate", str(write(tmp_path, bad))]) == EXIT_PRECONDITION
    assert "params/beta" in capsys.readouterr().err
    unknown = dict(SMALL_GEOMETRY, params={"colour": 1})
    assert main(["validate", str(write(tmp_path, unknown))]) == EXIT_PRECONDITION
    assert main(["validate", str(write(tmp_path, dict(SMALL_GEOMETRY, schema_version=2)))]) == EXIT_PRECONDITION
    assert main(["validate", str(tmp_path / "missing.yaml")]) == EXIT_IO


def test_run_writes_outputs_and_is_reproducible(tmp_path):
    cfg = write(tmp_path, SMALL_GEOMETRY)
    assert main(["run", str(cfg)]) == EXIT_OK
    csv_bytes = (tmp_path / "out/g.csv").read_bytes()
    summary = json.loads((tmp_path / "out/g.json").read_text())
    assert summary["experiment"] == "geometry" and summary["seed"] == 3
    assert csv_bytes.splitlines()[0].decode().split(",")[:3] == ["x1", "x2", "label"]
    assert main(["run", str(cfg)]) == EXIT_OK
    assert (tmp_path / "out/g.csv").read_bytes() == csv_bytes


def test_run_refuses_malformed_documents(tmp_path):
    broken = tmp_path / "broken.yaml"
    broken.write_text("experiment: [unclosed\n", encoding="utf-8")
    assert main(["run", str(broken)]) == EXIT_PRECONDITION
    assert main(["run", str(tmp_path / "nope.yaml")]) == EXIT_IO


def test_run_refuses_unordered_packets(tmp_path):
    doc = json.loads(json.dumps(SMALL_COMMUTATOR))
    doc["params"]["left"], doc["params"]["right"] = doc["params"]["right"], doc["params"]["left"]
    assert main(["run", str(write(tmp_path, doc))]) == EXIT_PRECONDITION
    assert not (tmp_path / "c.csv").exists()


def test_run_reports_unwritable_output(tmp_path):
    (tmp_path / "blocker").write_text("a file, not a directory")
    doc = dict(SMALL_GEOMETRY, output={"csv": "blocker/g.csv", "summary": "blocker/g.json"})
    assert main(["run", str(write(tmp_path, doc))]) == EXIT_IO


def test_invariant_violation_exits_with_code_three(tmp_path, monkeypatch, capsys):
    # a broken Poincaré action on wedges makes the covariance self-check contradict itself
    monkeypatch.setattr(experiments.Wedge, "transformed", lambda self, element: causal_complement(self))
    cfg = write(tmp_path, SMALL_GEOMETRY)
    assert main(["run", str(cfg)]) == EXIT_INVARIANT
    assert "invariant violated" in capsys.readouterr().err
    assert not (tmp_path / "out/g.csv").exists()


def test_commutator_accepts_a_serialized_wedge(tmp_path):
    plain = write(tmp_path, SMALL_COMMUTATOR, "plain.yaml")
    assert main(["run", str(plain)]) == EXIT_OK
    reference = (tmp_path / "c.csv").read_bytes()
    doc = json.loads(json.dumps(SMALL_COMMUTATOR))
    doc["params"]["wedge"] = Wedge.right(2).to_text()
    doc["output"] = {"csv": "w.csv", "summary": "w.json"}
    assert main(["run", str(write(tmp_path, doc, "wedge.yaml"))]) == EXIT_OK
    assert (tmp_path / "w.csv").read_bytes() == reference
    doc["params"]["wedge"] = "not a wedge"
    assert main(["run", str(write(tmp_path, doc, "bad.yaml"))]) == EXIT_PRECONDITION


DECAY_CSV = "t,amplitude,ray\n10.0,0.3,a\n20.0,0.2,a\n40.0,0.14,a\n10.0,1e-3,b\n20.0,1e-5,b\n40.0,1e-7,b\n"


def plot_spec(tmp_path, **extra):
    spec = {"kind": "loglog", "x": "t", "y": ["amplitude"], "group": "ray", "output": "fig.svg", **extra}
    return write(tmp_path, spec, "plot.yaml")


def test_plot_is_deterministic(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text(DECAY_CSV)
    spec = plot_spec(tmp_path, title="decay")
    assert main(["plot", str(data), str(spec)]) == EXIT_OK
    first = (tmp_path / "fig.svg").read_bytes()
    assert first.startswith(b"<?xml")
    assert main(["plot", str(data), str(spec)]) == EXIT_OK
    assert (tmp_path / "fig.svg").read_bytes() == first


def test_scatter_plot(tmp_path):
    data = tmp_path / "s.csv"
    data.write_text("x1,x2,label\n0.1,0.2,1\n-0.3,0.1,-1\n0.0,0.5,0\n")
    spec = write(tmp_path, {"kind": "scatter", "x": "x1", "y": ["x2"], "label": "label", "output": "s.svg"}, "sp.yaml")
    assert main(["plot", str(data), str(spec)]) == EXIT_OK
    assert (tmp_path / "s.svg").exists()


@pytest.mark.parametrize("content", ["t,amplitude,ray\n", "", "t,other\n1.0,2.0\n", "t,amplitude,ray\n1,x,a\n"])
def test_plot_refuses_unusable_data_without_writing(tmp_path, content):
    data = tmp_path / "d.csv"
    data.write_text(content)
    assert main(["plot", str(data), str(plot_spec(tmp_path))]) == EXIT_PRECONDITION
    assert not (tmp_path / "fig.svg").exists()
    assert not list(tmp_path.glob(".fig.svg.*"))


def test_plot_io_and_spec_errors(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text(DECAY_CSV)
    assert main(["plot", str(tmp_path / "none.csv"), str(plot_spec(tmp_path))]) == EXIT_IO
    bad = write(tmp_path, {"kind": "pie", "output": "x.svg"}, "bad.yaml")
    assert main(["plot", str(data), str(bad)]) == EXIT_PRECONDITION


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, SMALL_GEOMETRY)
    out = subprocess.run([sys.executable, "-m", "wedgescatter", "validate", str(cfg)],
                         capture_output=True, text=True, check=False)
    assert out.returncode == 0 and out.stdout.strip() == "ok"


def test_plain_conversion_handles_non_finite_values():
    assert cli._plain({"a": float("nan"), "b": [1, 2.5], "c": True}) == {"a": None, "b": [1, 2.5], "c": True}
