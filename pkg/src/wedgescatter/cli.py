"""Command-line runner: `wedgescatter run|validate <config>` and `wedgescatter plot <csv> <plotspec>`.

Exit codes: 0 success, 2 precondition refusal, 3 invariant violation, 4 I/O failure.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from ._validation import InvariantViolation, PreconditionError
from .experiments import RUNNERS, run_experiment

SCHEMA_VERSION = 1
EXIT_OK, EXIT_PRECONDITION, EXIT_INVARIANT, EXIT_IO = 0, 2, 3, 4

_TAU = {
    "type": "object",
    "required": ["start", "count"],
    "properties": {
        "start": {"type": "number", "exclusiveMinimum": 0},
        "stop": {"type": "number", "exclusiveMinimum": 0},
        "guard_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
        "count": {"type": "integer", "minimum": 3},
        "spacing": {"enum": ["geometric", "linear"]},
    },
    "oneOf": [{"required": ["stop"]}, {"required": ["guard_fraction"]}],
    "additionalProperties": False,
}
_MODEL = {
    "type": "object",
    "required": ["n_modes", "half_width"],
    "properties": {
        "spatial_dim": {"type": "integer", "minimum": 1, "maximum": 3},
        "n_modes": {"type": "integer", "minimum": 2},
        "half_width": {"type": "number", "exclusiveMinimum": 0},
        "mass": {"type": "number", "exclusiveMinimum": 0},
        "n_max": {"type": "integer", "minimum": 1},
        "deformation": {"type": "number"},
    },
    "additionalProperties": False,
}
_VECTOR = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_PACKET = {
    "type": "object",
    "required": ["center", "width"],
    "properties": {"center": _VECTOR, "width": {"type": "number", "exclusiveMinimum": 0},
                   "sharpness": {"type": "number", "exclusiveMinimum": 0}, "phase": _VECTOR},
    "additionalProperties": False,
}

PARAMS = {
    "geometry": {
        "properties": {
            "beta": {"type": "number"},
            "region": {"oneOf": [
                {"type": "object", "required": ["shape"], "additionalProperties": False,
                 "properties": {"shape": {"const": "disk"}, "radius": {"type": "number", "exclusiveMinimum": 0}}},
                {"type": "object", "required": ["shape", "lo", "hi"], "additionalProperties": False,
                 "properties": {"shape": {"const": "box"}, "lo": _VECTOR, "hi": _VECTOR}},
            ]},
            "n_samples": {"type": "integer", "minimum": 1000},
            "plot_points": {"type": "integer", "minimum": 0},
            "trials": {"type": "integer", "minimum": 0},
            "dim": {"type": "integer", "minimum": 3, "maximum": 4},
        },
    },
    "packet-decay": {
        "properties": {
            "spatial_dim": {"type": "integer", "minimum": 1, "maximum": 2},
            "grid_half_width": {"type": "number", "exclusiveMinimum": 0},
            "grid_points": {"type": "integer", "minimum": 8},
            "center": _VECTOR, "width": {"type": "number", "exclusiveMinimum": 0},
            "mass": {"type": "number", "exclusiveMinimum": 0},
            "sharpness": {"type": "number", "exclusiveMinimum": 0},
            "rays": {"type": "array", "items": _VECTOR, "minItems": 1},
            "times": _TAU, "fit_window": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            "epsilon": {"type": "number", "minimum": 0}, "l1": {"type": "boolean"},
        },
    },
    "modular": {
        "properties": {
            "instances": {"type": "integer", "minimum": 1},
            "sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            "deltas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            "tracial_n": {"type": "integer", "minimum": 1},
        },
    },
    "commutator": {
        "required": ["model", "left", "right"],
        "properties": {"model": _MODEL, "left": _PACKET, "right": _PACKET, "tau": _TAU,
                       "wedge": {"type": "string"},
                       "sector_cap": {"type": ["integer", "null"], "minimum": 0}},
    },
    "scattering": {
        "required": ["model", "packets", "tau"],
        "properties": {"model": _MODEL, "packets": {"type": "array", "items": _PACKET, "minItems": 1},
                       "direction": {"enum": ["in", "out"]}, "tau": _TAU, "fd_check": {"type": "boolean"},
                       "fock_check": {"type": "boolean"}, "fock_stride": {"type": "integer", "minimum": 1}},
    },
    "smatrix": {
        "required": ["model", "final", "initial"],
        "properties": {"model": _MODEL, "final": {"type": "array", "items": _PACKET, "minItems": 1},
                       "initial": {"type": "array", "items": _PACKET, "minItems": 1},
                       "trials": {"type": "integer", "minimum": 0},
                       "max_rapidity": {"type": "number", "minimum": 0},
                       "max_shift": {"type": "number", "minimum": 0}, "shift": _VECTOR},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "experiment", "seed", "output"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": sorted(RUNNERS)},
        "seed": {"type": "integer", "minimum": 0},
        "output": {
            "type": "object",
            "required": ["csv", "summary"],
            "properties": {"csv": {"type": "string"}, "summary": {"type": "string"}},
            "additionalProperties": False,
        },
        "params": {"type": "object"},
    },
    "additionalProperties": False,
}

PLOT_SCHEMA = {
    "type": "object",
    "required": ["kind", "output"],
    "properties": {
        "kind": {"enum": ["loglog", "scatter"]},
        "output": {"type": "string"},
        "x": {"type": "string"},
        "y": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "label": {"type": "string"},
        "group": {"type": "string"},
        "fit": {"type": "boolean"},
        "title": {"type": "string"},
    },
    "additionalProperties": False,
}


class ConfigError(PreconditionError):
    """The configuration document does not match its schema."""


def load_document(path):
    """Parse a YAML or JSON document; JSON is valid YAML, so one parser serves both."""
    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh)


def validate_config(doc):
    prefix = []
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
        kind_schema = dict(PARAMS[doc["experiment"]], type="object", additionalProperties=False)
        prefix = ["params"]
        jsonschema.validate(doc.get("params", {}), kind_schema)
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in prefix + list(err.absolute_path)) or "<root>"
        raise ConfigError(f"{where}: {err.message}") from None
    return doc


def _plain(value):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats become null."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value) if math.isfinite(value) else None
    return value


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _csv_cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def table_csv(table):
    names, rows = table.rows()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for row in rows:
        writer.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


def summary_json(doc, table):
    payload = {"schema_version": SCHEMA_VERSION, "experiment": doc["experiment"], "seed": doc["seed"],
               "columns": list(table.columns), "summary": _plain(table.summary)}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _resolve(base, target):
    target = Path(target)
    return target if target.is_absolute() else base / target


def run(config_path):
    """Validate, run and write outputs; returns the exit code."""
    try:
        doc = validate_config(load_document(config_path))
    except OSError as err:
        return _fail(EXIT_IO, f"cannot read config: {err}")
    except yaml.YAMLError as err:
        return _fail(EXIT_PRECONDITION, f"config is not valid YAML/JSON: {err}")
    except PreconditionError as err:
        return _fail(EXIT_PRECONDITION, f"invalid config: {err}")
    try:
        table = run_experiment(doc["experiment"], doc.get("params", {}), doc["seed"])
    except InvariantViolation as err:
        return _fail(EXIT_INVARIANT, f"invariant violated: {err}")
    except (PreconditionError, ValueError) as err:
        return _fail(EXIT_PRECONDITION, f"refused: {err}")
    base = Path(config_path).resolve().parent
    try:
        _atomic_write(_resolve(base, doc["output"]["csv"]), table_csv(table))
        _atomic_write(_resolve(base, doc["output"]["summary"]), summary_json(doc, table))
    except OSError as err:
        return _fail(EXIT_IO, f"cannot write outputs: {err}")
    return EXIT_OK


def validate(config_path):
    try:
        validate_config(load_document(config_path))
    except OSError as err:
        return _fail(EXIT_IO, f"cannot read config: {err}")
    except (yaml.YAMLError, PreconditionError) as err:
        return _fail(EXIT_PRECONDITION, f"invalid config: {err}")
    print("ok")
    return EXIT_OK


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise PreconditionError(f"{path} has no data rows")
    header, body = rows[0], rows[1:]
    return {name: [r[i] for r in body] for i, name in enumerate(header)}


def _numeric(values, name):
    try:
        return np.array([float(v) for v in values])
    except ValueError:
        raise PreconditionError(f"column {name!r} is not numeric") from None


def emit_plot(csv_path, spec, base=None):
    """Render a static SVG from a CSV; nothing is written if the data cannot be plotted."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    jsonschema.validate(spec, PLOT_SCHEMA)
    data = read_csv(csv_path)
    needed = [spec.get("x", "")] + list(spec.get("y", []))
    for key in ("label", "group"):
        if key in spec:
            needed.append(spec[key])
    missing = [c for c in needed if c and c not in data]
    if missing or not spec.get("x") or not spec.get("y"):
        raise PreconditionError(f"column mismatch: missing {missing or ['x/y']}")
    x = _numeric(data[spec["x"]], spec["x"])

    plt.rcParams["svg.hashsalt"] = "wedgescatter"
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    if spec["kind"] == "loglog":
        groups = data[spec["group"]] if "group" in spec else ["all"] * len(x)
        for col in spec["y"]:
            y = _numeric(data[col], col)
            for g in sorted(set(groups), key=str):
                sel = np.array([gg == g for gg in groups]) & (x > 0) & (y > 0)
                if sel.sum() < 2:
                    continue
                name = col if g == "all" else f"{col} [{spec['group']}={g}]"
                if spec.get("fit", True) and sel.sum() >= 3:
                    slope = np.polyfit(np.log(x[sel]), np.log(y[sel]), 1)[0]
                    name += f" (slope {slope:.3f})"
                ax.loglog(x[sel], y[sel], marker="o", ms=3, label=name)
        ax.set_xlabel(spec["x"])
        ax.legend(fontsize=7)
    else:
        y = _numeric(data[spec["y"][0]], spec["y"][0])
        labels = data[spec["label"]] if "label" in spec else ["0"] * len(x)
        names = {"1": "C", "-1": "-C", "0": "forbidden"}
        for lab in sorted(set(labels), key=str):
            sel = np.array([v == lab for v in labels])
            ax.scatter(x[sel], y[sel], s=4, label=names.get(lab, lab))
        ax.set_xlabel(spec["x"])
        ax.set_ylabel(spec["y"][0])
        ax.set_aspect("equal")
        ax.legend(fontsize=7)
    if "title" in spec:
        ax.set_title(spec["title"])
    out = _resolve(base or Path.cwd(), spec["output"])
    out.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out.parent, prefix=f".{out.name}.", suffix=".svg")
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg", metadata={"Date": None})
        os.replace(tmp, out)
    finally:
        plt.close(fig)
        Path(tmp).unlink(missing_ok=True)
    return out


def plot(csv_path, spec_path):
    try:
        spec = load_document(spec_path)
        emit_plot(csv_path, spec, Path(spec_path).resolve().parent)
    except OSError as err:
        return _fail(EXIT_IO, f"I/O failure: {err}")
    except jsonschema.ValidationError as err:
        return _fail(EXIT_PRECONDITION, f"invalid plot spec: {err.message}")
    except (yaml.YAMLError, PreconditionError) as err:
        return _fail(EXIT_PRECONDITION, str(err))
    return EXIT_OK


def _fail(code, message):
    print(f"wedgescatter: {message}", file=sys.stderr)
    return code


def main(argv=None):
    parser = argparse.ArgumentParser(prog="wedgescatter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", help="check a config against the schema")
    p_val.add_argument("config")
    p_plot = sub.add_parser("plot", help="render an SVG from a result CSV")
    p_plot.add_argument("csv")
    p_plot.add_argument("plotspec")
    args = parser.parse_args(argv)
    if args.verb == "run":
        return run(args.config)
    if args.verb == "validate":
        return validate(args.config)
    return plot(args.csv, args.plotspec)


if __name__ == "__main__":
    sys.exit(main())
