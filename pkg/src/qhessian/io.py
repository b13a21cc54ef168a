"""File formats: grid fields, profile tables, JSON summaries and INI configs.

Binary field files are one JSON header line followed by the raw
little-endian float64 values in C order.  CSV variants write every float
with ``repr`` so a round trip is bit-exact.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calculus import GridField, GridSpec

FORMAT_TAG = "qhessian-grid"


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------ grid files ---

def _header(spec: GridSpec, margin: int, kind: str, extra: dict | None) -> dict:
    head = {"format": FORMAT_TAG, "kind": kind, "n": spec.n, "L": spec.L,
            "N": spec.N, "margin": margin, "dtype": "<f8"}
    if extra:
        head["meta"] = extra
    return head


def write_grid(path, spec: GridSpec, values: np.ndarray, margin: int = 0,
               kind: str = "field", meta: dict | None = None):
    """Write the core values (at ``margin``) of a grid array."""
    path = Path(path)
    head = _header(spec, margin, kind, meta)
    head["shape"] = list(values.shape)
    arr = np.ascontiguousarray(values, dtype="<f8")
    if path.suffix == ".csv":
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(head, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow([f"i{a}" for a in range(arr.ndim)] + ["value"])
            for idx in np.ndindex(arr.shape):
                w.writerow(list(idx) + [repr(float(arr[idx]))])
    else:
        with open(path, "wb") as fh:
            fh.write((json.dumps(head, sort_keys=True) + "\n").encode())
            fh.write(arr.tobytes(order="C"))


def read_grid(path) -> tuple:
    """(spec, values, margin, header) from a file written by write_grid."""
    path = Path(path)
    try:
        if path.suffix == ".csv":
            with open(path, newline="") as fh:
                first = fh.readline()
                if not first.startswith("# "):
                    raise ValueError("missing header line")
                head = json.loads(first[2:])
                rows = list(csv.reader(fh))[1:]
            shape = tuple(head["shape"])
            vals = np.empty(shape)
            for row in rows:
                vals[tuple(int(v) for v in row[:-1])] = float(row[-1])
            if len(rows) != vals.size:
                raise ValueError("row count does not match the header shape")
        else:
            with open(path, "rb") as fh:
                head = json.loads(fh.readline().decode())
                raw = fh.read()
            shape = tuple(head["shape"])
            vals = np.frombuffer(raw, dtype="<f8")
            if vals.size != int(np.prod(shape)):
                raise ValueError("payload size does not match the header shape")
            vals = vals.reshape(shape).astype(float)
        if head.get("format") != FORMAT_TAG:
            raise ValueError("not a qhessian grid file")
        spec = GridSpec(int(head["n"]), float(head["L"]), int(head["N"]))
    except (KeyError, json.JSONDecodeError, OSError) as exc:
        raise ValueError(f"malformed grid file {path}: {exc}") from exc
    return spec, vals, int(head.get("margin", 0)), head


def save_field(path, u: GridField, meta: dict | None = None):
    write_grid(path, u.spec, u.values, u.margin, "field", meta)


def load_field(path) -> GridField:
    spec, vals, margin, head = read_grid(path)
    if head.get("kind") != "field" or vals.shape != (spec.N,) * spec.dim:
        raise ValueError(f"{path} does not hold a full grid field")
    return GridField(spec, vals, margin)


# --------------------------------------------------------------- outputs ---

def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def write_json(path, data: dict):
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else repr(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_table(path, columns: dict, preamble: dict):
    """CSV with ``# key=value`` preamble lines and one column per entry."""
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    buf = io.StringIO(newline="")
    for k in sorted(preamble):
        buf.write(f"# {k}={preamble[k]}\n")
    w = csv.writer(buf)
    w.writerow(names)
    for row in zip(*arrays):
        w.writerow([_cell(v) for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def read_table(path) -> tuple:
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            meta[k] = v
        else:
            body.append(line)
    rows = list(csv.reader(body))
    names = rows[0]
    cols = {k: [r[i] for r in rows[1:]] for i, k in enumerate(names)}
    return meta, cols


# ---------------------------------------------------------------- config ---

@dataclass(frozen=True)
class Key:
    kind: type
    default: object = None
    required: bool = False


_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _parse_value(text: str, kind: type, where: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            if not re.fullmatch(r"[+-]?\d+", text):
                raise ValueError(text)
            return int(text)
        if kind is float:
            if not _NUMBER.match(text):
                raise ValueError(text)
            return float(text)
        if kind is list:
            parts = [p.strip() for p in text.split(",") if p.strip()]
            out = []
            for p in parts:
                if not _NUMBER.match(p):
                    raise ValueError(p)
                out.append(float(p))
            return out
        return text
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {kind.__name__}") from None


def _line_numbers(text: str) -> dict:
    """(section, key) -> line number, for error messages."""
    where = {}
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            where[(section, None)] = no
        elif section is not None and ("=" in s) and not s.startswith(("#", ";")):
            where[(section, s.split("=", 1)[0].strip())] = no
    return where


def load_config(path, section: str, schema: dict) -> dict:
    """Parse one INI section against a schema; unknown keys are errors."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(text, section, schema, str(path))


def parse_config(text: str, section: str, schema: dict, name: str = "<config>") -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive (n vs N)
    try:
        parser.read_string(text, source=name)
    except configparser.Error as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    lines = _line_numbers(text)
    if not parser.has_section(section):
        raise ConfigError(f"{name}: missing section [{section}]")
    out = {}
    for key, raw in parser.items(section):
        line = lines.get((section, key), lines.get((section, None), 0))
        where = f"{name}:{line}"
        if key not in schema:
            raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
        out[key] = _parse_value(raw, schema[key].kind, where)
    for key, spec in schema.items():
        if key not in out:
            if spec.required:
                line = lines.get((section, None), 0)
                raise ConfigError(f"{name}:{line}: [{section}] needs key {key!r}")
            out[key] = spec.default
    return out
