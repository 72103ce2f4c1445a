"""
Manifests and run artifacts.

Manifests are nested dictionaries of parameter blocks. On disk they are
either JSON or a flat line-oriented format with dotted section paths::

    # wienerlab manifest
    schema = 1
    grid.d = 1
    grid.M = 128
    phi.kind = "rough"

Values are JSON literals, so the flat form round-trips exactly. Every output
file carries the schema version and a hash of the resolved manifest.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from . import __version__

SCHEMA_VERSION = 1

BLOCKS = ("grid", "psi", "dist", "phi", "norm", "picard", "probe")

# accepted keys per block; anything else is reported with its dotted path
BLOCK_KEYS = {
    "grid": {"d", "M", "L"},
    "psi": {"transition_width"},
    "dist": {"kind", "c_sg"},
    "phi": {"kind", "s_decay", "seed", "phases", "amplitude", "width", "envelope", "path"},
    "norm": {"kind", "p", "q", "r", "s", "b", "T"},
    "picard": {"T", "n_steps", "max_iters", "sign", "sigma", "b", "rtol", "atol", "cap", "coupling", "gauge", "dealias"},
    "probe": {"statistic", "trials", "lambda", "normalize", "T_list", "p_list", "n_coeffs", "seeds", "n_steps", "max_dt"},
}


class ManifestError(ValueError):
    """Malformed manifest; the message names the offending field path."""


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def dumps(obj) -> str:
    """Canonical JSON (sorted keys, non-finite floats as strings)."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2)


def flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and v:
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def unflatten(flat: dict) -> dict:
    out: dict = {}
    for key, v in flat.items():
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ManifestError(f"{key}: conflicts with scalar at {p}")
            node = nxt
        node[parts[-1]] = v
    return out


def to_flat_text(d: dict) -> str:
    lines = ["# wienerlab manifest"]
    for k, v in sorted(flatten(_jsonable(d)).items()):
        lines.append(f"{k} = {json.dumps(v)}")
    return "\n".join(lines) + "\n"


def from_flat_text(text: str) -> dict:
    flat = {}
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ManifestError(f"line {no}: expected 'key = value'")
        k, v = (x.strip() for x in s.split("=", 1))
        try:
            flat[k] = json.loads(v)
        except json.JSONDecodeError:
            flat[k] = v
    return unflatten(flat)


@dataclass
class Manifest:
    """Schema version, parameter blocks, master seed and output directory."""

    blocks: dict = field(default_factory=dict)
    seed: int = 0
    out: Optional[str] = None
    schema: int = SCHEMA_VERSION
    version: str = __version__

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.schema != SCHEMA_VERSION:
            raise ManifestError(f"schema: unsupported version {self.schema!r}, expected {SCHEMA_VERSION}")
        for name, block in self.blocks.items():
            if name not in BLOCK_KEYS:
                raise ManifestError(f"{name}: unknown block")
            if not isinstance(block, dict):
                raise ManifestError(f"{name}: must be a table of key/value pairs")
            for key in block:
                if key not in BLOCK_KEYS[name]:
                    raise ManifestError(f"{name}.{key}: unknown field")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ManifestError("seed: must be a non-negative integer")

    def block(self, name: str) -> dict:
        return self.blocks.setdefault(name, {})

    def set(self, path: str, value):
        """Override one dotted field, e.g. ``set('grid.M', 256)``."""
        if value is None:
            return
        if path in ("seed", "out"):
            setattr(self, path, value)
        else:
            name, _, key = path.partition(".")
            self.block(name)[key] = value
        self.validate()

    def to_dict(self) -> dict:
        return {"schema": self.schema, "version": self.version, "seed": self.seed, "out": self.out, **copy.deepcopy(self.blocks)}

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        d = dict(d)
        schema = d.pop("schema", SCHEMA_VERSION)
        version = d.pop("version", __version__)
        seed = d.pop("seed", 0)
        out = d.pop("out", None)
        return cls(blocks=d, seed=seed, out=out, schema=schema, version=version)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(_jsonable(self.to_dict()), sort_keys=True).encode()).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, Manifest) and _jsonable(self.to_dict()) == _jsonable(other.to_dict())


def read_manifest(path) -> Manifest:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}: invalid JSON ({e})") from None
    else:
        d = from_flat_text(text)
    if not isinstance(d, dict):
        raise ManifestError(f"{path}: top level must be a table")
    return Manifest.from_dict(d)


def write_manifest(m: Manifest, path) -> Path:
    path = Path(path)
    text = dumps(m.to_dict()) + "\n" if path.suffix == ".json" else to_flat_text(m.to_dict())
    path.write_text(text)
    return path


class Collector:
    """Single writer for a run directory.

    Results are accumulated in memory and written once, in a fixed order,
    so files are always whole and reruns produce identical bytes.
    """

    def __init__(self, out_dir, manifest: Manifest):
        self.dir = Path(out_dir)
        self.manifest = manifest
        self.tag = f"schema={SCHEMA_VERSION} manifest={manifest.hash()}"
        self._pending: list[tuple[str, str]] = []

    def json(self, name: str, obj: dict):
        rec = {"schema": SCHEMA_VERSION, "manifest_hash": self.manifest.hash(), **_jsonable(obj)}
        self._pending.append((name, dumps(rec) + "\n"))

    def csv(self, name: str, header: Iterable[str], rows: Iterable[Iterable[Any]]):
        lines = [f"# wienerlab {self.tag}", ",".join(header)]
        for r in rows:
            lines.append(",".join(_fmt(v) for v in r))
        self._pending.append((name, "\n".join(lines) + "\n"))

    def dat(self, name: str, x, y, xlabel: str = "x", ylabel: str = "y"):
        """Two-column whitespace-separated data for gnuplot."""
        lines = [f"# wienerlab {self.tag}", f"# {xlabel} {ylabel}"]
        for a, b in zip(np.ravel(x), np.ravel(y)):
            lines.append(f"{_fmt(a)} {_fmt(b)}")
        self._pending.append((name, "\n".join(lines) + "\n"))

    def text(self, name: str, body: str):
        self._pending.append((name, body))

    def flush(self) -> list[Path]:
        self.dir.mkdir(parents=True, exist_ok=True)
        write_manifest(self.manifest, self.dir / "manifest.json")
        paths = []
        for name, body in self._pending:
            p = self.dir / name
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(body)
            paths.append(p)
        self._pending.clear()
        return paths


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
