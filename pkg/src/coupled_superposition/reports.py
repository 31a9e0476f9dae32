"""Run configuration, CSV artifacts and run manifests.

Config files are flat ``key = value`` lines; ``#`` starts a comment.  Values
are typed by a per-command schema.  Sweeps accept ``start:stop:step``
(inclusive of ``stop`` when it lies on the grid) or comma lists.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__


class ConfigError(ValueError):
    """Malformed configuration; the CLI exits with status 2."""


def parse_sweep(text: str, kind=float) -> list:
    """Parse ``"a:b:step"`` or ``"a,b,c"``; an empty string is an empty sweep."""
    text = str(text).strip()
    if not text:
        return []
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ConfigError(f"range {text!r} must be start:stop:step")
            start, stop, step = (float(p) for p in parts)
            if not step > 0:
                raise ConfigError(f"range {text!r} needs a positive step")
            if stop < start:
                raise ConfigError(f"range {text!r} has stop < start")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            vals = [start + k * step for k in range(n)]
            vals = [round(v, 12) for v in vals]
        else:
            vals = [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse sweep {text!r}") from exc
    if kind is int:
        if any(v != int(v) for v in vals):
            raise ConfigError(f"sweep {text!r} must be integers")
        vals = [int(v) for v in vals]
    return vals


def _parse_bool(text) -> bool:
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_optional(kind):
    def parse(text):
        s = str(text).strip()
        if s.lower() in ("", "none", "null"):
            return None
        return kind(s)
    return parse


PARSERS = {
    "int": int,
    "float": float,
    "str": str,
    "bool": _parse_bool,
    "int?": _parse_optional(int),
    "float?": _parse_optional(float),
    "floats": lambda s: parse_sweep(s, float),
    "ints": lambda s: parse_sweep(s, int),
}


def read_config_file(path) -> dict:
    """Read ``key = value`` lines into a dict of raw strings."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigError(f"{path}:{n}: empty key")
        out[key] = value.strip()
    return out


@dataclass
class RunConfig:
    """Resolved configuration of one command.

    ``values`` holds typed values; ``raw`` the string form they were parsed
    from, which is what a manifest stores.
    """

    command: str
    values: dict
    raw: dict
    out: Path

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def to_text(self) -> str:
        lines = [f"# {self.command}"]
        lines += [f"{k} = {self.raw[k]}" for k in sorted(self.raw)]
        return "\n".join(lines) + "\n"


def resolve_config(command: str, schema: dict, file_values: dict, overrides: dict,
                   out) -> RunConfig:
    """Merge defaults, file values and command-line overrides, then type them.

    ``schema`` maps key -> (type name, default string).
    """
    raw = {k: default for k, (_, default) in schema.items()}
    for source in (file_values, overrides):
        for key, value in source.items():
            key = key.replace("-", "_")
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} for command {command!r}")
            raw[key] = str(value)
    values = {}
    for key, (kind, _) in schema.items():
        try:
            values[key] = PARSERS[kind](raw[key])
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value {raw[key]!r} for {key} ({kind})") from exc
    return RunConfig(command, values, raw, Path(out))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, columns, rows, meta: dict | None = None):
    """CSV with ``# key: value`` metadata lines before the header.

    Floats are written with ``repr`` so reruns are byte-identical.
    """
    buf = io.StringIO()
    for key, value in (meta or {}).items():
        buf.write(f"# {key}: {value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())
    return Path(path)


def read_csv(path):
    """Return ``(meta, columns, rows)`` of a file written by :func:`write_csv`."""
    meta, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        else:
            lines.append(line)
    reader = csv.reader(lines)
    columns = next(reader, [])
    return meta, columns, [row for row in reader]


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class Manifest:
    command: str
    config: dict
    outputs: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        doc = {
            "command": self.command,
            "config": self.config,
            "outputs": self.outputs,
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            **self.extra,
        }
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
        return path

    @staticmethod
    def read(path) -> dict:
        try:
            return json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read manifest {path}: {exc}") from exc


def finish_run(cfg: RunConfig, outputs: list, extra: dict | None = None) -> Path:
    """Write ``run.cfg`` (replayable config) and ``manifest.json`` next to the outputs."""
    cfg_path = cfg.out / "run.cfg"
    cfg_path.write_text(cfg.to_text())
    hashes = {Path(p).name: sha256(p) for p in outputs}
    return Manifest(cfg.command, dict(cfg.raw), hashes, extra or {}).write(cfg.out)
