"""Result persistence: fixed-schema CSV tables and a run manifest.

Every experiment directory gets a ``manifest.json`` recording the effective
configuration, the declared grids, the confidence-budget accounting, and the
code version, so any table can be regenerated from its manifest alone.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import subprocess
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

__all__ = [
    "SCHEMAS",
    "SchemaError",
    "write_table",
    "read_table",
    "config_hash",
    "write_manifest",
    "read_manifest",
    "code_version",
]

SCHEMAS: dict[str, tuple[str, ...]] = {
    "toy_fig1": ("alpha", "m", "c_of_j", "r_bar", "lower", "upper", "mc_kl", "mc_kl_stderr"),
    "l2_sweep": ("alpha", "seed", "d_prefix", "d_ghost"),
    "bound_sweep": (
        "alpha", "seed", "epsilon", "sigma_p", "t", "kl", "gibbs_risk", "bound", "test_error",
    ),
    "direct_opt": ("alpha", "seed", "step", "surrogate_bound", "final_bound", "test_error"),
    "oracle_variance": ("alpha", "seed", "sigma_p", "iso_bound", "oracle_bound"),
    # subsampled (base-run, prefix-run) coordinate pairs for the scatter view
    "param_scatter": ("alpha", "seed", "coord", "w_base", "w_prior"),
}


class SchemaError(ValueError):
    """A table does not match its declared schema."""


def _format(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_table(path, schema: str, rows: Iterable[Sequence]) -> None:
    """Write rows in the fixed column order of ``schema``; atomic replace."""
    cols = SCHEMAS.get(schema)
    if cols is None:
        raise SchemaError(f"unknown schema {schema!r}")
    path = Path(path)
    lines = [",".join(cols)]
    for row in rows:
        row = tuple(row)
        if len(row) != len(cols):
            raise SchemaError(f"row has {len(row)} fields, schema {schema} needs {len(cols)}")
        lines.append(",".join(_format(v) for v in row))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_table(path, schema: str) -> list[dict]:
    """Read a CSV written by write_table; verifies every schema column exists."""
    cols = SCHEMAS.get(schema)
    if cols is None:
        raise SchemaError(f"unknown schema {schema!r}")
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty table")
    header = lines[0].split(",")
    for c in cols:
        if c not in header:
            raise SchemaError(f"{path}: missing column {c!r}")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise SchemaError(f"{path}: row width {len(parts)} != header width {len(header)}")
        rec = {}
        for name, raw in zip(header, parts):
            try:
                val = int(raw)
            except ValueError:
                try:
                    val = float(raw)
                except ValueError:
                    val = raw
            rec[name] = val
        rows.append(rec)
    return rows


def config_hash(config: Mapping) -> str:
    """Stable hash of a JSON-serializable configuration."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def code_version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10,
            cwd=Path(__file__).resolve().parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    from pbcert import __version__

    return f"pbcert-{__version__}"


def write_manifest(
    path,
    config: Mapping,
    *,
    grids: Mapping,
    delta_accounting: Mapping,
    seeds: Sequence[int],
) -> dict:
    manifest = {
        "config": dict(config),
        "config_hash": config_hash(config),
        "grids": dict(grids),
        "delta_accounting": dict(delta_accounting),
        "seeds": list(int(s) for s in seeds),
        "code_version": code_version(),
    }
    _atomic_write_text(Path(path), json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
