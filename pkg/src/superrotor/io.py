"""Deterministic file output: CSV grids/tables, JSON sidecars, atomic writes."""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import OutputError

FLOAT_FORMAT = "%.17g"


def tool_version() -> str:
    from . import __version__

    return __version__


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    """sha256 of the canonical JSON form of a (resolved) configuration."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def atomic_write(path, data: str | bytes) -> Path:
    """Write via a temporary file in the target directory and rename into place."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        mode = "wb" if isinstance(data, bytes) else "w"
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _header_lines(meta: dict) -> list[str]:
    return [f"# superrotor {meta['tool_version']}", f"# config_sha256 {meta['config_hash']}"]


def format_table(columns: list[str], rows, meta: dict) -> str:
    """CSV text with comment header lines and %.17g floats."""
    buf = io.StringIO()
    for line in _header_lines(meta):
        buf.write(line + "\n")
    buf.write(",".join(columns) + "\n")
    arr = np.asarray(rows, dtype=float)
    if arr.size:
        arr = arr.reshape(len(arr), -1)
        np.savetxt(buf, arr, fmt=FLOAT_FORMAT, delimiter=",")
    return buf.getvalue()


class OutputWriter:
    """Writes result tables in CSV (with JSON sidecar) or JSON format.

    Every file carries the tool version and the configuration hash.
    """

    def __init__(self, directory, config_digest: str, fmt: str = "csv", quiet: bool = True):
        if fmt not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        self.directory = Path(directory)
        self.digest = config_digest
        self.fmt = fmt
        self.quiet = quiet
        self.written: list[Path] = []

    def _meta(self, extra: dict | None) -> dict:
        return {"tool_version": tool_version(), "config_hash": self.digest, **(extra or {})}

    def table(self, name: str, columns: list[str], rows, meta: dict | None = None) -> Path:
        meta = self._meta(meta)
        meta["columns"] = list(columns)
        if self.fmt == "csv":
            path = atomic_write(self.directory / f"{name}.csv", format_table(columns, rows, meta))
            atomic_write(self.directory / f"{name}.json", json.dumps(_plain(meta), sort_keys=True, indent=2) + "\n")
            self.written += [path, self.directory / f"{name}.json"]
        else:
            arr = np.asarray(rows, dtype=float)
            body = {"meta": meta, "data": [[float(x) for x in row] for row in arr.reshape(len(arr), -1)]}
            path = atomic_write(self.directory / f"{name}.json", _json_dump(body))
            self.written.append(path)
        return path

    def grid(self, name: str, row_axis: tuple[str, np.ndarray], col_axis: tuple[str, np.ndarray], values,
             meta: dict | None = None) -> Path:
        """2-D grid; CSV layout: first column the row axis, one column per column-axis value."""
        rname, rvals = row_axis
        cname, cvals = col_axis
        values = np.asarray(values, dtype=float)
        meta = self._meta(meta)
        meta["layout"] = {"rows": rname, "columns": cname, "shape": list(values.shape)}
        if self.fmt == "csv":
            meta["column_values"] = {cname: np.asarray(cvals, dtype=float)}
            header = [f"{rname}\\{cname}"] + [FLOAT_FORMAT % v for v in cvals]
            rows = np.column_stack([np.asarray(rvals, dtype=float), values])
            path = atomic_write(self.directory / f"{name}.csv", format_table(header, rows, meta))
            atomic_write(self.directory / f"{name}.json", json.dumps(_plain(meta), sort_keys=True, indent=2) + "\n")
            self.written += [path, self.directory / f"{name}.json"]
        else:
            body = {"meta": meta, rname: rvals, cname: cvals, "values": values}
            path = atomic_write(self.directory / f"{name}.json", _json_dump(body))
            self.written.append(path)
        return path

    def text(self, name: str, text: str) -> Path:
        path = atomic_write(self.directory / name, text)
        self.written.append(path)
        return path


def _json_dump(obj) -> str:
    # repr of Python floats is shortest round-trip, hence deterministic
    return json.dumps(_plain(obj), sort_keys=True, indent=1) + "\n"


def read_csv_table(path):
    """Load a CSV written by :class:`OutputWriter`; returns (columns, array)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    columns = lines[0].strip().split(",")
    data = np.loadtxt(io.StringIO("".join(lines[1:])), delimiter=",", ndmin=2) if len(lines) > 1 else np.zeros((0, len(columns)))
    return columns, data
