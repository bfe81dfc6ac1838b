"""CSV/JSON artifact writers with checksums, field matrix formats and the run manifest."""

import csv
import hashlib
import io
import json
import os
import threading
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np
from pydantic import BaseModel

from numerics.errors import ConfigurationError
from numerics.quantization import CartesianField
from numerics.quasimodes import PolarField, PolarGrid
from utils.logging_config import get_logger
from utils.models import ArtifactRecord, RunManifest

logger = get_logger("artifacts")

MANIFEST_NAME = "manifest.json"
FLOAT_FORMAT = "%.17g"


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(config: Dict[str, Any]) -> str:
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _matrix_text(header: str, values: np.ndarray) -> str:
    buffer = io.StringIO()
    np.savetxt(buffer, values, fmt=FLOAT_FORMAT, delimiter=",", header=header, comments="# ")
    return buffer.getvalue()


def _parse_header(line: str) -> Dict[str, str]:
    fields = {}
    for item in line.lstrip("# ").strip().split(","):
        key, _, value = item.partition("=")
        fields[key.strip()] = value.strip()
    return fields


def _complex_rows(samples: np.ndarray) -> np.ndarray:
    """(n, m) complex -> (n, 2m) with re, im interleaved."""
    return np.ascontiguousarray(samples, dtype=complex).view(float)


def read_cartesian(path: Union[str, Path]) -> CartesianField:
    """Inverse of ArtifactWriter.write_cartesian."""
    with open(path, encoding="utf-8") as handle:
        meta = _parse_header(handle.readline())
    values = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    samples = np.ascontiguousarray(values).view(complex)
    return CartesianField(
        L=float(meta["L"]),
        N=int(meta["N"]),
        h=float(meta["h"]),
        samples=samples,
        dilated=meta.get("dilated") == "True",
    )


def read_polar(path: Union[str, Path]) -> PolarField:
    """Inverse of ArtifactWriter.write_polar."""
    with open(path, encoding="utf-8") as handle:
        meta = _parse_header(handle.readline())
    values = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    grid = PolarGrid(
        r_min=float(meta["r_min"]),
        r_max=float(meta["r_max"]),
        N_r=int(meta["N_r"]),
        N_theta=int(meta["N_theta"]),
    )
    return PolarField(grid=grid, h=float(meta["h"]), samples=np.ascontiguousarray(values).view(complex))


class ArtifactWriter:
    """Writes run artifacts under one output directory and records their checksums."""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as error:
            raise ConfigurationError(f"cannot create output directory {self.out_dir}: {error}") from error
        if not self.out_dir.is_dir() or not os.access(self.out_dir, os.W_OK):
            raise ConfigurationError(f"output directory {self.out_dir} is not writable")
        self.records: List[ArtifactRecord] = []
        self._lock = threading.Lock()

    def _write(self, name: str, text: str, kind: str) -> ArtifactRecord:
        path = self.out_dir / name
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(path.suffix + ".tmp")
            tmp.write_text(text, encoding="utf-8", newline="")
            os.replace(tmp, path)
            record = ArtifactRecord(path=name, sha256=sha256_file(path), size=path.stat().st_size, kind=kind)
            self.records = [r for r in self.records if r.path != name] + [record]
        logger.debug(f"Wrote {name} ({record.size} bytes)")
        return record

    def write_csv(self, name: str, columns: Sequence[str], rows: np.ndarray) -> ArtifactRecord:
        """Numeric table, full double precision."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.size and rows.shape[1] != len(columns):
            raise ValueError(f"{name}: {rows.shape[1]} columns for {len(columns)} names")
        buffer = io.StringIO()
        buffer.write(",".join(columns) + "\n")
        if rows.size:
            np.savetxt(buffer, rows, fmt=FLOAT_FORMAT, delimiter=",")
        return self._write(name, buffer.getvalue(), "csv")

    def write_records(self, name: str, columns: Sequence[str], records: Iterable[Dict[str, Any]]) -> ArtifactRecord:
        """Mixed-type table, one dict per row."""
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for record in records:
            writer.writerow({key: _format_cell(record.get(key)) for key in columns})
        return self._write(name, buffer.getvalue(), "csv")

    def write_json(self, name: str, payload: Union[BaseModel, Dict[str, Any], List[Any]]) -> ArtifactRecord:
        if isinstance(payload, BaseModel):
            text = json.dumps(payload.model_dump(mode="json"), indent=2, sort_keys=True)
        else:
            text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
        return self._write(name, text + "\n", "json")

    def write_cartesian(self, name: str, field: CartesianField) -> ArtifactRecord:
        header = f"L={field.L!r},N={field.N},h={field.h!r},dilated={field.dilated}"
        return self._write(name, _matrix_text(header, _complex_rows(field.samples)), "matrix")

    def write_polar(self, name: str, field: PolarField) -> ArtifactRecord:
        grid = field.grid
        header = (
            f"r_min={grid.r_min!r},r_max={grid.r_max!r},N_r={grid.N_r},"
            f"N_theta={grid.N_theta},h={field.h!r}"
        )
        return self._write(name, _matrix_text(header, _complex_rows(field.samples)), "matrix")

    def write_matrix(self, name: str, header: Dict[str, Any], values: np.ndarray) -> ArtifactRecord:
        """Real matrix with a key=value header line."""
        text = _matrix_text(",".join(f"{k}={v!r}" for k, v in header.items()), np.atleast_2d(values))
        return self._write(name, text, "matrix")

    def verify(self) -> List[str]:
        """Paths whose checksum no longer matches."""
        mismatched = []
        for record in self.records:
            path = self.out_dir / record.path
            if not path.is_file() or sha256_file(path) != record.sha256:
                mismatched.append(record.path)
        return mismatched

    def write_manifest(self, manifest: RunManifest) -> Path:
        manifest.artifacts = sorted(self.records, key=lambda r: r.path)
        path = self.out_dir / MANIFEST_NAME
        path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path


def _format_cell(value: Any) -> Any:
    if isinstance(value, float):
        return FLOAT_FORMAT % value
    return value


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    raise TypeError(f"cannot serialize {type(value).__name__}")
