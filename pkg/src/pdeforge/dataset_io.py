"""Bit-exact dataset serialization: raw binary64 field files + JSON manifest.

Layout contract: one `<name>.f64` file per field, IEEE-754 binary64
little-endian, sample-major then row-major over the (n+2) x (n+2) node set
including boundary. `manifest.json` is written last via atomic rename, so a
crashed write never leaves a readable dataset.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .grid import FieldSample, Grid2D

FORMAT_VERSION = 1

FIELDS_BY_PDE = {
    "darcy": ("a", "f", "u"),
    "helmholtz": ("k2", "f", "u"),
    "diffusion": ("k", "q", "f", "u"),
}


class DatasetIntegrityError(RuntimeError):
    pass


class DatasetFormatError(ValueError):
    pass


@dataclass
class DatasetManifest:
    pde: str
    grid_interior: int
    num_samples: int
    method: str
    field_files: dict = field(default_factory=dict)
    generation: dict = field(default_factory=dict)
    skipped_samples: list = field(default_factory=list)
    format_version: int = FORMAT_VERSION
    dtype: str = "float64-le"
    layout: str = "sample-major,row-major-nodes-including-boundary"

    @property
    def field_names(self) -> tuple:
        if self.pde not in FIELDS_BY_PDE:
            raise DatasetFormatError(f"unknown pde tag {self.pde!r}")
        return FIELDS_BY_PDE[self.pde]

    @property
    def nodes_per_sample(self) -> int:
        return (self.grid_interior + 2) ** 2

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "pde": self.pde,
            "grid_interior": self.grid_interior,
            "num_samples": self.num_samples,
            "method": self.method,
            "dtype": self.dtype,
            "layout": self.layout,
            "field_files": self.field_files,
            "generation": self.generation,
            "skipped_samples": self.skipped_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise DatasetFormatError(
                f"unsupported manifest format_version {version!r}, "
                f"expected {FORMAT_VERSION}"
            )
        return cls(
            pde=d["pde"],
            grid_interior=d["grid_interior"],
            num_samples=d["num_samples"],
            method=d["method"],
            field_files=d.get("field_files", {}),
            generation=d.get("generation", {}),
            skipped_samples=d.get("skipped_samples", []),
        )


def checksum_field(dir: os.PathLike, field_name: str) -> int:
    """CRC-32 (IEEE polynomial) of a field file's raw bytes."""
    path = Path(dir) / f"{field_name}.f64"
    crc = 0
    with open(path, "rb") as fh:
        while chunk := fh.read(1 << 20):
            crc = zlib.crc32(chunk, crc)
    return crc & 0xFFFFFFFF


def write_dataset(
    dir: os.PathLike,
    samples: Iterable[dict],
    manifest_seed: DatasetManifest,
) -> DatasetManifest:
    """Stream samples (dicts of field name -> FieldSample or node array) to
    disk; returns the completed manifest."""
    out = Path(dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = manifest_seed
    names = manifest.field_names
    slab = manifest.nodes_per_sample

    handles = {name: open(out / f"{name}.f64", "wb") for name in names}
    crcs = {name: 0 for name in names}
    count = 0
    try:
        for sample in samples:
            for name in names:
                value = sample[name]
                arr = value.values if isinstance(value, FieldSample) else value
                arr = np.ascontiguousarray(arr, dtype="<f8").reshape(-1)
                if arr.size != slab:
                    raise DatasetFormatError(
                        f"field {name!r} has {arr.size} nodes, expected {slab}"
                    )
                raw = arr.tobytes()
                handles[name].write(raw)
                crcs[name] = zlib.crc32(raw, crcs[name])
            count += 1
    finally:
        for fh in handles.values():
            fh.close()

    manifest.num_samples = count
    manifest.field_files = {
        name: {
            "filename": f"{name}.f64",
            "byte_length": count * slab * 8,
            "crc32": crcs[name] & 0xFFFFFFFF,
        }
        for name in names
    }
    tmp = out / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
    os.replace(tmp, out / "manifest.json")
    return manifest


class Dataset:
    """Validated, lazily-read dataset directory."""

    def __init__(self, dir: os.PathLike, manifest: DatasetManifest):
        self.dir = Path(dir)
        self.manifest = manifest
        self.grid = Grid2D(manifest.grid_interior)

    def field_sample(self, field_name: str, k: int) -> FieldSample:
        if field_name not in self.manifest.field_names:
            raise DatasetFormatError(
                f"field {field_name!r} not in pde {self.manifest.pde!r}"
            )
        if not (0 <= k < self.manifest.num_samples):
            raise DatasetFormatError(f"sample index {k} out of range")
        slab = self.manifest.nodes_per_sample
        m = self.grid.n_nodes
        path = self.dir / self.manifest.field_files[field_name]["filename"]
        with open(path, "rb") as fh:
            fh.seek(k * slab * 8)
            raw = fh.read(slab * 8)
        values = np.frombuffer(raw, dtype="<f8").reshape(m, m)
        return FieldSample(self.grid, values.copy())

    def samples(self) -> Iterator[dict]:
        for k in range(self.manifest.num_samples):
            yield {name: self.field_sample(name, k)
                   for name in self.manifest.field_names}


def read_dataset(dir: os.PathLike) -> Dataset:
    """Load a dataset, validating lengths and CRCs eagerly."""
    out = Path(dir)
    manifest_path = out / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetIntegrityError(f"no manifest.json in {out}")
    try:
        manifest = DatasetManifest.from_dict(json.loads(manifest_path.read_text()))
    except (json.JSONDecodeError, KeyError) as exc:
        raise DatasetFormatError(f"malformed manifest: {exc}") from exc

    slab = manifest.nodes_per_sample
    for name in manifest.field_names:
        if name not in manifest.field_files:
            raise DatasetFormatError(f"manifest missing field file entry {name!r}")
        entry = manifest.field_files[name]
        path = out / entry["filename"]
        if not path.is_file():
            raise DatasetIntegrityError(f"missing field file {path}")
        size = path.stat().st_size
        expected = manifest.num_samples * slab * 8
        if size != expected or entry["byte_length"] != expected:
            raise DatasetIntegrityError(
                f"{path.name}: byte length {size}, manifest "
                f"{entry['byte_length']}, expected {expected}"
            )
        crc = checksum_field(out, name)
        if crc != entry["crc32"]:
            raise DatasetIntegrityError(
                f"{path.name}: crc32 {crc:#010x} != manifest "
                f"{entry['crc32']:#010x} (corruption within first "
                f"{size} bytes)"
            )
    return Dataset(out, manifest)
