"""Labeled voxel lattices and their header + raw-byte file format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "BG",
    "GM",
    "WM",
    "CSF",
    "LABEL_NAMES",
    "LABEL_CODES",
    "LabeledVolume",
    "load_volume",
    "save_volume",
]

BG, GM, WM, CSF = 0, 1, 2, 3
LABEL_NAMES = {BG: "BG", GM: "GM", WM: "WM", CSF: "CSF"}
LABEL_CODES = {name: code for code, name in LABEL_NAMES.items()}

DEFAULT_VOXEL_MM = (0.5, 0.5, 0.5)


@dataclass(frozen=True)
class LabeledVolume:
    """Regular voxel lattice with per-voxel tissue labels.

    Labels are stored flat in x-fastest row-major order: linear index
    ``i + nx * (j + ny * k)`` for voxel (i, j, k).
    """

    dims: tuple[int, int, int]
    labels: np.ndarray
    voxel_mm: tuple[float, float, float] = DEFAULT_VOXEL_MM

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValueError(f"dims must be 3 positive integers, got {self.dims}")
        voxel = tuple(float(s) for s in self.voxel_mm)
        if len(voxel) != 3 or any(s <= 0 for s in voxel):
            raise ValueError(f"voxel_mm must be 3 positive sizes, got {self.voxel_mm}")
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.uint8)).ravel()
        if labels.size != dims[0] * dims[1] * dims[2]:
            raise ValueError(
                f"label array has {labels.size} entries, dims imply {dims[0] * dims[1] * dims[2]}"
            )
        if labels.size and labels.max() > CSF:
            raise ValueError("labels must be codes 0=BG, 1=GM, 2=WM, 3=CSF")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "voxel_mm", voxel)
        object.__setattr__(self, "labels", labels)

    @property
    def n_voxels(self) -> int:
        return self.labels.size

    def centroids(self, voxel_indices: np.ndarray) -> np.ndarray:
        """Geometric centers of the given voxels, shape (n, 3), in mm."""
        idx = np.asarray(voxel_indices, dtype=np.int64)
        nx, ny, _ = self.dims
        i = idx % nx
        j = (idx // nx) % ny
        k = idx // (nx * ny)
        vx, vy, vz = self.voxel_mm
        return np.stack([(i + 0.5) * vx, (j + 0.5) * vy, (k + 0.5) * vz], axis=1)


def load_volume(header_path: str | Path) -> LabeledVolume:
    """Load a volume from its JSON sidecar header plus raw byte file.

    Header keys: ``dims`` (3 ints), ``voxel_mm`` (3 floats, optional,
    default 0.5 isotropic), ``data`` (raw file path, relative to the
    header). The raw file holds one byte per voxel, x-fastest row-major,
    codes 0=BG, 1=GM, 2=WM, 3=CSF.
    """
    header_path = Path(header_path)
    with open(header_path, encoding="utf-8") as fh:
        try:
            header = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{header_path}: invalid JSON header: {exc}") from exc
    if not isinstance(header, dict) or "dims" not in header:
        raise ValueError(f"{header_path}: header must be a JSON object with 'dims'")
    dims = header["dims"]
    voxel_mm = header.get("voxel_mm", DEFAULT_VOXEL_MM)
    data_name = header.get("data")
    if not data_name:
        raise ValueError(f"{header_path}: header missing 'data' (raw file path)")
    raw_path = header_path.parent / data_name
    labels = np.fromfile(raw_path, dtype=np.uint8)
    return LabeledVolume(dims=tuple(dims), labels=labels, voxel_mm=tuple(voxel_mm))


def save_volume(volume: LabeledVolume, header_path: str | Path, data_name: str | None = None) -> None:
    header_path = Path(header_path)
    if data_name is None:
        data_name = header_path.stem + ".raw"
    volume.labels.tofile(header_path.parent / data_name)
    header = {
        "dims": list(volume.dims),
        "voxel_mm": list(volume.voxel_mm),
        "data": data_name,
        "label_codes": {name: code for name, code in LABEL_CODES.items()},
    }
    with open(header_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(header, fh, indent=2)
        fh.write("\n")
