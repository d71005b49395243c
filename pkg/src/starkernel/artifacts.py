"""Diff-stable experiment artifacts: CSV, JSON, PGM/PPM, run manifests.

All writes are atomic (tmp file + rename) and all numeric output uses a
fixed 9-significant-digit format, so rerunning a seeded command produces
byte-identical files. Timestamps and host details live only in the
manifest, never in data artifacts.
"""

from __future__ import annotations

import json
import os
import platform
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np


def fmt9(value) -> str:
    """Fixed formatting: 9 significant digits for floats, plain ints."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    return str(value)


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path, header: list[str], rows) -> Path:
    lines = [",".join(header)]
    lines.extend(",".join(fmt9(cell) for cell in row) for row in rows)
    return atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path, payload) -> Path:
    return atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_pgm(path, image: np.ndarray) -> Path:
    """Binary 8-bit grayscale (P5). image is (H, W) uint8, row 0 at top."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError("PGM wants a 2-D grayscale image")
    h, w = image.shape
    return atomic_write_bytes(path, f"P5\n{w} {h}\n255\n".encode() + image.tobytes())


def write_ppm(path, image: np.ndarray) -> Path:
    """Binary 8-bit RGB (P6). image is (H, W, 3) uint8."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("PPM wants an (H, W, 3) RGB image")
    h, w, _ = image.shape
    return atomic_write_bytes(path, f"P6\n{w} {h}\n255\n".encode() + image.tobytes())


def host_descriptor() -> str:
    return (f"{platform.platform()} {platform.machine()} "
            f"python-{platform.python_version()} numpy-{np.__version__}")


@dataclass
class RunManifest:
    subcommand: str
    flags: dict
    seed: int | None
    version: str
    outputs: list[str] = field(default_factory=list)
    timestamp: str = ""
    host: str = ""

    def __post_init__(self):
        if not self.timestamp:
            self.timestamp = datetime.now(timezone.utc).isoformat()
        if not self.host:
            self.host = host_descriptor()


def write_manifest(out_dir, manifest: RunManifest) -> Path:
    return write_json(Path(out_dir) / "manifest.json", asdict(manifest))
