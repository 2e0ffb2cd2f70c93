"""Versioned binary containers and deterministic text artifacts.

Binary layout (all little-endian), documented in docs/FORMATS.md:

  orbital container  magic "RHFS", version u32, dim u32, n u32, L f64,
                     epsilon f64, N u32, then N·n^dim complex128 values
                     (orbital-major, C order).
  phase-space field  magic "WGNR" (Wigner) or "VLSV" (Vlasov), version u32,
                     dim u32, n_x u32, n_v u32, L f64, epsilon f64, then
                     n_x·n_v float64 values (x-major, C order).

Floating-point text output is printed with 17 significant digits so re-runs
round-trip bit-faithfully.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .grids import Grid
from .orbitals import OrbitalSet

FORMAT_VERSION = 1
_ORBITAL_HEADER = struct.Struct("<4sIIIddI")
_FIELD_HEADER = struct.Struct("<4sIIIIdd")

ORBITAL_MAGIC = b"RHFS"
WIGNER_MAGIC = b"WGNR"
VLASOV_MAGIC = b"VLSV"


def fmt17(x: float) -> str:
    return format(float(x), ".17g")


def save_orbitals(path, orbs: OrbitalSet) -> None:
    grid = orbs.grid
    header = _ORBITAL_HEADER.pack(
        ORBITAL_MAGIC, FORMAT_VERSION, grid.dim, grid.n,
        grid.box_length, grid.epsilon, orbs.n_particles,
    )
    data = np.ascontiguousarray(orbs.orbitals).astype("<c16").tobytes()
    Path(path).write_bytes(header + data)


def read_orbital_header(path) -> dict:
    raw = Path(path).read_bytes()
    if len(raw) < _ORBITAL_HEADER.size:
        raise ValueError(f"{path}: truncated container")
    magic, version, dim, n, length, eps, n_particles = _ORBITAL_HEADER.unpack_from(raw)
    if magic != ORBITAL_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {ORBITAL_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    return {
        "magic": magic.decode(), "version": version, "dim": dim, "n": n,
        "box_length": length, "epsilon": eps, "n_particles": n_particles,
    }


def load_orbitals(path) -> OrbitalSet:
    head = read_orbital_header(path)
    raw = Path(path).read_bytes()[_ORBITAL_HEADER.size:]
    grid = Grid(head["dim"], head["n"], head["box_length"], head["epsilon"])
    count = head["n_particles"] * grid.size
    data = np.frombuffer(raw, dtype="<c16", count=count).astype(complex)
    return OrbitalSet(data.reshape(head["n_particles"], *grid.shape), grid, validate=False)


def save_phase_field(path, values: np.ndarray, box_length: float, epsilon: float,
                     magic: bytes = WIGNER_MAGIC) -> None:
    if magic not in (WIGNER_MAGIC, VLASOV_MAGIC):
        raise ValueError(f"unknown phase-field magic {magic!r}")
    n_x, n_v = values.shape
    header = _FIELD_HEADER.pack(magic, FORMAT_VERSION, 1, n_x, n_v, box_length, epsilon)
    Path(path).write_bytes(header + np.ascontiguousarray(values).astype("<f8").tobytes())


def read_phase_field_header(path) -> dict:
    raw = Path(path).read_bytes()
    if len(raw) < _FIELD_HEADER.size:
        raise ValueError(f"{path}: truncated container")
    magic, version, dim, n_x, n_v, length, eps = _FIELD_HEADER.unpack_from(raw)
    if magic not in (WIGNER_MAGIC, VLASOV_MAGIC):
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    return {
        "magic": magic.decode(), "version": version, "dim": dim,
        "n_x": n_x, "n_v": n_v, "box_length": length, "epsilon": eps,
    }


def load_phase_field(path) -> tuple[dict, np.ndarray]:
    head = read_phase_field_header(path)
    raw = Path(path).read_bytes()[_FIELD_HEADER.size:]
    count = head["n_x"] * head["n_v"]
    values = np.frombuffer(raw, dtype="<f8", count=count).reshape(head["n_x"], head["n_v"])
    return head, values.copy()


def write_csv(path, header: list[str], rows) -> None:
    """CSV with 17-significant-digit floats; ints pass through unchanged."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
                cells.append(str(int(v)))
            elif isinstance(v, str):
                cells.append(v)
            else:
                cells.append(fmt17(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def _round17(obj):
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (float, np.floating)):
        return float(fmt17(obj))
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _round17(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_round17(v) for v in obj]
    return obj


def dump_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    Path(path).write_text(json.dumps(_round17(obj), sort_keys=True, indent=2) + "\n")


def load_json(path):
    return json.loads(Path(path).read_text())
