"""Image files and JSON sidecars."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .core import GridSpec, GroundTruth, PuzzleError, Solution


class IoError(PuzzleError):
    pass


def read_image(path) -> np.ndarray:
    """Load a PNG or binary PPM as an ``H x W x 3`` uint8 array."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode not in ("RGB", "P", "L", "RGBA"):
                raise IoError(f"{path}: unsupported image mode {im.mode}")
            if im.mode == "RGBA":
                raise IoError(f"{path}: alpha channels are not supported")
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def write_image(path, image: np.ndarray) -> None:
    path = Path(path)
    fmt = "PPM" if path.suffix.lower() in (".ppm", ".pnm") else "PNG"
    try:
        Image.fromarray(np.asarray(image, dtype=np.uint8), "RGB").save(path, format=fmt)
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def assignment_to_dict(assign: GroundTruth, s: int, puzzle_type: int, seed: int) -> dict:
    out = {
        "rows": assign.grid.rows,
        "cols": assign.grid.cols,
        "s": int(s),
        "type": int(puzzle_type),
        "seed": int(seed),
        "placement": [
            {"id": i, "row": int(r), "col": int(c)} for i, (r, c) in enumerate(assign.placement)
        ],
        "orientation": [{"id": i, "q": int(q)} for i, q in enumerate(assign.orientation)],
    }
    if isinstance(assign, Solution):
        out["err"] = float(assign.err_value)
    return out


def write_sidecar(path, assign: GroundTruth, s: int, puzzle_type: int, seed: int, extra: dict | None = None) -> None:
    data = assignment_to_dict(assign, s, puzzle_type, seed)
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def read_sidecar(path) -> tuple[GroundTruth, dict]:
    """Return the assignment stored in a sidecar and the raw metadata."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise IoError(f"{path}: {exc}") from exc
    try:
        grid = GridSpec(int(data["rows"]), int(data["cols"]))
        place = np.zeros((grid.n, 2), dtype=int)
        orient = np.zeros(grid.n, dtype=int)
        for entry in data["placement"]:
            place[entry["id"]] = (entry["row"], entry["col"])
        for entry in data["orientation"]:
            orient[entry["id"]] = entry["q"]
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise IoError(f"{path}: malformed sidecar ({exc!r})") from exc
    if "err" in data:
        return Solution(grid, place, orient, float(data["err"])), data
    return GroundTruth(grid, place, orient), data
