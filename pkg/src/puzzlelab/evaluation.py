"""Reconstruction scores: direct, neighbor, largest component and perfect."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .core import DIRECTIONS, GroundTruth, MismatchedInputs


@dataclass(frozen=True)
class EvalReport:
    direct: float
    neighbor: float
    largest_component: float
    perfect: int
    global_rotation: int
    direct_strict: float

    def to_dict(self) -> dict:
        return {
            "direct": self.direct,
            "neighbor": self.neighbor,
            "largest": self.largest_component,
            "perfect": self.perfect,
            "global_rotation": self.global_rotation,
            "direct_strict": self.direct_strict,
        }


def rotate_board(assign: GroundTruth, g: int) -> tuple[np.ndarray, np.ndarray]:
    """Placement and orientation after turning the whole assembled board ``g`` quarter turns CCW."""
    place = assign.placement.copy()
    h, w = assign.grid.rows, assign.grid.cols
    for _ in range(g % 4):
        place = np.stack([w - 1 - place[:, 1], place[:, 0]], axis=1)
        h, w = w, h
    return place, (assign.orientation + g) % 4


def _check(solution: GroundTruth, truth: GroundTruth) -> None:
    if solution.grid != truth.grid or solution.n != truth.n:
        raise MismatchedInputs("solution and truth describe different puzzles")


def _direct(solution, truth) -> tuple[float, int, float]:
    grid = truth.grid
    turns = (0, 1, 2, 3) if grid.rows == grid.cols else (0, 2)
    best, best_g, strict = -1.0, 0, 0.0
    for g in turns:
        place, orient = rotate_board(solution, g)
        ok = (place == truth.placement).all(axis=1) & (orient == truth.orientation)
        score = 100.0 * ok.mean()
        if g == 0:
            strict = score
        if score > best:
            best, best_g = score, g
    return best, best_g, strict


def _relative_links(assign: GroundTruth) -> dict:
    """For every adjacent ordered pair, the side (in the first patch's own frame) and relative turn."""
    board = assign.cell_to_patch()
    out = {}
    for a, (r, c) in enumerate(assign.placement):
        for d, (dr, dc) in enumerate(DIRECTIONS):
            rr, cc = r + dr, c + dc
            if assign.grid.contains(rr, cc):
                b = int(board[rr, cc])
                out[(a, b)] = ((d - assign.orientation[a]) % 4, (assign.orientation[b] - assign.orientation[a]) % 4)
    return out


def evaluate(solution: GroundTruth, truth: GroundTruth) -> EvalReport:
    _check(solution, truth)
    n = truth.n
    direct, g, strict = _direct(solution, truth)
    true_links = _relative_links(truth)
    sol_links = _relative_links(solution)
    good = [pair for pair, rel in true_links.items() if sol_links.get(pair) == rel]
    neighbor = 100.0 * len(good) / len(true_links) if true_links else 100.0
    if good:
        ij = np.array(good)
        adj = sparse.csr_matrix((np.ones(len(ij)), (ij[:, 0], ij[:, 1])), shape=(n, n))
        _, labels = connected_components(adj, directed=False)
        largest = 100.0 * np.bincount(labels).max() / n
    else:
        largest = 100.0 / n
    return EvalReport(direct, neighbor, largest, int(direct == 100.0), g, strict)


def aggregate(reports: list[EvalReport]) -> dict:
    """Mean and sample standard deviation per score, and the number of perfect solutions."""
    if not reports:
        raise ValueError("need at least one report")
    out = {"count": len(reports), "perfect": int(sum(r.perfect for r in reports))}
    for key in ("direct", "neighbor", "largest_component"):
        vals = np.array([getattr(r, key) for r in reports])
        out[f"{key}_mean"] = float(vals.mean())
        out[f"{key}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    return out


CSV_FIELDS = ("image", "direct", "direct_std", "neighbor", "neighbor_std", "largest", "largest_std", "perfect")


def write_csv(path, rows: list[tuple[str, dict]], summary: dict) -> None:
    """One row per image (each an :func:`aggregate` over repeats) plus a summary row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for name, agg in rows + [("ALL", summary)]:
            writer.writerow([
                name,
                f"{agg['direct_mean']:.3f}", f"{agg['direct_std']:.3f}",
                f"{agg['neighbor_mean']:.3f}", f"{agg['neighbor_std']:.3f}",
                f"{agg['largest_component_mean']:.3f}", f"{agg['largest_component_std']:.3f}",
                agg["perfect"],
            ])

