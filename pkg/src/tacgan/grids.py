"""Image grid files: one losslessly compressed composite plus a sidecar TSV.

Cells are packed edge to edge (no borders), so decoding the composite and
slicing at multiples of the cell size recovers every cell's pixel values
exactly. The sidecar lists one row per cell: grid position, kind
(``generated`` or ``real``), caption and a free-form detail column (noise
seed, interpolation weight, ...).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .dataset import unit_to_bytes, bytes_to_unit
from .errors import DataError, FormatError

SIDECAR_HEADER = "row\tcol\tkind\tcaption\tdetail"


@dataclass
class GridCell:
    row: int
    col: int
    image: np.ndarray  # H x W x 3 in [-1, 1]
    kind: str = "generated"
    caption: str = ""
    detail: str = ""


@dataclass
class ImageGrid:
    rows: int
    cols: int
    cells: list[GridCell] = field(default_factory=list)

    def add(self, row: int, col: int, image: np.ndarray, **meta) -> None:
        self.cells.append(GridCell(row=row, col=col, image=np.asarray(image), **meta))

    def validate(self) -> int:
        if self.rows < 1 or self.cols < 1:
            raise DataError("grid must have positive dimensions")
        if len(self.cells) > self.rows * self.cols:
            raise DataError(
                f"{len(self.cells)} cells exceed {self.rows}x{self.cols} grid"
            )
        shapes = {c.image.shape for c in self.cells}
        if len(shapes) > 1:
            raise DataError(f"cells must share one shape, got {sorted(shapes)}")
        if not self.cells:
            raise DataError("grid has no cells")
        shape = self.cells[0].image.shape
        if len(shape) != 3 or shape[2] != 3:
            raise DataError(f"cells must be HxWx3, got {shape}")
        seen = set()
        for c in self.cells:
            if not (0 <= c.row < self.rows and 0 <= c.col < self.cols):
                raise DataError(f"cell position ({c.row}, {c.col}) outside grid")
            if (c.row, c.col) in seen:
                raise DataError(f"duplicate cell at ({c.row}, {c.col})")
            seen.add((c.row, c.col))
        return shape[0]


def sidecar_path(grid_path: str) -> str:
    return os.path.splitext(grid_path)[0] + ".tsv"


def save_grid(path: str, grid: ImageGrid) -> str:
    """Write the composite PNG and its sidecar; returns the sidecar path."""
    cell_side = grid.validate()
    cell_w = grid.cells[0].image.shape[1]
    canvas = np.zeros((grid.rows * cell_side, grid.cols * cell_w, 3), dtype=np.uint8)
    for c in grid.cells:
        canvas[
            c.row * cell_side : (c.row + 1) * cell_side,
            c.col * cell_w : (c.col + 1) * cell_w,
        ] = unit_to_bytes(c.image)
    Image.fromarray(canvas).save(path, format="PNG")

    side = sidecar_path(path)
    with open(side, "w", encoding="utf-8") as fh:
        fh.write(SIDECAR_HEADER + "\n")
        for c in sorted(grid.cells, key=lambda c: (c.row, c.col)):
            caption = c.caption.replace("\t", " ")
            fh.write(f"{c.row}\t{c.col}\t{c.kind}\t{caption}\t{c.detail}\n")
    return side


def load_grid_cells(path: str) -> list[tuple[int, int, np.ndarray, dict]]:
    """Decode a grid file back into per-cell images (values in [-1, 1])."""
    side = sidecar_path(path)
    if not os.path.exists(side):
        raise FormatError(f"sidecar not found: {side}")
    entries = []
    with open(side, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != SIDECAR_HEADER:
            raise FormatError(f"{side}: unexpected header {header!r}")
        for line_no, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise FormatError(f"{side}:{line_no}: expected 5 columns")
            entries.append(parts)
    with Image.open(path) as im:
        canvas = np.asarray(im.convert("RGB"), dtype=np.uint8)
    rows = max(int(e[0]) for e in entries) + 1
    cols = max(int(e[1]) for e in entries) + 1
    cell_h = canvas.shape[0] // rows
    cell_w = canvas.shape[1] // cols
    out = []
    for r, c, kind, caption, detail in entries:
        r, c = int(r), int(c)
        cell = canvas[r * cell_h : (r + 1) * cell_h, c * cell_w : (c + 1) * cell_w]
        out.append(
            (r, c, bytes_to_unit(cell), {"kind": kind, "caption": caption, "detail": detail})
        )
    return out
