"""Tiled arena: floor patterns, difficulty metrics and point lookup.

The arena is a ``rows x cols`` matrix of square tiles. ``x`` runs along the
columns and ``y`` along the rows, both in millimetres, with the origin at the
corner of tile ``(0, 0)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

PATTERN_KINDS = ("diagonal", "stripe", "block_diagonal", "alternating")


@dataclass(frozen=True)
class TileGrid:
    rows: int
    cols: int
    tile_size: float
    tiles: tuple[int, ...]

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")
        if self.tile_size <= 0:
            raise ValueError("tile_size must be positive")
        tiles = tuple(int(v) for v in self.tiles)
        if len(tiles) != self.rows * self.cols:
            raise ValueError(
                f"expected {self.rows * self.cols} tiles, got {len(tiles)}"
            )
        if any(v not in (0, 1) for v in tiles):
            raise ValueError("tiles must be 0 or 1")
        object.__setattr__(self, "tiles", tiles)

    @property
    def n_tiles(self) -> int:
        return self.rows * self.cols

    @property
    def arena_width(self) -> float:
        return self.cols * self.tile_size

    @property
    def arena_height(self) -> float:
        return self.rows * self.tile_size

    @property
    def n_vibrating(self) -> int:
        return sum(self.tiles)

    @property
    def fill_ratio(self) -> float:
        return self.n_vibrating / self.n_tiles

    def as_array(self) -> np.ndarray:
        return np.asarray(self.tiles, dtype=np.int8).reshape(self.rows, self.cols)

    @classmethod
    def from_array(cls, arr, tile_size: float = 200.0) -> "TileGrid":
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise ValueError("tile array must be 2-D")
        return cls(arr.shape[0], arr.shape[1], float(tile_size), tuple(arr.ravel().tolist()))

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "tile_size_mm": self.tile_size,
            "tiles": list(self.tiles),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TileGrid":
        missing = {"rows", "cols", "tiles"} - set(d)
        if missing:
            raise ValueError(f"grid object missing fields: {sorted(missing)}")
        return cls(int(d["rows"]), int(d["cols"]), float(d.get("tile_size_mm", 200.0)), tuple(d["tiles"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "TileGrid":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class EnvMetrics:
    fill_ratio: float
    moran_index: float
    entropy: float


def _target_count(n: int, f_target: float) -> int:
    if not 0.0 <= f_target <= 1.0:
        raise ValueError(f"fill ratio must lie in [0, 1], got {f_target}")
    return int(round(n * f_target))


def gen_random(rows: int, cols: int, f_target: float, rng: np.random.Generator,
               tile_size: float = 200.0) -> TileGrid:
    """Place exactly ``round(N * f_target)`` vibrating tiles uniformly at random."""
    n = rows * cols
    if rows < 1 or cols < 1:
        raise ValueError("grid needs at least one row and one column")
    k = _target_count(n, f_target)
    tiles = np.zeros(n, dtype=np.int8)
    tiles[rng.permutation(n)[:k]] = 1
    return TileGrid(rows, cols, tile_size, tuple(tiles.tolist()))


def _neighbour_count(i: int, j: int, rows: int, cols: int) -> int:
    return (i > 0) + (i < rows - 1) + (j > 0) + (j < cols - 1)


def _stripe(rows, cols, count):
    # whole columns left to right, the last one partially filled top-down
    arr = np.zeros((rows, cols), dtype=np.int8)
    for k in range(count):
        arr[k % rows, k // rows] = 1
    return arr


def _diagonal_order(rows, cols):
    offsets = list(range(0, cols)) + list(range(-1, -rows, -1))
    for d in offsets:
        for i in range(rows):
            j = i + d
            if 0 <= j < cols:
                yield i, j


def _diagonal(rows, cols, count):
    # main diagonal, then super-diagonals d = 1, 2, ..., then sub-diagonals
    arr = np.zeros((rows, cols), dtype=np.int8)
    for k, (i, j) in enumerate(_diagonal_order(rows, cols)):
        if k == count:
            break
        arr[i, j] = 1
    return arr


def _block_diagonal(rows, cols, count):
    # two squares on the main diagonal touching at one corner: sides 0.6m and 0.4m
    m = min(rows, cols)
    a = int(round(0.6 * m))
    blocks = [(0, a), (a, m - a)]
    arr = np.zeros((rows, cols), dtype=np.int8)
    placed = 0
    for origin, side in blocks:
        for i in range(origin, origin + side):
            for j in range(origin, origin + side):
                if placed < count:
                    arr[i, j] = 1
                    placed += 1
    for i, j in _diagonal_order(rows, cols):
        if placed >= count:
            break
        if not arr[i, j]:
            arr[i, j] = 1
            placed += 1
    return arr


def _alternating(rows, cols, count):
    even = [(i, j) for i in range(rows) for j in range(cols) if (i + j) % 2 == 0]
    odd = [(i, j) for i in range(rows) for j in range(cols) if (i + j) % 2 == 1]

    def edge_first(cells):
        return sorted(cells, key=lambda c: (_neighbour_count(c[0], c[1], rows, cols), c))

    arr = np.zeros((rows, cols), dtype=np.int8)
    for c in even:
        arr[c] = 1
    surplus = len(even) - count
    if surplus > 0:
        for c in edge_first(even)[:surplus]:
            arr[c] = 0
    elif surplus < 0:
        for c in edge_first(odd)[:-surplus]:
            arr[c] = 1
    return arr


_BUILDERS = {
    "stripe": _stripe,
    "diagonal": _diagonal,
    "block_diagonal": _block_diagonal,
    "alternating": _alternating,
}


def gen_pattern(kind: str, rows: int, cols: int, f_target: float,
                tile_size: float = 100.0) -> TileGrid:
    """Deterministic structured floor with exactly ``round(N * f_target)`` ones.

    ``stripe`` fills whole columns, ``diagonal`` fills the main diagonal and the
    diagonals above it, ``block_diagonal`` fills two corner-touching squares on
    the main diagonal and ``alternating`` trims a checkerboard from its edges.
    """
    try:
        build = _BUILDERS[kind]
    except KeyError:
        raise ValueError(f"unknown pattern kind {kind!r}; expected one of {PATTERN_KINDS}") from None
    if rows < 1 or cols < 1:
        raise ValueError("grid needs at least one row and one column")
    count = _target_count(rows * cols, f_target)
    arr = build(rows, cols, count)
    assert int(arr.sum()) == count
    return TileGrid.from_array(arr, tile_size)


def moran_index(grid: TileGrid) -> float:
    """Global Moran's I with rook (shared side) weights and no wraparound."""
    c = grid.as_array().astype(float)
    z = c - grid.fill_ratio
    denom = float((z * z).sum())
    if denom == 0.0:
        raise ValueError("undefined: zero variance")
    # each undirected adjacency appears twice in the directed double sum
    num = 2.0 * (float((z[:, 1:] * z[:, :-1]).sum()) + float((z[1:, :] * z[:-1, :]).sum()))
    w_sum = 2 * (grid.rows * (grid.cols - 1) + grid.cols * (grid.rows - 1))
    if w_sum == 0:
        raise ValueError("undefined: grid has no adjacent tiles")
    return grid.n_tiles / w_sum * num / denom


def cluster_sizes(grid: TileGrid) -> list[int]:
    labels, n = ndimage.label(grid.as_array())
    return np.bincount(labels.ravel())[1:].tolist() if n else []


def entropy(grid: TileGrid) -> float:
    """Normalised cluster entropy: 0 for isolated tiles, 1 for a single cluster."""
    n_v = grid.n_vibrating
    if n_v == 0:
        raise ValueError("no vibrating tiles")
    if n_v == 1:
        return 1.0
    h = 0.0
    for size in cluster_sizes(grid):
        q = size / n_v
        h -= q * math.log2(q)
    h_max = math.log2(n_v)
    return min(1.0, max(0.0, (h_max - h) / h_max))  # rounding can leave -1e-16


def metrics(grid: TileGrid) -> EnvMetrics:
    return EnvMetrics(grid.fill_ratio, moran_index(grid), entropy(grid))


def tile_index(grid: TileGrid, x: float, y: float) -> tuple[int, int]:
    if not (0.0 <= x < grid.arena_width and 0.0 <= y < grid.arena_height):
        raise ValueError(f"position ({x}, {y}) outside the {grid.arena_width} x {grid.arena_height} mm arena")
    return math.floor(y / grid.tile_size), math.floor(x / grid.tile_size)


def tile_at(grid: TileGrid, position) -> int:
    x, y = position
    row, col = tile_index(grid, x, y)
    return grid.tiles[row * grid.cols + col]
