"""
Aperture geometry: randomly tiled rectangular 8-element sub-arrays.

Grid convention: cell ``(row, col)`` sits at ``x = origin_x + col * pitch``,
``y = origin_y + row * pitch``. A ``rows x cols`` shape spans ``rows`` grid
rows (along y) and ``cols`` grid columns (along x), so a 1x8 sub-array is
long in x.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

DESIGN_FREQUENCY = 73e9
ELEMENTS_PER_SUBARRAY = 8


class NoTilingExists(RuntimeError):
    pass


@dataclass(frozen=True, order=True)
class SubArrayShape:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows * self.cols != ELEMENTS_PER_SUBARRAY or self.rows < 1 or self.cols < 1:
            raise ValueError(f"sub-array shape {self.rows}x{self.cols} does not hold 8 elements")

    @classmethod
    def parse(cls, text: str) -> "SubArrayShape":
        r, c = text.lower().split("x")
        return cls(int(r), int(c))

    def __str__(self):
        return f"{self.rows}x{self.cols}"


ALL_SHAPES = frozenset(SubArrayShape(r, c) for r, c in ((1, 8), (8, 1), (2, 4), (4, 2)))


@dataclass
class SubArray:
    id: int
    shape: SubArrayShape
    anchor: tuple[int, int]
    element_cells: list[tuple[int, int]]
    phase_center: tuple[float, float]


@dataclass
class ApertureLayout:
    grid_rows: int
    grid_cols: int
    element_pitch: float
    frequency: float
    subarrays: list[SubArray] = field(default_factory=list)
    origin: tuple[float, float] = (0.0, 0.0)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency

    @property
    def n_elements(self) -> int:
        return sum(len(s.element_cells) for s in self.subarrays)

    @property
    def aperture_size(self) -> tuple[float, float]:
        """Physical (width_x, height_y) of the grid, one pitch per cell."""
        return self.grid_cols * self.element_pitch, self.grid_rows * self.element_pitch

    def cell_position(self, row, col):
        return (self.origin[0] + col * self.element_pitch,
                self.origin[1] + row * self.element_pitch)

    def element_arrays(self):
        """Flat element arrays ``(x, y, subarray_index)`` in sub-array order."""
        xs, ys, owner = [], [], []
        for idx, sa in enumerate(self.subarrays):
            for r, c in sa.element_cells:
                x, y = self.cell_position(r, c)
                xs.append(x)
                ys.append(y)
                owner.append(idx)
        return np.array(xs), np.array(ys), np.array(owner, dtype=np.int64)

    def phase_centers(self) -> np.ndarray:
        return np.array([sa.phase_center for sa in self.subarrays])

    def index_of(self, subarray_id: int) -> int:
        for idx, sa in enumerate(self.subarrays):
            if sa.id == subarray_id:
                return idx
        raise KeyError(f"no sub-array with id {subarray_id}")

    def footprint(self, subarray_id: int):
        """Rectangle ``(xmin, xmax, ymin, ymax)`` covered by the sub-array cells."""
        sa = self.subarrays[self.index_of(subarray_id)]
        rows = [r for r, _ in sa.element_cells]
        cols = [c for _, c in sa.element_cells]
        h = 0.5 * self.element_pitch
        x_lo, y_lo = self.cell_position(min(rows), min(cols))
        x_hi, y_hi = self.cell_position(max(rows), max(cols))
        return x_lo - h, x_hi + h, y_lo - h, y_hi + h

    # --- serialization --------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "grid_rows": self.grid_rows,
            "grid_cols": self.grid_cols,
            "frequency_hz": self.frequency,
            "element_pitch_m": self.element_pitch,
            "origin_m": list(self.origin),
            "subarrays": [
                {
                    "id": sa.id,
                    "shape": str(sa.shape),
                    "anchor": list(sa.anchor),
                    "cells": [list(c) for c in sa.element_cells],
                    "phase_center_m": list(sa.phase_center),
                }
                for sa in self.subarrays
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ApertureLayout":
        subs = [
            SubArray(
                id=int(s["id"]),
                shape=SubArrayShape.parse(s["shape"]),
                anchor=tuple(s["anchor"]),
                element_cells=[tuple(c) for c in s["cells"]],
                phase_center=tuple(s["phase_center_m"]),
            )
            for s in d["subarrays"]
        ]
        return cls(
            grid_rows=int(d["grid_rows"]),
            grid_cols=int(d["grid_cols"]),
            element_pitch=float(d["element_pitch_m"]),
            frequency=float(d["frequency_hz"]),
            subarrays=subs,
            origin=tuple(d["origin_m"]),
        )

    def to_json(self, **extra) -> str:
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ApertureLayout":
        return cls.from_dict(json.loads(text))


def half_wave_pitch(frequency: float) -> float:
    return SPEED_OF_LIGHT / (2.0 * frequency)


def layout_from_placements(grid_rows, grid_cols, placements, frequency=DESIGN_FREQUENCY,
                           element_pitch=None) -> ApertureLayout:
    """Build a layout from ``(shape, (row, col))`` placements.

    No exact-cover check is made here; see :func:`validate_tiling`.
    """
    pitch = half_wave_pitch(frequency) if element_pitch is None else element_pitch
    origin = (-(grid_cols - 1) * pitch / 2.0, -(grid_rows - 1) * pitch / 2.0)
    layout = ApertureLayout(grid_rows, grid_cols, pitch, frequency, [], origin)
    for sid, (shape, (r0, c0)) in enumerate(placements):
        cells = [(r0 + i, c0 + j) for i in range(shape.rows) for j in range(shape.cols)]
        pos = np.array([layout.cell_position(r, c) for r, c in cells])
        center = tuple(float(v) for v in pos.mean(axis=0))
        layout.subarrays.append(SubArray(sid, shape, (r0, c0), cells, center))
    return layout


def generate_tiling(grid_rows=16, grid_cols=16, shapes=ALL_SHAPES, seed=0,
                    frequency=DESIGN_FREQUENCY, element_pitch=None) -> ApertureLayout:
    """Random exact-cover tiling by randomized first-empty-cell backtracking.

    The first empty cell in row-major order is always the top-left corner of
    the rectangle that covers it, so candidates are just the shapes that fit
    with that cell as anchor. Candidates are tried in a random order drawn
    from ``seed``; dead ends backtrack.
    """
    shapes = sorted(set(shapes))
    if not shapes:
        raise ValueError("at least one sub-array shape is required")
    if (grid_rows * grid_cols) % ELEMENTS_PER_SUBARRAY:
        raise ValueError("grid cell count must be divisible by 8")
    for s in shapes:
        if s.rows > grid_rows or s.cols > grid_cols:
            raise ValueError(f"shape {s} does not fit a {grid_rows}x{grid_cols} grid")

    rng = np.random.default_rng(seed)
    occupied = np.zeros((grid_rows, grid_cols), dtype=bool)
    placements: list[tuple[SubArrayShape, tuple[int, int]]] = []

    def fits(shape, r, c):
        if r + shape.rows > grid_rows or c + shape.cols > grid_cols:
            return False
        return not occupied[r:r + shape.rows, c:c + shape.cols].any()

    # explicit stack of (anchor, remaining candidate order)
    stack: list[tuple[tuple[int, int], list[SubArrayShape]]] = []
    free = np.flatnonzero(~occupied.ravel())
    while free.size:
        r, c = divmod(int(free[0]), grid_cols)
        order = [shapes[i] for i in rng.permutation(len(shapes))]
        stack.append(((r, c), order))
        while stack:
            (r, c), cands = stack[-1]
            placed = False
            while cands:
                s = cands.pop(0)
                if fits(s, r, c):
                    occupied[r:r + s.rows, c:c + s.cols] = True
                    placements.append((s, (r, c)))
                    placed = True
                    break
            if placed:
                break
            stack.pop()
            if not placements:
                raise NoTilingExists(
                    f"shapes {[str(s) for s in shapes]} cannot tile a {grid_rows}x{grid_cols} grid")
            s, (pr, pc) = placements.pop()
            occupied[pr:pr + s.rows, pc:pc + s.cols] = False
        free = np.flatnonzero(~occupied.ravel())

    return layout_from_placements(grid_rows, grid_cols, placements, frequency, element_pitch)


def regular_tiling(grid_rows=16, grid_cols=16, shape=SubArrayShape(2, 4),
                   frequency=DESIGN_FREQUENCY, element_pitch=None) -> ApertureLayout:
    """Periodic tiling by a single shape in aligned rows."""
    if grid_rows % shape.rows or grid_cols % shape.cols:
        raise ValueError(f"{shape} does not tile a {grid_rows}x{grid_cols} grid periodically")
    placements = [(shape, (r, c))
                  for r in range(0, grid_rows, shape.rows)
                  for c in range(0, grid_cols, shape.cols)]
    return layout_from_placements(grid_rows, grid_cols, placements, frequency, element_pitch)


def validate_tiling(layout: ApertureLayout) -> list[str]:
    """List of human-readable violations; empty when the layout is sound."""
    problems = []
    owner: dict[tuple[int, int], int] = {}
    for sa in layout.subarrays:
        if sa.shape.rows * sa.shape.cols != ELEMENTS_PER_SUBARRAY or sa.shape not in ALL_SHAPES:
            problems.append(f"sub-array {sa.id}: invalid shape {sa.shape.rows}x{sa.shape.cols}")
        r0, c0 = sa.anchor
        expect = {(r0 + i, c0 + j) for i in range(sa.shape.rows) for j in range(sa.shape.cols)}
        if set(map(tuple, sa.element_cells)) != expect or len(sa.element_cells) != len(expect):
            problems.append(f"sub-array {sa.id}: cells do not match {sa.shape} at anchor {sa.anchor}")
        for cell in sa.element_cells:
            cell = tuple(cell)
            r, c = cell
            if not (0 <= r < layout.grid_rows and 0 <= c < layout.grid_cols):
                problems.append(f"sub-array {sa.id}: cell {cell} outside the grid")
            elif cell in owner:
                problems.append(f"cell {cell} assigned to sub-arrays {owner[cell]} and {sa.id}")
            else:
                owner[cell] = sa.id
        if sa.element_cells:
            pos = np.array([layout.cell_position(r, c) for r, c in sa.element_cells])
            if not np.allclose(pos.mean(axis=0), sa.phase_center, rtol=0, atol=1e-12):
                problems.append(f"sub-array {sa.id}: phase center is not the element centroid")
    for r in range(layout.grid_rows):
        for c in range(layout.grid_cols):
            if (r, c) not in owner:
                problems.append(f"cell {(r, c)} not covered")
    expected = layout.grid_rows * layout.grid_cols // ELEMENTS_PER_SUBARRAY
    if len(layout.subarrays) != expected:
        problems.append(f"{len(layout.subarrays)} sub-arrays, expected {expected}")
    ids = [sa.id for sa in layout.subarrays]
    if len(set(ids)) != len(ids):
        problems.append("duplicate sub-array ids")
    return problems


def granularity_report(layout: ApertureLayout) -> tuple[int, int]:
    """Number of distinct phase-center coordinates along x and along y."""
    pc = layout.phase_centers() / (0.5 * layout.element_pitch)
    # phase centers fall on a half-pitch lattice
    xs = np.unique(np.round(pc[:, 0], 6))
    ys = np.unique(np.round(pc[:, 1], 6))
    return len(xs), len(ys)


def reference_tiling_approximation() -> ApertureLayout:
    """A 16x16 tiling with the same sub-array count and granularity (23, 16)
    as the published tiling figure.

    APPROXIMATE: the published tiling has no coordinate listing. This
    fixture is a searched tiling that reproduces the reported summary
    numbers, not a transcription of the figure itself.
    """
    text = resources.files("nfcal.data").joinpath("reference_tiling_approx.json").read_text()
    return ApertureLayout.from_json(text)
