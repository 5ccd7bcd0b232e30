"""
Occupancy-grid mapping from simulated lidar and A* replanning.

Cells are binary: unknown until a scan proves them empty, then free, or
occupied when a beam ends inside them. Occupied cells never revert to free.
Planning treats unknown cells as blocked.
"""

import heapq
import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from PIL import Image
from scipy.ndimage import binary_dilation

from .control import PathSpec
from .errors import InvalidParametersError, InvalidPathError, NoPathError
from .metric import Vec2, as_vec2, frozen
from .obstacles import BaseObstacle, Environment, PointCloud, Workspace

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
# clearance, in cells, between a freed cell and the nearest return around it
FREE_MARGIN = 0.25
Cell = tuple[int, int]

NEIGHBORS: list[tuple[int, int, float]] = [
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, SQRT2),
    (1, -1, SQRT2),
    (-1, 1, SQRT2),
    (-1, -1, SQRT2),
]


class CellState(IntEnum):
    UNKNOWN = -1
    FREE = 0
    OCCUPIED = 1


CELL_CHARS = {CellState.UNKNOWN: "U", CellState.FREE: "F", CellState.OCCUPIED: "O"}
CELL_GRAY = {CellState.UNKNOWN: 128, CellState.FREE: 255, CellState.OCCUPIED: 0}


class OccupancyGrid:
    """
    Grid of width x height square cells whose lower-left corner is origin.

    cells is indexed [iy, ix]. hits keeps the first lidar return seen in each
    occupied cell.
    """

    def __init__(
        self,
        origin: ArrayLike,
        resolution: float,
        width: int,
        height: int,
        cells: NDArray[np.int8] | None = None,
        hits: dict[Cell, tuple[float, float]] | None = None,
    ):
        if not (resolution > 0 and math.isfinite(resolution)):
            raise InvalidParametersError(f"grid resolution {resolution} must be positive")
        if width < 1 or height < 1:
            raise InvalidParametersError(f"grid size {width}x{height} is empty")
        self.origin = frozen(as_vec2(origin))
        self.resolution = float(resolution)
        self.width = int(width)
        self.height = int(height)
        if cells is None:
            cells = np.full((self.height, self.width), CellState.UNKNOWN, dtype=np.int8)
        if cells.shape != (self.height, self.width):
            raise InvalidParametersError(f"cell array {cells.shape} does not match {height}x{width}")
        self.cells = cells
        self.hits = dict(hits or {})

    @classmethod
    def covering(cls, bounds: Workspace, resolution: float) -> "OccupancyGrid":
        return cls(
            (bounds.xmin, bounds.ymin),
            resolution,
            math.ceil(bounds.width / resolution - 1e-9),
            math.ceil(bounds.height / resolution - 1e-9),
        )

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(
            self.origin, self.resolution, self.width, self.height, self.cells.copy(), self.hits
        )

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def cell_of(self, p: ArrayLike) -> Cell:
        x, y = (as_vec2(p) - self.origin) / self.resolution
        return math.floor(x), math.floor(y)

    def center(self, cell: Cell) -> Vec2:
        return self.origin + (np.array(cell, dtype=np.float64) + 0.5) * self.resolution

    def state(self, cell: Cell) -> CellState:
        return CellState(int(self.cells[cell[1], cell[0]]))

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and self.cells[cell[1], cell[0]] == CellState.FREE

    def count(self, state: CellState) -> int:
        return int(np.count_nonzero(self.cells == state))

    def hit_cloud(self) -> list[BaseObstacle]:
        """Accumulated lidar returns as obstacles, empty before the first hit."""
        if not self.hits:
            return []
        return [PointCloud([self.hits[cell] for cell in sorted(self.hits)])]

    def to_text(self) -> str:
        """Text dump: a 'width height resolution origin_x origin_y' header, then rows top to bottom."""
        header = f"{self.width} {self.height} {self.resolution!r} {float(self.origin[0])!r} {float(self.origin[1])!r}"
        rows = [
            "".join(CELL_CHARS[CellState(int(v))] for v in self.cells[iy])
            for iy in range(self.height - 1, -1, -1)
        ]
        return "\n".join([header, *rows]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "OccupancyGrid":
        lines = text.strip().splitlines()
        w, h, res, ox, oy = lines[0].split()
        states = {char: state for state, char in CELL_CHARS.items()}
        cells = np.array(
            [[states[c] for c in row] for row in reversed(lines[1:])], dtype=np.int8
        ).reshape(int(h), int(w))
        return cls((float(ox), float(oy)), float(res), int(w), int(h), cells)


def export_png(grid: OccupancyGrid, path: Path | str, scale: int = 4) -> Path:
    """Greyscale image of the grid, north up: occupied black, free white, unknown grey."""
    out = Path(path)
    pixels = np.zeros(grid.cells.shape, dtype=np.uint8)
    for state, gray in CELL_GRAY.items():
        pixels[grid.cells == state] = gray
    image = Image.fromarray(np.ascontiguousarray(np.flipud(pixels)))
    if scale > 1:
        image = image.resize((grid.width * scale, grid.height * scale), Image.Resampling.NEAREST)
    image.save(out)
    return out


@dataclass(kw_only=True, frozen=True, eq=False)
class LidarScan:
    origin: Vec2
    angles: NDArray[np.float64]
    ranges: NDArray[np.float64]
    max_range: float

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=np.float64).reshape(-1)
        ranges = np.asarray(self.ranges, dtype=np.float64).reshape(-1)
        if angles.shape != ranges.shape:
            raise InvalidParametersError(f"{len(angles)} angles but {len(ranges)} ranges")
        if not self.max_range > 0:
            raise InvalidParametersError(f"max_range={self.max_range} must be positive")
        if np.any(ranges <= 0) or np.any(ranges > self.max_range):
            raise InvalidParametersError("lidar ranges must lie in (0, max_range]")
        object.__setattr__(self, "origin", frozen(as_vec2(self.origin)))
        object.__setattr__(self, "angles", frozen(angles))
        object.__setattr__(self, "ranges", frozen(ranges))

    def hit_points(self) -> NDArray[np.float64]:
        hit = self.ranges < self.max_range
        r = self.ranges[hit]
        a = self.angles[hit]
        return self.origin + np.column_stack([r * np.cos(a), r * np.sin(a)])


def lidar_scan(env: Environment, origin: ArrayLike, beams: int, max_range: float) -> LidarScan:
    """Noise-free sweep of evenly spaced beams over the full circle."""
    angles = np.linspace(0.0, 2.0 * math.pi, beams, endpoint=False)
    return LidarScan(
        origin=origin, angles=angles, ranges=env.scan(origin, angles, max_range), max_range=max_range
    )


def _traverse(grid: OccupancyGrid, start: Vec2, direction: Vec2, length: float) -> list[Cell]:
    """Cells entered by the ray start + t * direction for t in [0, length], in order."""
    res = grid.resolution
    ix, iy = grid.cell_of(start)
    rel = start - grid.origin
    steps = []
    for axis, i in ((0, ix), (1, iy)):
        d = direction[axis]
        if d > 0:
            steps.append((1, ((i + 1) * res - rel[axis]) / d, res / d))
        elif d < 0:
            steps.append((-1, (i * res - rel[axis]) / d, -res / d))
        else:
            steps.append((0, math.inf, math.inf))
    (sx, tx, dx), (sy, ty, dy) = steps
    cells = [(ix, iy)]
    while True:
        if tx < ty:
            t, ix, tx = tx, ix + sx, tx + dx
        else:
            t, iy, ty = ty, iy + sy, ty + dy
        if t > length or not grid.in_bounds((ix, iy)):
            break
        cells.append((ix, iy))
    return cells


def _range_min_table(values: NDArray[np.float64]) -> NDArray[np.float64]:
    """Sparse table: row k holds minima over windows of 2**k values, padded with inf."""
    levels = [values]
    span = 1
    while 2 * span <= len(values):
        prev = levels[-1]
        levels.append(np.minimum(prev[:-span], prev[span:]))
        span *= 2
    table = np.full((len(levels), len(values)), np.inf)
    for k, level in enumerate(levels):
        table[k, : len(level)] = level
    return table


def _range_min(table: NDArray[np.float64], lo: NDArray[np.intp], hi: NDArray[np.intp]) -> NDArray[np.float64]:
    k = np.frexp((hi - lo + 1).astype(np.float64))[1] - 1
    return np.minimum(table[k, lo], table[k, hi - np.left_shift(1, k) + 1])


def _observed_free(grid: OccupancyGrid, scan: LidarScan, cells: NDArray[np.intp]) -> NDArray[np.bool_]:
    """
    Cells the scan proves empty.

    A cell qualifies when every beam inside its angular extent, and the
    nearest beam on either side, travels past the cell's far corner by
    FREE_MARGIN cells. A beam that only grazes an obstacle therefore frees
    nothing the neighbouring returns put in doubt. Max-range beams count as
    unbounded.
    """
    two_pi = 2.0 * math.pi
    wrapped = np.mod(scan.angles, two_pi)
    order = np.argsort(wrapped, kind="stable")
    angles = wrapped[order]
    ranges = np.where(scan.ranges < scan.max_range, scan.ranges, np.inf)[order]
    ring = np.concatenate([angles - two_pi, angles, angles + two_pi, angles + 2.0 * two_pi])
    table = _range_min_table(np.tile(ranges, 4))

    res = grid.resolution
    lower = grid.origin + cells * res - scan.origin
    corners = lower[:, None, :] + np.array([[0.0, 0.0], [res, 0.0], [0.0, res], [res, res]])
    far = np.max(np.hypot(corners[..., 0], corners[..., 1]), axis=1)
    around = np.all((lower <= 0.0) & (lower + res >= 0.0), axis=1)

    center = lower + 0.5 * res
    ref = np.arctan2(center[:, 1], center[:, 0])
    offsets = np.mod(np.arctan2(corners[..., 1], corners[..., 0]) - ref[:, None] + math.pi, two_pi) - math.pi
    start = np.where(around, 0.0, np.mod(ref + offsets.min(axis=1), two_pi))
    stop = start + np.where(around, 0.0, offsets.max(axis=1) - offsets.min(axis=1))
    lo = np.searchsorted(ring, start, side="left") - 1
    hi = np.searchsorted(ring, stop, side="right")
    evidence = np.where(around, ranges.min(), _range_min(table, lo, hi))
    return far + FREE_MARGIN * res <= evidence


def integrate_scan(grid: OccupancyGrid, scan: LidarScan) -> OccupancyGrid:
    """
    Mark traversed cells free and the terminal cell of each returning beam occupied.

    Traversed cells the scan cannot prove empty (see _observed_free) keep
    their state, so a free cell never holds part of an obstacle.
    """
    out = grid.copy()
    cells = out.cells
    traversed: set[Cell] = set()
    terminals: list[tuple[Cell, Vec2]] = []
    for angle, rng in zip(scan.angles, scan.ranges, strict=True):
        direction = np.array([math.cos(angle), math.sin(angle)])
        path = _traverse(out, scan.origin, direction, float(rng))
        end = scan.origin + rng * direction
        terminal = out.cell_of(end) if rng < scan.max_range else None
        traversed.update(cell for cell in path if cell != terminal and out.in_bounds(cell))
        if terminal is not None and out.in_bounds(terminal):
            terminals.append((terminal, end))
    if traversed:
        candidates = np.array(sorted(traversed), dtype=np.intp)
        proven = candidates[_observed_free(out, scan, candidates)]
        ix, iy = proven[:, 0], proven[:, 1]
        keep = cells[iy, ix] != CellState.OCCUPIED
        cells[iy[keep], ix[keep]] = CellState.FREE
    for terminal, end in terminals:
        cells[terminal[1], terminal[0]] = CellState.OCCUPIED
        out.hits.setdefault(terminal, (float(end[0]), float(end[1])))
    return out


def disk_element(radius: int) -> NDArray[np.bool_]:
    r = np.arange(-radius, radius + 1)
    return (r[:, None] ** 2 + r[None, :] ** 2) <= radius * radius


def inflate(grid: OccupancyGrid, robot_margin: float) -> OccupancyGrid:
    """Grow occupied cells by a disk of ceil(margin / resolution) cells."""
    if robot_margin < 0:
        raise InvalidParametersError(f"robot_margin={robot_margin} must be >= 0")
    radius = math.ceil(robot_margin / grid.resolution - 1e-9)
    out = grid.copy()
    if radius == 0:
        return out
    occupied = grid.cells == CellState.OCCUPIED
    grown = binary_dilation(occupied, structure=disk_element(radius))
    out.cells[grown] = CellState.OCCUPIED
    return out


def octile(a: Cell, b: Cell) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


def neighbors(grid: OccupancyGrid, cell: Cell):
    """Free 8-neighbors with step cost in cells; diagonals may not cut blocked corners."""
    x, y = cell
    for dx, dy, cost in NEIGHBORS:
        nxt = (x + dx, y + dy)
        if not grid.is_free(nxt):
            continue
        if dx and dy and not (grid.is_free((x + dx, y)) and grid.is_free((x, y + dy))):
            continue
        yield nxt, cost


def _reachable(grid: OccupancyGrid, start: Cell) -> list[Cell]:
    seen = {start}
    frontier = [start]
    while frontier:
        cell = frontier.pop()
        for nxt, _ in neighbors(grid, cell):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return sorted(seen)


def nearest_free(grid: OccupancyGrid, p: ArrayLike, candidates: list[Cell] | None = None) -> Cell | None:
    """Free cell whose center is closest to p (lowest index on ties)."""
    pv = as_vec2(p)
    if candidates is None:
        ys, xs = np.nonzero(grid.cells == CellState.FREE)
        candidates = sorted(zip(xs.tolist(), ys.tolist(), strict=True))
    if not candidates:
        return None
    centers = grid.origin + (np.array(candidates, dtype=np.float64) + 0.5) * grid.resolution
    return candidates[int(np.argmin(np.linalg.norm(centers - pv, axis=1)))]


class GridPath(NamedTuple):
    cells: list[Cell]
    points: list[Vec2]
    cost: float


def astar(grid: OccupancyGrid, start: ArrayLike, goal: ArrayLike, *, on_expand=None) -> GridPath:
    """
    8-connected A* with the octile heuristic, costs in meters.

    A blocked start snaps to the nearest free cell. When the goal cell is not
    free the target becomes the reachable free cell closest to the goal.
    on_expand(cell, cost_so_far, heuristic) is called for every expanded node.
    """
    start_cell = grid.cell_of(start)
    if not grid.is_free(start_cell):
        start_cell = nearest_free(grid, start)
        if start_cell is None:
            raise NoPathError("no free cell to start from")
    goal_cell = grid.cell_of(goal)
    if grid.is_free(goal_cell):
        target = goal_cell
    else:
        target = nearest_free(grid, goal, _reachable(grid, start_cell))

    res = grid.resolution
    open_set = [(octile(start_cell, target) * res, 0, start_cell)]
    cost_so_far = {start_cell: 0.0}
    came_from: dict[Cell, Cell] = {}
    closed = set()
    counter = 0
    while open_set:
        _, _, cell = heapq.heappop(open_set)
        if cell in closed:
            continue
        closed.add(cell)
        if on_expand is not None:
            on_expand(cell, cost_so_far[cell], octile(cell, target) * res)
        if cell == target:
            cells = [cell]
            while cells[-1] in came_from:
                cells.append(came_from[cells[-1]])
            cells.reverse()
            return GridPath(cells, [grid.center(c) for c in cells], cost_so_far[cell])
        for nxt, step in neighbors(grid, cell):
            cost = cost_so_far[cell] + step * res
            if cost < cost_so_far.get(nxt, math.inf):
                cost_so_far[nxt] = cost
                came_from[nxt] = cell
                counter += 1
                heapq.heappush(open_set, (cost + octile(nxt, target) * res, counter, nxt))
    raise NoPathError(f"no path from cell {start_cell} to cell {target}")


def supercover(grid: OccupancyGrid, a: ArrayLike, b: ArrayLike) -> list[Cell]:
    """Every cell the closed segment ab touches, including both cells at exact corner crossings."""
    av, bv = as_vec2(a), as_vec2(b)
    delta = bv - av
    length = float(np.linalg.norm(delta))
    if length == 0.0:
        return [grid.cell_of(av)]
    direction = delta / length
    res = grid.resolution
    ix, iy = grid.cell_of(av)
    rel = av - grid.origin
    sx = 1 if direction[0] > 0 else -1 if direction[0] < 0 else 0
    sy = 1 if direction[1] > 0 else -1 if direction[1] < 0 else 0
    tx = ((ix + (sx > 0)) * res - rel[0]) / direction[0] if sx else math.inf
    ty = ((iy + (sy > 0)) * res - rel[1]) / direction[1] if sy else math.inf
    dx = res / abs(direction[0]) if sx else math.inf
    dy = res / abs(direction[1]) if sy else math.inf
    cells = [(ix, iy)]
    while min(tx, ty) <= length:
        if math.isclose(tx, ty, rel_tol=0.0, abs_tol=1e-12):
            cells.extend([(ix + sx, iy), (ix, iy + sy)])
            ix, iy = ix + sx, iy + sy
            tx, ty = tx + dx, ty + dy
        elif tx < ty:
            ix, tx = ix + sx, tx + dx
        else:
            iy, ty = iy + sy, ty + dy
        cells.append((ix, iy))
    return cells


def segment_free(grid: OccupancyGrid, a: ArrayLike, b: ArrayLike) -> bool:
    return all(grid.is_free(cell) for cell in supercover(grid, a, b))


def simplify_path(points: list[Vec2], grid: OccupancyGrid) -> PathSpec:
    """Greedy line-of-sight shortcutting: extend each segment while it stays over free cells."""
    if not points:
        raise InvalidPathError("cannot simplify an empty path")
    kept = [as_vec2(points[0])]
    i = 0
    last = len(points) - 1
    while i < last:
        j = i + 1
        while j < last and segment_free(grid, points[i], points[j + 1]):
            j += 1
        kept.append(as_vec2(points[j]))
        i = j
    return PathSpec(waypoints=np.array(kept))


@dataclass(kw_only=True, frozen=True)
class MappingConfig:
    beams: int = 120
    max_range: float = 10.0
    resolution: float = 0.2
    margin: float = 0.3
    scan_period: float = 0.1
    replan_period: float = 0.5

    def __post_init__(self):
        if self.beams < 1:
            raise InvalidParametersError(f"beams={self.beams} must be >= 1")
        for name in ("max_range", "resolution", "scan_period", "replan_period"):
            if not getattr(self, name) > 0:
                raise InvalidParametersError(f"{name}={getattr(self, name)} must be positive")
        if self.margin < 0:
            raise InvalidParametersError(f"margin={self.margin} must be >= 0")


class MappingPlanner:
    """Map built from the robot's own scans, replanned from the governor position."""

    def __init__(self, bounds: Workspace, config: MappingConfig):
        self.config = config
        self.grid = OccupancyGrid.covering(bounds, config.resolution)
        self.inflated = inflate(self.grid, config.margin)
        self._occupied_at_plan: NDArray[np.bool_] | None = None

    def observe(self, env: Environment, origin: ArrayLike) -> LidarScan:
        scan = lidar_scan(env, origin, self.config.beams, self.config.max_range)
        self.grid = integrate_scan(self.grid, scan)
        self.inflated = inflate(self.grid, self.config.margin)
        return scan

    def obstacles(self) -> list[BaseObstacle]:
        return self.grid.hit_cloud()

    def path_blocked(self, path: PathSpec) -> bool:
        """True when path crosses a cell that became occupied after it was planned."""
        fresh = self.inflated.cells == CellState.OCCUPIED
        if self._occupied_at_plan is not None:
            fresh &= ~self._occupied_at_plan
        points = path.waypoints
        for a, b in zip(points[:-1], points[1:], strict=True):
            for ix, iy in supercover(self.inflated, a, b):
                if self.inflated.in_bounds((ix, iy)) and fresh[iy, ix]:
                    return True
        return False

    def plan(self, start: ArrayLike, goal: ArrayLike) -> PathSpec | None:
        """Path from start toward goal on the inflated map, or None when start already sits on the target."""
        found = astar(self.inflated, start, goal)
        self._occupied_at_plan = self.inflated.cells == CellState.OCCUPIED
        start_v, goal_v = as_vec2(start), as_vec2(goal)
        snapped = found.cells[0] != self.inflated.cell_of(start_v)
        points = [start_v, *(found.points if snapped else found.points[1:])]
        if found.cells[-1] == self.inflated.cell_of(goal_v):
            if len(points) > 1:
                points[-1] = goal_v
            else:
                points.append(goal_v)
        deduped = [points[0]]
        for p in points[1:]:
            if not np.array_equal(p, deduped[-1]):
                deduped.append(p)
        if len(deduped) < 2:
            return None
        path = simplify_path(deduped, self.inflated)
        logger.debug("planned waypoints=%d length=%.3f", len(path.waypoints), path.length)
        return path
