"""Terrain, forest cover and entity placement for the relay scenario.

Grid convention: ``elevations[iy, ix]`` is the height of the node at
``(ix * cell_size, iy * cell_size)``. Nodes double as ground-cell centres, so
the terrain extent is ``[0, (width_cells - 1) * cell_size]`` along x (and the
same along y).
"""

from dataclasses import dataclass
import math

import numpy as np

from .validation import (
    GridParseError,
    OutOfBoundsError,
    PlacementError,
    check_fraction,
    check_int,
    check_nonneg,
    check_positive,
)

USER_HEIGHT = 1.5
BS_HEIGHT = 10.0
MAX_USER_SPREAD = 10000.0
PLACEMENT_BUDGET = 10000


@dataclass(frozen=True)
class Position3D:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise ValueError(f"Position3D.{name} must be finite, got {val!r}")
            object.__setattr__(self, name, val)

    def as_array(self):
        return np.array([self.x, self.y, self.z])

    @classmethod
    def from_array(cls, arr):
        x, y, z = (float(v) for v in arr)
        return cls(x, y, z)

    def distance(self, other):
        return float(np.linalg.norm(self.as_array() - other.as_array()))


@dataclass(frozen=True)
class Box:
    """Axis-aligned flight box; the z-range is absolute height."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float = 10.0
    z_max: float = 300.0

    def __post_init__(self):
        for lo, hi in (("x_min", "x_max"), ("y_min", "y_max"), ("z_min", "z_max")):
            a, b = float(getattr(self, lo)), float(getattr(self, hi))
            if not (math.isfinite(a) and math.isfinite(b)) or a > b:
                raise ValueError(f"invalid box range {lo}={a!r}, {hi}={b!r}")
            object.__setattr__(self, lo, a)
            object.__setattr__(self, hi, b)

    @property
    def low(self):
        return np.array([self.x_min, self.y_min, self.z_min])

    @property
    def high(self):
        return np.array([self.x_max, self.y_max, self.z_max])

    @property
    def center(self):
        return Position3D.from_array((self.low + self.high) / 2.0)

    def violations(self, pos):
        """Names of the bounds ``pos`` violates, e.g. ``['x < x_min']``."""
        out = []
        for axis in ("x", "y", "z"):
            val = getattr(pos, axis)
            if val < getattr(self, f"{axis}_min"):
                out.append(f"{axis} < {axis}_min ({val:g} < {getattr(self, axis + '_min'):g})")
            elif val > getattr(self, f"{axis}_max"):
                out.append(f"{axis} > {axis}_max ({val:g} > {getattr(self, axis + '_max'):g})")
        return out

    def contains(self, pos):
        return not self.violations(pos)

    def clamp(self, pos):
        return Position3D.from_array(np.clip(pos.as_array(), self.low, self.high))

    def normalize(self, pos):
        """Map ``pos`` to box coordinates where the box spans [0, 1] per axis.

        A degenerate axis maps to 0.5.
        """
        low, high = self.low, self.high
        span = high - low
        arr = np.asarray(pos.as_array() if isinstance(pos, Position3D) else pos, dtype=float)
        out = np.full_like(arr, 0.5)
        ok = span > 0
        out[..., ok] = (arr[..., ok] - low[ok]) / span[ok]
        return out


@dataclass(frozen=True, eq=False)
class TerrainGrid:
    elevations: np.ndarray
    forest_mask: np.ndarray
    cell_size: float

    def __post_init__(self):
        elev = np.array(self.elevations, dtype=np.float64)
        forest = np.array(self.forest_mask, dtype=bool)
        if elev.ndim != 2 or elev.shape[0] < 1 or elev.shape[1] < 1:
            raise ValueError(f"elevations must be a non-empty 2-D grid, got shape {elev.shape}")
        if forest.shape != elev.shape:
            raise ValueError(
                f"forest_mask shape {forest.shape} does not match elevations shape {elev.shape}"
            )
        if not np.all(np.isfinite(elev)):
            raise ValueError("elevations must be finite")
        check_positive(self.cell_size, "cell_size")
        elev.setflags(write=False)
        forest.setflags(write=False)
        object.__setattr__(self, "elevations", elev)
        object.__setattr__(self, "forest_mask", forest)
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @property
    def width_cells(self):
        return self.elevations.shape[1]

    @property
    def height_cells(self):
        return self.elevations.shape[0]

    @property
    def extent_x(self):
        return (self.width_cells - 1) * self.cell_size

    @property
    def extent_y(self):
        return (self.height_cells - 1) * self.cell_size

    def node_coordinates(self):
        """Arrays ``(xs, ys)`` of node coordinates, each shaped like the grid."""
        xs = np.arange(self.width_cells) * self.cell_size
        ys = np.arange(self.height_cells) * self.cell_size
        return np.meshgrid(xs, ys)

    def contains_xy(self, x, y):
        return 0.0 <= x <= self.extent_x and 0.0 <= y <= self.extent_y

    def cell_index(self, x, y):
        """Nearest node ``(iy, ix)`` for a point inside the extent."""
        ix = int(np.clip(np.rint(x / self.cell_size), 0, self.width_cells - 1))
        iy = int(np.clip(np.rint(y / self.cell_size), 0, self.height_cells - 1))
        return iy, ix


@dataclass(frozen=True, eq=False)
class Scenario:
    terrain: TerrainGrid
    bs: Position3D
    users: tuple
    uav_init: Position3D
    bounds: Box
    max_user_spread: float = MAX_USER_SPREAD
    user_height: float = USER_HEIGHT
    bs_height: float = BS_HEIGHT

    @property
    def n_users(self):
        return len(self.users)

    def user_array(self):
        return np.array([u.as_array() for u in self.users]).reshape(-1, 3)


def default_bounds(terrain, z_min=10.0, z_max=300.0):
    """Flight box covering the whole terrain extent."""
    return Box(0.0, terrain.extent_x, 0.0, terrain.extent_y, z_min, z_max)


def _diamond_square(rng, size, roughness, persistence=0.5):
    n = size
    grid = np.zeros((n, n))
    amp = roughness
    grid[:: n - 1, :: n - 1] = rng.uniform(-1.0, 1.0, size=(2, 2)) * amp
    step = n - 1
    while step > 1:
        half = step // 2
        # square step: centres from the four diagonal corners
        corners = (
            grid[0:-1:step, 0:-1:step]
            + grid[0:-1:step, step::step]
            + grid[step::step, 0:-1:step]
            + grid[step::step, step::step]
        )
        grid[half::step, half::step] = corners / 4.0 + rng.uniform(-1.0, 1.0, size=corners.shape) * amp

        # diamond step: edge midpoints from up to four axial neighbours
        padded = np.full((n + 2 * half, n + 2 * half), np.nan)
        padded[half:-half, half:-half] = grid
        mask = np.zeros((n, n), dtype=bool)
        mask[half::step, 0::step] = True
        mask[0::step, half::step] = True
        iy, ix = np.nonzero(mask)
        py, px = iy + half, ix + half
        neigh = np.stack(
            [padded[py - half, px], padded[py + half, px], padded[py, px - half], padded[py, px + half]]
        )
        avg = np.nanmean(neigh, axis=0)
        grid[iy, ix] = avg + rng.uniform(-1.0, 1.0, size=avg.shape) * amp
        amp *= persistence
        step = half
    return grid


def generate_terrain(
    seed,
    width_cells,
    height_cells,
    cell_size,
    roughness,
    forest_fraction,
    base_elevation=0.0,
):
    """Synthesize a seeded diamond-square height field with a Bernoulli forest mask.

    Displacements start at ``roughness`` metres at the coarsest level and
    halve at each refinement, so ``roughness=0`` yields a flat grid at
    ``base_elevation``. The fractal is built on the smallest ``2**m + 1``
    square covering the requested dimensions and cropped.
    """
    check_int(seed, "seed")
    width_cells = check_int(width_cells, "width_cells", minimum=2)
    height_cells = check_int(height_cells, "height_cells", minimum=2)
    check_positive(cell_size, "cell_size")
    roughness = check_nonneg(roughness, "roughness")
    forest_fraction = check_fraction(forest_fraction, "forest_fraction")

    rng = np.random.default_rng(seed)
    size = 2
    while size + 1 < max(width_cells, height_cells):
        size *= 2
    field_ = _diamond_square(rng, size + 1, roughness)
    elevations = base_elevation + field_[:height_cells, :width_cells]
    forest = rng.random((height_cells, width_cells)) < forest_fraction
    return TerrainGrid(elevations, forest, cell_size)


def elevations_at(terrain, xs, ys):
    """Vectorized bilinear interpolation; callers guarantee points lie inside the extent."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    elev = terrain.elevations
    h, w = elev.shape
    flat = elev.ravel()
    fx = xs * (1.0 / terrain.cell_size)
    fy = ys * (1.0 / terrain.cell_size)
    ix = np.clip(fx.astype(np.intp), 0, max(w - 2, 0))
    iy = np.clip(fy.astype(np.intp), 0, max(h - 2, 0))
    tx = fx - ix if w > 1 else np.zeros_like(fx)
    ty = fy - iy if h > 1 else np.zeros_like(fy)
    base = iy * w + ix
    dx = 1 if w > 1 else 0
    dy = w if h > 1 else 0
    z00 = flat.take(base)
    z01 = flat.take(base + dx)
    z10 = flat.take(base + dy)
    z11 = flat.take(base + dy + dx)
    top = z00 + (z01 - z00) * tx
    bottom = z10 + (z11 - z10) * tx
    return top + (bottom - top) * ty


def elevation_at(terrain, x, y):
    """Bilinear terrain height at ``(x, y)``; raises ``OutOfBoundsError`` outside the extent."""
    if not (math.isfinite(x) and math.isfinite(y)) or not terrain.contains_xy(x, y):
        raise OutOfBoundsError(
            f"point ({x}, {y}) outside terrain extent [0, {terrain.extent_x}] x [0, {terrain.extent_y}]"
        )
    return float(elevations_at(terrain, x, y))


def place_scenario(
    seed,
    terrain,
    n_users,
    bounds,
    *,
    max_user_spread=MAX_USER_SPREAD,
    user_height=USER_HEIGHT,
    bs_height=BS_HEIGHT,
    max_tries=PLACEMENT_BUDGET,
):
    """Uniformly place BS, users and the initial UAV pose inside ``bounds``.

    User layouts whose largest pairwise horizontal distance exceeds
    ``max_user_spread`` are rejected and redrawn, at most ``max_tries`` times.
    """
    check_int(seed, "seed")
    n_users = check_int(n_users, "n_users", minimum=1)
    check_positive(max_user_spread, "max_user_spread")
    if (
        bounds.x_min < 0
        or bounds.y_min < 0
        or bounds.x_max > terrain.extent_x
        or bounds.y_max > terrain.extent_y
    ):
        raise OutOfBoundsError(
            f"bounds {bounds} exceed terrain extent [0, {terrain.extent_x}] x [0, {terrain.extent_y}]"
        )
    rng = np.random.default_rng(seed)

    for _ in range(max_tries):
        ux = rng.uniform(bounds.x_min, bounds.x_max, n_users)
        uy = rng.uniform(bounds.y_min, bounds.y_max, n_users)
        pts = np.column_stack([ux, uy])
        spread = np.max(np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1))
        if spread <= max_user_spread:
            break
    else:
        raise PlacementError(
            f"could not place {n_users} users within spread {max_user_spread} m after {max_tries} tries"
        )
    ground = elevations_at(terrain, ux, uy)
    users = tuple(Position3D(x, y, g + user_height) for x, y, g in zip(ux, uy, ground))

    bx = rng.uniform(bounds.x_min, bounds.x_max)
    by = rng.uniform(bounds.y_min, bounds.y_max)
    bs = Position3D(bx, by, elevation_at(terrain, bx, by) + bs_height)

    uav = Position3D(
        rng.uniform(bounds.x_min, bounds.x_max),
        rng.uniform(bounds.y_min, bounds.y_max),
        rng.uniform(bounds.z_min, bounds.z_max),
    )
    return Scenario(
        terrain=terrain,
        bs=bs,
        users=users,
        uav_init=uav,
        bounds=bounds,
        max_user_spread=float(max_user_spread),
        user_height=float(user_height),
        bs_height=float(bs_height),
    )


def load_heightmap(path):
    """Parse a text grid file.

    Format::

        grid <width> <height> <cell_size>
        <height rows of width elevations>
        forest                      (optional)
        <height rows of width 0/1 flags>
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    # trailing blank lines are tolerated
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise GridParseError("empty grid file", line=1)

    header = lines[0].split()
    if len(header) != 4 or header[0] != "grid":
        raise GridParseError("header must be 'grid <width> <height> <cell_size>'", line=1)
    try:
        width, height = int(header[1]), int(header[2])
        cell_size = float(header[3])
    except ValueError:
        raise GridParseError(f"non-numeric header field in {lines[0]!r}", line=1) from None
    if width < 1 or height < 1 or not (math.isfinite(cell_size) and cell_size > 0):
        raise GridParseError("width and height must be >= 1 and cell_size > 0", line=1)

    def read_block(start, parse, what):
        rows = []
        for r in range(height):
            lineno = start + r + 1
            if start + r >= len(lines):
                raise GridParseError(f"expected {height} {what} rows, found {r}", line=lineno)
            tokens = lines[start + r].split()
            if len(tokens) != width:
                raise GridParseError(
                    f"ragged row {r + 1}: expected {width} values, got {len(tokens)}", line=lineno
                )
            try:
                rows.append([parse(t) for t in tokens])
            except ValueError:
                raise GridParseError(f"non-numeric cell in {what} row {r + 1}", line=lineno) from None
        return rows

    def parse_elev(tok):
        val = float(tok)
        if not math.isfinite(val):
            raise ValueError(tok)
        return val

    def parse_flag(tok):
        if tok not in ("0", "1"):
            raise ValueError(tok)
        return tok == "1"

    elev = read_block(1, parse_elev, "elevation")
    pos = 1 + height
    forest = [[False] * width for _ in range(height)]
    if pos < len(lines):
        if lines[pos].strip() != "forest":
            raise GridParseError(f"unexpected content {lines[pos]!r}; expected 'forest'", line=pos + 1)
        forest = read_block(pos + 1, parse_flag, "forest")
        pos += 1 + height
        if pos < len(lines):
            raise GridParseError("trailing content after forest section", line=pos + 1)
    return TerrainGrid(np.array(elev, dtype=float), np.array(forest, dtype=bool), cell_size)


def save_heightmap(terrain, path):
    """Write ``terrain`` in the text grid format with a forest section."""
    out = [f"grid {terrain.width_cells} {terrain.height_cells} {terrain.cell_size!r}"]
    out.extend(" ".join(repr(float(v)) for v in row) for row in terrain.elevations)
    out.append("forest")
    out.extend(" ".join("1" if f else "0" for f in row) for row in terrain.forest_mask)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
