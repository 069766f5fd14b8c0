"""Ground-level coverage maps for a UAV pose."""

from dataclasses import dataclass

import numpy as np

from .channel import uav_ground_gains
from .validation import GridParseError, OutOfBoundsError, check_finite_array
from .world import Position3D


@dataclass(frozen=True, eq=False)
class CoverageMap:
    """Received power (dBm) per ground cell, ``values[iy, ix]``."""

    values: np.ndarray
    cell_size: float
    uav_pose: Position3D = None

    def __post_init__(self):
        vals = check_finite_array(self.values, "coverage values", ndim=2).copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @property
    def width_cells(self):
        return self.values.shape[1]

    @property
    def height_cells(self):
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape


def compute_coverage_map(scenario, uav, params, receiver_height=None):
    """Received power at every ground cell from a UAV at ``uav``.

    Each cell is a receiver at its centre, ``receiver_height`` (default: the
    scenario's user height) above the terrain; the value is the UAV transmit
    power plus the UAV->user link gain.
    """
    problems = scenario.bounds.violations(uav)
    if problems:
        raise OutOfBoundsError("UAV pose outside bounds: " + "; ".join(problems))
    terrain = scenario.terrain
    h_rx = scenario.user_height if receiver_height is None else receiver_height
    xs, ys = terrain.node_coordinates()
    pts = np.column_stack([xs.ravel(), ys.ravel(), terrain.elevations.ravel() + h_rx])
    pl, ked, veg = uav_ground_gains(terrain, uav, pts, terrain.forest_mask.ravel(), params)
    values = (params.tx_power_uav_dbm + (pl + ked + veg)).reshape(terrain.elevations.shape)
    return CoverageMap(values, terrain.cell_size, uav)


def _values(m):
    return m.values if isinstance(m, CoverageMap) else np.asarray(m, dtype=float)


def map_mae(a, b):
    """Mean absolute difference in dB between two equally shaped maps."""
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise ValueError(f"coverage map shapes differ: {va.shape} vs {vb.shape}")
    return float(np.mean(np.abs(va - vb)))


def aggregate_power_mw(m):
    """Sum of per-cell received powers in linear mW (scalar diagnostic)."""
    return float(np.sum(10.0 ** (_values(m) / 10.0)))


def write_coverage_csv(m, fh):
    """Write ``m`` row-major to an open text stream."""
    p = m.uav_pose
    pose = (p.x, p.y, p.z) if p is not None else (float("nan"),) * 3
    fh.write(
        f"# coverage {m.width_cells} {m.height_cells} {m.cell_size!r} "
        f"{pose[0]!r} {pose[1]!r} {pose[2]!r}\n"
    )
    for row in m.values:
        fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_coverage_csv(fh):
    lines = [ln for ln in fh.read().split("\n") if ln.strip()]
    if not lines:
        raise GridParseError("empty coverage file", line=1)
    head = lines[0].split()
    if len(head) != 8 or head[:2] != ["#", "coverage"]:
        raise GridParseError("header must be '# coverage <w> <h> <cell_size> <x> <y> <z>'", line=1)
    w, h = int(head[2]), int(head[3])
    cell = float(head[4])
    xyz = [float(v) for v in head[5:8]]
    pose = None if any(np.isnan(xyz)) else Position3D(*xyz)
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    if len(rows) != h or any(len(r) != w for r in rows):
        raise GridParseError(f"expected {h} rows of {w} values")
    return CoverageMap(np.array(rows), cell, pose)
