"""Link gains: free-space path loss, knife-edge diffraction and vegetation.

Every loss is stored as a negative gain in dB so that a link's total gain is
the plain sum ``pl_db + ked_db + veg_db``.
"""

from dataclasses import dataclass
import math

import numpy as np

from .validation import OutOfBoundsError, check_fraction, check_nonneg, check_positive
from .world import Position3D, elevations_at

SPEED_OF_LIGHT = 299_792_458.0
KED_THRESHOLD = -0.78

LINK_KINDS = ("bs_to_uav", "uav_to_user")


@dataclass(frozen=True)
class ChannelParams:
    fc: float = 2.4e9
    tx_power_uav_dbm: float = 36.98
    tx_power_bs_dbm: float = 36.98
    veg_loss_db: float = 5.0
    fresnel_clearance: float = 0.6

    def __post_init__(self):
        check_positive(self.fc, "fc")
        check_nonneg(self.veg_loss_db, "veg_loss_db")
        check_fraction(self.fresnel_clearance, "fresnel_clearance", low_open=True)
        for name in ("tx_power_uav_dbm", "tx_power_bs_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.fc


@dataclass(frozen=True)
class LinkBudget:
    pl_db: float
    ked_db: float
    veg_db: float
    gain_db: float
    rx_power_dbm: float


def _check_distance(d, fc):
    d = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise ValueError("distance must be finite and > 0")
    if not (math.isfinite(fc) and fc > 0):
        raise ValueError(f"carrier frequency must be > 0, got {fc!r}")
    return d


def _fspl(d, fc, coeff, const):
    d = _check_distance(d, fc)
    out = -(coeff * np.log10(d) + coeff * math.log10(fc) - const)
    return float(out) if out.ndim == 0 else out


def fspl_bs(d, fc):
    """Ground-BS link gain in dB: -(20 log10 d + 20 log10 fc - 147.55)."""
    return _fspl(d, fc, 20.0, 147.55)


def fspl_uav(d, fc):
    """UAV-to-ground link gain in dB: -(21.3 log10 d + 21.3 log10 fc - 157.2)."""
    return _fspl(d, fc, 21.3, 157.2)


def knife_edge_j(v):
    """Single knife-edge loss J(v) in dB (positive), zero for v <= -0.78."""
    v = np.asarray(v, dtype=float)
    with np.errstate(invalid="ignore"):
        j = 6.9 + 20.0 * np.log10(np.sqrt((v - 0.1) ** 2 + 1.0) + v - 0.1)
    out = np.where(v > KED_THRESHOLD, j, 0.0)
    return float(out) if out.ndim == 0 else out


def ked_losses(terrain, tx, rx, fc, clearance=0.6):
    """Diffraction loss in dB (positive) from one transmitter to many receivers.

    ``tx`` is a 3-vector, ``rx`` an ``(m, 3)`` array. The ground track of each
    link is sampled once per crossed cell (endpoints excluded). A sample
    obstructs when the terrain rises above the LOS ray minus ``clearance``
    first-Fresnel radii; every local maximum of the Fresnel-Kirchhoff
    parameter among obstructing samples is one knife edge, and edge losses
    are summed.
    """
    tx = np.asarray(tx, dtype=float)
    rx = np.atleast_2d(np.asarray(rx, dtype=float))
    m = len(rx)
    lam = SPEED_OF_LIGHT / fc
    dxy = rx[:, :2] - tx[:2]
    horiz = np.hypot(dxy[:, 0], dxy[:, 1])
    n_seg = np.maximum(1, np.ceil(horiz / terrain.cell_size - 1e-9)).astype(np.intp)
    counts = n_seg - 1
    total = int(counts.sum())
    if total == 0:
        return np.zeros(m)

    # ragged layout: the samples of receiver i are contiguous, in path order
    rid = np.repeat(np.arange(m), counts)
    first = np.cumsum(counts) - counts
    k = np.arange(total) - first[rid] + 1
    t = k / n_seg[rid]
    dz = rx[rid, 2] - tx[2]
    h = horiz[rid]
    los = tx[2] + t * dz
    span = t * (1.0 - t) * h
    fresnel = np.sqrt(lam * span)
    floor = los - clearance * fresnel

    v = np.full(total, -np.inf)
    # samples whose clearance floor is above every terrain cell cannot obstruct
    cand = np.flatnonzero(floor < terrain.elevations.max())
    if cand.size:
        tc = t[cand]
        rc = rid[cand]
        xs = np.clip(tx[0] + tc * dxy[rc, 0], 0.0, terrain.extent_x)
        ys = np.clip(tx[1] + tc * dxy[rc, 1], 0.0, terrain.extent_y)
        ground = elevations_at(terrain, xs, ys)
        hit = ground > floor[cand]
        idx = cand[hit]
        excess = ground[hit] - los[idx]
        hc, dzc = h[idx], dz[idx]
        # perpendicular clearance from the LOS line, then the diffraction parameter
        perp = excess * hc / np.sqrt(hc**2 + dzc**2)
        v[idx] = perp * np.sqrt(2.0 / (lam * span[idx]))

    prev = np.empty(total)
    prev[0] = -np.inf
    prev[1:] = v[:-1]
    nxt = np.empty(total)
    nxt[-1] = -np.inf
    nxt[:-1] = v[1:]
    has = counts > 0
    prev[first[has]] = -np.inf
    nxt[(first + counts - 1)[has]] = -np.inf
    peak = np.isfinite(v) & (v > prev) & (v >= nxt)
    return np.bincount(rid[peak], weights=knife_edge_j(v[peak]), minlength=m)


def _check_inside(terrain, pos, what):
    if not terrain.contains_xy(pos.x, pos.y):
        raise OutOfBoundsError(
            f"{what} ({pos.x}, {pos.y}) outside terrain extent "
            f"[0, {terrain.extent_x}] x [0, {terrain.extent_y}]"
        )


def ked_loss(terrain, tx, rx, fc, clearance=0.6):
    """Knife-edge diffraction term for one link, as a non-positive gain in dB."""
    check_positive(fc, "fc")
    check_fraction(clearance, "clearance", low_open=True)
    _check_inside(terrain, tx, "tx")
    _check_inside(terrain, rx, "rx")
    if tx.distance(rx) == 0.0:
        raise ValueError("degenerate link: tx and rx coincide")
    loss = ked_losses(terrain, tx.as_array(), rx.as_array()[None, :], fc, clearance)[0]
    return -float(loss)


def vegetation_loss(terrain, user, params):
    """``-veg_loss_db`` when the user's nearest cell is forested, else 0."""
    _check_inside(terrain, user, "user")
    iy, ix = terrain.cell_index(user.x, user.y)
    return -params.veg_loss_db if terrain.forest_mask[iy, ix] else 0.0


def link_budget(kind, terrain, tx, rx, params):
    """Gain decomposition and received power for a BS->UAV or UAV->user link."""
    if kind not in LINK_KINDS:
        raise ValueError(f"unknown link kind {kind!r}; expected one of {LINK_KINDS}")
    d = tx.distance(rx)
    if d == 0.0:
        raise ValueError("degenerate link: tx and rx coincide")
    ked_db = ked_loss(terrain, tx, rx, params.fc, params.fresnel_clearance)
    if kind == "bs_to_uav":
        pl_db = fspl_bs(d, params.fc)
        veg_db = 0.0
        tx_power = params.tx_power_bs_dbm
    else:
        pl_db = fspl_uav(d, params.fc)
        veg_db = vegetation_loss(terrain, rx, params)
        tx_power = params.tx_power_uav_dbm
    gain = pl_db + ked_db + veg_db
    return LinkBudget(pl_db, ked_db, veg_db, gain, tx_power + gain)


def uav_ground_gains(terrain, uav, points, forest, params):
    """Vectorized UAV->ground gain terms for receiver ``points`` of shape (m, 3).

    Returns ``(pl_db, ked_db, veg_db)`` arrays; ``forest`` flags each receiver.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    uav_arr = uav.as_array() if isinstance(uav, Position3D) else np.asarray(uav, dtype=float)
    d = np.linalg.norm(points - uav_arr, axis=1)
    pl = fspl_uav(d, params.fc)
    ked = -ked_losses(terrain, uav_arr, points, params.fc, params.fresnel_clearance)
    veg = np.where(np.asarray(forest, dtype=bool), -params.veg_loss_db, 0.0)
    return np.atleast_1d(pl), ked, veg


def user_powers(scenario, uav, params):
    """Received power in dBm at every scenario user from a UAV at ``uav``."""
    terrain = scenario.terrain
    pts = scenario.user_array()
    forest = [terrain.forest_mask[terrain.cell_index(x, y)] for x, y, _ in pts]
    pl, ked, veg = uav_ground_gains(terrain, uav, pts, forest, params)
    return params.tx_power_uav_dbm + pl + ked + veg
