"""Disc and annulus domains, electrode rectangles and stimulation sites.

Coordinates are ``(x, y)`` = ``(column, row)`` with rows growing southward;
arrays are indexed ``[row, column]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from bzmarble.core import SimState

COMPASS_BEARINGS = {
    "N": 0.0, "NE": 45.0, "E": 90.0, "SE": 135.0,
    "S": 180.0, "SW": 225.0, "W": 270.0, "NW": 315.0,
}


@dataclass(frozen=True, eq=False)
class Mask:
    """Simulated (``in_domain``) and reactive (``excitable``) node sets.

    ``center`` and ``radius`` are set for masks built from a disc so that
    compass points on the rim can be located.
    """

    in_domain: np.ndarray
    excitable: np.ndarray
    center: tuple[int, int] | None = None
    radius: int | None = None

    def __post_init__(self):
        inside = np.ascontiguousarray(self.in_domain, dtype=bool)
        excitable = np.ascontiguousarray(self.excitable, dtype=bool)
        if inside.ndim != 2 or inside.shape != excitable.shape:
            raise ValueError("in_domain and excitable must be 2-D arrays of equal shape")
        if not inside.any():
            raise ValueError("mask has no in-domain nodes")
        if np.any(excitable & ~inside):
            raise ValueError("excitable nodes must lie inside the domain")
        inside.flags.writeable = False
        excitable.flags.writeable = False
        object.__setattr__(self, "in_domain", inside)
        object.__setattr__(self, "excitable", excitable)

    @property
    def shape(self) -> tuple[int, int]:
        return self.in_domain.shape

    @property
    def height(self) -> int:
        return self.in_domain.shape[0]

    @property
    def width(self) -> int:
        return self.in_domain.shape[1]

    def mirrored(self) -> "Mask":
        """Reflection across the vertical axis through the lattice centre."""
        center = None
        if self.center is not None:
            center = (self.width - 1 - self.center[0], self.center[1])
        return Mask(self.in_domain[:, ::-1], self.excitable[:, ::-1], center, self.radius)

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return (
            self.center == other.center
            and self.radius == other.radius
            and np.array_equal(self.in_domain, other.in_domain)
            and np.array_equal(self.excitable, other.excitable)
        )

    __hash__ = None


def _radius_squared(radius: int) -> np.ndarray:
    size = 2 * radius + 1
    rows, cols = np.mgrid[0:size, 0:size]
    return (cols - radius) ** 2 + (rows - radius) ** 2


def make_disc_mask(radius: int) -> Mask:
    """Disc of nodes within ``radius`` of the lattice centre, all excitable."""
    if int(radius) != radius or radius < 1:
        raise ValueError(f"radius must be an integer >= 1, got {radius!r}")
    radius = int(radius)
    inside = _radius_squared(radius) <= radius * radius
    return Mask(inside, inside.copy(), (radius, radius), radius)


def make_annulus_mask(outer_radius: int, inner_radius: int) -> Mask:
    """Full disc domain whose nodes are excitable only beyond ``inner_radius``."""
    if int(outer_radius) != outer_radius or int(inner_radius) != inner_radius:
        raise ValueError("radii must be integers")
    if not 0 < inner_radius < outer_radius:
        raise ValueError(f"need 0 < inner_radius < outer_radius, got {inner_radius}, {outer_radius}")
    outer_radius, inner_radius = int(outer_radius), int(inner_radius)
    r2 = _radius_squared(outer_radius)
    inside = r2 <= outer_radius * outer_radius
    excitable = inside & (r2 > inner_radius * inner_radius)
    return Mask(inside, excitable, (outer_radius, outer_radius), outer_radius)


@dataclass(frozen=True)
class RectDomain:
    """Inclusive node rectangle ``[x0, x1] x [y0, y1]``."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError(f"empty rectangle {self}")

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y1 + 1), slice(self.x0, self.x1 + 1)

    def within(self, mask: Mask) -> bool:
        return self.x0 >= 0 and self.y0 >= 0 and self.x1 < mask.width and self.y1 < mask.height

    def node_count(self, mask: Mask) -> int:
        return int(mask.in_domain[self.slices].sum())

    def overlaps(self, other: "RectDomain") -> bool:
        return not (self.x1 < other.x0 or other.x1 < self.x0 or self.y1 < other.y0 or other.y1 < self.y0)

    def mirrored(self, width: int) -> "RectDomain":
        return RectDomain(width - 1 - self.x1, self.y0, width - 1 - self.x0, self.y1)


class StimulusMode(str, Enum):
    ONE_SHOT = "one-shot"
    HELD = "held-source"


@dataclass(frozen=True)
class StimulusSite:
    """Disc of nodes set to ``u = 1`` once, or on every step when held."""

    center: tuple[int, int]
    radius: int = 3
    mode: StimulusMode = StimulusMode.ONE_SHOT

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 0:
            raise ValueError(f"site radius must be a non-negative integer, got {self.radius!r}")
        object.__setattr__(self, "center", (int(self.center[0]), int(self.center[1])))
        object.__setattr__(self, "mode", StimulusMode(self.mode))

    def nodes(self, mask: Mask) -> np.ndarray:
        """Boolean array of site nodes inside the domain."""
        rows, cols = np.ogrid[0:mask.height, 0:mask.width]
        x, y = self.center
        disc = (cols - x) ** 2 + (rows - y) ** 2 <= self.radius * self.radius
        return disc & mask.in_domain

    def mirrored(self, width: int) -> "StimulusSite":
        return StimulusSite((width - 1 - self.center[0], self.center[1]), self.radius, self.mode)


def stimulate(state: SimState, site: StimulusSite, mask: Mask) -> SimState:
    """Excite the site: ``u = 1`` on its in-domain nodes, ``v`` untouched.

    Held sources are also registered on the returned state so that
    :func:`bzmarble.core.integrate` re-imposes them before every step.
    """
    if state.shape != mask.shape:
        raise ValueError(f"state shape {state.shape} does not match mask {mask.shape}")
    nodes = site.nodes(mask)
    if not nodes.any():
        raise ValueError(f"stimulus site {site} lies entirely outside the domain")
    out = state.copy()
    out.u[nodes] = 1.0
    if site.mode is StimulusMode.HELD:
        flat = np.flatnonzero(nodes)
        out.held = np.union1d(out.held, flat).astype(np.int64)
    return out


def edge_site(mask: Mask, compass: str, radius: int = 3, mode=StimulusMode.ONE_SHOT) -> StimulusSite:
    """Site touching the rim at a compass point (N is up, rows grow southward).

    The site centre is the in-domain node nearest the point ``radius - 1``
    nodes inside the rim, so a radius-3 site on the southern edge of a
    radius-185 disc is centred at ``(185, 368)``.
    """
    if mask.center is None or mask.radius is None:
        raise ValueError("edge_site needs a disc or annulus mask")
    try:
        bearing = math.radians(COMPASS_BEARINGS[compass.upper()])
    except KeyError:
        raise ValueError(f"unknown compass direction {compass!r}") from None
    cx, cy = mask.center
    reach = mask.radius - max(radius - 1, 0)
    tx = cx + reach * math.sin(bearing)
    ty = cy - reach * math.cos(bearing)
    rows, cols = np.nonzero(mask.in_domain)
    d2 = (cols - tx) ** 2 + (rows - ty) ** 2
    k = int(np.argmin(d2))  # first minimum in row-major order breaks ties
    return StimulusSite((int(cols[k]), int(rows[k])), radius, mode)


def default_electrodes(mask: Mask, top: int | None = None, width: int = 6, height: int = 40, gap: int = 40):
    """Two vertical rectangles north of centre, mirror images of each other.

    ``gap`` (even) is the distance between the inner edges; ``top``
    defaults to ``height`` rows above the centre row, i.e. rows
    ``cy-40 .. cy-1``. Returns ``(west, east)``.
    """
    if mask.center is None:
        raise ValueError("default electrodes need a disc or annulus mask")
    if gap % 2 or gap < 0:
        raise ValueError(f"gap must be a non-negative even number, got {gap}")
    cx, cy = mask.center
    if top is None:
        top = cy - height
    east = RectDomain(cx + gap // 2, top, cx + gap // 2 + width - 1, top + height - 1)
    return east.mirrored(mask.width), east
