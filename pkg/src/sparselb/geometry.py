"""Sparse vascular domains: fluid sites, link classification and test shapes.

A domain stores only fluid sites.  Every site carries one tag per lattice
direction describing what lies at the far end of that link: another fluid
site, a solid wall, or an inlet/outlet ("iolet") plane.  Sites are grouped
by collision type into contiguous index ranges so that each range can be
handed to one kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .lattice import INVERSE, Q, VELOCITIES

# Links whose plane crossing lands within this distance of an iolet disc rim
# still count as iolet links; the voxelized surface deviates from the
# analytic circle by up to one lattice spacing.
IOLET_CAPTURE_MARGIN = 1.0


class GeometryError(ValueError):
    """Invalid or inconsistent geometry."""


class LinkTag(IntEnum):
    FLUID = 0
    WALL = 1
    INLET = 2
    OUTLET = 3


class CollisionType(IntEnum):
    INNER = 0
    WALL = 1
    INLET = 2
    OUTLET = 3
    INLET_WALL = 4
    OUTLET_WALL = 5


N_TYPES = len(CollisionType)


class LinkClass(NamedTuple):
    tag: LinkTag
    iolet: int | None = None


class SiteRecord(NamedTuple):
    coords: tuple
    links: tuple  # 18 LinkClass entries, directions 1..18
    collision_type: CollisionType


@dataclass(frozen=True)
class Iolet:
    kind: str
    center: tuple
    normal: tuple
    radius: float

    def __post_init__(self):
        if self.kind not in ("inlet", "outlet"):
            raise GeometryError(f"iolet kind must be 'inlet' or 'outlet', got {self.kind!r}")
        n = np.asarray(self.normal, dtype=np.float64)
        if abs(float(np.linalg.norm(n)) - 1.0) > 1e-12:
            raise GeometryError(f"iolet normal {self.normal} is not a unit vector")
        if not self.radius > 0:
            raise GeometryError(f"iolet radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        object.__setattr__(self, "normal", tuple(float(x) for x in self.normal))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def tag(self) -> LinkTag:
        return LinkTag.INLET if self.kind == "inlet" else LinkTag.OUTLET


def _keys(coords: np.ndarray, lo: np.ndarray, span: np.ndarray) -> np.ndarray:
    c = coords.astype(np.int64) - lo
    return (c[..., 2] * span[1] + c[..., 1]) * span[0] + c[..., 0]


@dataclass(eq=False)
class SparseDomain:
    voxel_size: float
    coords: np.ndarray
    link_tags: np.ndarray
    link_iolets: np.ndarray
    collision_types: np.ndarray
    iolets: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.coords = np.ascontiguousarray(self.coords, dtype=np.int32)
        self.link_tags = np.ascontiguousarray(self.link_tags, dtype=np.uint8)
        self.link_iolets = np.ascontiguousarray(self.link_iolets, dtype=np.int16)
        self.collision_types = np.ascontiguousarray(self.collision_types, dtype=np.uint8)
        self.iolets = tuple(self.iolets)
        self.voxel_size = float(self.voxel_size)

    @property
    def n_sites(self) -> int:
        return len(self.coords)

    def __len__(self):
        return self.n_sites

    @property
    def type_ranges(self) -> np.ndarray:
        """Offsets ``r`` such that type ``k`` occupies ``[r[k], r[k+1])``."""
        counts = np.bincount(self.collision_types, minlength=N_TYPES)[:N_TYPES]
        return np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def type_range(self, ctype: CollisionType) -> range:
        r = self.type_ranges
        return range(int(r[ctype]), int(r[ctype + 1]))

    def site(self, k: int) -> SiteRecord:
        links = []
        for i in range(1, Q):
            tag = LinkTag(int(self.link_tags[k, i]))
            io = int(self.link_iolets[k, i]) if tag >= LinkTag.INLET else None
            links.append(LinkClass(tag, io))
        return SiteRecord(
            tuple(int(x) for x in self.coords[k]),
            tuple(links),
            CollisionType(int(self.collision_types[k])),
        )

    @cached_property
    def _lookup(self):
        lo = self.coords.min(axis=0).astype(np.int64) - 1
        span = self.coords.max(axis=0).astype(np.int64) - lo + 2
        keys = _keys(self.coords, lo, span)
        order = np.argsort(keys, kind="stable")
        return lo, span, keys[order], order

    def find(self, coords) -> np.ndarray:
        """Site index for each coordinate triple, or -1 where not a fluid site."""
        coords = np.asarray(coords, dtype=np.int64)
        lo, span, sorted_keys, order = self._lookup
        c = coords - lo
        inside = np.all((c >= 0) & (c < span), axis=-1)
        keys = _keys(np.where(inside[..., None], coords, lo), lo, span)
        pos = np.searchsorted(sorted_keys, keys)
        pos = np.minimum(pos, len(sorted_keys) - 1)
        hit = inside & (sorted_keys[pos] == keys)
        return np.where(hit, order[pos], -1)

    @cached_property
    def neighbors(self) -> np.ndarray:
        """``(n_sites, 19)`` index of the site at ``x + c_i``, or -1."""
        return self.find(self.coords[:, None, :].astype(np.int64) + VELOCITIES[None, :, :])

    def __eq__(self, other):
        if not isinstance(other, SparseDomain):
            return NotImplemented
        return (
            self.voxel_size == other.voxel_size
            and self.iolets == other.iolets
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.link_tags, other.link_tags)
            and np.array_equal(self.link_iolets, other.link_iolets)
            and np.array_equal(self.collision_types, other.collision_types)
        )

    def validate(self) -> None:
        """Check every structural invariant; raise :class:`GeometryError` on failure."""
        n = self.n_sites
        if n == 0:
            raise GeometryError("domain has an empty site list")
        if self.link_tags.shape != (n, Q) or self.link_iolets.shape != (n, Q):
            raise GeometryError("link arrays do not match site count")
        if self.collision_types.max(initial=0) >= N_TYPES:
            raise GeometryError("unknown collision type")
        if np.any(np.diff(self.collision_types.astype(np.int64)) < 0):
            raise GeometryError("sites are not grouped into contiguous collision-type ranges")
        if len(np.unique(self.find(self.coords))) != n or np.any(self.find(self.coords) < 0):
            raise GeometryError("duplicate site coordinates")
        if np.any(self.link_tags[:, 0] != LinkTag.FLUID):
            raise GeometryError("direction 0 must be tagged Fluid")
        if self.link_tags.max(initial=0) > LinkTag.OUTLET:
            raise GeometryError("unknown link tag")

        nbr = self.neighbors
        fluid = self.link_tags == LinkTag.FLUID
        if np.any(fluid & (nbr < 0)) or np.any(~fluid & (nbr >= 0)):
            bad = np.argwhere((fluid & (nbr < 0)) | (~fluid & (nbr >= 0)))[0]
            raise GeometryError(
                f"inconsistent link closure at site {int(bad[0])} "
                f"{tuple(int(x) for x in self.coords[bad[0]])} direction {int(bad[1])}"
            )

        iolet_links = self.link_tags >= LinkTag.INLET
        ids = self.link_iolets[iolet_links]
        if np.any(ids < 0) or np.any(ids >= len(self.iolets)):
            raise GeometryError("link references an undeclared iolet")
        if len(self.iolets):
            kinds = np.array([io.tag for io in self.iolets], dtype=np.uint8)
            if np.any(kinds[ids] != self.link_tags[iolet_links]):
                raise GeometryError("link tag disagrees with the kind of its iolet")
        expected = _collision_types(self.link_tags)
        if not np.array_equal(expected, self.collision_types):
            k = int(np.flatnonzero(expected != self.collision_types)[0])
            raise GeometryError(f"collision type of site {k} is inconsistent with its links")
        order = _site_order(self.coords, self.collision_types)
        if not np.array_equal(order, np.arange(n)):
            raise GeometryError("sites are not in canonical (type, z, y, x) order")


def _collision_types(link_tags: np.ndarray) -> np.ndarray:
    wall = (link_tags == LinkTag.WALL).any(axis=1)
    inlet = (link_tags == LinkTag.INLET).any(axis=1)
    outlet = (link_tags == LinkTag.OUTLET).any(axis=1)
    if np.any(inlet & outlet):
        k = int(np.flatnonzero(inlet & outlet)[0])
        raise GeometryError(f"site {k} has both inlet and outlet links")
    t = np.full(len(link_tags), CollisionType.INNER, dtype=np.uint8)
    t[wall] = CollisionType.WALL
    t[inlet] = np.where(wall[inlet], CollisionType.INLET_WALL, CollisionType.INLET)
    t[outlet] = np.where(wall[outlet], CollisionType.OUTLET_WALL, CollisionType.OUTLET)
    return t


def _site_order(coords: np.ndarray, ctypes: np.ndarray) -> np.ndarray:
    return np.lexsort((coords[:, 0], coords[:, 1], coords[:, 2], ctypes))


def _iolet_crossings(src: np.ndarray, dst: np.ndarray, iolet: Iolet) -> np.ndarray:
    c = np.asarray(iolet.center)
    n = np.asarray(iolet.normal)
    ds = (src - c) @ n
    dd = (dst - c) @ n
    crosses = (ds > 0.0) & (dd <= 0.0)
    lam = np.where(crosses, ds / np.where(crosses, ds - dd, 1.0), 0.0)
    p = src + lam[:, None] * (dst - src) - c
    radial = p - (p @ n)[:, None] * n
    r = np.sqrt((radial * radial).sum(axis=1))
    return crosses & (r <= iolet.radius + IOLET_CAPTURE_MARGIN)


def classify_sites(voxels, iolets: Sequence[Iolet] = (), voxel_size: float = 1.0) -> SparseDomain:
    """Build a :class:`SparseDomain` from a set of fluid voxel coordinates.

    Links to non-fluid voxels are labelled with the first iolet whose disc
    they cross, and as wall otherwise.  Sites are ordered by collision type,
    then lexicographically by (z, y, x).
    """
    vox = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
    if len(vox) == 0:
        raise GeometryError("empty voxel set")
    vox = np.unique(vox, axis=0)
    iolets = tuple(iolets)

    probe = SparseDomain(
        voxel_size,
        vox,
        np.zeros((len(vox), Q), np.uint8),
        np.full((len(vox), Q), -1, np.int16),
        np.zeros(len(vox), np.uint8),
        iolets,
    )
    nbr = probe.neighbors
    tags = np.where(nbr >= 0, LinkTag.FLUID, LinkTag.WALL).astype(np.uint8)
    ids = np.full(nbr.shape, -1, dtype=np.int16)
    src = vox.astype(np.float64)
    for i in range(1, Q):
        open_ = np.flatnonzero(nbr[:, i] < 0)
        if len(open_) == 0:
            continue
        s = src[open_]
        d = s + VELOCITIES[i]
        unassigned = np.ones(len(open_), dtype=bool)
        for k, io in enumerate(iolets):
            hit = unassigned & _iolet_crossings(s, d, io)
            tags[open_[hit], i] = io.tag
            ids[open_[hit], i] = k
            unassigned &= ~hit
    for k, io in enumerate(iolets):
        if not np.any(ids == k):
            raise GeometryError(f"iolet {k} ({io.kind}) does not intersect the fluid voxels")

    ctypes = _collision_types(tags)
    order = _site_order(vox, ctypes)
    domain = SparseDomain(voxel_size, vox[order], tags[order], ids[order], ctypes[order], iolets)
    return domain


def reclassify(domain: SparseDomain) -> SparseDomain:
    return classify_sites(domain.coords, domain.iolets, domain.voxel_size)


def build_pipe(radius: float, length: int, voxel_size: float = 1.0) -> SparseDomain:
    """Straight circular pipe along +z with an inlet at z=-1/2 and outlet at z=length-1/2.

    The pipe axis runs through voxel corners at (-1/2, -1/2), so a slice
    holds the voxels whose centres satisfy ``x**2 + y**2 < radius**2`` with
    ``x, y`` measured from the axis; mid-link walls then sit at ``radius``
    along both lattice axes.
    """
    if radius < 2 or length < 4 or int(length) != length:
        raise GeometryError(f"pipe needs radius >= 2 and integer length >= 4, got {radius}, {length}")
    length = int(length)
    r = int(math.ceil(radius))
    xs = np.arange(-r - 1, r + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    disc = (gx + 0.5) ** 2 + (gy + 0.5) ** 2 < radius**2
    slice_xy = np.stack([gx[disc], gy[disc]], axis=1)
    z = np.repeat(np.arange(length), len(slice_xy))
    vox = np.column_stack([np.tile(slice_xy, (length, 1)), z])
    iolets = (
        Iolet("inlet", (-0.5, -0.5, -0.5), (0.0, 0.0, 1.0), radius),
        Iolet("outlet", (-0.5, -0.5, length - 0.5), (0.0, 0.0, -1.0), radius),
    )
    return classify_sites(vox, iolets, voxel_size)


def build_bifurcation(
    trunk_radius: float = 4,
    branch_radius: float = 3,
    trunk_length: int = 16,
    branch_length: int = 16,
    angle_deg: float = 30.0,
    voxel_size: float = 1.0,
) -> SparseDomain:
    """Symmetric Y-bifurcation in the x-z plane: one inlet, two outlets."""
    if (
        trunk_radius < 2
        or branch_radius < 2
        or trunk_length < 4
        or branch_length < 4
        or not 0 < angle_deg < 90
    ):
        raise GeometryError("degenerate bifurcation dimensions")
    theta = math.radians(angle_deg)
    junction = np.array([0.0, 0.0, float(trunk_length)])
    dirs = [np.array([s * math.sin(theta), 0.0, math.cos(theta)]) for s in (-1.0, 1.0)]
    ends = [junction + branch_length * d for d in dirs]

    reach = branch_length * math.sin(theta) + branch_radius + 2
    x = np.arange(-math.ceil(reach), math.ceil(reach) + 1)
    y = np.arange(-math.ceil(max(trunk_radius, branch_radius)) - 1, math.ceil(max(trunk_radius, branch_radius)) + 2)
    z = np.arange(0, math.ceil(trunk_length + branch_length + branch_radius) + 2)
    g = np.stack(np.meshgrid(x, y, z, indexing="ij"), axis=-1).reshape(-1, 3).astype(np.float64)

    trunk = (g[:, 0] ** 2 + g[:, 1] ** 2 < trunk_radius**2) & (g[:, 2] <= trunk_length)
    rel = g - junction
    joint = (rel * rel).sum(axis=1) < trunk_radius**2
    fluid = trunk | joint
    for d in dirs:
        t = rel @ d
        radial = rel - t[:, None] * d
        r2 = (radial * radial).sum(axis=1)
        fluid |= (t >= 0) & (t < branch_length) & (r2 < branch_radius**2)
    for d, e in zip(dirs, ends):
        fluid &= (g - e) @ d < 0
    vox = g[fluid].astype(np.int64)

    iolets = [Iolet("inlet", (0.0, 0.0, -0.5), (0.0, 0.0, 1.0), trunk_radius)]
    for d, e in zip(dirs, ends):
        iolets.append(Iolet("outlet", tuple(e), tuple(-d / np.linalg.norm(d)), branch_radius))
    return classify_sites(vox, iolets, voxel_size)


def build_box(size: int, voxel_size: float = 1.0) -> SparseDomain:
    """Closed cube of ``size**3`` fluid sites surrounded by walls."""
    if size < 1:
        raise GeometryError("box size must be >= 1")
    r = np.arange(size)
    vox = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    return classify_sites(vox, (), voxel_size)


def inverse_link_symmetric(domain: SparseDomain) -> bool:
    nbr = domain.neighbors
    s, i = np.nonzero((domain.link_tags == LinkTag.FLUID) & (np.arange(Q) > 0))
    back = nbr[nbr[s, i], INVERSE[i]]
    return bool(np.all(back == s))
