"""Reader and writer for the little-endian ``SPLB`` geometry file.

Layout::

    magic      4s   b"SPLB"
    version    u32  1
    voxel_size f64
    n_sites    u64
    n_iolets   u32
    per iolet: kind u8 (0 inlet, 1 outlet), center 3*f64, normal 3*f64, radius f64
    per site:  coords 3*i32, collision_type u8,
               18 * (tag u8 [, iolet id u16 if tag >= 2])

Link entries follow the lattice direction order, directions 1..18.
"""

from __future__ import annotations

import os
import struct

import numba
import numpy as np

from .geometry import GeometryError, Iolet, LinkTag, SparseDomain
from .lattice import Q

MAGIC = b"SPLB"
VERSION = 1
_HEADER = struct.Struct("<4sIdQI")
_IOLET = struct.Struct("<B7d")
_SITE_FIXED = 13
_NLINK = Q - 1


class GeometryFormatError(GeometryError):
    """File is not a readable SPLB file."""


class VersionMismatchError(GeometryFormatError):
    pass


class TruncatedFileError(GeometryFormatError):
    pass


class InvalidDomainError(GeometryError):
    """File parsed, but the domain it describes violates an invariant."""


def encode_domain(d: SparseDomain) -> bytes:
    d.validate()
    n = d.n_sites
    parts = [_HEADER.pack(MAGIC, VERSION, d.voxel_size, n, len(d.iolets))]
    for io in d.iolets:
        parts.append(_IOLET.pack(0 if io.kind == "inlet" else 1, *io.center, *io.normal, io.radius))

    width = _SITE_FIXED + 3 * _NLINK
    block = np.zeros((n, width), dtype=np.uint8)
    present = np.zeros((n, width), dtype=bool)
    block[:, 0:12] = d.coords.astype("<i4").view(np.uint8).reshape(n, 12)
    block[:, 12] = d.collision_types
    present[:, :_SITE_FIXED] = True
    ids = d.link_iolets.astype("<u2").view(np.uint8).reshape(n, Q, 2)
    for j in range(_NLINK):
        col = _SITE_FIXED + 3 * j
        tag = d.link_tags[:, j + 1]
        block[:, col] = tag
        block[:, col + 1 : col + 3] = ids[:, j + 1]
        present[:, col] = True
        present[:, col + 1 : col + 3] = (tag >= LinkTag.INLET)[:, None]
    parts.append(block[present].tobytes())
    return b"".join(parts)


@numba.njit(cache=True)
def _site_offsets(buf, start, n):
    offsets = np.empty(n + 1, dtype=np.int64)
    pos = start
    size = len(buf)
    for k in range(n):
        offsets[k] = pos
        pos += _SITE_FIXED
        for _ in range(_NLINK):
            if pos >= size:
                offsets[n] = -1
                return offsets
            tag = buf[pos]
            pos += 3 if tag >= 2 else 1
        if pos > size:
            offsets[n] = -1
            return offsets
    offsets[n] = pos
    return offsets


def decode_domain(data: bytes) -> SparseDomain:
    if len(data) < _HEADER.size:
        raise TruncatedFileError("file shorter than the SPLB header")
    magic, version, voxel_size, n, n_iolets = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise GeometryFormatError(f"bad magic {magic!r}, not an SPLB geometry file")
    if version != VERSION:
        raise VersionMismatchError(f"unsupported SPLB version {version} (expected {VERSION})")
    pos = _HEADER.size
    if len(data) < pos + n_iolets * _IOLET.size:
        raise TruncatedFileError("file truncated inside the iolet table")
    iolets = []
    for _ in range(n_iolets):
        kind, *vals = _IOLET.unpack_from(data, pos)
        pos += _IOLET.size
        if kind not in (0, 1):
            raise InvalidDomainError(f"unknown iolet kind code {kind}")
        try:
            iolets.append(Iolet("inlet" if kind == 0 else "outlet", vals[0:3], vals[3:6], vals[6]))
        except GeometryError as exc:
            raise InvalidDomainError(str(exc)) from exc
    if n == 0:
        raise InvalidDomainError("domain has an empty site list")

    buf = np.frombuffer(data, dtype=np.uint8)
    offsets = _site_offsets(buf, pos, n)
    if offsets[n] < 0 or offsets[n] > len(buf):
        raise TruncatedFileError(f"file truncated inside the site table ({n} sites declared)")
    if offsets[n] != len(buf):
        raise GeometryFormatError(f"{len(buf) - offsets[n]} trailing bytes after the site table")

    starts = offsets[:n]
    fixed = buf[starts[:, None] + np.arange(_SITE_FIXED)]
    coords = fixed[:, :12].copy().view("<i4").reshape(n, 3)
    ctypes = fixed[:, 12].copy()
    tags = np.zeros((n, Q), dtype=np.uint8)
    ids = np.full((n, Q), -1, dtype=np.int16)
    cursor = starts + _SITE_FIXED
    for j in range(_NLINK):
        tag = buf[cursor]
        tags[:, j + 1] = tag
        io = tag >= LinkTag.INLET
        c = cursor[io]
        ids[io, j + 1] = (buf[c + 1].astype(np.uint16) | (buf[c + 2].astype(np.uint16) << 8)).astype(np.int16)
        cursor = cursor + np.where(io, 3, 1)

    domain = SparseDomain(voxel_size, coords, tags, ids, ctypes, tuple(iolets))
    try:
        domain.validate()
    except GeometryError as exc:
        raise InvalidDomainError(str(exc)) from exc
    return domain


def write_domain(d: SparseDomain, destination) -> None:
    data = encode_domain(d)
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        with open(os.fspath(destination), "wb") as fh:
            fh.write(data)


def read_domain(source) -> SparseDomain:
    if hasattr(source, "read"):
        data = source.read()
    else:
        with open(os.fspath(source), "rb") as fh:
            data = fh.read()
    return decode_domain(data)
