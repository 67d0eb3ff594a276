"""Compiled collision-streaming kernels.

Every kernel processes a contiguous range of local sites.  All per-site
arithmetic goes through the small inlined helpers below, so push, pull,
AoS and SoA paths evaluate identical floating-point expressions in the
same order.  That is what makes cross-engine results bitwise equal.

Link codes (per site and direction):
    0  plain copy to the precomputed destination (fluid, shared edge, wall)
    2  velocity iolet, bounce-back with momentum correction
    3  pressure iolet, equilibrium at the ghost density
"""

import numba
import numpy as np

from .lattice import INVERSE, VELOCITIES, WEIGHTS

CODE_COPY = 0
CODE_VELOCITY = 2
CODE_PRESSURE = 3

_W = WEIGHTS.copy()
_CX = VELOCITIES[:, 0].astype(np.float64)
_CY = VELOCITIES[:, 1].astype(np.float64)
_CZ = VELOCITIES[:, 2].astype(np.float64)
_INV = INVERSE.copy()

_jit = numba.njit(cache=True, nogil=True, fastmath=False)


@numba.njit(cache=True, nogil=True, inline="always")
def _idx(soa, n, s, i):
    if soa:
        return i * n + s
    return 19 * s + i


@numba.njit(cache=True, nogil=True, inline="always")
def _moments(f):
    rho = 0.0
    mx = 0.0
    my = 0.0
    mz = 0.0
    for i in range(19):
        rho += f[i]
        mx += f[i] * _CX[i]
        my += f[i] * _CY[i]
        mz += f[i] * _CZ[i]
    return rho, mx / rho, my / rho, mz / rho


@numba.njit(cache=True, nogil=True, inline="always")
def _feq(j, rho, ux, uy, uz):
    cu = _CX[j] * ux + _CY[j] * uy + _CZ[j] * uz
    usq = ux * ux + uy * uy + uz * uz
    return _W[j] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq)


@numba.njit(cache=True, nogil=True, inline="always")
def _collide(f, fp, omega):
    rho, ux, uy, uz = _moments(f)
    for i in range(19):
        fp[i] = f[i] - omega * (f[i] - _feq(i, rho, ux, uy, uz))
    return rho, ux, uy, uz


@numba.njit(cache=True, nogil=True, inline="always")
def _ladd(fp_i, i, rho, ub, nx, ny, nz):
    # value arriving in direction inverse(i) after reflection off a moving iolet
    cu = ub * (_CX[i] * nx + _CY[i] * ny + _CZ[i] * nz)
    return fp_i - 6.0 * _W[i] * rho * cu


@numba.njit(cache=True, nogil=True, inline="always")
def _nash(j, rho_ghost, ux, uy, uz, nx, ny, nz):
    un = ux * nx + uy * ny + uz * nz
    return _feq(j, rho_ghost, un * nx, un * ny, un * nz)


@_jit
def push_bulk(f_old, f_new, n, soa, lo, hi, dest, omega):
    """Collide and stream Inner/Wall sites; bounce-back is folded into ``dest``."""
    f = np.empty(19)
    fp = np.empty(19)
    for s in range(lo, hi):
        for i in range(19):
            f[i] = f_old[_idx(soa, n, s, i)]
        _collide(f, fp, omega)
        for i in range(19):
            f_new[dest[s, i]] = fp[i]


@_jit
def push_iolet(f_old, f_new, n, soa, lo, hi, dest, code, iolet, weight, ghost_rho, speed, normals, omega):
    f = np.empty(19)
    fp = np.empty(19)
    for s in range(lo, hi):
        for i in range(19):
            f[i] = f_old[_idx(soa, n, s, i)]
        rho, ux, uy, uz = _collide(f, fp, omega)
        for i in range(19):
            c = code[s, i]
            if c == CODE_COPY:
                f_new[dest[s, i]] = fp[i]
            else:
                k = iolet[s, i]
                nx = normals[k, 0]
                ny = normals[k, 1]
                nz = normals[k, 2]
                if c == CODE_VELOCITY:
                    f_new[dest[s, i]] = _ladd(fp[i], i, rho, speed[k] * weight[s], nx, ny, nz)
                else:
                    f_new[dest[s, i]] = _nash(_INV[i], ghost_rho[k], ux, uy, uz, nx, ny, nz)


@numba.njit(cache=True, nogil=True, inline="always")
def _gather(f_old, s, src, f):
    for i in range(19):
        f[i] = f_old[src[s, i]]


@numba.njit(cache=True, nogil=True, inline="always")
def _gather_iolet(f_old, s, src, code, iolet, weight, ghost_rho, speed, normals, rho, u, f):
    # rho, u: moments of the state that produced the post-collision values in f_old
    for i in range(19):
        c = code[s, i]
        if c == CODE_COPY:
            f[i] = f_old[src[s, i]]
        else:
            # link direction is inverse(i); the site's own post-collision value sits at src
            j = _INV[i]
            k = iolet[s, i]
            nx = normals[k, 0]
            ny = normals[k, 1]
            nz = normals[k, 2]
            if c == CODE_VELOCITY:
                f[i] = _ladd(f_old[src[s, i]], j, rho[s], speed[k] * weight[s], nx, ny, nz)
            else:
                f[i] = _nash(i, ghost_rho[k], u[s, 0], u[s, 1], u[s, 2], nx, ny, nz)


@_jit
def pull_bulk(f_old, f_new, n, soa, lo, hi, src, omega, rho, u):
    """Gather (stream) then collide Inner/Wall sites, recording their moments."""
    f = np.empty(19)
    fp = np.empty(19)
    for s in range(lo, hi):
        _gather(f_old, s, src, f)
        r, ux, uy, uz = _collide(f, fp, omega)
        rho[s] = r
        u[s, 0] = ux
        u[s, 1] = uy
        u[s, 2] = uz
        for i in range(19):
            f_new[_idx(soa, n, s, i)] = fp[i]


@_jit
def pull_iolet(
    f_old, f_new, n, soa, lo, hi, src, code, iolet, weight, ghost_rho, speed, normals, omega,
    rho_in, u_in, rho, u,
):
    f = np.empty(19)
    fp = np.empty(19)
    for s in range(lo, hi):
        _gather_iolet(f_old, s, src, code, iolet, weight, ghost_rho, speed, normals, rho_in, u_in, f)
        r, ux, uy, uz = _collide(f, fp, omega)
        rho[s] = r
        u[s, 0] = ux
        u[s, 1] = uy
        u[s, 2] = uz
        for i in range(19):
            f_new[_idx(soa, n, s, i)] = fp[i]


@_jit
def pull_gather(f_old, out, src, code, iolet, weight, ghost_rho, speed, normals, rho, u):
    """Post-stream populations of every site, without colliding (inspection only)."""
    f = np.empty(19)
    for s in range(out.shape[0]):
        _gather_iolet(f_old, s, src, code, iolet, weight, ghost_rho, speed, normals, rho, u, f)
        for i in range(19):
            out[s, i] = f[i]


@_jit
def collide_in_place(f_in, f_out, n, soa, omega, rho, u):
    """Collide every site from ``f_in`` into ``f_out`` at the same slots."""
    f = np.empty(19)
    fp = np.empty(19)
    for s in range(n):
        for i in range(19):
            f[i] = f_in[_idx(soa, n, s, i)]
        r, ux, uy, uz = _collide(f, fp, omega)
        rho[s] = r
        u[s, 0] = ux
        u[s, 1] = uy
        u[s, 2] = uz
        for i in range(19):
            f_out[_idx(soa, n, s, i)] = fp[i]


@_jit
def site_moments(f_old, n, soa, sites, rho, u):
    f = np.empty(19)
    for k in range(len(sites)):
        s = sites[k]
        for i in range(19):
            f[i] = f_old[_idx(soa, n, s, i)]
        r, ux, uy, uz = _moments(f)
        rho[k] = r
        u[k, 0] = ux
        u[k, 1] = uy
        u[k, 2] = uz


@_jit
def scatter(f_src, f_dst, slots, dest):
    for k in range(len(slots)):
        f_dst[dest[k]] = f_src[slots[k]]
