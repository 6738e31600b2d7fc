"""Semi-Lagrangian departure points and region-aware interpolation.

Departure points are traced backward with a midpoint (RK2) rule, one step
for the BDF2 level n and two steps for level n-1.  Values at the departure
points are then read from the old field with an interpolation that respects
the two-phase decomposition: quadratic ENO where the whole stencil sits in
one region, ghost-corner bilinear where the cell straddles the interface,
and plain bilinear as a safety net.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .grid import Grid2D, NodeField
from .levelset import InterfaceGeometry
from .gfm import LocalSystems, ghost_value
from ._kernels import (locate_cell, bilinear_at, quad_eno_at,
                       trace_departure_points)

__all__ = [
    "StepSizeError", "DeparturePoints", "DepartureValues",
    "REGULAR", "IRREGULAR_GHOST", "FALLBACK",
    "trace_departure", "interpolate_departures",
]

# interpolation classes
REGULAR = 0           # full quadratic-ENO stencil in the assumed region
IRREGULAR_GHOST = 1   # bilinear with ghost-extended corner values
FALLBACK = 2          # plain bilinear on raw values


class StepSizeError(RuntimeError):
    """dt too large for the departure point to stay in an adjacent cell."""


@dataclass
class DeparturePoints:
    """Backward-traced departure locations for every grid node."""
    grid: Grid2D
    dt: float
    levels: int
    xd_n: np.ndarray          # (ny, nx) level-n departure coordinates
    yd_n: np.ndarray
    xd_m: np.ndarray | None   # level n-1 (None when levels == 1)
    yd_m: np.ndarray | None
    n_clamped_interior: int = 0
    n_clamped: int = 0


@dataclass
class DepartureValues:
    """Interpolated field values at departure points plus per-node class."""
    values: np.ndarray        # (ncomp, ny, nx)
    klass: np.ndarray         # (ny, nx) int8, REGULAR/IRREGULAR_GHOST/FALLBACK
    n_regular: int = 0
    n_irregular: int = 0
    n_fallback: int = 0
    n_no_route: int = 0       # irregular nodes demoted for lack of ghost route


def trace_departure(V_n: NodeField, V_nm1: NodeField | None, dt: float,
                    levels: int = 2) -> DeparturePoints:
    """Trace departure points X_d^n (and X_d^{n-1} when levels == 2).

    The one-step trace uses the midpoint rule with the extrapolated
    velocity V^{n+1/2} = 1.5 V^n - 0.5 V^{n-1} (V^n itself when no older
    level is available); the two-step trace uses V^n only.  Raises
    StepSizeError when dt*max|V| exceeds half a cell per axis, which would
    let departure points leave the adjacent cells.
    """
    g = V_n.grid
    if V_n.ncomp != 2:
        raise ValueError("velocity field must have two components")
    vx_n = V_n.component(0)
    vy_n = V_n.component(1)
    if V_nm1 is not None:
        vx_half = 1.5 * vx_n - 0.5 * V_nm1.component(0)
        vy_half = 1.5 * vy_n - 0.5 * V_nm1.component(1)
    else:
        vx_half, vy_half = vx_n, vy_n

    sx = dt * max(np.abs(vx_n).max(), np.abs(vx_half).max())
    sy = dt * max(np.abs(vy_n).max(), np.abs(vy_half).max())
    if sx >= 0.5 * g.dx or sy >= 0.5 * g.dy:
        raise StepSizeError(
            f"dt={dt:g} moves characteristics by ({sx:g}, {sy:g}) "
            f"but the limit is ({0.5 * g.dx:g}, {0.5 * g.dy:g}); "
            "reduce the step size")

    xd_n = np.empty(g.shape)
    yd_n = np.empty(g.shape)
    if levels == 2:
        xd_m = np.empty(g.shape)
        yd_m = np.empty(g.shape)
    else:
        # dummy 1x1 buffers; the kernel skips them when do_nm1 is false
        xd_m = np.empty((1, 1))
        yd_m = np.empty((1, 1))
    ncl_int, ncl = trace_departure_points(
        np.ascontiguousarray(vx_n), np.ascontiguousarray(vy_n),
        np.ascontiguousarray(vx_half), np.ascontiguousarray(vy_half),
        dt, g.x_min, g.y_min, g.dx, g.dy,
        xd_n, yd_n, xd_m, yd_m, levels == 2)
    return DeparturePoints(grid=g, dt=dt, levels=levels,
                           xd_n=xd_n, yd_n=yd_n,
                           xd_m=xd_m if levels == 2 else None,
                           yd_m=yd_m if levels == 2 else None,
                           n_clamped_interior=ncl_int, n_clamped=ncl)


@njit(cache=True)
def _stencil_in_region(sign_old, ic, jc, s):
    """True when every node read by the quadratic ENO interpolation on cell
    (ic, jc) -- the four corners plus the (border-clamped) three-point
    second-difference stencils through them -- lies in region s."""
    ny, nx = sign_old.shape
    for b in (jc, jc + 1):
        for a in (ic, ic + 1):
            if sign_old[b, a] != s:
                return False
            aa = min(max(a, 1), nx - 2)
            if (sign_old[b, aa - 1] != s or sign_old[b, aa] != s
                    or sign_old[b, aa + 1] != s):
                return False
            bb = min(max(b, 1), ny - 2)
            if (sign_old[bb - 1, a] != s or sign_old[bb, a] != s
                    or sign_old[bb + 1, a] != s):
                return False
    return True


@njit(cache=True)
def _interp_kernel(u3, xd, yd, sign_old, sign_new,
                   slot_index, arm_kind, arm_theta, vals,
                   x_min, y_min, dx, dy, use_ghost, out, klass):
    ncomp = u3.shape[0]
    ny, nx = xd.shape
    n_reg = 0
    n_irr = 0
    n_fb = 0
    n_noroute = 0
    for j in range(ny):
        for i in range(nx):
            s = sign_new[j, i]
            xq = xd[j, i]
            yq = yd[j, i]
            ic, jc, tx, ty = locate_cell(xq, yq, x_min, y_min, dx, dy, nx, ny)
            if _stencil_in_region(sign_old, ic, jc, s):
                klass[j, i] = REGULAR
                n_reg += 1
                for c in range(ncomp):
                    out[c, j, i] = quad_eno_at(u3[c], xq, yq,
                                               x_min, y_min, dx, dy)
                continue
            ncorner = 0
            if sign_old[jc, ic] == s:
                ncorner += 1
            if sign_old[jc, ic + 1] == s:
                ncorner += 1
            if sign_old[jc + 1, ic] == s:
                ncorner += 1
            if sign_old[jc + 1, ic + 1] == s:
                ncorner += 1
            ghosted = False
            if ncorner >= 1:
                ok00, g00 = ghost_value(0, ic, jc, 1, 1, s, sign_old,
                                        slot_index, arm_kind, arm_theta,
                                        vals, u3)
                ok10, g10 = ghost_value(0, ic + 1, jc, -1, 1, s, sign_old,
                                        slot_index, arm_kind, arm_theta,
                                        vals, u3)
                ok01, g01 = ghost_value(0, ic, jc + 1, 1, -1, s, sign_old,
                                        slot_index, arm_kind, arm_theta,
                                        vals, u3)
                ok11, g11 = ghost_value(0, ic + 1, jc + 1, -1, -1, s,
                                        sign_old, slot_index, arm_kind,
                                        arm_theta, vals, u3)
                if ok00 and ok10 and ok01 and ok11:
                    ghosted = True
                    klass[j, i] = IRREGULAR_GHOST
                    n_irr += 1
                    if use_ghost:
                        out[0, j, i] = ((1.0 - tx) * (1.0 - ty) * g00
                                        + tx * (1.0 - ty) * g10
                                        + (1.0 - tx) * ty * g01
                                        + tx * ty * g11)
                        for c in range(1, ncomp):
                            _, h00 = ghost_value(c, ic, jc, 1, 1, s,
                                                 sign_old, slot_index,
                                                 arm_kind, arm_theta,
                                                 vals, u3)
                            _, h10 = ghost_value(c, ic + 1, jc, -1, 1, s,
                                                 sign_old, slot_index,
                                                 arm_kind, arm_theta,
                                                 vals, u3)
                            _, h01 = ghost_value(c, ic, jc + 1, 1, -1, s,
                                                 sign_old, slot_index,
                                                 arm_kind, arm_theta,
                                                 vals, u3)
                            _, h11 = ghost_value(c, ic + 1, jc + 1, -1, -1,
                                                 s, sign_old, slot_index,
                                                 arm_kind, arm_theta,
                                                 vals, u3)
                            out[c, j, i] = ((1.0 - tx) * (1.0 - ty) * h00
                                            + tx * (1.0 - ty) * h10
                                            + (1.0 - tx) * ty * h01
                                            + tx * ty * h11)
                else:
                    n_noroute += 1
            if not ghosted:
                klass[j, i] = FALLBACK
                n_fb += 1
            if not ghosted or not use_ghost:
                if not use_ghost:
                    # reference scheme: interface-blind quadratic ENO
                    for c in range(ncomp):
                        out[c, j, i] = quad_eno_at(u3[c], xq, yq,
                                                   x_min, y_min, dx, dy)
                else:
                    for c in range(ncomp):
                        out[c, j, i] = bilinear_at(u3[c], xq, yq,
                                                   x_min, y_min, dx, dy)
    return n_reg, n_irr, n_fb, n_noroute


_EMPTY_KIND = np.zeros((0, 4), dtype=np.int8)
_EMPTY_THETA = np.ones((0, 4))


def interpolate_departures(xd: np.ndarray, yd: np.ndarray, u: NodeField,
                           geo: InterfaceGeometry,
                           systems: LocalSystems | None,
                           interface_values: np.ndarray | None,
                           sign_new: np.ndarray,
                           use_ghost: bool = True) -> DepartureValues:
    """Evaluate u at departure points (xd, yd).

    ``geo`` describes the region decomposition at the time level of ``u``;
    ``systems``/``interface_values`` are that level's interface couplings
    (from gfm), consumed by the ghost-corner route.  ``sign_new`` gives the
    assumed region of each origin node, i.e. the sign field of the new time
    level.  With ``use_ghost`` false the values are interface-blind
    quadratic ENO everywhere (the reference scheme) while the class labels
    are still computed, so both schemes make identical BDF choices.
    """
    g = u.grid
    u3 = u.values if u.values.ndim == 3 else u.values[None]
    u3 = np.ascontiguousarray(u3)
    ncomp = u3.shape[0]
    if systems is None:
        # full-shaped "no system anywhere" table so ghost-route lookups at
        # crossed cells resolve to a clean demotion instead of reading a
        # dummy array out of bounds
        slot_index = np.full(g.shape, -1, dtype=np.int32)
        arm_kind, arm_theta = _EMPTY_KIND, _EMPTY_THETA
        vals = np.zeros((ncomp, 0, 4))
    else:
        slot_index = systems.slot_index
        arm_kind = systems.arm_kind
        arm_theta = systems.arm_theta
        vals = interface_values
        if vals.shape[0] != ncomp:
            raise ValueError("interface values / field component mismatch")
    out = np.empty((ncomp,) + g.shape)
    klass = np.empty(g.shape, dtype=np.int8)
    n_reg, n_irr, n_fb, n_nr = _interp_kernel(
        u3, xd, yd, geo.sign, sign_new,
        slot_index, arm_kind, arm_theta, vals,
        g.x_min, g.y_min, g.dx, g.dy, use_ghost, out, klass)
    return DepartureValues(values=out, klass=klass,
                           n_regular=n_reg, n_irregular=n_irr,
                           n_fallback=n_fb, n_no_route=n_nr)
