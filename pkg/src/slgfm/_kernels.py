"""Shared numba kernels: point location, interpolation, departure tracing.

Everything here works on raw float64 (ny, nx) arrays; the public modules wrap
these in the field/geometry types.  Loops are written out explicitly for
numba; keep them allocation-free.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def minmod(a, b):
    if a * b <= 0.0:
        return 0.0
    if abs(a) < abs(b):
        return a
    return b


@njit(cache=True)
def locate_cell(xq, yq, x_min, y_min, dx, dy, nx, ny):
    """Containing cell (ic, jc) and local coordinates (tx, ty) in [0, 1].

    The query point must already lie inside the domain (callers clamp);
    indices are clamped defensively so roundoff at the boundary stays legal.
    """
    xr = (xq - x_min) / dx
    yr = (yq - y_min) / dy
    ic = int(np.floor(xr))
    jc = int(np.floor(yr))
    if ic < 0:
        ic = 0
    if ic > nx - 2:
        ic = nx - 2
    if jc < 0:
        jc = 0
    if jc > ny - 2:
        jc = ny - 2
    tx = xr - ic
    ty = yr - jc
    if tx < 0.0:
        tx = 0.0
    if tx > 1.0:
        tx = 1.0
    if ty < 0.0:
        ty = 0.0
    if ty > 1.0:
        ty = 1.0
    return ic, jc, tx, ty


@njit(cache=True)
def bilinear_at(u, xq, yq, x_min, y_min, dx, dy):
    ny, nx = u.shape
    ic, jc, tx, ty = locate_cell(xq, yq, x_min, y_min, dx, dy, nx, ny)
    return ((1.0 - tx) * (1.0 - ty) * u[jc, ic]
            + tx * (1.0 - ty) * u[jc, ic + 1]
            + (1.0 - tx) * ty * u[jc + 1, ic]
            + tx * ty * u[jc + 1, ic + 1])


@njit(cache=True)
def second_diff_x(u, i, j):
    """Undivided centered second difference in x, stencil shifted inward at
    the domain edge."""
    ny, nx = u.shape
    ic = i
    if ic < 1:
        ic = 1
    if ic > nx - 2:
        ic = nx - 2
    return u[j, ic + 1] - 2.0 * u[j, ic] + u[j, ic - 1]


@njit(cache=True)
def second_diff_y(u, i, j):
    ny, nx = u.shape
    jc = j
    if jc < 1:
        jc = 1
    if jc > ny - 2:
        jc = ny - 2
    return u[jc + 1, i] - 2.0 * u[jc, i] + u[jc - 1, i]


@njit(cache=True)
def quad_eno_at(u, xq, yq, x_min, y_min, dx, dy):
    """Quadratic ENO interpolation: bilinear plus limited second-order
    corrections, with the smaller-magnitude second difference among the four
    cell corners chosen per direction."""
    ny, nx = u.shape
    ic, jc, tx, ty = locate_cell(xq, yq, x_min, y_min, dx, dy, nx, ny)
    lin = ((1.0 - tx) * (1.0 - ty) * u[jc, ic]
           + tx * (1.0 - ty) * u[jc, ic + 1]
           + (1.0 - tx) * ty * u[jc + 1, ic]
           + tx * ty * u[jc + 1, ic + 1])
    cxx = second_diff_x(u, ic, jc)
    for a, b in ((ic + 1, jc), (ic, jc + 1), (ic + 1, jc + 1)):
        cand = second_diff_x(u, a, b)
        if abs(cand) < abs(cxx):
            cxx = cand
    cyy = second_diff_y(u, ic, jc)
    for a, b in ((ic + 1, jc), (ic, jc + 1), (ic + 1, jc + 1)):
        cand = second_diff_y(u, a, b)
        if abs(cand) < abs(cyy):
            cyy = cand
    return lin - cxx * tx * (1.0 - tx) / 2.0 - cyy * ty * (1.0 - ty) / 2.0


@njit(cache=True)
def trace_departure_points(vx_n, vy_n, vx_half, vy_half, dt,
                           x_min, y_min, dx, dy,
                           xd_n, yd_n, xd_m, yd_m, do_nm1):
    """Backward characteristic tracing for every node.

    Level n (one step back, midpoint rule):
        Xh  = X - dt/2 * V^n(X)          (nodal velocity)
        Xd  = X - dt   * V^{n+1/2}(Xh)   (bilinear, extrapolated field)
    Level n-1 (two steps back, midpoint rule with V^n):
        Xh2 = X - dt   * V^n(X)
        Xd2 = X - 2 dt * V^n(Xh2)

    Departure points falling outside the domain are clamped to the boundary.
    Returns (n_clamped_interior, n_clamped_any): clamps at interior origin
    nodes counted separately from boundary-origin ones.
    """
    ny, nx = vx_n.shape
    x_max = x_min + (nx - 1) * dx
    y_max = y_min + (ny - 1) * dy
    n_clamped_interior = 0
    n_clamped_any = 0
    for j in range(ny):
        y0 = y_min + j * dy
        for i in range(nx):
            x0 = x_min + i * dx
            # one step back
            xh = x0 - 0.5 * dt * vx_n[j, i]
            yh = y0 - 0.5 * dt * vy_n[j, i]
            if xh < x_min: xh = x_min
            if xh > x_max: xh = x_max
            if yh < y_min: yh = y_min
            if yh > y_max: yh = y_max
            vxh = bilinear_at(vx_half, xh, yh, x_min, y_min, dx, dy)
            vyh = bilinear_at(vy_half, xh, yh, x_min, y_min, dx, dy)
            xd = x0 - dt * vxh
            yd = y0 - dt * vyh
            clamped = False
            if xd < x_min: xd = x_min; clamped = True
            if xd > x_max: xd = x_max; clamped = True
            if yd < y_min: yd = y_min; clamped = True
            if yd > y_max: yd = y_max; clamped = True
            xd_n[j, i] = xd
            yd_n[j, i] = yd
            if do_nm1:
                xh2 = x0 - dt * vx_n[j, i]
                yh2 = y0 - dt * vy_n[j, i]
                if xh2 < x_min: xh2 = x_min
                if xh2 > x_max: xh2 = x_max
                if yh2 < y_min: yh2 = y_min
                if yh2 > y_max: yh2 = y_max
                vx2 = bilinear_at(vx_n, xh2, yh2, x_min, y_min, dx, dy)
                vy2 = bilinear_at(vy_n, xh2, yh2, x_min, y_min, dx, dy)
                xd2 = x0 - 2.0 * dt * vx2
                yd2 = y0 - 2.0 * dt * vy2
                if xd2 < x_min: xd2 = x_min; clamped = True
                if xd2 > x_max: xd2 = x_max; clamped = True
                if yd2 < y_min: yd2 = y_min; clamped = True
                if yd2 > y_max: yd2 = y_max; clamped = True
                xd_m[j, i] = xd2
                yd_m[j, i] = yd2
            if clamped:
                n_clamped_any += 1
                if 0 < i < nx - 1 and 0 < j < ny - 1:
                    n_clamped_interior += 1
    return n_clamped_interior, n_clamped_any


@njit(cache=True)
def interp_field_quad_eno(u, xq, yq, x_min, y_min, dx, dy, out):
    """Quadratic ENO interpolation of u at an array of query points."""
    ny, nx = xq.shape
    for j in range(ny):
        for i in range(nx):
            out[j, i] = quad_eno_at(u, xq[j, i], yq[j, i], x_min, y_min, dx, dy)
