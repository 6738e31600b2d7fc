"""Local interface-value systems for the second-order ghost fluid method.

At every interior node with at least one arm crossing the zero contour, the
four auxiliary values w = (u^R, u^L, u^T, u^B) satisfy a 4x4 linear system:
uncrossed arms equate w with the neighboring grid value, while crossed arms
equate two discretizations of [mu u_axis] at the crossing point -- one-sided
second-order differences from both sides plus a tangential correction taken
from a quadratic fit Q through the six local values (center, four arms, one
same-region diagonal).  Solving once per node expresses each w as an affine
functional of nearby grid values; the functionals are consumed symbolically
by the implicit assembly and numerically by the semi-Lagrangian interpolation
and the velocity extension.

Ghost values (the region-s solution continued to a node of the other region)
are produced from the stored interface values by linear extrapolation along
whichever arm crosses closest, or through the diagonal two-arm formula when
neither straight route exists.
"""

import numpy as np
from dataclasses import dataclass
from numba import njit

from .grid import Grid2D, NodeField
from .levelset import InterfaceGeometry

ARM_SX = np.array([1, -1, 0, 0], dtype=np.int64)
ARM_SY = np.array([0, 0, 1, -1], dtype=np.int64)

KIND_IDENTITY = 0        # w = neighbor value (uncrossed, or demoted theta ~ 1)
KIND_JUMP = 1            # crossed; far stencil second order
KIND_FAR_IDENTITY = 2    # double crossing: w = u two cells away, theta = 2
KIND_JUMP_NEAR_EDGE = 3  # crossed; far stencil first order (node outside grid)

# a crossed arm with the interface within 1e-6 of the neighbor is treated as
# uncrossed (the neighbor value is the trace up to O(1e-6 dx) since [u] = 0);
# keeps 1/(1-theta) extrapolation weights bounded
THETA_DEMOTE = 1.0 - 1e-6

N_SLOTS = 10
SLOT_C = 0
SLOT_EXT = 1
# slots 2+2a, 3+2a hold the one- and two-step nodes along arm a


class GFMError(RuntimeError):
    pass


class NoGhostRoute(Exception):
    """No extrapolation route exists for the requested ghost value."""


@njit(cache=True)
def _lagrange_deriv3(xe, xa, xb, xc):
    """Derivative weights at xe of the parabola through xa, xb, xc."""
    wa = (2.0 * xe - xb - xc) / ((xa - xb) * (xa - xc))
    wb = (2.0 * xe - xa - xc) / ((xb - xa) * (xb - xc))
    wc = (2.0 * xe - xa - xb) / ((xc - xa) * (xc - xb))
    return wa, wb, wc


@njit(cache=True)
def _geometry_pass(sign, theta, crossed, normal, phi, x_min, y_min, dx, dy,
                   center_ij, nodes, arm_kind, arm_theta, ext_dir,
                   jp_x, jp_y, jn_x, jn_y):
    ny, nx = sign.shape
    n_sys = center_ij.shape[0]
    n_demoted = 0
    n_reduced = 0
    for k in range(n_sys):
        i = center_ij[k, 0]
        j = center_ij[k, 1]
        s_c = sign[j, i]
        nodes[k, SLOT_C, 0] = i
        nodes[k, SLOT_C, 1] = j
        for a in range(4):
            sx = ARM_SX[a]
            sy = ARM_SY[a]
            i1 = i + sx
            j1 = j + sy
            i2 = i + 2 * sx
            j2 = j + 2 * sy
            in2 = 0 <= i2 < nx and 0 <= j2 < ny
            f1 = 2 + 2 * a
            f2 = 3 + 2 * a
            nodes[k, f1, 0] = i1
            nodes[k, f1, 1] = j1
            if in2:
                nodes[k, f2, 0] = i2
                nodes[k, f2, 1] = j2
            else:
                nodes[k, f2, 0] = -1
                nodes[k, f2, 1] = -1
            if not crossed[a, j, i]:
                arm_kind[k, a] = KIND_IDENTITY
                arm_theta[k, a] = 1.0
                continue
            th = theta[a, j, i]
            if th > THETA_DEMOTE:
                arm_kind[k, a] = KIND_IDENTITY
                arm_theta[k, a] = 1.0
                n_demoted += 1
                continue
            if in2 and sign[j2, i2] == s_c:
                arm_kind[k, a] = KIND_FAR_IDENTITY
                arm_theta[k, a] = 2.0
                continue
            if in2:
                arm_kind[k, a] = KIND_JUMP
            else:
                arm_kind[k, a] = KIND_JUMP_NEAR_EDGE
            arm_theta[k, a] = th
            # crossing point and interpolated unit normal
            if a < 2:
                px = x_min + (i + sx * th) * dx
                py = y_min + j * dy
            else:
                px = x_min + i * dx
                py = y_min + (j + sy * th) * dy
            vx = (1.0 - th) * normal[0, j, i] + th * normal[0, j1, i1]
            vy = (1.0 - th) * normal[1, j, i] + th * normal[1, j1, i1]
            nrm = np.sqrt(vx * vx + vy * vy)
            if nrm < 1e-12:
                vx = normal[0, j, i]
                vy = normal[1, j, i]
                nrm = 1.0
            jp_x[k, a] = px
            jp_y[k, a] = py
            jn_x[k, a] = vx / nrm
            jn_y[k, a] = vy / nrm
        # extension point: same-region diagonal with the largest |phi|
        best = -1.0
        bex = 0
        bey = 0
        for d in range(4):
            if d == 0:
                ex, ey = 1, 1
            elif d == 1:
                ex, ey = -1, 1
            elif d == 2:
                ex, ey = 1, -1
            else:
                ex, ey = -1, -1
            ii = i + ex
            jj = j + ey
            if sign[jj, ii] == s_c:
                av = abs(phi[jj, ii])
                if av > best:
                    best = av
                    bex = ex
                    bey = ey
        ext_dir[k, 0] = bex
        ext_dir[k, 1] = bey
        if bex == 0:
            nodes[k, SLOT_EXT, 0] = -1
            nodes[k, SLOT_EXT, 1] = -1
            n_reduced += 1
        else:
            nodes[k, SLOT_EXT, 0] = i + bex
            nodes[k, SLOT_EXT, 1] = j + bey
    return n_demoted, n_reduced


@njit(cache=True)
def _build_pass(sign, center_ij, arm_kind, arm_theta, ext_dir,
                jn_x, jn_y, b_arr, dx, dy, mu_minus, mu_plus,
                coeff, const):
    """Assemble and solve every local 4x4 system.

    Returns the index of the first singular system, or -1 if all solved.
    """
    n_sys = center_ij.shape[0]
    ncomp = b_arr.shape[0]
    jump_mu = mu_plus - mu_minus
    nrhs = N_SLOTS + ncomp
    for k in range(n_sys):
        i = center_ij[k, 0]
        j = center_ij[k, 1]
        s_c = sign[j, i]
        thR = arm_theta[k, 0]
        thL = arm_theta[k, 1]
        thT = arm_theta[k, 2]
        thB = arm_theta[k, 3]

        # quadratic fit coefficients as weights over [u_c, wR, wL, wT, wB, ext]
        qcx = np.zeros(6)
        qcy = np.zeros(6)
        qcxx = np.zeros(6)
        qcyy = np.zeros(6)
        qcxy = np.zeros(6)
        # x-line: slopes a1 = (wR - u_c)/thR, a2 = (u_c - wL)/thL
        inv = 1.0 / (thR + thL)
        qcxx[0] = (-1.0 / thR - 1.0 / thL) * inv
        qcxx[1] = (1.0 / thR) * inv
        qcxx[2] = (1.0 / thL) * inv
        qcx[0] = 1.0 / thL + thL * qcxx[0]
        qcx[1] = thL * qcxx[1]
        qcx[2] = -1.0 / thL + thL * qcxx[2]
        # y-line
        inv = 1.0 / (thT + thB)
        qcyy[0] = (-1.0 / thT - 1.0 / thB) * inv
        qcyy[3] = (1.0 / thT) * inv
        qcyy[4] = (1.0 / thB) * inv
        qcy[0] = 1.0 / thB + thB * qcyy[0]
        qcy[3] = thB * qcyy[3]
        qcy[4] = -1.0 / thB + thB * qcyy[4]
        ex = ext_dir[k, 0]
        ey = ext_dir[k, 1]
        if ex != 0:
            ee = float(ex * ey)
            for s in range(6):
                qcxy[s] = ee * (-(1.0 if s == 0 else 0.0)
                                - ex * qcx[s] - ey * qcy[s] - qcxx[s] - qcyy[s])
            qcxy[5] += ee

        M = np.zeros((4, 4))
        Nm = np.zeros((4, N_SLOTS))
        D = np.zeros((4, ncomp))
        for a in range(4):
            kind = arm_kind[k, a]
            if kind == KIND_IDENTITY:
                M[a, a] = 1.0
                Nm[a, 2 + 2 * a] = 1.0
                continue
            if kind == KIND_FAR_IDENTITY:
                M[a, a] = 1.0
                Nm[a, 3 + 2 * a] = 1.0
                continue
            axis_x = a < 2
            o = 1.0 if (a == 0 or a == 2) else -1.0
            th = arm_theta[k, a]
            h = dx if axis_x else dy
            xe = o * th
            if s_c > 0:
                scale_cs = mu_plus
                scale_far = -mu_minus
            else:
                scale_cs = -mu_minus
                scale_far = mu_plus
            # center-side one-sided derivative through the opposite arm,
            # the center and this arm's interface value
            if axis_x:
                wm, wc, wp = _lagrange_deriv3(xe, -thL, 0.0, thR)
                arm_p, arm_m = 0, 1
            else:
                wm, wc, wp = _lagrange_deriv3(xe, -thB, 0.0, thT)
                arm_p, arm_m = 2, 3
            M[a, arm_p] += scale_cs * wp / h
            M[a, arm_m] += scale_cs * wm / h
            Nm[a, SLOT_C] -= scale_cs * wc / h
            # far-side one-sided derivative
            f1 = 2 + 2 * a
            f2 = 3 + 2 * a
            if kind == KIND_JUMP:
                wa, wb, wf = _lagrange_deriv3(xe, xe, o * 1.0, o * 2.0)
                M[a, a] += scale_far * wa / h
                Nm[a, f1] -= scale_far * wb / h
                Nm[a, f2] -= scale_far * wf / h
            else:  # KIND_JUMP_NEAR_EDGE: two-point derivative
                slope = 1.0 / (o * (1.0 - th) * h)
                M[a, a] += scale_far * (-slope)
                Nm[a, f1] -= scale_far * slope
            # tangential correction from the quadratic fit
            nx_ = jn_x[k, a]
            ny_ = jn_y[k, a]
            if axis_x:
                scale_t = jump_mu * ny_
                b_dir = nx_
            else:
                scale_t = -jump_mu * nx_
                b_dir = ny_
            for s in range(6):
                if axis_x:
                    gqx = (qcx[s] + 2.0 * xe * qcxx[s]) / dx
                    gqy = (qcy[s] + xe * qcxy[s]) / dy
                else:
                    gqx = (qcx[s] + xe * qcxy[s]) / dx
                    gqy = (qcy[s] + 2.0 * xe * qcyy[s]) / dy
                t_s = scale_t * (-ny_ * gqx + nx_ * gqy)
                if s == 0:
                    Nm[a, SLOT_C] -= t_s
                elif s <= 4:
                    M[a, s - 1] += t_s
                else:
                    Nm[a, SLOT_EXT] -= t_s
            for c in range(ncomp):
                D[a, c] = b_arr[c, k, a] * b_dir

        # solve M X = [Nm | D] by Gaussian elimination with partial pivoting
        X = np.empty((4, nrhs))
        X[:, :N_SLOTS] = Nm
        X[:, N_SLOTS:] = D
        mmax = 0.0
        for r in range(4):
            for cidx in range(4):
                av = abs(M[r, cidx])
                if av > mmax:
                    mmax = av
        for col in range(4):
            p = col
            pv = abs(M[col, col])
            for r in range(col + 1, 4):
                if abs(M[r, col]) > pv:
                    pv = abs(M[r, col])
                    p = r
            if pv < 1e-12 * mmax:
                return k
            if p != col:
                for cidx in range(4):
                    tmp = M[col, cidx]
                    M[col, cidx] = M[p, cidx]
                    M[p, cidx] = tmp
                for cidx in range(nrhs):
                    tmp = X[col, cidx]
                    X[col, cidx] = X[p, cidx]
                    X[p, cidx] = tmp
            for r in range(col + 1, 4):
                fac = M[r, col] / M[col, col]
                if fac != 0.0:
                    for cidx in range(col, 4):
                        M[r, cidx] -= fac * M[col, cidx]
                    for cidx in range(nrhs):
                        X[r, cidx] -= fac * X[col, cidx]
        for col in range(3, -1, -1):
            for cidx in range(nrhs):
                acc = X[col, cidx]
                for r in range(col + 1, 4):
                    acc -= M[col, r] * X[r, cidx]
                X[col, cidx] = acc / M[col, col]

        for a in range(4):
            for s in range(N_SLOTS):
                coeff[k, a, s] = X[a, s]
            for c in range(ncomp):
                const[k, c, a] = X[a, N_SLOTS + c]
    return -1


@njit(cache=True)
def _evaluate_kernel(u3, nodes, coeff, const, out):
    ncomp = u3.shape[0]
    n_sys = nodes.shape[0]
    for k in range(n_sys):
        for c in range(ncomp):
            for a in range(4):
                acc = const[k, c, a]
                for s in range(N_SLOTS):
                    i = nodes[k, s, 0]
                    if i >= 0:
                        acc += coeff[k, a, s] * u3[c, nodes[k, s, 1], i]
                out[c, k, a] = acc
    return 0


@njit(cache=True)
def _route_system(iq, jq, a, slot_index, arm_kind):
    k = slot_index[jq, iq]
    if k < 0:
        return -1
    kd = arm_kind[k, a]
    if kd == KIND_JUMP or kd == KIND_JUMP_NEAR_EDGE:
        return k
    return -1


@njit(cache=True)
def ghost_value(c, i0, j0, dirx, diry, s, sign, slot_index, arm_kind,
                arm_theta, vals, u3):
    """Region-s value of component c at node (i0, j0), which may lie in the
    other region, extended through the interface data.  (dirx, diry) point
    from the node into the interpolation cell.  Returns (ok, value)."""
    if sign[j0, i0] == s:
        return True, u3[c, j0, i0]
    ax = 0 if dirx == 1 else 1
    ay = 2 if diry == 1 else 3
    i1 = i0 + dirx
    j1 = j0 + diry
    kx = -1
    if sign[j0, i1] == s:
        kx = _route_system(i0, j0, ax, slot_index, arm_kind)
    ky = -1
    if sign[j1, i0] == s:
        ky = _route_system(i0, j0, ay, slot_index, arm_kind)
    if kx >= 0 and ky >= 0:
        if arm_theta[kx, ax] <= arm_theta[ky, ay]:
            ky = -1
        else:
            kx = -1
    if kx >= 0:
        th = arm_theta[kx, ax]
        w = vals[c, kx, ax]
        return True, w / (1.0 - th) - th * u3[c, j0, i1] / (1.0 - th)
    if ky >= 0:
        th = arm_theta[ky, ay]
        w = vals[c, ky, ay]
        return True, w / (1.0 - th) - th * u3[c, j1, i0] / (1.0 - th)
    if sign[j1, i1] != s:
        return False, 0.0
    ka = _route_system(i0, j1, ax, slot_index, arm_kind)
    kb = _route_system(i1, j0, ay, slot_index, arm_kind)
    if ka < 0 or kb < 0:
        return False, 0.0
    tha = arm_theta[ka, ax]
    thb = arm_theta[kb, ay]
    wa = vals[c, ka, ax]
    wb = vals[c, kb, ay]
    ud = u3[c, j1, i1]
    val = ((tha * thb - 1.0) / ((1.0 - tha) * (1.0 - thb)) * ud
           + wa / (1.0 - tha) + wb / (1.0 - thb))
    return True, val


@dataclass
class LocalSystems:
    """Solved per-node interface-value systems for one geometry snapshot."""
    grid: Grid2D
    ncomp: int
    sign: np.ndarray         # (ny, nx) int8
    slot_index: np.ndarray   # (ny, nx) int32, -1 where no system
    center_ij: np.ndarray    # (n_sys, 2) int64: i, j
    nodes: np.ndarray        # (n_sys, N_SLOTS, 2) int64, -1 unused
    arm_kind: np.ndarray     # (n_sys, 4) int8
    arm_theta: np.ndarray    # (n_sys, 4) effective leg lengths
    ext_dir: np.ndarray      # (n_sys, 2) diagonal offsets, 0 if reduced fit
    jp_x: np.ndarray         # (n_sys, 4) crossing coordinates (NaN off-jump)
    jp_y: np.ndarray
    jn_x: np.ndarray         # (n_sys, 4) crossing unit normals
    jn_y: np.ndarray
    coeff: np.ndarray        # (n_sys, 4, N_SLOTS) affine weights
    const: np.ndarray        # (n_sys, ncomp, 4) affine constants
    n_demoted: int
    n_reduced_fit: int

    @property
    def n_sys(self) -> int:
        return self.center_ij.shape[0]


def _as_components(fn_result, ncomp, m):
    arr = np.asarray(fn_result, dtype=np.float64)
    if ncomp == 1:
        return arr.reshape(1, m) if arr.size == m else arr.reshape(1, m)
    if arr.shape[0] != ncomp:
        raise GFMError(f"jump data returned shape {arr.shape}, "
                       f"expected leading dimension {ncomp}")
    return arr.reshape(ncomp, m)


def build_local_systems(geo: InterfaceGeometry, mu_minus: float,
                        mu_plus: float, jump, t: float,
                        ncomp: int = 1) -> LocalSystems:
    """Build and solve the 4x4 interface-value system at every interior node
    with a crossed arm.

    jump(x, y, t) supplies [mu du/dn] at arrays of crossing points, returning
    shape x.shape for scalar problems or (ncomp,) + x.shape for systems.
    """
    grid = geo.grid
    ny, nx = grid.shape
    interior = np.zeros((ny, nx), dtype=bool)
    interior[1:-1, 1:-1] = True
    mask = geo.crossed.any(axis=0) & interior
    jj, ii = np.nonzero(mask)
    n_sys = ii.size
    slot_index = np.full((ny, nx), -1, dtype=np.int32)
    slot_index[jj, ii] = np.arange(n_sys, dtype=np.int32)

    center_ij = np.empty((n_sys, 2), dtype=np.int64)
    center_ij[:, 0] = ii
    center_ij[:, 1] = jj
    nodes = np.full((n_sys, N_SLOTS, 2), -1, dtype=np.int64)
    arm_kind = np.zeros((n_sys, 4), dtype=np.int8)
    arm_theta = np.ones((n_sys, 4))
    ext_dir = np.zeros((n_sys, 2), dtype=np.int64)
    jp_x = np.full((n_sys, 4), np.nan)
    jp_y = np.full((n_sys, 4), np.nan)
    jn_x = np.full((n_sys, 4), np.nan)
    jn_y = np.full((n_sys, 4), np.nan)

    n_demoted, n_reduced = _geometry_pass(
        geo.sign, geo.theta, geo.crossed, geo.normal, geo.phi_values,
        grid.x_min, grid.y_min, grid.dx, grid.dy,
        center_ij, nodes, arm_kind, arm_theta, ext_dir,
        jp_x, jp_y, jn_x, jn_y)

    # jump data at every crossing point, evaluated in one vectorized call
    b_arr = np.zeros((ncomp, n_sys, 4))
    jmask = (arm_kind == KIND_JUMP) | (arm_kind == KIND_JUMP_NEAR_EDGE)
    m = int(jmask.sum())
    if m > 0:
        xs = jp_x[jmask]
        ys = jp_y[jmask]
        bv = _as_components(jump(xs, ys, t), ncomp, m)
        if not np.all(np.isfinite(bv)):
            raise GFMError("jump data evaluated to a non-finite value")
        for c in range(ncomp):
            b_arr[c][jmask] = bv[c]

    coeff = np.zeros((n_sys, 4, N_SLOTS))
    const = np.zeros((n_sys, ncomp, 4))
    bad = _build_pass(geo.sign, center_ij, arm_kind, arm_theta, ext_dir,
                      jn_x, jn_y, b_arr, grid.dx, grid.dy,
                      float(mu_minus), float(mu_plus), coeff, const)
    if bad >= 0:
        i, j = center_ij[bad]
        raise GFMError(f"singular interface system at node (i={i}, j={j})")

    return LocalSystems(grid=grid, ncomp=ncomp, sign=geo.sign,
                        slot_index=slot_index, center_ij=center_ij,
                        nodes=nodes, arm_kind=arm_kind, arm_theta=arm_theta,
                        ext_dir=ext_dir, jp_x=jp_x, jp_y=jp_y,
                        jn_x=jn_x, jn_y=jn_y, coeff=coeff, const=const,
                        n_demoted=n_demoted, n_reduced_fit=n_reduced)


def _components_view(u: NodeField) -> np.ndarray:
    v = u.values
    if v.ndim == 2:
        return v.reshape((1,) + v.shape)
    return v


def evaluate_interface_values(systems: LocalSystems, u: NodeField) -> np.ndarray:
    """Numeric interface values on a known field: (ncomp, n_sys, 4)."""
    u3 = _components_view(u)
    if u3.shape[0] != systems.ncomp:
        raise GFMError(f"field has {u3.shape[0]} components, "
                       f"systems were built for {systems.ncomp}")
    out = np.empty((systems.ncomp, systems.n_sys, 4))
    if systems.n_sys:
        _evaluate_kernel(u3, systems.nodes, systems.coeff, systems.const, out)
    if not np.all(np.isfinite(out)):
        raise GFMError("non-finite interface value")
    return out


def ghost_value_at(systems: LocalSystems, values: np.ndarray, u: NodeField,
                   c: int, i0: int, j0: int, dirx: int, diry: int,
                   s: int) -> float:
    """Python-level ghost value lookup; raises NoGhostRoute if unavailable."""
    u3 = _components_view(u)
    ok, val = ghost_value(c, i0, j0, dirx, diry, s, systems.sign,
                          systems.slot_index, systems.arm_kind,
                          systems.arm_theta, values, u3)
    if not ok:
        raise NoGhostRoute(f"no extrapolation route at node (i={i0}, j={j0})")
    return float(val)


def dump_interface_values(systems: LocalSystems, values: np.ndarray,
                          path: str) -> None:
    """Per crossed node CSV: i,j,arm,theta,u_arm,flag."""
    kind_names = {KIND_IDENTITY: "identity", KIND_JUMP: "jump",
                  KIND_FAR_IDENTITY: "far-identity",
                  KIND_JUMP_NEAR_EDGE: "jump-edge"}
    with open(path, "w") as fh:
        fh.write("i,j,arm,theta,u_arm,flag\n")
        for k in range(systems.n_sys):
            i, j = systems.center_ij[k]
            for a in range(4):
                fh.write(f"{i},{j},{a},{systems.arm_theta[k, a]:.16e},"
                         f"{values[0, k, a]:.16e},"
                         f"{kind_names[int(systems.arm_kind[k, a])]}\n")
