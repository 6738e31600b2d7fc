"""Implicit step assembly and the sparse linear solver.

Each time step solves

    rho ( a_t u^{n+1} - (departure terms) ) - div( mu grad u^{n+1} ) = f

with BDF2 weights where both departure levels interpolated regularly and
BDF1 elsewhere.  The Laplacian is the five-point formula away from the
interface and Shortley-Weller on cut arms, with the interface arm values
eliminated symbolically through the local 4x4 systems: their grid-unknown
coefficients fold into matrix entries and their constants into the rhs.
Boundary nodes carry identity rows.  The solver is restarted GMRES with a
zero-fill ILU right preconditioner, all hand-rolled on a plain CSR triple.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .grid import Grid2D, NodeField
from .levelset import InterfaceGeometry
from .gfm import LocalSystems
from .semilag import DepartureValues, REGULAR

__all__ = [
    "AssemblyError", "SolverError", "SparseLinearSystem", "StepInputs",
    "assemble_step", "assemble_parabolic_step", "solve_gmres_ilu",
    "dump_system",
]


class AssemblyError(RuntimeError):
    pass


class SolverError(RuntimeError):
    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = history if history is not None else []


@dataclass
class SparseLinearSystem:
    """CSR matrix plus right-hand sides (one per solution component)."""
    n: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    rhs: np.ndarray        # (ncomp, n)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        _csr_matvec(self.indptr, self.indices, self.values, x, out)
        return out

    def residual_norm(self, x: np.ndarray, c: int = 0) -> float:
        return float(np.linalg.norm(self.rhs[c] - self.matvec(x)))

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for row in range(self.n):
            for p in range(self.indptr[row], self.indptr[row + 1]):
                A[row, self.indices[p]] += self.values[p]
        return A


@dataclass
class StepInputs:
    """Everything assemble_step needs for one implicit solve."""
    geo: InterfaceGeometry                 # geometry of phi^{n+1}
    systems: LocalSystems | None           # gfm couplings at t^{n+1}
    ud_n: DepartureValues                  # level-n departure values
    ud_m: DepartureValues | None           # level n-1 (None -> BDF1 only)
    rho_minus: float
    rho_plus: float
    mu_minus: float
    mu_plus: float
    f_minus: Callable                      # f(x, y, t) in Omega^-
    f_plus: Callable
    g: Callable                            # Dirichlet data on the boundary
    dt: float
    t_new: float
    force_bdf1: bool = False

    def __post_init__(self):
        if min(self.rho_minus, self.rho_plus,
               self.mu_minus, self.mu_plus) <= 0.0:
            raise ValueError("rho and mu must be positive")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")


@njit(cache=True)
def _csr_matvec(indptr, indices, values, x, out):
    n = indptr.shape[0] - 1
    for row in range(n):
        acc = 0.0
        for p in range(indptr[row], indptr[row + 1]):
            acc += values[p] * x[indices[p]]
        out[row] = acc


@njit(cache=True)
def _assemble_kernel(sign, any_crossed, slot_index, arm_theta, coeff, nodes,
                     const, bdf2, rho_m, rho_p, mu_m, mu_p,
                     udn, udm, fvals, gvals, dx, dy, dt,
                     indptr, indices, values, rhs):
    """Fill the CSR triple and rhs.  Returns (status, node): status 0 = ok,
    1 = crossed interior node without a local system, 2 = zero diagonal."""
    ny, nx = sign.shape
    n = ny * nx
    ncomp = udn.shape[0]
    idx2 = 1.0 / (dx * dx)
    idy2 = 1.0 / (dy * dy)
    at2 = 1.5 / dt
    at1 = 1.0 / dt
    cols = np.empty(16, dtype=np.int64)
    vv = np.empty(16)
    pos = 0
    for j in range(ny):
        for i in range(nx):
            row = j * nx + i
            indptr[row] = pos
            if i == 0 or j == 0 or i == nx - 1 or j == ny - 1:
                indices[pos] = row
                values[pos] = 1.0
                pos += 1
                for c in range(ncomp):
                    rhs[c, row] = gvals[c, j, i]
                continue
            rr = rho_m if sign[j, i] < 0 else rho_p
            mm = mu_m if sign[j, i] < 0 else mu_p
            at = at2 if bdf2[j, i] else at1
            k = slot_index[j, i]
            if k < 0:
                if any_crossed[j, i]:
                    return 1, row
                # plain five-point row, columns emitted in increasing order
                indices[pos] = row - nx
                values[pos] = -mm * idy2
                indices[pos + 1] = row - 1
                values[pos + 1] = -mm * idx2
                indices[pos + 2] = row
                values[pos + 2] = rr * at + 2.0 * mm * (idx2 + idy2)
                indices[pos + 3] = row + 1
                values[pos + 3] = -mm * idx2
                indices[pos + 4] = row + nx
                values[pos + 4] = -mm * idy2
                pos += 5
                for c in range(ncomp):
                    if bdf2[j, i]:
                        val = rr * (4.0 * udn[c, j, i] - udm[c, j, i]) / (2.0 * dt)
                    else:
                        val = rr * udn[c, j, i] / dt
                    rhs[c, row] = val + fvals[c, j, i]
                continue
            thR = arm_theta[k, 0]
            thL = arm_theta[k, 1]
            thT = arm_theta[k, 2]
            thB = arm_theta[k, 3]
            cR = 2.0 / (thR * (thR + thL)) * idx2
            cL = 2.0 / (thL * (thR + thL)) * idx2
            cT = 2.0 / (thT * (thT + thB)) * idy2
            cB = 2.0 / (thB * (thT + thB)) * idy2
            cc = -2.0 / (thR * thL) * idx2 - 2.0 / (thT * thB) * idy2
            nent = 0
            for m in range(10):
                im = nodes[k, m, 0]
                if im < 0:
                    continue
                jm = nodes[k, m, 1]
                a_co = (cR * coeff[k, 0, m] + cL * coeff[k, 1, m]
                        + cT * coeff[k, 2, m] + cB * coeff[k, 3, m])
                entry = -mm * a_co
                if m == 0:
                    entry += rr * at - mm * cc
                if entry != 0.0 or m == 0:
                    cols[nent] = jm * nx + im
                    vv[nent] = entry
                    nent += 1
            # insertion sort by column (rows are tiny)
            for a in range(1, nent):
                ca = cols[a]
                va = vv[a]
                t = a - 1
                while t >= 0 and cols[t] > ca:
                    cols[t + 1] = cols[t]
                    vv[t + 1] = vv[t]
                    t -= 1
                cols[t + 1] = ca
                vv[t + 1] = va
            diag = 0.0
            for a in range(nent):
                indices[pos] = cols[a]
                values[pos] = vv[a]
                if cols[a] == row:
                    diag = vv[a]
                pos += 1
            if diag == 0.0:
                return 2, row
            for c in range(ncomp):
                if bdf2[j, i]:
                    val = rr * (4.0 * udn[c, j, i] - udm[c, j, i]) / (2.0 * dt)
                else:
                    val = rr * udn[c, j, i] / dt
                val += fvals[c, j, i]
                val += mm * (cR * const[k, c, 0] + cL * const[k, c, 1]
                             + cT * const[k, c, 2] + cB * const[k, c, 3])
                rhs[c, row] = val
    indptr[n] = pos
    return 0, -1


def _sample_two_sided(grid: Grid2D, sign, f_minus, f_plus, t, ncomp):
    X, Y = grid.meshgrid()
    with np.errstate(all="ignore"):
        fm = np.asarray(f_minus(X, Y, t), dtype=float)
        fp = np.asarray(f_plus(X, Y, t), dtype=float)
    if fm.ndim == 2:
        fm = fm[None]
    if fp.ndim == 2:
        fp = fp[None]
    out = np.where(sign[None] > 0, fp, fm)
    if out.shape[0] != ncomp:
        raise AssemblyError("source term component count mismatch")
    if not np.isfinite(out).all():
        raise AssemblyError("non-finite source values on selected regions")
    return out


def _sample_boundary(grid: Grid2D, gfun, t, ncomp):
    X, Y = grid.meshgrid()
    with np.errstate(all="ignore"):
        gv = np.asarray(gfun(X, Y, t), dtype=float)
    if gv.ndim == 2:
        gv = gv[None]
    if gv.shape[0] != ncomp:
        raise AssemblyError("boundary data component count mismatch")
    edge = np.zeros(grid.shape, dtype=bool)
    edge[0, :] = edge[-1, :] = True
    edge[:, 0] = edge[:, -1] = True
    if not np.isfinite(gv[:, edge]).all():
        raise AssemblyError("non-finite boundary values")
    return gv


_EMPTY_SLOTS = np.full((1, 1), -1, dtype=np.int32)


def _system_arrays(systems, ncomp, shape):
    if systems is None or systems.n_sys == 0:
        slot_index = np.full(shape, -1, dtype=np.int32)
        arm_theta = np.ones((0, 4))
        coeff = np.zeros((0, 4, 10))
        nodes = np.zeros((0, 10, 2), dtype=np.int64)
        const = np.zeros((0, ncomp, 4))
        return slot_index, arm_theta, coeff, nodes, const
    if systems.ncomp != ncomp:
        raise AssemblyError("interface systems / field component mismatch")
    return (systems.slot_index, systems.arm_theta, systems.coeff,
            systems.nodes, systems.const)


def _build(geo, systems, bdf2, udn, udm, rho_m, rho_p, mu_m, mu_p,
           fvals, gvals, dt):
    g = geo.grid
    ny, nx = g.shape
    n = g.n_nodes
    ncomp = udn.shape[0]
    slot_index, arm_theta, coeff, nodes, const = _system_arrays(
        systems, ncomp, g.shape)
    indptr = np.empty(n + 1, dtype=np.int64)
    indices = np.empty(11 * n, dtype=np.int64)
    values = np.empty(11 * n)
    rhs = np.empty((ncomp, n))
    status, node = _assemble_kernel(
        geo.sign, geo.any_crossed, slot_index, arm_theta, coeff, nodes,
        const, bdf2, rho_m, rho_p, mu_m, mu_p,
        udn, udm, fvals, gvals, g.dx, g.dy, dt,
        indptr, indices, values, rhs)
    if status == 1:
        i, jj = node % nx, node // nx
        raise AssemblyError(
            f"crossed interior node ({i},{jj}) has no local interface system")
    if status == 2:
        i, jj = node % nx, node // nx
        raise AssemblyError(f"zero diagonal at node ({i},{jj})")
    nnz = indptr[n]
    return SparseLinearSystem(n=n, indptr=indptr,
                              indices=indices[:nnz].copy(),
                              values=values[:nnz].copy(), rhs=rhs)


def assemble_step(inputs: StepInputs) -> SparseLinearSystem:
    """Assemble the implicit system for one convection-diffusion step."""
    geo = inputs.geo
    g = geo.grid
    udn = inputs.ud_n.values
    ncomp = udn.shape[0]
    if inputs.ud_m is not None and not inputs.force_bdf1:
        udm = inputs.ud_m.values
        bdf2 = (inputs.ud_n.klass == REGULAR) & (inputs.ud_m.klass == REGULAR)
    else:
        udm = np.zeros_like(udn)
        bdf2 = np.zeros(g.shape, dtype=bool)
    fvals = _sample_two_sided(g, geo.sign, inputs.f_minus, inputs.f_plus,
                              inputs.t_new, ncomp)
    gvals = _sample_boundary(g, inputs.g, inputs.t_new, ncomp)
    return _build(geo, inputs.systems, bdf2, udn, udm,
                  inputs.rho_minus, inputs.rho_plus,
                  inputs.mu_minus, inputs.mu_plus, fvals, gvals, inputs.dt)


def assemble_parabolic_step(geo_new: InterfaceGeometry,
                            systems_new: LocalSystems | None,
                            u_n: NodeField, u_m: NodeField | None,
                            sign_n: np.ndarray, sign_m: np.ndarray | None,
                            ghost_n: Callable | None,
                            rho_minus: float, rho_plus: float,
                            mu_minus: float, mu_plus: float,
                            f_minus: Callable, f_plus: Callable, g: Callable,
                            dt: float, t_new: float) -> tuple:
    """Assemble one diffusion-only step (no advection).

    Uses nodal history values in place of departure values.  BDF2 where the
    node's region is unchanged across all three levels; when the region
    flipped between t^n and t^{n+1} the step is BDF1 with the time-n value
    replaced by its ghost extension into the new region, obtained from
    ``ghost_n(c, i, j, s)`` (returns None when no route exists, in which
    case the raw value is used and counted).  Returns (system, n_no_route).
    """
    grid = geo_new.grid
    u3 = u_n.values if u_n.values.ndim == 3 else u_n.values[None]
    ncomp = u3.shape[0]
    udn = u3.copy()
    if u_m is not None and sign_m is not None:
        um3 = u_m.values if u_m.values.ndim == 3 else u_m.values[None]
        udm = um3.copy()
        bdf2 = (geo_new.sign == sign_n) & (geo_new.sign == sign_m)
    else:
        udm = np.zeros_like(udn)
        bdf2 = np.zeros(grid.shape, dtype=bool)
    n_no_route = 0
    flipped = np.argwhere(geo_new.sign != sign_n)
    for jj, ii in flipped:
        if grid.is_boundary(ii, jj):
            continue
        s = int(geo_new.sign[jj, ii])
        for c in range(ncomp):
            gv = None if ghost_n is None else ghost_n(c, ii, jj, s)
            if gv is None:
                n_no_route += 1
                break
            udn[c, jj, ii] = gv
        bdf2[jj, ii] = False
    fvals = _sample_two_sided(grid, geo_new.sign, f_minus, f_plus,
                              t_new, ncomp)
    gvals = _sample_boundary(grid, g, t_new, ncomp)
    sys = _build(geo_new, systems_new, bdf2, udn, udm,
                 rho_minus, rho_plus, mu_minus, mu_plus, fvals, gvals, dt)
    return sys, n_no_route


# ---------------------------------------------------------------------------
# zero-fill ILU and restarted GMRES

@njit(cache=True)
def _ilu0_factor(indptr, indices, values, diag_pos):
    """In-place ILU(0) on CSR with sorted column indices.  Unit lower
    triangle is stored in place of L, U on and above the diagonal.
    Returns the row of a zero pivot, or -1."""
    n = indptr.shape[0] - 1
    for row in range(n):
        dp = -1
        for p in range(indptr[row], indptr[row + 1]):
            if indices[p] == row:
                dp = p
                break
        if dp < 0:
            return row
        diag_pos[row] = dp
        for p in range(indptr[row], dp):
            k = indices[p]
            ukk = values[diag_pos[k]]
            if ukk == 0.0:
                return k
            lik = values[p] / ukk
            values[p] = lik
            # subtract lik * (row k of U) from the remaining entries
            q = p + 1
            kp = diag_pos[k]
            kend = indptr[k + 1]
            while q < indptr[row + 1] and kp < kend:
                ck = indices[kp]
                cq = indices[q]
                if ck == cq:
                    values[q] -= lik * values[kp]
                    q += 1
                    kp += 1
                elif ck < cq:
                    kp += 1
                else:
                    q += 1
        if values[dp] == 0.0:
            return row
    return -1


@njit(cache=True)
def _ilu0_solve(indptr, indices, values, diag_pos, b, out):
    """Solve L U x = b with the in-place ILU(0) factors."""
    n = indptr.shape[0] - 1
    for row in range(n):
        acc = b[row]
        for p in range(indptr[row], diag_pos[row]):
            acc -= values[p] * out[indices[p]]
        out[row] = acc
    for row in range(n - 1, -1, -1):
        acc = out[row]
        for p in range(diag_pos[row] + 1, indptr[row + 1]):
            acc -= values[p] * out[indices[p]]
        out[row] = acc / values[diag_pos[row]]


class _ILU0:
    def __init__(self, sys: SparseLinearSystem):
        self.indptr = sys.indptr
        self.indices = sys.indices
        self.values = sys.values.copy()
        self.diag_pos = np.empty(sys.n, dtype=np.int64)
        bad = _ilu0_factor(self.indptr, self.indices, self.values,
                           self.diag_pos)
        if bad >= 0:
            raise SolverError(f"ILU(0) breakdown at row {bad}")

    def solve(self, b):
        out = np.empty_like(b)
        _ilu0_solve(self.indptr, self.indices, self.values, self.diag_pos,
                    b, out)
        return out


def _gmres_single(sys, prec, b, x0, tol, restart, max_iter):
    n = sys.n
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), 0, [0.0]
    x = x0.copy()
    history = []
    total = 0
    while True:
        r = b - sys.matvec(x)
        beta = float(np.linalg.norm(r))
        history.append(beta / bnorm)
        if beta / bnorm <= tol:
            return x, total, history
        if total >= max_iter:
            raise SolverError(
                f"GMRES stagnated: relative residual {beta / bnorm:.3e} "
                f"after {total} iterations", history)
        m = restart
        V = np.empty((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        gvec = np.zeros(m + 1)
        gvec[0] = beta
        V[0] = r / beta
        k_used = 0
        for k in range(m):
            z = prec.solve(V[k])
            w = sys.matvec(z)
            for t in range(k + 1):     # modified Gram-Schmidt, fixed order
                H[t, k] = float(w @ V[t])
                w -= H[t, k] * V[t]
            hk1 = float(np.linalg.norm(w))
            H[k + 1, k] = hk1
            breakdown = hk1 < 1e-300
            if not breakdown:
                V[k + 1] = w / hk1
            for t in range(k):
                tmp = cs[t] * H[t, k] + sn[t] * H[t + 1, k]
                H[t + 1, k] = -sn[t] * H[t, k] + cs[t] * H[t + 1, k]
                H[t, k] = tmp
            denom = float(np.hypot(H[k, k], H[k + 1, k]))
            if denom == 0.0:
                cs[k], sn[k] = 1.0, 0.0
            else:
                cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            gvec[k + 1] = -sn[k] * gvec[k]
            gvec[k] = cs[k] * gvec[k]
            total += 1
            k_used = k + 1
            history.append(abs(gvec[k + 1]) / bnorm)
            if abs(gvec[k + 1]) / bnorm <= 0.5 * tol or breakdown \
                    or total >= max_iter:
                break
        y = np.zeros(k_used)
        for t in range(k_used - 1, -1, -1):
            acc = gvec[t]
            for s_ in range(t + 1, k_used):
                acc -= H[t, s_] * y[s_]
            y[t] = acc / H[t, t]
        x = x + prec.solve(V[:k_used].T @ y)


def solve_gmres_ilu(sys: SparseLinearSystem, tol: float = 1e-10,
                    max_iter: int = 500, restart: int = 30,
                    x0: np.ndarray | None = None):
    """Solve every component system; returns (solutions (ncomp, n),
    iteration counts).  The reported residual is recomputed from scratch,
    not taken from the Givens recurrence."""
    if not np.isfinite(sys.values).all() or not np.isfinite(sys.rhs).all():
        raise SolverError("non-finite matrix or rhs entries")
    prec = _ILU0(sys)
    ncomp = sys.rhs.shape[0]
    out = np.empty((ncomp, sys.n))
    iters = []
    for c in range(ncomp):
        start = x0[c] if x0 is not None else np.zeros(sys.n)
        xc, nit, hist = _gmres_single(sys, prec, sys.rhs[c], start,
                                      tol, restart, max_iter)
        bnorm = np.linalg.norm(sys.rhs[c])
        if bnorm > 0 and sys.residual_norm(xc, c) / bnorm > tol:
            raise SolverError("GMRES returned without meeting tolerance",
                              hist)
        out[c] = xc
        iters.append(nit)
    return out, iters


def dump_system(sys: SparseLinearSystem, path) -> None:
    """Write the matrix as 'row col value' lines, then the rhs components
    as 'rhs c row value' lines."""
    with open(path, "w") as fh:
        for row in range(sys.n):
            for p in range(sys.indptr[row], sys.indptr[row + 1]):
                fh.write(f"{row} {sys.indices[p]} {sys.values[p]:.17e}\n")
        for c in range(sys.rhs.shape[0]):
            for row in range(sys.n):
                fh.write(f"rhs {c} {row} {sys.rhs[c, row]:.17e}\n")
