"""Constant-along-normal velocity extension.

Solves the pseudo-time advection  W_xi + sign(phi) n . grad W = 0  with
W = u on the interface, so that the advection velocity used for the level
set has continuous gradients across the interface while matching u on it.
The one-sided differences use sub-cell resolution: on a crossed arm the
stencil ends at the interface crossing with the gfm interface value as
data, so the interface values are pinned throughout the iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .grid import NodeField
from .levelset import InterfaceGeometry
from .gfm import LocalSystems, KIND_JUMP, KIND_JUMP_NEAR_EDGE
from ._kernels import minmod, second_diff_x, second_diff_y

__all__ = ["ExtensionConfig", "ExtensionError", "extend_velocity",
           "normal_derivative_max"]


class ExtensionError(RuntimeError):
    """The pseudo-time iteration became unstable."""


@dataclass
class ExtensionConfig:
    cfl: float = 0.4          # pseudo-step factor
    max_iters: int = 20       # pseudo-time iterations (RK2 each)
    band_width: float = 6.0   # |phi| <= band_width * h updated, rest frozen

    def __post_init__(self):
        if not 0.0 < self.cfl <= 0.5:
            raise ValueError("cfl must be in (0, 0.5]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@njit(cache=True)
def _advect_stage(W, sign, nxv, nyv, slot_index, arm_kind, arm_theta, vals,
                  band, dxi, dx, dy, out):
    """One explicit pseudo-time stage: out = W - dxi * (sign(phi) n . grad W).

    Upwind per component of the advection direction; crossed arms (with
    interface data) end the stencil at the sub-cell crossing point.
    """
    ncomp, ny, nx = W.shape
    for j in range(ny):
        for i in range(nx):
            if not band[j, i]:
                for c in range(ncomp):
                    out[c, j, i] = W[c, j, i]
                continue
            s = sign[j, i]
            gx = s * nxv[j, i]
            gy = s * nyv[j, i]
            k = slot_index[j, i]
            cr_r = cr_l = cr_t = cr_b = False
            if k >= 0:
                cr_r = (arm_kind[k, 0] == KIND_JUMP
                        or arm_kind[k, 0] == KIND_JUMP_NEAR_EDGE)
                cr_l = (arm_kind[k, 1] == KIND_JUMP
                        or arm_kind[k, 1] == KIND_JUMP_NEAR_EDGE)
                cr_t = (arm_kind[k, 2] == KIND_JUMP
                        or arm_kind[k, 2] == KIND_JUMP_NEAR_EDGE)
                cr_b = (arm_kind[k, 3] == KIND_JUMP
                        or arm_kind[k, 3] == KIND_JUMP_NEAR_EDGE)
            for c in range(ncomp):
                w = W[c]
                wc = w[j, i]
                d0 = second_diff_x(w, i, j)
                # D_x^- (left arm)
                mm = minmod(d0, second_diff_x(w, i - 1, j))
                if cr_l:
                    th = arm_theta[k, 1]
                    dxm = (wc - vals[c, k, 1]) / (th * dx) + th * mm / (2.0 * dx)
                else:
                    dxm = (wc - w[j, i - 1]) / dx + mm / (2.0 * dx)
                # D_x^+ (right arm)
                mm = minmod(d0, second_diff_x(w, i + 1, j))
                if cr_r:
                    th = arm_theta[k, 0]
                    dxp = (vals[c, k, 0] - wc) / (th * dx) - th * mm / (2.0 * dx)
                else:
                    dxp = (w[j, i + 1] - wc) / dx - mm / (2.0 * dx)
                d0 = second_diff_y(w, i, j)
                # D_y^- (bottom arm)
                mm = minmod(d0, second_diff_y(w, i, j - 1))
                if cr_b:
                    th = arm_theta[k, 3]
                    dym = (wc - vals[c, k, 3]) / (th * dy) + th * mm / (2.0 * dy)
                else:
                    dym = (wc - w[j - 1, i]) / dy + mm / (2.0 * dy)
                # D_y^+ (top arm)
                mm = minmod(d0, second_diff_y(w, i, j + 1))
                if cr_t:
                    th = arm_theta[k, 2]
                    dyp = (vals[c, k, 2] - wc) / (th * dy) - th * mm / (2.0 * dy)
                else:
                    dyp = (w[j + 1, i] - wc) / dy - mm / (2.0 * dy)
                adv = (max(gx, 0.0) * dxm + min(gx, 0.0) * dxp
                       + max(gy, 0.0) * dym + min(gy, 0.0) * dyp)
                out[c, j, i] = wc - dxi[j, i] * adv
    return 0


def extend_velocity(u: NodeField, geo: InterfaceGeometry,
                    systems: LocalSystems | None,
                    interface_values: np.ndarray | None,
                    cfg: ExtensionConfig | None = None) -> NodeField:
    """Extend u to be constant along interface normals, W|_Gamma = u|_Gamma.

    ``interface_values`` are gfm's numeric arm values of u at the current
    geometry; they enter the crossed-arm stencils as fixed data.  Nodes
    outside the update band (and boundary nodes) keep their input values.
    """
    if cfg is None:
        cfg = ExtensionConfig()
    g = u.grid
    u3 = u.values if u.values.ndim == 3 else u.values[None]
    W = np.ascontiguousarray(u3).copy()
    ncomp = W.shape[0]

    if systems is None:
        slot_index = np.full(g.shape, -1, dtype=np.int32)
        arm_kind = np.zeros((0, 4), dtype=np.int8)
        arm_theta = np.ones((0, 4))
        vals = np.zeros((ncomp, 0, 4))
    else:
        slot_index = systems.slot_index
        arm_kind = systems.arm_kind
        arm_theta = systems.arm_theta
        vals = interface_values
        if vals is None or vals.shape[0] != ncomp:
            raise ValueError("interface values / field component mismatch")

    h = g.h_max
    band = np.abs(geo.phi_values) <= cfg.band_width * h
    band[0, :] = band[-1, :] = False
    band[:, 0] = band[:, -1] = False

    # grid-dependent pseudo-step: shrink near the interface with min(theta)
    theta_min_arm = np.ones(g.shape)
    if systems is not None and systems.n_sys:
        jj, ii = systems.center_ij[:, 1], systems.center_ij[:, 0]
        theta_min_arm[jj, ii] = np.minimum(systems.arm_theta.min(axis=1), 1.0)
    dxi = theta_min_arm * cfg.cfl * min(g.dx, g.dy)

    limit = 10.0 * max(np.abs(W).max(), 1.0)
    stage1 = np.empty_like(W)
    stage2 = np.empty_like(W)
    for it in range(cfg.max_iters):
        _advect_stage(W, geo.sign, geo.normal[0], geo.normal[1],
                      slot_index, arm_kind, arm_theta, vals,
                      band, dxi, g.dx, g.dy, stage1)
        _advect_stage(stage1, geo.sign, geo.normal[0], geo.normal[1],
                      slot_index, arm_kind, arm_theta, vals,
                      band, dxi, g.dx, g.dy, stage2)
        W = 0.5 * (W + stage2)
        if np.abs(W).max() > limit:
            raise ExtensionError(
                f"velocity extension diverged at iteration {it + 1}")
    values = W if u.values.ndim == 3 else W[0]
    return NodeField(g, values)


def normal_derivative_max(W: NodeField, geo: InterfaceGeometry,
                          inner: float = 1.0, outer: float = 3.0) -> float:
    """max |n . grad W| (central differences) over nodes with
    inner*h < |phi| < outer*h, a diagnostic of extension quality."""
    g = W.grid
    h = g.h_max
    phi = geo.phi_values
    mask = (np.abs(phi) > inner * h) & (np.abs(phi) < outer * h)
    mask[:2, :] = mask[-2:, :] = False
    mask[:, :2] = mask[:, -2:] = False
    worst = 0.0
    for c in range(W.ncomp):
        w = W.component(c)
        wx = np.zeros_like(w)
        wy = np.zeros_like(w)
        wx[:, 1:-1] = (w[:, 2:] - w[:, :-2]) / (2.0 * g.dx)
        wy[1:-1, :] = (w[2:, :] - w[:-2, :]) / (2.0 * g.dy)
        nd = geo.normal[0] * wx + geo.normal[1] * wy
        if mask.any():
            worst = max(worst, np.abs(nd[mask]).max())
    return worst
