"""Simulation orchestration: level-set transport, departure interpolation,
implicit solve, cache rotation.

One step runs, in order: build the advection velocity for the level set
(the raw given field, the solution itself, or its constant-along-normal
extension), advect and reinitialize phi, extract the new interface
geometry and local interface systems, trace departure points, interpolate
the history fields at them, assemble the implicit system (BDF2 where both
departure levels interpolated regularly) and solve it with ILU-GMRES.
Interface systems and interface values of u are cached per time level so
the next step's interpolation can reuse them.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Grid2D, NodeField
from .levelset import (LevelSetField, InterfaceGeometry, compute_geometry,
                       advect_levelset, reinitialize)
from . import gfm
from .extend import ExtensionConfig, extend_velocity
from .semilag import trace_departure, interpolate_departures
from .assemble import (StepInputs, assemble_step, assemble_parabolic_step,
                       solve_gmres_ilu)

__all__ = [
    "DriverError", "SimulationConfig", "ProblemSpec", "TimeState",
    "StepDiagnostics", "ErrorReport", "initial_state", "step", "run",
    "MODE_SCALAR", "MODE_SELF_ADVECTED", "MODE_PARABOLIC",
    "INTERP_SLGFM", "INTERP_SLBDF2",
    "LS_COMPUTED", "LS_NO_EXTENSION", "LS_EXACT",
]

MODE_SCALAR = "scalar"
MODE_SELF_ADVECTED = "self-advected"
MODE_PARABOLIC = "parabolic"
INTERP_SLGFM = "slgfm"
INTERP_SLBDF2 = "slbdf2"
LS_COMPUTED = "computed"
LS_NO_EXTENSION = "no-extension"
LS_EXACT = "exact"


class DriverError(RuntimeError):
    pass


@dataclass
class SimulationConfig:
    mode: str = MODE_SCALAR
    interpolation: str = INTERP_SLGFM
    levelset_source: str = LS_EXACT
    dt_factor: float = 0.4            # dt = dt_factor * dx
    final_time: float = 1.0
    extension: ExtensionConfig = field(default_factory=ExtensionConfig)
    gmres_tol: float = 1e-10
    gmres_restart: int = 30
    gmres_max_iter: int = 500
    reinit_sweeps: int = 5
    exact_history: bool = False       # seed level n-1 from the closed form
    short_step_bdf1_fraction: float = 0.1
    error_side: str = "exact"         # region for exact-u evaluation
    log_path: str | None = None

    def __post_init__(self):
        if self.mode not in (MODE_SCALAR, MODE_SELF_ADVECTED, MODE_PARABOLIC):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.interpolation not in (INTERP_SLGFM, INTERP_SLBDF2):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        if self.levelset_source not in (LS_COMPUTED, LS_NO_EXTENSION,
                                        LS_EXACT):
            raise ValueError(
                f"unknown levelset source {self.levelset_source!r}")
        if self.mode == MODE_PARABOLIC and self.levelset_source != LS_EXACT:
            raise ValueError("parabolic mode needs the exact level set")
        if self.dt_factor <= 0 or self.final_time < 0:
            raise ValueError("dt_factor must be positive, final_time >= 0")


@dataclass
class ProblemSpec:
    """Closed forms defining one moving-interface problem."""
    grid: Grid2D
    ncomp: int
    rho_minus: float
    rho_plus: float
    mu_minus: float
    mu_plus: float
    phi_exact: Callable               # phi(x, y, t)
    exact_minus: Callable             # u in Omega^-: (x, y, t) -> values
    exact_plus: Callable
    f_minus: Callable
    f_plus: Callable
    jump: Callable                    # b(x, y, t): flux-jump data for gfm
    velocity: Callable | None = None  # V(x, y, t), scalar mode only

    def exact_solution(self, t: float):
        """Exact u and phi sampled on the grid, u sided by exact phi."""
        X, Y = self.grid.meshgrid()
        phi = np.asarray(self.phi_exact(X, Y, t), dtype=float)
        with np.errstate(all="ignore"):
            um = np.asarray(self.exact_minus(X, Y, t), dtype=float)
            up = np.asarray(self.exact_plus(X, Y, t), dtype=float)
        if um.ndim == 2:
            um = um[None]
        if up.ndim == 2:
            up = up[None]
        uex = np.where(phi[None] < 0, um, up)
        if uex.shape[0] != self.ncomp:
            raise DriverError("exact solution component count mismatch")
        if not np.isfinite(uex).all():
            raise DriverError("exact solution not finite on its region")
        return uex, phi

    def boundary_g(self, x, y, t):
        phi = np.asarray(self.phi_exact(x, y, t), dtype=float)
        with np.errstate(all="ignore"):
            um = np.asarray(self.exact_minus(x, y, t), dtype=float)
            up = np.asarray(self.exact_plus(x, y, t), dtype=float)
        if um.ndim == 2:
            um = um[None]
        if up.ndim == 2:
            up = up[None]
        return np.where(phi[None] < 0, um, up)


@dataclass
class TimeState:
    t: float
    step: int
    u_n: NodeField
    u_m: NodeField | None
    ls_n: LevelSetField
    ls_m: LevelSetField | None
    geo_n: InterfaceGeometry
    geo_m: InterfaceGeometry | None
    sys_n: gfm.LocalSystems | None
    sys_m: gfm.LocalSystems | None
    vals_n: np.ndarray | None
    vals_m: np.ndarray | None
    W_n: NodeField | None = None      # phi-advection velocity at level n
    W_m: NodeField | None = None


@dataclass
class StepDiagnostics:
    step: int
    time: float
    linf_residual: float
    gmres_iters: list
    regular: int
    irregular: int
    fallback: int
    no_route: int = 0
    clamped: int = 0
    shortened: bool = False
    forced_bdf1: bool = False

    def line(self) -> str:
        return (f"{self.step},{self.time:.12g},{self.linf_residual:.3e},"
                f"{sum(self.gmres_iters)},{self.regular},{self.irregular},"
                f"{self.fallback}")


@dataclass
class ErrorReport:
    linf_u: float
    linf_phi: float
    t_final: float
    n_steps: int
    runtime_s: float
    gmres_iters_mean: float
    error_side: str
    diagnostics: list


def _sample_two_sided(grid, sign, fn_minus, fn_plus, t, ncomp):
    X, Y = grid.meshgrid()
    with np.errstate(all="ignore"):
        vm = np.asarray(fn_minus(X, Y, t), dtype=float)
        vp = np.asarray(fn_plus(X, Y, t), dtype=float)
    if vm.ndim == 2:
        vm = vm[None]
    if vp.ndim == 2:
        vp = vp[None]
    out = np.where(sign[None] > 0, vp, vm)
    if out.shape[0] != ncomp or not np.isfinite(out).all():
        raise DriverError("two-sided sampling failed")
    return out


def _sample_velocity(prob: ProblemSpec, t: float) -> NodeField:
    X, Y = prob.grid.meshgrid()
    V = np.asarray(prob.velocity(X, Y, t), dtype=float)
    if V.shape != (2,) + prob.grid.shape:
        raise DriverError("velocity sampler must return two components")
    return NodeField(prob.grid, V)


def _level_caches(prob: ProblemSpec, ls: LevelSetField, u: NodeField, t):
    """Geometry, interface systems and interface values for one level."""
    geo = compute_geometry(ls)
    systems = gfm.build_local_systems(geo, prob.mu_minus, prob.mu_plus,
                                      prob.jump, t, prob.ncomp)
    vals = gfm.evaluate_interface_values(systems, u)
    return geo, systems, vals


def _exact_levelset(prob: ProblemSpec, t: float) -> LevelSetField:
    X, Y = prob.grid.meshgrid()
    phi = np.asarray(prob.phi_exact(X, Y, t), dtype=float)
    return LevelSetField(NodeField(prob.grid, phi.copy()), t)


def initial_state(cfg: SimulationConfig, prob: ProblemSpec) -> TimeState:
    """State at t = 0 (optionally with an exact level at t = -dt)."""
    ls0 = _exact_levelset(prob, 0.0)
    if cfg.levelset_source != LS_EXACT:
        ls0 = reinitialize(ls0, sweeps=cfg.reinit_sweeps)
    geo0 = compute_geometry(ls0)
    u0_vals = _sample_two_sided(prob.grid, geo0.sign, prob.exact_minus,
                                prob.exact_plus, 0.0, prob.ncomp)
    u0 = NodeField(prob.grid, u0_vals[0] if prob.ncomp == 1 else u0_vals)
    sys0 = gfm.build_local_systems(geo0, prob.mu_minus, prob.mu_plus,
                                   prob.jump, 0.0, prob.ncomp)
    vals0 = gfm.evaluate_interface_values(sys0, u0)
    state = TimeState(t=0.0, step=0, u_n=u0, u_m=None,
                      ls_n=ls0, ls_m=None, geo_n=geo0, geo_m=None,
                      sys_n=sys0, sys_m=None, vals_n=vals0, vals_m=None)
    if cfg.exact_history:
        dt = cfg.dt_factor * prob.grid.dx
        lsm = _exact_levelset(prob, -dt)
        if cfg.levelset_source != LS_EXACT:
            lsm = reinitialize(lsm, sweeps=cfg.reinit_sweeps)
        geom = compute_geometry(lsm)
        um_vals = _sample_two_sided(prob.grid, geom.sign, prob.exact_minus,
                                    prob.exact_plus, -dt, prob.ncomp)
        um = NodeField(prob.grid, um_vals[0] if prob.ncomp == 1 else um_vals)
        sysm = gfm.build_local_systems(geom, prob.mu_minus, prob.mu_plus,
                                       prob.jump, -dt, prob.ncomp)
        state.u_m = um
        state.ls_m = lsm
        state.geo_m = geom
        state.sys_m = sysm
        state.vals_m = gfm.evaluate_interface_values(sysm, um)
    return state


def _as_velocity(u: NodeField) -> NodeField:
    if u.ncomp != 2:
        raise DriverError("self-advected mode needs a two-component u")
    return u


def _advance_levelset(cfg: SimulationConfig, prob: ProblemSpec,
                      state: TimeState, dt: float, dt_prev: float):
    """phi^{n+1} plus the velocity caches used to produce it."""
    t_new = state.t + dt
    if cfg.levelset_source == LS_EXACT:
        return _exact_levelset(prob, t_new), None
    if cfg.mode == MODE_SCALAR:
        W_n = _sample_velocity(prob, state.t)
        W_m = (_sample_velocity(prob, state.t - dt_prev)
               if state.u_m is not None else None)
    elif cfg.levelset_source == LS_NO_EXTENSION:
        W_n = _as_velocity(state.u_n)
        W_m = _as_velocity(state.u_m) if state.u_m is not None else None
    else:
        W_n = extend_velocity(_as_velocity(state.u_n), state.geo_n,
                              state.sys_n, state.vals_n, cfg.extension)
        # reuse the previous step's extension for level n-1
        W_m = state.W_n if state.W_n is not None else None
    bootstrap = W_m is None or state.ls_m is None
    ls_new = advect_levelset(state.ls_n, state.ls_m, W_n, W_m, dt,
                             bootstrap=bootstrap)
    ls_new = reinitialize(ls_new, sweeps=cfg.reinit_sweeps)
    return ls_new, W_n


def step(cfg: SimulationConfig, prob: ProblemSpec, state: TimeState,
         dt: float, dt_nominal: float | None = None) -> tuple:
    """Advance one step of size dt; returns (new_state, diagnostics)."""
    if dt_nominal is None:
        dt_nominal = dt
    t_new = state.t + dt
    shortened = dt < dt_nominal * (1.0 - 1e-12)
    force_bdf1 = (state.u_m is None
                  or dt < cfg.short_step_bdf1_fraction * dt_nominal)

    # (1) move the interface
    if cfg.mode == MODE_PARABOLIC:
        ls_new, W_used = _exact_levelset(prob, t_new), None
    else:
        ls_new, W_used = _advance_levelset(cfg, prob, state, dt, dt_nominal)

    # (2) new geometry and interface couplings
    geo_new = compute_geometry(ls_new)
    sys_new = gfm.build_local_systems(geo_new, prob.mu_minus, prob.mu_plus,
                                      prob.jump, t_new, prob.ncomp)

    gfun = prob.boundary_g if prob.ncomp > 1 else (
        lambda x, y, t: prob.boundary_g(x, y, t)[0])

    if cfg.mode == MODE_PARABOLIC:
        def ghost_n(c, i, j, s):
            for dirs in ((1, 1), (-1, 1), (1, -1), (-1, -1)):
                try:
                    return gfm.ghost_value_at(state.sys_n, state.vals_n,
                                              state.u_n, c, i, j,
                                              dirs[0], dirs[1], s)
                except gfm.NoGhostRoute:
                    continue
            return None

        lin, n_no_route = assemble_parabolic_step(
            geo_new, sys_new, state.u_n,
            None if force_bdf1 else state.u_m,
            state.geo_n.sign,
            None if force_bdf1 or state.geo_m is None else state.geo_m.sign,
            ghost_n, prob.rho_minus, prob.rho_plus,
            prob.mu_minus, prob.mu_plus,
            prob.f_minus, prob.f_plus, gfun, dt, t_new)
        diag_counts = (0, 0, 0, n_no_route, 0)
    else:
        # (3) departure points and history-field interpolation
        if cfg.mode == MODE_SCALAR:
            V_n = _sample_velocity(prob, state.t)
            V_m = (_sample_velocity(prob, state.t - dt_nominal)
                   if not force_bdf1 else None)
        else:
            V_n = _as_velocity(state.u_n)
            V_m = _as_velocity(state.u_m) if not force_bdf1 else None
        levels = 1 if force_bdf1 else 2
        dp = trace_departure(V_n, V_m, dt, levels=levels)
        use_ghost = cfg.interpolation == INTERP_SLGFM
        ud_n = interpolate_departures(dp.xd_n, dp.yd_n, state.u_n,
                                      state.geo_n, state.sys_n, state.vals_n,
                                      geo_new.sign, use_ghost)
        ud_m = None
        if levels == 2:
            ud_m = interpolate_departures(dp.xd_m, dp.yd_m, state.u_m,
                                          state.geo_m, state.sys_m,
                                          state.vals_m, geo_new.sign,
                                          use_ghost)
        # (4) implicit solve
        inputs = StepInputs(
            geo=geo_new, systems=sys_new, ud_n=ud_n, ud_m=ud_m,
            rho_minus=prob.rho_minus, rho_plus=prob.rho_plus,
            mu_minus=prob.mu_minus, mu_plus=prob.mu_plus,
            f_minus=prob.f_minus, f_plus=prob.f_plus, g=gfun,
            dt=dt, t_new=t_new, force_bdf1=force_bdf1)
        lin = assemble_step(inputs)
        diag_counts = (ud_n.n_regular, ud_n.n_irregular, ud_n.n_fallback,
                       ud_n.n_no_route, dp.n_clamped_interior)

    x0 = state.u_n.values.reshape(prob.ncomp, -1)
    sol, iters = solve_gmres_ilu(lin, tol=cfg.gmres_tol,
                                 max_iter=cfg.gmres_max_iter,
                                 restart=cfg.gmres_restart, x0=x0)
    res = 0.0
    for c in range(prob.ncomp):
        r = lin.rhs[c] - lin.matvec(sol[c])
        res = max(res, float(np.abs(r).max()))
    u_vals = sol.reshape((prob.ncomp,) + prob.grid.shape)
    if prob.ncomp == 1:
        u_vals = u_vals[0]
    u_new = NodeField(prob.grid, u_vals.copy())
    if not np.isfinite(u_new.values).all():
        raise DriverError(f"non-finite solution at step {state.step + 1}")
    vals_new = gfm.evaluate_interface_values(sys_new, u_new)

    new_state = TimeState(
        t=t_new, step=state.step + 1, u_n=u_new, u_m=state.u_n,
        ls_n=ls_new, ls_m=state.ls_n, geo_n=geo_new, geo_m=state.geo_n,
        sys_n=sys_new, sys_m=state.sys_n, vals_n=vals_new,
        vals_m=state.vals_n, W_n=W_used, W_m=state.W_n)
    diag = StepDiagnostics(
        step=new_state.step, time=t_new, linf_residual=res,
        gmres_iters=list(iters), regular=diag_counts[0],
        irregular=diag_counts[1], fallback=diag_counts[2],
        no_route=diag_counts[3], clamped=diag_counts[4],
        shortened=shortened, forced_bdf1=force_bdf1)
    return new_state, diag


def run(cfg: SimulationConfig, prob: ProblemSpec) -> tuple:
    """Run from t = 0 to final_time; returns (final state, ErrorReport)."""
    t_start = _time.perf_counter()
    state = initial_state(cfg, prob)
    dt_nom = cfg.dt_factor * prob.grid.dx
    T = cfg.final_time
    diags = []
    log_fh = open(cfg.log_path, "w") if cfg.log_path else None
    try:
        while state.t < T * (1.0 - 1e-14):
            dt = min(dt_nom, T - state.t)
            state, diag = step(cfg, prob, state, dt, dt_nominal=dt_nom)
            # land on T exactly; skip a residual rounding-size step
            if T - state.t <= 1e-10 * dt_nom:
                state.t = T
            diags.append(diag)
            if log_fh is not None:
                log_fh.write(diag.line() + "\n")
    finally:
        if log_fh is not None:
            log_fh.close()
    runtime = _time.perf_counter() - t_start

    uex, phi_ex = prob.exact_solution(T)
    if cfg.error_side == "computed":
        uex = _sample_two_sided(prob.grid, state.geo_n.sign,
                                prob.exact_minus, prob.exact_plus, T,
                                prob.ncomp)
    u3 = state.u_n.values if state.u_n.values.ndim == 3 \
        else state.u_n.values[None]
    linf_u = float(np.abs(u3 - uex).max())
    band = np.abs(phi_ex) < 3.0 * prob.grid.h_max
    if band.any():
        linf_phi = float(np.abs(state.ls_n.phi.values - phi_ex)[band].max())
    else:
        linf_phi = 0.0
    iters_all = [it for d in diags for it in d.gmres_iters]
    report = ErrorReport(
        linf_u=linf_u, linf_phi=linf_phi, t_final=state.t,
        n_steps=state.step, runtime_s=runtime,
        gmres_iters_mean=float(np.mean(iters_all)) if iters_all else 0.0,
        error_side=cfg.error_side, diagnostics=diags)
    return state, report
