"""Midpoint (Crank-Nicolson) time stepper with exact divergence
preservation.

Each step solves the midpoint fixed point by Picard iteration; within
every sweep the pressure is chosen so that the committed velocity update
is discretely divergence-free. The patch-coupling penalization is
treated implicitly: the sweep solves with M1 + gamma*Pen (gamma =
dt*alpha/2), which has the same fixed point as the plain midpoint form
but keeps the iteration contractive for large alpha. Both mass variants
are Kronecker products per component, so all solves stay exact.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import LinearSolveReport
from .operators import OperatorContext, advection_residual, viscous_residual
from .spaces import Field, coeffs_of


class StepFailure(RuntimeError):
    """Picard iteration did not reach the tolerance."""


@dataclass
class StepperConfig:
    dt: float = 1e-3
    dt_max: float = 1.0
    t_final: float = 1.0
    nu: float = 0.0
    alpha: float = 0.0
    picard_tol: float = 1e-8
    picard_max_iter: int = 200
    pressure_eps: float = None
    pressure_solver: str = "direct"   # "direct" (fast diagonalization) or "cg"
    cg_tol: float = 1e-13
    cg_max_iter: int = None
    cfl_safety: float = 0.5
    cfl_constant: float = 1.0
    steady_tol: float = 1e-8

    def __post_init__(self):
        for name in ("dt", "dt_max", "picard_tol", "cg_tol", "cfl_safety",
                     "cfl_constant", "steady_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("nu", "alpha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.picard_max_iter < 1:
            raise ValueError("picard_max_iter must be at least 1")
        if self.cfl_safety > 1.0:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.pressure_eps is not None and self.pressure_eps < 0:
            raise ValueError("pressure_eps must be nonnegative")
        if self.picard_tol <= self.cg_tol:
            raise ValueError("picard_tol must exceed the inner solver tolerance")


@dataclass
class StepReport:
    picard_iterations: int
    final_update_norm: float
    pressure: LinearSolveReport
    dt_used: float


def _gamma(ctx: OperatorContext, cfg: StepperConfig, dt: float) -> float:
    if cfg.alpha == 0.0 or ctx.penalization.nnz == 0:
        return 0.0
    return 0.5 * dt * cfg.alpha


def _base_residual(ctx, cfg, ub, u_pen):
    """Pressure-independent part of the momentum residual. u_pen is the
    state the penalization acts on (u^n in the implicit-alpha sweep, the
    midpoint itself in the plain form)."""
    R = advection_residual(ctx, ub, ub)
    if cfg.nu != 0.0:
        R = R + cfg.nu * viscous_residual(ctx, ub)
    if cfg.alpha != 0.0 and ctx.penalization.nnz:
        R = R + cfg.alpha * (ctx.penalization @ u_pen)
    R = R - ctx.f_vec
    if ctx.mode == "bounded":
        R = R + ctx.b_pressure
    return R


def pressure_solve(ctx: OperatorContext, u_bar, cfg: StepperConfig,
                   u_prev=None, dt=None):
    """Pressure making the velocity update divergence-free.

    Without u_prev this is the plain midpoint form (penalization acting
    on u_bar, mass M1). With u_prev the implicit-alpha variant used
    inside cn_step is solved instead.
    """
    dt = cfg.dt if dt is None else dt
    ub = coeffs_of(u_bar)
    if u_prev is None:
        gamma, u_pen = 0.0, ub
    else:
        gamma, u_pen = _gamma(ctx, cfg, dt), coeffs_of(u_prev)
    R = _base_residual(ctx, cfg, ub, u_pen)
    return _pressure_from_residual(ctx, cfg, R, gamma)


def _pressure_from_residual(ctx, cfg, R, gamma):
    solver = ctx.poisson_solver(cfg, gamma)
    rhs = ctx.space.M2 @ (ctx.Dn @ ctx.m1_solver(gamma)(R))
    return solver.solve(rhs)


def velocity_update(ctx: OperatorContext, u_n, u_bar, p, cfg: StepperConfig,
                    dt=None) -> Field:
    """Explicit midpoint update u^{n+1} = u^n - dt Pn M1^{-1} (R - Dn^T M2 p)
    with the penalization evaluated at u_bar."""
    dt = cfg.dt if dt is None else dt
    un, ub = coeffs_of(u_n), coeffs_of(u_bar)
    R = _base_residual(ctx, cfg, ub, ub)
    w = R - ctx.DnT @ (ctx.space.M2 @ np.asarray(p))
    return Field(ctx.space, 1, un - dt * (ctx.Pn @ ctx.space.solve_M1(w)))


def cn_step(ctx: OperatorContext, u_n, cfg: StepperConfig, dt=None):
    """One midpoint step. Returns (u_next, p, StepReport); raises
    StepFailure when the Picard iteration stalls."""
    dt = cfg.dt if dt is None else dt
    un = coeffs_of(u_n).copy()
    div0 = ctx.Dt @ un
    if np.linalg.norm(div0) > 1e-6 * max(1.0, np.linalg.norm(un)):
        warnings.warn("starting velocity is not discretely divergence-free",
                      RuntimeWarning)

    gamma = _gamma(ctx, cfg, dt)
    m1t = ctx.m1_solver(gamma)
    u_new = un.copy()
    p = np.zeros(ctx.space.n2)
    prep = LinearSolveReport(0, 0.0, True)
    upd = np.inf
    for it in range(1, cfg.picard_max_iter + 1):
        # bail out before overflow: squared quantities in the quadrature
        # stay finite below ~1e150, so 1e60 leaves ample headroom
        if not np.isfinite(u_new).all() or np.abs(u_new).max() > 1e60:
            raise StepFailure(
                f"Picard iteration diverged after {it - 1} iterations")
        ub = 0.5 * (un + u_new)
        R = _base_residual(ctx, cfg, ub, un)
        p, prep = _pressure_from_residual(ctx, cfg, R, gamma)
        w = R - ctx.DnT @ (ctx.space.M2 @ p)
        u_next = un - dt * (ctx.Pn @ m1t(w))
        upd = float(np.linalg.norm(u_next - u_new))
        u_new = u_next
        if upd < cfg.picard_tol:
            return (Field(ctx.space, 1, u_new), p,
                    StepReport(it, upd, prep, dt))
    raise StepFailure(
        f"no Picard convergence in {cfg.picard_max_iter} iterations "
        f"(last update {upd:.3e})")


def cfl_dt(ctx: OperatorContext, u, cfg: StepperConfig) -> float:
    """Advective/viscous time step bound
    dt = safety / (C (|u|_inf/h + nu/h^2)), capped at dt_max.

    The velocity scale is the coefficient max norm: with a nonnegative
    partition-of-unity basis it bounds |u|_inf and is exact for constants,
    which keeps the h and nu scalings of the bound free of evaluation
    roundoff."""
    vmax = float(np.abs(coeffs_of(u)).max())
    h = ctx.space.min_h()
    denom = cfg.cfl_constant * (vmax / h + cfg.nu / (h * h))
    if denom == 0.0:
        return cfg.dt_max
    return min(cfg.cfl_safety / denom, cfg.dt_max)


# --- initialization ---------------------------------------------------------

def set_normal_data(ctx: OperatorContext, u) -> Field:
    """Overwrite the flux trace coefficients on Gamma_n edges with the 1D
    L2 projection of the prescribed normal-velocity data."""
    uc = coeffs_of(u).copy()
    from .operators import _EDGE_AXIS, _as_values
    for edge, cond in ctx.bc.items():
        if cond.kind != "normal":
            continue
        axis, side = _EDGE_AXIS[edge]
        sigma = -1.0 if side == "lo" else 1.0
        line = ctx._tangent_line(edge)
        vals = sigma * _as_values(cond.value, line.eval_pts)
        mom = line.E_l2.T @ (line.eval_w * vals)
        uc[ctx._flux_slice(edge)] = line.mass_factor("l2").solve(mom)
    return Field(ctx.space, 1, uc)


def leray_project(ctx: OperatorContext, u, cfg: StepperConfig = None):
    """Remove the discrete divergence without touching the Gamma_n flux
    data: u <- u + Pn M1^{-1} Dn^T M2 phi with (A + eps M2) phi = -M2 Div u."""
    cfg = cfg or StepperConfig()
    uc = coeffs_of(u)
    solver = ctx.poisson_solver(cfg, 0.0)
    phi, rep = solver.solve(-(ctx.space.M2 @ (ctx.Dt @ uc)))
    corr = ctx.Pn @ ctx.space.solve_M1(ctx.DnT @ (ctx.space.M2 @ phi))
    return Field(ctx.space, 1, uc + corr), rep


def initialize(ctx: OperatorContext, initial, cfg: StepperConfig = None) -> Field:
    """L2-project the initial velocity, impose the normal boundary data
    strongly, then Leray-project onto the divergence-free subspace."""
    from .spaces import l2_project
    u = l2_project(ctx.space, 1, initial)
    if ctx.mode == "bounded":
        u = set_normal_data(ctx, u)
    u, _ = leray_project(ctx, u, cfg)
    return u
