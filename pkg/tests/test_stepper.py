"""Pressure solve, velocity update, midpoint stepping, CFL bound."""
import numpy as np
import pytest

from conftest import PI, context, rand_coeffs, space
from flowforms.cases import case_library
from flowforms.operators import (
    EdgeBC,
    OperatorContext,
    advection_residual,
    viscous_form,
    viscous_residual,
)
from flowforms.spaces import Field, eval_field, l2_project
from flowforms.stepper import (
    StepFailure,
    StepperConfig,
    cfl_dt,
    cn_step,
    initialize,
    leray_project,
    pressure_solve,
    set_normal_data,
    velocity_update,
)

TG = case_library("taylor_green")


def energy(s, u):
    return 0.5 * float(u @ (s.M1 @ u))


def momentum(s, u):
    Mu = s.M1 @ u
    return np.array([s.constant_v1(1.0, 0.0) @ Mu,
                     s.constant_v1(0.0, 1.0) @ Mu])


def tg_state(ctx, cfg=None):
    return initialize(ctx, TG.initial, cfg).coeffs


# --- configuration validation ------------------------------------------------

@pytest.mark.parametrize("kwargs,match", [
    (dict(dt=0.0), "dt"),
    (dict(picard_tol=-1.0), "picard_tol"),
    (dict(nu=-0.1), "nu"),
    (dict(alpha=-5.0), "alpha"),
    (dict(picard_max_iter=0), "picard_max_iter"),
    (dict(cfl_safety=1.5), "cfl_safety"),
    (dict(pressure_eps=-1e-8), "pressure_eps"),
    (dict(picard_tol=1e-14, cg_tol=1e-12), "exceed"),
])
def test_stepper_config_validation(kwargs, match):
    with pytest.raises(ValueError, match=match):
        StepperConfig(**kwargs)


def test_stepper_config_defaults_are_valid():
    cfg = StepperConfig()
    assert cfg.dt > 0 and cfg.picard_max_iter >= 1


# --- pressure solve ----------------------------------------------------------

@pytest.mark.parametrize("mode", ["periodic", "mixed"])
def test_pressure_of_rest_state_is_zero(mode):
    ctx = context(2, 4, 1, mode)
    cfg = StepperConfig(dt=1e-3)
    p, rep = pressure_solve(ctx, np.zeros(ctx.space.n1), cfg)
    assert rep.converged
    assert np.max(np.abs(p)) <= 1e-12


def test_pressure_of_uniform_flow_is_zero():
    ctx = context(2, 4, 1, "periodic")
    cfg = StepperConfig(dt=1e-3)
    u = ctx.space.constant_v1(1.4, -0.6)
    p, _ = pressure_solve(ctx, u, cfg)
    assert np.max(np.abs(p)) <= 1e-11


@pytest.mark.parametrize("mode,gamma", [("mixed", 0.0), ("periodic", 0.0)])
def test_pressure_system_is_symmetric(mode, gamma):
    ctx = context(2, 4, 1, mode)
    solver = ctx.poisson_solver(StepperConfig(), gamma)
    q = rand_coeffs(ctx.space, 2, seed=1)
    r = rand_coeffs(ctx.space, 2, seed=2)
    lhs = float(q @ solver.matvec(r))
    rhs = float(r @ solver.matvec(q))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_pressure_system_symmetric_with_penalization():
    ctx = OperatorContext(space(2, 4, 2, periodic=True))
    solver = ctx.poisson_solver(StepperConfig(), 3.7)
    q = rand_coeffs(ctx.space, 2, seed=3)
    r = rand_coeffs(ctx.space, 2, seed=4)
    lhs = float(q @ solver.matvec(r))
    rhs = float(r @ solver.matvec(q))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_singular_pressure_solve_returns_zero_mean():
    # nc=8: on 4 cells the wavenumber-2 advection aliases to a curl and
    # the pressure degenerates to zero
    ctx = context(2, 8, 1, "periodic")
    cfg = StepperConfig()
    u = tg_state(ctx, cfg)
    p, rep = pressure_solve(ctx, u, cfg)
    assert rep.converged
    mean = float(np.ones(ctx.space.n2) @ (ctx.space.M2 @ p))
    assert abs(mean) <= 1e-11 * max(1.0, np.max(np.abs(p)))
    assert np.max(np.abs(p)) > 1e-3


def test_direct_and_cg_pressure_agree():
    ctx = context(2, 4, 1, "periodic")
    u = tg_state(ctx)
    p_dir, _ = pressure_solve(ctx, u, StepperConfig())
    p_cg, rep = pressure_solve(
        ctx, u, StepperConfig(pressure_solver="cg", cg_tol=1e-13,
                              picard_tol=1e-8))
    assert rep.converged
    assert np.max(np.abs(p_dir - p_cg)) <= 1e-9 * max(1.0, np.max(np.abs(p_dir)))


def test_pressure_eps_shifts_the_system():
    ctx = context(2, 4, 1, "periodic")
    eps = 1e-4
    cfg = StepperConfig(pressure_eps=eps)
    solver = ctx.poisson_solver(cfg, 0.0)
    assert not solver.singular
    b = rand_coeffs(ctx.space, 2, seed=5)
    p, rep = solver.solve(b)
    assert np.linalg.norm(solver.matvec(p) - b) <= 1e-9 * np.linalg.norm(b)
    base = ctx.poisson_solver(StepperConfig(), 0.0)
    shift = solver.matvec(p) - base.matvec(p)
    assert np.max(np.abs(shift - eps * (ctx.space.M2 @ p))) <= 1e-13


# --- velocity update ---------------------------------------------------------

def test_velocity_update_keeps_divergence_free():
    ctx = context(2, 4, 1, "periodic")
    cfg = StepperConfig(dt=1e-3, nu=0.01)
    u_n = tg_state(ctx, cfg)
    u_bar = leray_project(ctx, rand_coeffs(ctx.space, 1, seed=6), cfg)[0].coeffs
    p, _ = pressure_solve(ctx, u_bar, cfg)
    u1 = velocity_update(ctx, u_n, u_bar, p, cfg).coeffs
    assert np.max(np.abs(ctx.Dt @ u1)) <= 1e-10 * max(1.0, np.max(np.abs(u1)))


def test_velocity_update_momentum_with_penalization():
    ctx = OperatorContext(space(2, 4, 2, periodic=True))
    cfg = StepperConfig(dt=1e-3, nu=0.02, alpha=50.0)
    u_n = initialize(ctx, TG.initial, cfg).coeffs
    u_bar = leray_project(ctx, rand_coeffs(ctx.space, 1, seed=7), cfg)[0].coeffs
    p, _ = pressure_solve(ctx, u_bar, cfg)
    u1 = velocity_update(ctx, u_n, u_bar, p, cfg).coeffs
    drift = momentum(ctx.space, u1) - momentum(ctx.space, u_n)
    assert np.max(np.abs(drift)) <= 1e-11 * max(1.0, np.max(np.abs(u_n)))


def test_velocity_update_satisfies_momentum_equation():
    # re-multiplying by M1 recovers the assembled residual exactly
    ctx = context(2, 4, 1, "periodic")
    cfg = StepperConfig(dt=1e-6, nu=0.05)
    u_n = tg_state(ctx, cfg)
    u_bar = u_n.copy()
    p, _ = pressure_solve(ctx, u_bar, cfg)
    u1 = velocity_update(ctx, u_n, u_bar, p, cfg).coeffs
    R = advection_residual(ctx, u_bar, u_bar) + cfg.nu * viscous_residual(ctx, u_bar)
    lhs = ctx.space.M1 @ ((u1 - u_n) / cfg.dt)
    rhs = -(R - ctx.DnT @ (ctx.space.M2 @ p))
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(R)))


# --- midpoint step -----------------------------------------------------------

def test_cn_step_of_rest_state_converges_immediately():
    ctx = context(2, 4, 1, "periodic")
    cfg = StepperConfig(dt=1e-3, picard_tol=1e-12)
    u1, p, rep = cn_step(ctx, np.zeros(ctx.space.n1), cfg)
    assert rep.picard_iterations == 1
    assert np.max(np.abs(u1.coeffs)) == 0.0
    assert np.max(np.abs(p)) <= 1e-13


def test_cn_step_conserves_energy_inviscid():
    ctx = context(2, 8, 1, "periodic")
    cfg = StepperConfig(dt=1e-3, nu=0.0, picard_tol=1e-12)
    u = tg_state(ctx, cfg)
    E0 = energy(ctx.space, u)
    m0 = momentum(ctx.space, u)
    for _ in range(5):
        u, p, rep = cn_step(ctx, u, cfg)
        u = u.coeffs
    assert abs(energy(ctx.space, u) - E0) <= 1e-10 * E0
    assert np.max(np.abs(momentum(ctx.space, u) - m0)) <= 1e-11 * max(1.0, E0)
    assert np.max(np.abs(ctx.Dt @ u)) <= 1e-10


def test_cn_step_viscous_dissipation_identity():
    ctx = context(2, 8, 1, "periodic")
    cfg = StepperConfig(dt=1e-3, nu=0.05, picard_tol=1e-11)
    u = tg_state(ctx, cfg)
    for _ in range(3):
        E0 = energy(ctx.space, u)
        u1, p, rep = cn_step(ctx, u, cfg)
        ub = 0.5 * (u + u1.coeffs)
        drop = E0 - energy(ctx.space, u1.coeffs)
        model = cfg.dt * cfg.nu * viscous_form(ctx, ub, ub)
        assert drop > 0
        assert abs(drop - model) <= 1e-8 * drop
        u = u1.coeffs


def test_cn_step_penalization_dissipation_identity():
    ctx = OperatorContext(space(2, 4, 2, periodic=True))
    cfg = StepperConfig(dt=5e-4, nu=0.0, alpha=100.0, picard_tol=1e-11)
    u = initialize(ctx, TG.initial, cfg).coeffs
    for _ in range(3):
        E0 = energy(ctx.space, u)
        u1, p, rep = cn_step(ctx, u, cfg)
        ub = 0.5 * (u + u1.coeffs)
        drop = E0 - energy(ctx.space, u1.coeffs)
        model = cfg.dt * cfg.alpha * float(ub @ (ctx.penalization @ ub))
        assert drop >= 0
        # the energy difference itself carries ~eps*E0 subtraction noise
        assert abs(drop - model) <= 1e-8 * drop + 5e-15 * E0
        u = u1.coeffs
        assert np.max(np.abs(ctx.Dt @ u)) <= 1e-10


def test_cn_step_bounded_walls_stays_divergence_free():
    ctx = context(2, 4, 1, "walls")
    cfg = StepperConfig(dt=1e-3, nu=0.01, picard_tol=1e-11)
    u = initialize(ctx, lambda X, Y: (np.sin(X) * np.cos(Y),
                                      -np.cos(X) * np.sin(Y)), cfg).coeffs
    for _ in range(3):
        u, p, rep = cn_step(ctx, u, cfg)
        u = u.coeffs
    assert np.max(np.abs(ctx.Dt @ u)) <= 1e-10


def test_cn_step_raises_on_stalled_iteration():
    ctx = context(2, 8, 1, "periodic")
    cfg = StepperConfig(dt=0.5, picard_tol=1e-12, picard_max_iter=2)
    u = tg_state(ctx, cfg)
    with pytest.raises(StepFailure, match="Picard"):
        cn_step(ctx, u, cfg)


def test_cn_step_reports_divergence_instead_of_overflowing():
    # a far-too-large viscous step makes the sweep expand geometrically;
    # the stepper must fail cleanly before the quadrature overflows
    ctx = context(2, 8, 1, "periodic")
    cfg = StepperConfig(dt=0.5, nu=1.0, picard_tol=1e-10)
    u = tg_state(ctx, cfg)
    with pytest.raises(StepFailure, match="diverged"):
        cn_step(ctx, u, cfg)


def test_cn_step_warns_on_divergent_start():
    ctx = context(2, 4, 1, "periodic")
    cfg = StepperConfig(dt=1e-4, picard_tol=1e-9)
    u = rand_coeffs(ctx.space, 1, seed=8)
    with pytest.warns(RuntimeWarning, match="divergence"):
        cn_step(ctx, u, cfg)


# --- CFL bound ---------------------------------------------------------------

def test_cfl_dt_halves_exactly_with_velocity_doubling():
    ctx = context(2, 8, 1, "periodic")
    cfg = StepperConfig(nu=0.0)
    u = ctx.space.constant_v1(1.7, -0.3)
    dt1 = cfl_dt(ctx, u, cfg)
    dt2 = cfl_dt(ctx, 2.0 * u, cfg)
    assert dt2 == dt1 / 2.0
    assert cfl_dt(ctx, 4.0 * u, cfg) == dt1 / 4.0


def test_cfl_dt_quarters_exactly_with_mesh_quartering():
    cfg = StepperConfig(nu=0.0)
    dts = []
    for nc in (4, 16):
        ctx = context(2, nc, 1, "periodic")
        dts.append(cfl_dt(ctx, ctx.space.constant_v1(1.3, 0.9), cfg))
    assert dts[1] == dts[0] / 4.0


def test_cfl_dt_viscous_scaling_and_cap():
    ctx4 = context(2, 4, 1, "periodic")
    ctx16 = context(2, 16, 1, "periodic")
    cfg = StepperConfig(nu=0.02, dt_max=100.0)
    z4 = np.zeros(ctx4.space.n1)
    z16 = np.zeros(ctx16.space.n1)
    assert cfl_dt(ctx16, z16, cfg) == cfl_dt(ctx4, z4, cfg) / 16.0
    calm = StepperConfig(nu=0.0, dt_max=0.25)
    assert cfl_dt(ctx4, z4, calm) == 0.25


# --- initialization ----------------------------------------------------------

def test_set_normal_data_projects_edge_traces():
    bc = {
        "left": EdgeBC("normal", value=lambda y: np.sin(y), tangential=0.0),
        "right": EdgeBC("normal", 0.0, tangential=0.0),
        "bottom": EdgeBC("normal", 0.0, tangential=0.0),
        "top": EdgeBC("pressure", 0.0),
    }
    ctx = OperatorContext(space(2, 4, 1, periodic=False), bc=bc)
    s = ctx.space
    u = set_normal_data(ctx, np.zeros(s.n1))
    # edge trace satisfies the 1D projection moments of the data
    from oracles import line_basis
    import oracles
    pts, w = oracles.gauss_cells(s.line_y.l2.breakpoints, 10)
    E = line_basis(s.line_y.l2, pts)
    ux_edge = eval_field(u, np.array([0.0]), pts)[0, :, 0]
    # u.n = -u_x = sin(y) on the left edge
    moments = E.T @ (w * (ux_edge + np.sin(pts)))
    assert np.max(np.abs(moments)) <= 1e-12
    # zero data on the bottom edge zeroes the trace
    xs = np.linspace(0.3, PI - 0.3, 5)
    uy_edge = eval_field(u, xs, np.array([0.0]))[:, 0, 1]
    assert np.max(np.abs(uy_edge)) <= 1e-13


def test_leray_project_removes_divergence_only():
    ctx = context(2, 4, 1, "periodic")
    u = rand_coeffs(ctx.space, 1, seed=9)
    u1, rep = leray_project(ctx, u)
    assert rep.converged
    assert np.max(np.abs(ctx.Dt @ u1.coeffs)) <= 1e-10 * max(1.0, np.max(np.abs(u)))
    u2, _ = leray_project(ctx, u1.coeffs)
    assert np.max(np.abs(u2.coeffs - u1.coeffs)) <= 1e-10


def test_leray_project_preserves_flux_data():
    ctx = context(2, 4, 1, "walls")
    u = set_normal_data(ctx, rand_coeffs(ctx.space, 1, seed=10))
    u1, _ = leray_project(ctx, u)
    for edge in ("left", "right", "bottom", "top"):
        fs = ctx._flux_slice(edge)
        assert np.array_equal(u1.coeffs[fs], u.coeffs[fs])


def test_initialize_taylor_green():
    ctx = context(2, 8, 1, "periodic")
    u = initialize(ctx, TG.initial)
    assert np.max(np.abs(ctx.Dt @ u.coeffs)) <= 1e-10
    from flowforms.diagnostics import l2_error
    assert l2_error(ctx.space, u, TG.initial) <= 5e-2


def test_initialize_enforces_wall_data():
    ctx = context(2, 4, 1, "walls")
    u = initialize(ctx, TG.initial)
    ys = np.linspace(0.2, PI - 0.2, 6)
    vals = eval_field(u, np.array([0.0, PI]), ys)
    assert np.max(np.abs(vals[..., 0])) <= 1e-13
