"""Simulation driver: builds the discrete problem from a configuration,
advances it in time, and writes diagnostics/snapshot files."""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .diagnostics import DiagnosticsRecord, l2_error, measure, vorticity
from .multipatch import build_multipatch
from .operators import OperatorContext
from .spaces import Field
from .stepper import (StepFailure, StepperConfig, cfl_dt, cn_step, initialize)

CSV_HEADER = ("time,energy,mom_x,mom_y,div_l2,jump_energy,"
              "enstrophy_term,picard_iters")


@dataclass
class RunResult:
    records: list
    u: Field
    p: np.ndarray
    t: float
    steps: int
    steady: bool
    failed: bool
    diagnostics_path: str
    snapshot_paths: list


def build_simulation(cfg):
    """(ctx, case, stepper_cfg) from a SimulationConfig."""
    cfg, case = cfg.resolve()
    x0, x1, y0, y1 = cfg.domain
    space = build_multipatch(
        degree=cfg.degree, n_patches=cfg.n_patches,
        cells_per_patch=cfg.n_cells, bounds=((x0, x1), (y0, y1)),
        periodic=cfg.periodic, moment_order=cfg.moment_order,
        stencil_radius=cfg.stencil_radius)
    ctx = OperatorContext(space, bc=None if cfg.periodic else cfg.boundary,
                          forcing=case.forcing)
    scfg = StepperConfig(
        dt=cfg.dt if cfg.dt is not None else 0.0,
        dt_max=cfg.dt_max, t_final=cfg.t_final, nu=cfg.nu, alpha=cfg.alpha,
        picard_tol=cfg.picard_tol, picard_max_iter=cfg.picard_max_iter,
        pressure_eps=cfg.pressure_eps, pressure_solver=cfg.pressure_solver,
        cfl_safety=cfg.cfl_safety, cfl_constant=cfg.cfl_constant,
        steady_tol=cfg.steady_tol)
    return ctx, case, scfg, cfg


def _record_to_row(rec: DiagnosticsRecord) -> str:
    vals = [rec.time, rec.energy, rec.momentum[0], rec.momentum[1],
            rec.div_l2, rec.jump_energy, rec.enstrophy_term]
    return ",".join(repr(float(v)) for v in vals) + f",{rec.picard_iterations}"


def write_diagnostics(records, path):
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in records:
            fh.write(_record_to_row(rec) + "\n")


def write_snapshot(ctx, u, p, t, path, grid=64):
    """Plain-text field dump on a uniform sampling grid."""
    s = ctx.space
    (x0, x1), (y0, y1) = s.line_x.interval, s.line_y.interval
    xs = np.linspace(x0, x1, grid)
    ys = np.linspace(y0, y1, grid)
    from .spaces import eval_field
    uc = u.coeffs if isinstance(u, Field) else np.asarray(u)
    uv = eval_field(Field(s, 1, uc), xs, ys, grid=True)
    pv = eval_field(Field(s, 2, np.asarray(p)), xs, ys, grid=True)
    om = vorticity(ctx, uc)
    ov = eval_field(om, xs, ys, grid=True)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    with open(path, "w") as fh:
        fh.write(f"# t = {t!r}\n")
        fh.write(f"# grid = {grid} x {grid}\n")
        fh.write("# columns: x y u_x u_y p omega\n")
        cols = np.column_stack([X.ravel(), Y.ravel(),
                                uv[..., 0].ravel(), uv[..., 1].ravel(),
                                pv.ravel(), ov.ravel()])
        for row in cols:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    return path


def run(cfg, progress=None):
    """Advance the configured case to t_final. Returns a RunResult; a
    doubly-failed step aborts the run (failed=True) after writing the
    last good state."""
    ctx, case, scfg, rcfg = build_simulation(cfg)
    os.makedirs(rcfg.output_dir, exist_ok=True)
    diag_path = os.path.join(rcfg.output_dir, rcfg.diagnostics_file)

    u = initialize(ctx, case.initial, scfg)
    p = np.zeros(ctx.space.n2)
    t, step, steady, failed = 0.0, 0, False, False
    records = [measure(ctx, u, t)]
    snaps = []
    auto_dt = rcfg.dt is None

    def snap(tag):
        path = os.path.join(rcfg.output_dir,
                            f"{rcfg.snapshot_prefix}_{tag}.dat")
        snaps.append(write_snapshot(ctx, u, p, t, path, rcfg.snapshot_grid))

    if rcfg.snapshot_cadence > 0:
        snap("000000")

    while t < scfg.t_final - 1e-14:
        dt = cfl_dt(ctx, u, scfg) if auto_dt else scfg.dt
        dt = min(dt, scfg.t_final - t)
        try:
            u_next, p, rep = cn_step(ctx, u, scfg, dt=dt)
        except StepFailure:
            try:
                dt = 0.5 * dt
                u_next, p, rep = cn_step(ctx, u, scfg, dt=dt)
            except StepFailure:
                failed = True
                break
        delta = float(np.linalg.norm(u_next.coeffs - u.coeffs))
        u, t, step = u_next, t + rep.dt_used, step + 1
        records.append(measure(ctx, u, t, rep.picard_iterations))
        if progress is not None:
            progress(step, t, records[-1])
        if rcfg.snapshot_cadence > 0 and step % rcfg.snapshot_cadence == 0:
            snap(f"{step:06d}")
        if delta / rep.dt_used < scfg.steady_tol:
            steady = True
            break

    write_diagnostics(records, diag_path)
    # always leave the last good state on disk after a failure
    if rcfg.snapshot_cadence > 0 or failed:
        last = f"{rcfg.snapshot_prefix}_{step:06d}.dat"
        if not snaps or not snaps[-1].endswith(last):
            snap(f"{step:06d}")
    return RunResult(records=records, u=u, p=p, t=t, steps=step,
                     steady=steady, failed=failed,
                     diagnostics_path=diag_path, snapshot_paths=snaps)


def convergence_study(cfg, meshes, degrees, out_path=None):
    """Refinement sweep against the case's exact solution. meshes count
    total cells per direction; rows are (degree, n, h, error, order) with
    'failed' markers when a run does not finish."""
    base, case = cfg.resolve()
    if case.exact is None:
        raise ValueError(f"case {base.case!r} has no exact solution")
    rows = []
    for deg in degrees:
        prev = None
        for n in meshes:
            npx, npy = base.n_patches
            if n % npx or n % npy:
                raise ValueError(
                    f"mesh {n} not divisible by patch counts {base.n_patches}")
            sub = replace(base, degree=deg,
                          n_cells=(n // npx, n // npy),
                          snapshot_cadence=0)
            x0, x1, _, _ = sub.domain
            h = (x1 - x0) / n
            try:
                res = run(sub)
                if res.failed:
                    raise StepFailure("run aborted")
                nu = sub.resolve()[0].nu
                err = l2_error(res.u.space, res.u,
                               lambda X, Y: case.exact(X, Y, res.t, nu))
                order = (float(np.log(prev[1] / err) / np.log(prev[0] / h))
                         if prev else float("nan"))
                rows.append((deg, n, h, err, order))
                prev = (h, err)
            except (StepFailure, FloatingPointError):
                rows.append((deg, n, h, float("nan"), float("nan")))
                prev = None
    if out_path:
        with open(out_path, "w") as fh:
            fh.write("degree,n_cells,h,error,order\n")
            for deg, n, h, err, order in rows:
                err_s = "failed" if np.isnan(err) else repr(float(err))
                ord_s = "" if np.isnan(order) else repr(float(order))
                fh.write(f"{deg},{n},{repr(h)},{err_s},{ord_s}\n")
    return rows
