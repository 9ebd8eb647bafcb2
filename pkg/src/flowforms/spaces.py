"""2D tensor-product de Rham complexes: V0 --curl--> V1 --div--> V2.

V0 = S_{p+1} (x) S_{p+1},  V1 = (S_{p+1} (x) S_p) x (S_p (x) S_{p+1}),
V2 = S_p (x) S_p, with Curl q = (d_y q, -d_x q) and Div v = d_x v_x + d_y v_y.
Every global matrix is a Kronecker product (or block thereof) of the 1D
line matrices, so Div.Curl = 0 holds entrywise exactly.

V1 coefficient layout: x-component block then y-component block, each in
row-major (x-index major) tensor order.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp

from .linalg import KroneckerSolver
from .splines import DeRhamLine


@dataclass
class PatchMapping:
    """Axis-aligned affine map x = b + h * xref (per direction)."""

    h_x: float
    h_y: float
    b_x: float
    b_y: float


@dataclass
class Field:
    """Coefficient vector tagged with its slot in the complex."""

    space: "TensorDeRhamSpace"
    slot: int  # 0, 1 or 2
    coeffs: np.ndarray
    conforming: bool = False

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (self.space.dim(self.slot),):
            raise ValueError(
                f"slot V{self.slot} needs {self.space.dim(self.slot)} coeffs, "
                f"got {self.coeffs.shape}"
            )

    def copy(self) -> "Field":
        return Field(self.space, self.slot, self.coeffs.copy(), self.conforming)


def coeffs_of(u) -> np.ndarray:
    return u.coeffs if isinstance(u, Field) else np.asarray(u, dtype=np.float64)


class TensorDeRhamSpace:
    """The assembled 2D complex over two 1D lines (conforming if each line
    has a single patch, broken otherwise)."""

    def __init__(self, line_x: DeRhamLine, line_y: DeRhamLine):
        self.line_x = line_x
        self.line_y = line_y
        self.p = line_x.p
        if line_y.p != line_x.p:
            raise ValueError("mixed degrees between directions are not supported")
        self.periodic = (line_x.periodic, line_y.periodic)
        self.bounds = (line_x.interval, line_y.interval)

        nh1x, nl2x = line_x.h1.dim, line_x.l2.dim
        nh1y, nl2y = line_y.h1.dim, line_y.l2.dim
        self.n0 = nh1x * nh1y
        self.n1x = nh1x * nl2y
        self.n1y = nl2x * nh1y
        self.n1 = self.n1x + self.n1y
        self.n2 = nl2x * nl2y

        Dx, Dy = line_x.D, line_y.D
        Ih1x = sp.identity(nh1x, format="csr")
        Ih1y = sp.identity(nh1y, format="csr")
        Il2x = sp.identity(nl2x, format="csr")
        Il2y = sp.identity(nl2y, format="csr")

        self.Curl = sp.vstack(
            [sp.kron(Ih1x, Dy, format="csr"), -sp.kron(Dx, Ih1y, format="csr")],
            format="csr",
        )
        self.Div = sp.hstack(
            [sp.kron(Dx, Il2y, format="csr"), sp.kron(Il2x, Dy, format="csr")],
            format="csr",
        )

        self.M0 = sp.kron(line_x.M_h1, line_y.M_h1, format="csr")
        self.M1x = sp.kron(line_x.M_h1, line_y.M_l2, format="csr")
        self.M1y = sp.kron(line_x.M_l2, line_y.M_h1, format="csr")
        self.M1 = sp.block_diag([self.M1x, self.M1y], format="csr")
        self.M2 = sp.kron(line_x.M_l2, line_y.M_l2, format="csr")

        # mixed matrices: B1[m, j] = int L2_m (L1_j)_x, B2 the y-part
        self.B1 = sp.hstack(
            [sp.kron(line_x.B, line_y.M_l2, format="csr"),
             sp.csr_matrix((self.n2, self.n1y))],
            format="csr",
        )
        self.B2 = sp.hstack(
            [sp.csr_matrix((self.n2, self.n1x)),
             sp.kron(line_x.M_l2, line_y.B, format="csr")],
            format="csr",
        )

        self._solver0 = KroneckerSolver(
            [line_x.mass_factor("h1"), line_y.mass_factor("h1")]
        )
        self._solver1x = KroneckerSolver(
            [line_x.mass_factor("h1"), line_y.mass_factor("l2")]
        )
        self._solver1y = KroneckerSolver(
            [line_x.mass_factor("l2"), line_y.mass_factor("h1")]
        )
        self._solver2 = KroneckerSolver(
            [line_x.mass_factor("l2"), line_y.mass_factor("l2")]
        )

        # elevated tensor quadrature grid shared by all field evaluations
        self.qx, self.qy = line_x.eval_pts, line_y.eval_pts
        self.qw = np.multiply.outer(line_x.eval_w, line_y.eval_w)

    # --- bookkeeping -----------------------------------------------------
    def dim(self, slot: int) -> int:
        return {0: self.n0, 1: self.n1, 2: self.n2}[slot]

    def split_v1(self, u):
        u = np.asarray(u)
        return u[: self.n1x], u[self.n1x:]

    @property
    def area(self) -> float:
        (x0, x1), (y0, y1) = self.bounds
        return (x1 - x0) * (y1 - y0)

    def min_h(self) -> float:
        return min(self.line_x.h, self.line_y.h)

    # --- exact mass solves ------------------------------------------------
    def solve_M0(self, b):
        return self._solver0.solve(b)

    def solve_M1(self, b):
        bx, by = self.split_v1(b)
        return np.concatenate([self._solver1x.solve(bx), self._solver1y.solve(by)])

    def solve_M2(self, b):
        return self._solver2.solve(b)

    # --- evaluation on the elevated quadrature grid -----------------------
    def grid_eval_v0(self, c):
        C = np.asarray(c).reshape(self.line_x.h1.dim, self.line_y.h1.dim)
        return self.line_x.E_h1 @ C @ self.line_y.E_h1.T

    def grid_eval_v2(self, c):
        C = np.asarray(c).reshape(self.line_x.l2.dim, self.line_y.l2.dim)
        return self.line_x.E_l2 @ C @ self.line_y.E_l2.T

    def grid_eval_v1(self, u):
        ux, uy = self.split_v1(u)
        Cx = ux.reshape(self.line_x.h1.dim, self.line_y.l2.dim)
        Cy = uy.reshape(self.line_x.l2.dim, self.line_y.h1.dim)
        return (
            self.line_x.E_h1 @ Cx @ self.line_y.E_l2.T,
            self.line_x.E_l2 @ Cy @ self.line_y.E_h1.T,
        )

    # --- moments against basis functions on the same grid -----------------
    def grid_moments_v0(self, vals):
        return (self.line_x.E_h1.T @ (self.qw * vals) @ self.line_y.E_h1).ravel()

    def grid_moments_v2(self, vals):
        return (self.line_x.E_l2.T @ (self.qw * vals) @ self.line_y.E_l2).ravel()

    def grid_moments_v1(self, vals_x, vals_y):
        mx = self.line_x.E_h1.T @ (self.qw * vals_x) @ self.line_y.E_l2
        my = self.line_x.E_l2.T @ (self.qw * vals_y) @ self.line_y.E_h1
        return np.concatenate([mx.ravel(), my.ravel()])

    def quad_grid(self):
        """Meshgrid (ij) of the elevated quadrature points."""
        return np.meshgrid(self.qx, self.qy, indexing="ij")

    def constant_v1(self, cx: float, cy: float) -> np.ndarray:
        """Coefficients of a constant vector field (partition of unity)."""
        return np.concatenate(
            [np.full(self.n1x, float(cx)), np.full(self.n1y, float(cy))]
        )


class DeRhamPatch(TensorDeRhamSpace):
    """Single-patch complex; records its affine mapping parameters."""

    def __init__(self, line_x, line_y):
        super().__init__(line_x, line_y)
        (x0, x1), (y0, y1) = self.bounds
        self.mapping = PatchMapping(h_x=x1 - x0, h_y=y1 - y0, b_x=x0, b_y=y0)
        self.V0 = (line_x.h1, line_y.h1)
        self.V1x = (line_x.h1, line_y.l2)
        self.V1y = (line_x.l2, line_y.h1)
        self.V2 = (line_x.l2, line_y.l2)


def build_derham_patch(degree, n_cells, bounds=((0.0, 1.0), (0.0, 1.0)),
                       periodic=(False, False)) -> DeRhamPatch:
    nx, ny = (n_cells, n_cells) if np.isscalar(n_cells) else n_cells
    line_x = DeRhamLine(degree, 1, nx, bounds[0], periodic[0])
    line_y = DeRhamLine(degree, 1, ny, bounds[1], periodic[1])
    return DeRhamPatch(line_x, line_y)


def l2_project(space: TensorDeRhamSpace, slot: int, f) -> Field:
    """L2 projection of a callable f(x, y) onto the given slot.

    For slot 1 the callable must return the pair (u_x, u_y)."""
    X, Y = space.quad_grid()
    if slot == 1:
        fx, fy = f(X, Y)
        fx = np.broadcast_to(np.asarray(fx, dtype=np.float64), X.shape)
        fy = np.broadcast_to(np.asarray(fy, dtype=np.float64), X.shape)
        if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(fy))):
            raise ValueError("initial data is not finite at quadrature points")
        rhs = space.grid_moments_v1(fx, fy)
        return Field(space, 1, space.solve_M1(rhs))
    vals = np.broadcast_to(np.asarray(f(X, Y), dtype=np.float64), X.shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("data is not finite at quadrature points")
    if slot == 0:
        return Field(space, 0, space.solve_M0(space.grid_moments_v0(vals)))
    if slot == 2:
        return Field(space, 2, space.solve_M2(space.grid_moments_v2(vals)))
    raise ValueError(f"unknown slot {slot}")


def _pair_eval(Ex, Ey, C):
    # pointwise sum_ab Ex[i,a] C[a,b] Ey[i,b]
    return np.einsum("ib,ib->i", Ex @ C, Ey)


def eval_field(field: Field, xs, ys, grid: bool = True):
    """Evaluate a field at sample points.

    grid=True: xs, ys are 1D axes; returns values on the tensor grid with
    shape (len(xs), len(ys)) (scalar slots) or (..., 2) for V1.
    grid=False: xs, ys are matched coordinate lists.
    """
    space = field.space
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    ys = np.atleast_1d(np.asarray(ys, dtype=np.float64))
    lx, ly = space.line_x, space.line_y

    def colloc(line_space, pts):
        return line_space.collocation(pts)

    if field.slot == 0:
        spaces = [(lx.h1, ly.h1, field.coeffs)]
    elif field.slot == 2:
        spaces = [(lx.l2, ly.l2, field.coeffs)]
    else:
        ux, uy = space.split_v1(field.coeffs)
        spaces = [(lx.h1, ly.l2, ux), (lx.l2, ly.h1, uy)]

    out = []
    for sx, sy, c in spaces:
        C = np.asarray(c).reshape(sx.dim, sy.dim)
        Ex = colloc(sx, xs)
        Ey = colloc(sy, ys)
        if grid:
            out.append(Ex @ C @ Ey.T)
        else:
            if len(xs) != len(ys):
                raise ValueError("scattered evaluation needs matching x/y lists")
            out.append(_pair_eval(Ex.toarray(), Ey.toarray(), C))
    if field.slot == 1:
        return np.stack(out, axis=-1)
    return out[0]
