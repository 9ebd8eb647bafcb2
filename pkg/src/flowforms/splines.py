"""Univariate B-spline spaces and the 1D building blocks of the 2D complex.

The 2D discrete de Rham sequence used by the solver factorizes into two
1D "lines": per direction we carry a degree-(p+1) space (clamped or
periodic, possibly broken across patches) together with its degree-p
derivative space, the derivative incidence matrix between them, and the
1D mass/mixed matrices. All global 2D operators are Kronecker products
of these 1D objects.

Conventions: uniform breakpoints; clamped (open) knot vectors on bounded
directions, periodic wrap otherwise; broken directions use per-patch
clamped spaces concatenated patch by patch.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import BSpline

from .linalg import gauss_legendre, sym_factor


class SplineSpace1D:
    """One univariate B-spline space on uniform breakpoints."""

    def __init__(self, degree: int, n_cells: int, interval, periodic: bool):
        a, b = float(interval[0]), float(interval[1])
        if degree < 0:
            raise ValueError(f"degree must be >= 0, got {degree}")
        if n_cells < 1:
            raise ValueError(f"n_cells must be >= 1, got {n_cells}")
        if not b > a:
            raise ValueError(f"empty interval [{a}, {b}]")
        if periodic and n_cells <= degree:
            raise ValueError(
                f"periodic space needs n_cells > degree ({n_cells} <= {degree})"
            )
        self.degree = degree
        self.n_cells = n_cells
        self.periodic = periodic
        self.breakpoints = np.linspace(a, b, n_cells + 1)
        self.h = (b - a) / n_cells
        if periodic:
            # uniform knots extended degree cells past both ends; basis
            # functions are identified modulo n_cells
            self.knots = a + self.h * np.arange(-degree, n_cells + degree + 1)
            self.dim = n_cells
        else:
            interior = self.breakpoints[1:-1]
            self.knots = np.concatenate(
                [np.full(degree + 1, a), interior, np.full(degree + 1, b)]
            )
            self.dim = n_cells + degree

    @property
    def interval(self):
        return self.breakpoints[0], self.breakpoints[-1]

    def __repr__(self):
        kind = "periodic" if self.periodic else "clamped"
        return f"SplineSpace1D(degree={self.degree}, n_cells={self.n_cells}, {kind})"


def build_space_1d(degree, n_cells, interval=(0.0, 1.0), periodic=False) -> SplineSpace1D:
    return SplineSpace1D(degree, n_cells, interval, periodic)


def collocation_matrix(space: SplineSpace1D, x) -> sp.csr_matrix:
    """Rows of basis values at the points x. Shape (len(x), space.dim)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    a, b = space.interval
    if space.periodic:
        xf = a + np.mod(x - a, b - a)
        E = BSpline.design_matrix(xf, space.knots, space.degree)
        n_ext = E.shape[1]
        fold = sp.csr_matrix(
            (np.ones(n_ext), (np.arange(n_ext), np.arange(n_ext) % space.dim)),
            shape=(n_ext, space.dim),
        )
        return (E @ fold).tocsr()
    if np.any(x < a - 1e-12 * (b - a)) or np.any(x > b + 1e-12 * (b - a)):
        raise ValueError("evaluation point outside the space interval")
    return BSpline.design_matrix(np.clip(x, a, b), space.knots, space.degree).tocsr()


def derivative_space(space: SplineSpace1D) -> SplineSpace1D:
    if space.degree < 1:
        raise ValueError("derivative of a degree-0 space is not representable")
    return SplineSpace1D(space.degree - 1, space.n_cells, space.interval, space.periodic)


def derivative_incidence_1d(space: SplineSpace1D) -> sp.csr_matrix:
    """Matrix D with: spline'(coeffs c) = spline of the degree-(p-1) space
    with coefficients D c. Standard B-spline derivative formula."""
    d = space.degree
    if d < 1:
        raise ValueError("derivative incidence needs degree >= 1")
    if space.periodic:
        n = space.dim
        rows = np.repeat(np.arange(n), 2)
        cols = np.empty(2 * n, dtype=np.int64)
        vals = np.empty(2 * n)
        cols[0::2] = np.arange(n)
        vals[0::2] = -1.0 / space.h
        cols[1::2] = (np.arange(n) + 1) % n
        vals[1::2] = 1.0 / space.h
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    t = space.knots
    n_out = space.dim - 1
    span = t[np.arange(n_out) + d + 1] - t[np.arange(n_out) + 1]
    rows = np.repeat(np.arange(n_out), 2)
    cols = np.empty(2 * n_out, dtype=np.int64)
    vals = np.empty(2 * n_out)
    cols[0::2] = np.arange(n_out)
    vals[0::2] = -d / span
    cols[1::2] = np.arange(n_out) + 1
    vals[1::2] = d / span
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_out, space.dim))


def cell_quadrature(breakpoints, n_per_cell):
    """Physical Gauss points and weights, concatenated cell by cell."""
    rule = gauss_legendre(n_per_cell)
    lo = np.asarray(breakpoints[:-1])
    hi = np.asarray(breakpoints[1:])
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = (mid[:, None] + half[:, None] * rule.points[None, :]).ravel()
    w = (half[:, None] * rule.weights[None, :]).ravel()
    return pts, w


def quad_rule_assembly(p: int) -> int:
    # exact for products of two degree-(p+1) splines
    return p + 3


def quad_rule_eval(p: int) -> int:
    # elevated rule for trilinear advection integrands and field moments
    return int(np.ceil((3 * (p + 1) + 2) / 2)) + 1


class Broken1D:
    """A scalar 1D space over n_patches equal patches, discontinuous at
    patch interfaces (per-patch clamped bases). A single patch degenerates
    to one conforming clamped or periodic space."""

    def __init__(self, degree, n_patches, cells_per_patch, interval, periodic):
        if n_patches < 1:
            raise ValueError("need at least one patch")
        a, b = float(interval[0]), float(interval[1])
        self.degree = degree
        self.n_patches = n_patches
        self.cells_per_patch = cells_per_patch
        self.periodic = periodic
        self.interval = (a, b)
        self.patch_bounds = np.linspace(a, b, n_patches + 1)
        if n_patches == 1:
            self.spaces = [SplineSpace1D(degree, cells_per_patch, (a, b), periodic)]
        else:
            self.spaces = [
                SplineSpace1D(
                    degree, cells_per_patch,
                    (self.patch_bounds[k], self.patch_bounds[k + 1]), False,
                )
                for k in range(n_patches)
            ]
        dims = [s.dim for s in self.spaces]
        self.offsets = np.concatenate([[0], np.cumsum(dims)])
        self.dim = int(self.offsets[-1])
        self.h = self.spaces[0].h
        self.breakpoints = np.unique(
            np.concatenate([s.breakpoints for s in self.spaces])
        )

    @property
    def broken(self) -> bool:
        return self.n_patches > 1

    def interfaces(self):
        """(last DOF of left patch, first DOF of right patch) per interior
        interface; includes the wrap pair when periodic and broken."""
        pairs = [
            (int(self.offsets[k + 1] - 1), int(self.offsets[k + 1]))
            for k in range(self.n_patches - 1)
        ]
        if self.periodic and self.broken:
            pairs.append((self.dim - 1, 0))
        return pairs

    def patch_of(self, x):
        idx = np.searchsorted(self.patch_bounds, x, side="right") - 1
        return np.clip(idx, 0, self.n_patches - 1)

    def collocation(self, x) -> sp.csr_matrix:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if not self.broken:
            return collocation_matrix(self.spaces[0], x)
        # interface points take the right-side patch
        patch = self.patch_of(x)
        blocks = []
        for k in range(self.n_patches):
            sel = np.nonzero(patch == k)[0]
            if sel.size == 0:
                continue
            Ek = collocation_matrix(self.spaces[k], x[sel])
            rows = np.repeat(sel, np.diff(Ek.indptr))
            cols = Ek.indices + self.offsets[k]
            blocks.append((rows, cols, Ek.data))
        rows = np.concatenate([blk[0] for blk in blocks])
        cols = np.concatenate([blk[1] for blk in blocks])
        data = np.concatenate([blk[2] for blk in blocks])
        return sp.csr_matrix((data, (rows, cols)), shape=(len(x), self.dim))

    def derivative_matrix(self) -> sp.csr_matrix:
        return sp.block_diag(
            [derivative_incidence_1d(s) for s in self.spaces], format="csr"
        )

    def quadrature(self, n_per_cell):
        pts, w = [], []
        for s in self.spaces:
            pk, wk = cell_quadrature(s.breakpoints, n_per_cell)
            pts.append(pk)
            w.append(wk)
        return np.concatenate(pts), np.concatenate(w)

    # boundary-trace bookkeeping (clamped ends only)
    def trace_index(self, side: str) -> int:
        if self.periodic:
            raise ValueError("periodic direction has no boundary")
        return 0 if side == "lo" else self.dim - 1


def weighted_gram(Ea: sp.csr_matrix, w, Eb: sp.csr_matrix) -> sp.csr_matrix:
    """Ea^T diag(w) Eb, all sparse."""
    return (Ea.multiply(np.asarray(w)[:, None]).T @ Eb).tocsr()


class DeRhamLine:
    """The 1D de Rham pair of one direction: degree-(p+1) space, degree-p
    space, the derivative incidence between them, mass/mixed matrices, and
    cached quadrature/evaluation grids.

    Attributes
    ----------
    h1, l2 : Broken1D
        The degree-(p+1) and degree-p spaces.
    D : csr_matrix
        Derivative incidence, shape (l2.dim, h1.dim).
    M_h1, M_l2, B : csr_matrix
        Mass matrices and the mixed matrix B[a, c] = int l2_a * h1_c.
    """

    def __init__(self, p, n_patches, cells_per_patch, interval, periodic):
        if p < 0:
            raise ValueError("scheme degree must be >= 0")
        self.p = p
        self.n_patches = n_patches
        self.cells_per_patch = cells_per_patch
        self.interval = (float(interval[0]), float(interval[1]))
        self.periodic = periodic
        self.h1 = Broken1D(p + 1, n_patches, cells_per_patch, interval, periodic)
        self.l2 = Broken1D(p, n_patches, cells_per_patch, interval, periodic)
        self.D = self.h1.derivative_matrix()
        self.h = self.h1.h

        pts, w = self.h1.quadrature(quad_rule_assembly(p))
        E1 = self.h1.collocation(pts)
        E0 = self.l2.collocation(pts)
        self.M_h1 = weighted_gram(E1, w, E1)
        self.M_l2 = weighted_gram(E0, w, E0)
        self.B = weighted_gram(E0, w, E1)

        # elevated grid shared by all field-evaluation integrals
        self.eval_pts, self.eval_w = self.h1.quadrature(quad_rule_eval(p))
        self.E_h1 = self.h1.collocation(self.eval_pts).toarray()
        self.E_l2 = self.l2.collocation(self.eval_pts).toarray()

        self._fact = {}

    def mass_factor(self, which: str):
        """Cached factorization of M_h1 ('h1') or M_l2 ('l2')."""
        if which not in self._fact:
            M = self.M_h1 if which == "h1" else self.M_l2
            self._fact[which] = sym_factor(M)
        return self._fact[which]
