"""Cell-centered rectangular meshes and their no-flux discrete calculus.

The domain is a product of intervals split into equal cells; fields carry one
value per cell center. Ghost cells mirror the adjacent interior value, which
encodes the homogeneous Neumann (zero normal flux) boundary condition and
makes three identities exact in floating point:

* the gradient of a constant field vanishes,
* the Laplacian telescopes, so ``integrate(laplacian(f)) == 0``,
* midpoint quadrature is exact for cellwise-constant integrands.

Both 1D and 2D grids are supported; 1D grids exist mainly as fast oracles for
the time-stepping and certification machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft


class GridError(ValueError):
    """Invalid mesh specification."""


class NonFiniteFieldError(ValueError):
    """A field value is NaN or infinite."""


class LinearSolverError(RuntimeError):
    """The iterative diffusion solve failed to reach its tolerance."""


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered mesh on an interval (1D) or rectangle (2D).

    ``cells`` and ``lengths`` have one entry per axis; the spacing along axis
    ``a`` is ``lengths[a] / cells[a]``.
    """

    cells: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        cells = tuple(int(n) for n in np.atleast_1d(self.cells))
        lengths = tuple(float(l) for l in np.atleast_1d(self.lengths))
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "lengths", lengths)
        if len(cells) not in (1, 2):
            raise GridError(f"grid must be 1D or 2D, got {len(cells)} axes")
        if len(lengths) != len(cells):
            raise GridError("cells and lengths need one entry per axis")
        if any(n < 1 for n in cells):
            raise GridError(f"cells per axis must be positive, got {cells}")
        if any(l <= 0 for l in lengths):
            raise GridError(f"axis lengths must be positive, got {lengths}")

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(l / n for l, n in zip(self.lengths, self.cells))

    @property
    def min_spacing(self) -> float:
        return min(self.spacing)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def measure(self) -> float:
        """Measure of the domain (length or area)."""
        return float(np.prod(self.lengths))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    def centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def meshes(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinate arrays, each of shape ``grid.shape``."""
        return tuple(np.meshgrid(*(self.centers(a) for a in range(self.dim)),
                                 indexing="ij"))

    def field(self, values) -> "Field":
        return Field(self, np.asarray(values, dtype=float))

    def constant_field(self, value: float) -> "Field":
        return Field(self, np.full(self.shape, float(value)))

    def field_from_function(self, fn) -> "Field":
        return Field(self, np.asarray(fn(*self.meshes()), dtype=float))


@dataclass(frozen=True)
class Field:
    """One real value per cell of a :class:`Grid`; immutable after creation."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {values.shape} does not match grid {self.grid.shape}")
        _require_finite(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


def _require_finite(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        idx = np.argwhere(~np.isfinite(np.atleast_1d(values)))[0]
        raise NonFiniteFieldError(
            f"non-finite value at cell {tuple(int(i) for i in idx)}")


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def integrate_values(grid: Grid, values: np.ndarray) -> float:
    """Midpoint quadrature: sum of cell values times the cell volume."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError(f"shape {values.shape} does not match grid {grid.shape}")
    _require_finite(values)
    return float(values.sum()) * grid.cell_volume


def integrate(f: Field) -> float:
    return integrate_values(f.grid, f.values)


def lp_norm_values(grid: Grid, values: np.ndarray, p: float) -> float:
    """L^p norm over the domain, fractional p included.

    Powers are taken as exp(p*log|f|) with the convention 0**p := 0.
    """
    p = float(p)
    if p < 1:
        raise ValueError(f"lp_norm requires p >= 1, got {p}")
    values = np.asarray(values, dtype=float)
    absv = np.abs(values)
    powed = np.zeros_like(absv)
    pos = absv > 0
    powed[pos] = np.exp(p * np.log(absv[pos]))
    return integrate_values(grid, powed) ** (1.0 / p)


def lp_norm(f: Field, p: float) -> float:
    return lp_norm_values(f.grid, f.values, p)


# ---------------------------------------------------------------------------
# discrete calculus
# ---------------------------------------------------------------------------

def _axis_slice(ndim: int, axis: int, sl: slice) -> tuple:
    out = [slice(None)] * ndim
    out[axis] = sl
    return tuple(out)


def face_gradient_values(grid: Grid, values: np.ndarray) -> tuple[np.ndarray, ...]:
    """Per-axis normal derivative on cell faces.

    Along axis ``a`` the returned array has ``cells[a] + 1`` entries in that
    axis: interior faces carry ``(f[i+1] - f[i]) / h`` and the two boundary
    faces are zero (mirrored ghosts, i.e. no flux). A single-cell axis has
    only boundary faces, hence a zero gradient.
    """
    values = np.asarray(values, dtype=float)
    out = []
    for a in range(grid.dim):
        n = grid.cells[a]
        h = grid.spacing[a]
        shape = list(values.shape)
        shape[a] = n + 1
        g = np.zeros(shape)
        if n >= 2:
            hi = values[_axis_slice(grid.dim, a, slice(1, None))]
            lo = values[_axis_slice(grid.dim, a, slice(None, -1))]
            g[_axis_slice(grid.dim, a, slice(1, n))] = (hi - lo) / h
        out.append(g)
    return tuple(out)


def gradient_values(grid: Grid, values: np.ndarray) -> tuple[np.ndarray, ...]:
    """Cell-centered gradient: average of the two adjacent face values.

    Interior cells see the usual central difference; boundary cells see the
    one-sided half difference implied by the mirrored ghost.
    """
    comps = []
    for a, g in enumerate(face_gradient_values(grid, values)):
        lo = g[_axis_slice(grid.dim, a, slice(None, -1))]
        hi = g[_axis_slice(grid.dim, a, slice(1, None))]
        comps.append(0.5 * (lo + hi))
    return tuple(comps)


def gradient(f: Field) -> tuple[Field, ...]:
    return tuple(Field(f.grid, c) for c in gradient_values(f.grid, f.values))


def gradient_sq_values(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Pointwise squared magnitude of the cell-centered gradient."""
    comps = gradient_values(grid, values)
    out = comps[0] ** 2
    for c in comps[1:]:
        out = out + c ** 2
    return out


def laplacian_values(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Second differences with mirrored ghosts, summed over axes.

    Telescoping of the flux differences makes integrate(laplacian(f)) vanish
    identically; a single-cell axis contributes nothing.
    """
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    for a in range(grid.dim):
        if grid.cells[a] < 2:
            continue
        h2 = grid.spacing[a] ** 2
        padded = np.pad(values, _pad_width(grid.dim, a), mode="edge")
        left = padded[_axis_slice(grid.dim, a, slice(None, -2))]
        right = padded[_axis_slice(grid.dim, a, slice(2, None))]
        out += (left - 2.0 * values + right) / h2
    return out


def _pad_width(ndim: int, axis: int) -> list[tuple[int, int]]:
    pw = [(0, 0)] * ndim
    pw[axis] = (1, 1)
    return pw


def laplacian(f: Field) -> Field:
    return Field(f.grid, laplacian_values(f.grid, f.values))


# ---------------------------------------------------------------------------
# backward-Euler diffusion solve: (I - tau*Laplacian) x = b
# ---------------------------------------------------------------------------

def _neumann_eigenvalues(grid: Grid) -> np.ndarray:
    """Eigenvalues of -Laplacian in the DCT-II basis, summed across axes.

    The mirrored-ghost stencil satisfies the half-sample symmetry of the
    type-II cosine transform exactly, including its boundary rows, so the
    spectral solve below inverts the very same matrix the stencil defines.
    """
    per_axis = []
    for a in range(grid.dim):
        n = grid.cells[a]
        h = grid.spacing[a]
        k = np.arange(n)
        per_axis.append((2.0 - 2.0 * np.cos(np.pi * k / n)) / h ** 2)
    if grid.dim == 1:
        return per_axis[0]
    return per_axis[0][:, None] + per_axis[1][None, :]


def solve_diffusion(grid: Grid, rhs: np.ndarray, tau: float, *,
                    method: str = "spectral", tol: float = 1e-12,
                    max_iter: int = 2000) -> np.ndarray:
    """Solve ``(I - tau*Laplacian) x = rhs`` with the mirrored-ghost stencil.

    ``method="spectral"`` diagonalizes the stencil with a cosine transform and
    is exact to roundoff (the zero mode is untouched, so the solve conserves
    mass bit-for-bit up to FFT rounding). ``method="cg"`` runs matrix-free
    conjugate gradients to relative tolerance ``tol``.
    """
    rhs = np.asarray(rhs, dtype=float)
    if tau < 0:
        raise ValueError(f"diffusion pseudo-time must be >= 0, got {tau}")
    if tau == 0.0:
        return rhs.copy()
    if method == "spectral":
        lam = _neumann_eigenvalues(grid)
        hat = scipy.fft.dctn(rhs, type=2, norm="ortho")
        hat /= 1.0 + tau * lam
        return scipy.fft.idctn(hat, type=2, norm="ortho")
    if method == "cg":
        return _cg_diffusion(grid, rhs, tau, tol, max_iter)
    raise ValueError(f"unknown diffusion solver {method!r}")


def _cg_diffusion(grid: Grid, rhs: np.ndarray, tau: float,
                  tol: float, max_iter: int) -> np.ndarray:
    def apply_a(x):
        return x - tau * laplacian_values(grid, x)

    target = tol * max(1.0, float(np.linalg.norm(rhs.ravel())))
    x = rhs.copy()
    r = rhs - apply_a(x)
    res = float(np.linalg.norm(r.ravel()))
    if res <= target:
        return x
    p = r.copy()
    rr = res ** 2
    for it in range(1, max_iter + 1):
        ap = apply_a(p)
        alpha = rr / float(np.vdot(p.ravel(), ap.ravel()))
        x = x + alpha * p
        r = r - alpha * ap
        rr_new = float(np.vdot(r.ravel(), r.ravel()))
        if np.sqrt(rr_new) <= target:
            return x
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise LinearSolverError(
        f"diffusion CG did not reach tolerance {tol:g} after {max_iter} "
        f"iterations (residual {np.sqrt(rr):.3e}, target {target:.3e})")


def restrict_values(fine: Grid, coarse: Grid, values: np.ndarray) -> np.ndarray:
    """Average fine cells onto a coarser grid with the same domain.

    Requires each axis of the fine grid to be an integer multiple of the
    coarse one; used by refinement studies to compare levels in L^1.
    """
    if fine.lengths != coarse.lengths:
        raise GridError("restriction requires matching domains")
    factors = []
    for nf, nc in zip(fine.cells, coarse.cells):
        if nf % nc != 0:
            raise GridError(f"fine cells {nf} not a multiple of coarse {nc}")
        factors.append(nf // nc)
    values = np.asarray(values, dtype=float)
    if fine.dim == 1:
        return values.reshape(coarse.cells[0], factors[0]).mean(axis=1)
    return values.reshape(coarse.cells[0], factors[0],
                          coarse.cells[1], factors[1]).mean(axis=(1, 3))
