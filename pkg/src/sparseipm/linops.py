"""Linear operators: explicit matrices, finite differences, FFT-applied convolutions.

All operators expose ``apply`` / ``apply_transpose`` and are immutable after
construction, so they can be shared freely between solver invocations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp


class LinearOperator:
    """Dimensioned matrix-vector / transpose-vector application contract."""

    kind = "composite"

    def __init__(self, rows: int, cols: int):
        self.rows = int(rows)
        self.cols = int(cols)

    @property
    def shape(self):
        return (self.rows, self.cols)

    def apply(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_transpose(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dense(self) -> np.ndarray:
        """Assemble the operator densely (test-scale only)."""
        eye = np.eye(self.cols)
        return np.column_stack([self.apply(eye[:, j]) for j in range(self.cols)])


class MatrixOperator(LinearOperator):
    """Operator backed by an explicit dense or sparse matrix."""

    def __init__(self, matrix, kind: str | None = None):
        if sp.issparse(matrix):
            matrix = matrix.tocsr()
            self.kind = kind or "sparse-triplet"
        else:
            matrix = np.asarray(matrix, dtype=float)
            self.kind = kind or "dense"
        super().__init__(matrix.shape[0], matrix.shape[1])
        self.matrix = matrix

    def apply(self, v):
        return self.matrix @ np.asarray(v, dtype=float)

    def apply_transpose(self, u):
        return self.matrix.T @ np.asarray(u, dtype=float)

    def dense(self):
        if sp.issparse(self.matrix):
            return self.matrix.toarray()
        return np.array(self.matrix)


def _chain_difference(q: int) -> sp.csr_matrix:
    """(q-1) x q forward-difference matrix [-1, 1] on a 1d chain."""
    if q < 2:
        raise ValueError(f"chain length must be >= 2, got {q}")
    data = np.repeat([[-1.0, 1.0]], q - 1, axis=0).ravel()
    rows = np.repeat(np.arange(q - 1), 2)
    cols = np.column_stack([np.arange(q - 1), np.arange(1, q)]).ravel()
    return sp.csr_matrix((data, (rows, cols)), shape=(q - 1, q))


def make_difference_operator(num_periods: int, num_assets: int) -> MatrixOperator:
    """Fused-lasso difference operator on per-period asset weights.

    Row (j-1)*s + i computes w_{j+1}^i - w_j^i for a vector stacked as
    [w_1; ...; w_m] with each w_j of length s.
    """
    if num_periods < 2:
        raise ValueError(f"need at least 2 periods, got {num_periods}")
    if num_assets < 1:
        raise ValueError(f"need at least 1 asset, got {num_assets}")
    L = sp.kron(_chain_difference(num_periods), sp.eye(num_assets), format="csr")
    return MatrixOperator(L, kind="stacked-difference")


def make_tv_operator(grid) -> MatrixOperator:
    """Stacked forward-difference (anisotropic TV) operator on a 1d/2d/3d grid.

    Difference rows that would cross the boundary are dropped, so a grid with
    shape (q1, ..., qd) yields sum_i (q_i - 1) * prod_{j != i} q_j rows.
    Vectors are C-order flattenings of the grid.
    """
    grid = tuple(int(q) for q in np.atleast_1d(grid))
    if any(q < 2 for q in grid):
        raise ValueError(f"every grid dimension must be >= 2, got {grid}")
    blocks = []
    for axis, q in enumerate(grid):
        left = sp.eye(int(np.prod(grid[:axis], dtype=int)))
        right = sp.eye(int(np.prod(grid[axis + 1:], dtype=int)))
        blocks.append(sp.kron(sp.kron(left, _chain_difference(q)), right))
    L = sp.vstack(blocks, format="csr")
    return MatrixOperator(L, kind="stacked-difference")


@dataclass(frozen=True)
class BlurKernel:
    """Normalized point-spread function on an (n1, n2) periodic pixel grid."""

    family: str
    grid: tuple
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in ("gaussian", "motion", "out-of-focus", "identity"):
            raise ValueError(f"unknown blur family {self.family!r}")

    def psf(self) -> np.ndarray:
        """PSF embedded in the full grid with its center wrapped to pixel (0, 0)."""
        n1, n2 = self.grid
        small = self._small_psf()
        k1, k2 = small.shape
        c1, c2 = k1 // 2, k2 // 2
        out = np.zeros((n1, n2))
        for i in range(k1):
            for j in range(k2):
                out[(i - c1) % n1, (j - c2) % n2] += small[i, j]
        return out

    def _small_psf(self) -> np.ndarray:
        if self.family == "identity":
            return np.ones((1, 1))
        if self.family == "gaussian":
            sigma = float(self.parameters["sigma"])
            if sigma <= 0:
                raise ValueError("sigma must be positive")
            r = max(1, int(np.ceil(4.0 * sigma)))
            ax = np.arange(-r, r + 1)
            g = np.exp(-0.5 * (ax / sigma) ** 2)
            k = np.outer(g, g)
        elif self.family == "motion":
            length = float(self.parameters["length"])
            angle = np.deg2rad(float(self.parameters.get("angle", 0.0)))
            if length < 1:
                raise ValueError("motion length must be >= 1 pixel")
            r = int(np.ceil(length / 2)) + 1
            size = 2 * r + 1
            k = np.zeros((size, size))
            nsamp = max(2, int(np.ceil(length * 32)))
            ts = np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, nsamp)
            # anti-aliased deposit of the line segment via bilinear weights
            for t in ts:
                yy = r + t * np.sin(angle)
                xx = r + t * np.cos(angle)
                i0, j0 = int(np.floor(yy)), int(np.floor(xx))
                fy, fx = yy - i0, xx - j0
                k[i0, j0] += (1 - fy) * (1 - fx)
                k[i0 + 1, j0] += fy * (1 - fx)
                k[i0, j0 + 1] += (1 - fy) * fx
                k[i0 + 1, j0 + 1] += fy * fx
        else:  # out-of-focus
            radius = float(self.parameters["radius"])
            if radius <= 0:
                raise ValueError("radius must be positive")
            r = int(np.ceil(radius)) + 1
            ax = np.arange(-r, r + 1)
            dist = np.hypot(*np.meshgrid(ax, ax, indexing="ij"))
            k = np.clip(radius + 0.5 - dist, 0.0, 1.0)
        if k.sum() <= 0:
            raise ValueError("degenerate kernel (all-zero weights)")
        return k / k.sum()


class BccbOperator(LinearOperator):
    """Block-circulant-with-circulant-blocks convolution, applied via the 2d FFT.

    Only the kernel eigenvalue array (the 2d FFT of the PSF) is stored; apply
    and apply_transpose are a forward FFT, a spectral multiply (conjugated for
    the transpose) and an inverse FFT, discarding the imaginary residue.
    """

    kind = "bccb-convolution"

    def __init__(self, kernel: BlurKernel):
        n1, n2 = kernel.grid
        super().__init__(n1 * n2, n1 * n2)
        self.grid = (n1, n2)
        self.kernel = kernel
        self.eigenvalues = np.fft.fft2(kernel.psf())

    def _spectral_apply(self, v, eigs):
        img = np.asarray(v, dtype=float).reshape(self.grid)
        return np.real(np.fft.ifft2(np.fft.fft2(img) * eigs)).ravel()

    def apply(self, v):
        return self._spectral_apply(v, self.eigenvalues)

    def apply_transpose(self, u):
        return self._spectral_apply(u, np.conj(self.eigenvalues))

    def squared_kernel_operator(self) -> "BccbOperator":
        """Operator whose kernel weights are the element-wise squared PSF.

        Its transpose applied to u gives sum_i u_i * d_ij^2, i.e. the exact
        diagonal of D^T diag(u) D; used for diagonal Hessian approximations.
        """
        out = object.__new__(BccbOperator)
        LinearOperator.__init__(out, self.rows, self.cols)
        out.grid = self.grid
        out.kernel = self.kernel
        out.eigenvalues = np.fft.fft2(np.real(
            np.fft.ifft2(self.eigenvalues)) ** 2)
        return out


def make_bccb_operator(kernel: BlurKernel) -> BccbOperator:
    psf = kernel.psf()
    if np.any(psf < -1e-15):
        raise ValueError("kernel weights must be non-negative")
    if abs(psf.sum() - 1.0) > 1e-10:
        raise ValueError("kernel weights must sum to 1")
    return BccbOperator(kernel)


def save_operator(op: MatrixOperator, path) -> None:
    """Write an explicit sparse operator in Matrix Market coordinate format."""
    mat = op.matrix if isinstance(op, MatrixOperator) else op
    scipy.io.mmwrite(str(path), sp.coo_matrix(mat))


def load_operator(path) -> MatrixOperator:
    return MatrixOperator(sp.csr_matrix(scipy.io.mmread(str(path))))
