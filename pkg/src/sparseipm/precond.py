"""Block-diagonal preconditioners for the normal-equations and augmented
solver paths, plus dense spectral verification utilities."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .krylov import CholeskyFactor


@dataclass
class Preconditioner:
    """Apply-inverse contract with build metadata."""

    kind: str
    apply_inverse: Callable[[np.ndarray], np.ndarray]
    build_time: float = 0.0
    meta: dict = field(default_factory=dict)
    dense_assembler: Optional[Callable[[], np.ndarray]] = None

    def dense(self) -> np.ndarray:
        if self.dense_assembler is None:
            raise ValueError(f"{self.kind} preconditioner has no dense assembler")
        return self.dense_assembler()


def identity_preconditioner(n: int) -> Preconditioner:
    return Preconditioner(kind="identity", apply_inverse=lambda v: v,
                          dense_assembler=lambda: np.eye(n))


def build_fmri_normal_precond(g_diag: np.ndarray, A, split: int,
                              delta: float) -> Preconditioner:
    """Block-diagonal approximation of A G^-1 A' + delta I for fused-lasso LS.

    The first ``split`` rows (the dense data-coupling block) get a dense
    Cholesky factor; the remaining TV-structured block gets a sparse one.
    Rebuilt every interior point iteration since G changes.
    """
    t0 = time.perf_counter()
    g_diag = np.asarray(g_diag, dtype=float)
    if np.any(g_diag <= 0):
        raise ValueError("diagonal weights must be positive")
    A = sp.csr_matrix(A)
    mrows = A.shape[0]
    if split > mrows:
        raise ValueError("split exceeds row count")
    Ginv = sp.diags(1.0 / g_diag)
    A1 = A[:split]
    A2 = A[split:]
    M1 = (A1 @ Ginv @ A1.T).toarray() + delta * np.eye(split)
    M3 = (A2 @ Ginv @ A2.T + delta * sp.eye(mrows - split)).tocsc()
    f1 = CholeskyFactor(M1)
    f3 = CholeskyFactor(M3)

    def apply_inverse(r):
        out = np.empty_like(r)
        out[:split] = f1.solve(r[:split])
        out[split:] = f3.solve(r[split:])
        return out

    def dense_assembler():
        return scipy.linalg.block_diag(M1, M3.toarray())

    return Preconditioner(
        kind="fmri-block-normal", apply_inverse=apply_inverse,
        build_time=time.perf_counter() - t0,
        meta={"factors": ("dense-cholesky", "sparse-cholesky"), "split": split},
        dense_assembler=dense_assembler,
    )


def build_aug_block_diag_precond(htilde: np.ndarray, A, delta: float) -> Preconditioner:
    """blockdiag(H~, A H~^-1 A' + delta I) for the augmented (saddle) system.

    ``htilde`` is the diagonal approximation of the full (1,1) block, i.e. it
    already includes the complementarity and proximal diagonals.
    """
    t0 = time.perf_counter()
    htilde = np.asarray(htilde, dtype=float)
    if np.any(htilde <= 0):
        raise ValueError("diagonal approximation must be strictly positive")
    A = sp.csr_matrix(A)
    mrows = A.shape[0]
    S = (A @ sp.diags(1.0 / htilde) @ A.T + delta * sp.eye(mrows)).tocsc()
    fS = CholeskyFactor(S)
    na = htilde.size

    def apply_inverse(r):
        out = np.empty_like(r)
        out[:na] = r[:na] / htilde
        out[na:] = fS.solve(r[na:])
        return out

    def dense_assembler():
        return scipy.linalg.block_diag(np.diag(htilde), S.toarray())

    return Preconditioner(
        kind="aug-block-diagonal", apply_inverse=apply_inverse,
        build_time=time.perf_counter() - t0,
        meta={"factors": ("diagonal", "sparse-cholesky")},
        dense_assembler=dense_assembler,
    )


# ---------------------------------------------------------------------------
# Spectral verification (test-scale dense eigendecompositions)


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    unit_count: int
    chi: Optional[float] = None
    alpha_h: Optional[float] = None
    beta_h: Optional[float] = None
    kappa_h: Optional[float] = None

    def to_dict(self):
        d = {
            "eigenvalues": list(map(float, self.eigenvalues)),
            "unit_count": int(self.unit_count),
        }
        for key in ("chi", "alpha_h", "beta_h", "kappa_h"):
            val = getattr(self, key)
            if val is not None:
                d[key] = float(val)
        return d


def spectral_check(M, P, unit_tol: float = 1e-8, budget: int = 2000) -> SpectralReport:
    """Dense generalized eigenvalues of (M, P) with a unit-eigenvalue census."""
    M = np.asarray(M if not sp.issparse(M) else M.toarray(), dtype=float)
    P = P.dense() if isinstance(P, Preconditioner) else P
    P = np.asarray(P if not sp.issparse(P) else P.toarray(), dtype=float)
    if M.shape[0] > budget:
        raise ValueError(f"dimension {M.shape[0]} over the dense budget {budget}")
    eigs = scipy.linalg.eigh(M, P, eigvals_only=True)
    eigs = np.sort(eigs)
    unit = int(np.count_nonzero(np.abs(eigs - 1.0) <= unit_tol))
    return SpectralReport(eigenvalues=eigs, unit_count=unit)


def normal_equations_matrix(g_diag, A, delta: float) -> np.ndarray:
    A = sp.csr_matrix(A)
    return (A @ sp.diags(1.0 / np.asarray(g_diag)) @ A.T).toarray() \
        + delta * np.eye(A.shape[0])


def fmri_spectral_report(g_diag, A, split: int, rho: float, delta: float) -> SpectralReport:
    """Eigenvalues of the block-preconditioned normal matrix plus the lower
    bound chi = delta*rho / (sigma_max(A)^2 + rho*delta)."""
    M = normal_equations_matrix(g_diag, A, delta)
    P = build_fmri_normal_precond(g_diag, A, split, delta)
    rep = spectral_check(M, P)
    smax = scipy.linalg.svdvals(sp.csr_matrix(A).toarray())[0]
    rep.chi = delta * rho / (smax ** 2 + rho * delta)
    return rep


def augmented_matrix(H, A, delta: float) -> np.ndarray:
    H = np.asarray(H if not sp.issparse(H) else H.toarray(), dtype=float)
    A = np.asarray(A if not sp.issparse(A) else A.toarray(), dtype=float)
    mrows = A.shape[0]
    return np.block([
        [-H, A.T],
        [A, delta * np.eye(mrows)],
    ])


def aug_spectral_report(H, A, htilde, delta: float) -> SpectralReport:
    """Eigenvalues of the block-preconditioned saddle matrix together with the
    extremal eigenvalues (alpha_H, beta_H) of H~^-1/2 H H~^-1/2."""
    H = np.asarray(H if not sp.issparse(H) else H.toarray(), dtype=float)
    htilde = np.asarray(htilde, dtype=float)
    M = augmented_matrix(H, A, delta)
    P = build_aug_block_diag_precond(htilde, A, delta)
    rep = spectral_check(M, P)
    scale = 1.0 / np.sqrt(htilde)
    Hhat = scale[:, None] * H * scale[None, :]
    hev = scipy.linalg.eigh(Hhat, eigvals_only=True)
    rep.alpha_h = float(hev[0])
    rep.beta_h = float(hev[-1])
    rep.kappa_h = rep.beta_h / rep.alpha_h
    return rep
