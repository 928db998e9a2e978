"""Evaluation metrics: portfolio ratios, cross-validated classification
scores, image-quality scores, and the solution-thresholding rule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import convolve


class UndefinedMetricError(ValueError):
    """Metric denominator degenerates (e.g. empty optimal portfolio)."""


@dataclass
class ScoreSet:
    """Named scalar scores for one instance/fold of a problem family.

    Ratios are dimensionless, ACC/DEN/CORR-OVR are percentages, PSNR is dB.
    """

    family: str
    scores: dict = field(default_factory=dict)

    def to_csv_row(self, keys=None):
        keys = keys or sorted(self.scores)
        return ",".join([self.family] + [f"{self.scores[k]:.6g}" for k in keys])


def threshold_solution(w: np.ndarray, fraction: float = 1e-4) -> np.ndarray:
    """Zero the smallest-magnitude entries whose cumulative absolute sum stays
    within ``fraction`` of the l1 norm."""
    w = np.asarray(w, dtype=float)
    norm1 = np.abs(w).sum()
    if norm1 == 0:
        raise ValueError("cannot threshold the zero vector")
    if fraction <= 0:
        return w.copy()
    order = np.argsort(np.abs(w), kind="stable")
    cum = np.cumsum(np.abs(w)[order])
    kill = order[cum <= fraction * norm1]
    out = w.copy()
    out[kill] = 0.0
    return out


def count_transactions(w: np.ndarray, num_periods: int, eps: float) -> int:
    """Number of per-asset weight changes of magnitude >= eps between
    consecutive rebalancing dates."""
    if eps <= 0:
        raise ValueError("transaction tolerance must be positive")
    W = np.asarray(w, dtype=float).reshape(num_periods, -1)
    return int(np.count_nonzero(np.abs(np.diff(W, axis=0)) >= eps))


def portfolio_ratios(w_opt, w_naive, C, num_periods: int, eps: float = 1e-4):
    """Risk, holding-cost and transaction reduction factors of the optimal
    portfolio versus the naive benchmark.

    Active positions are the strictly positive weights; risk is w'Cw with the
    block covariance over all periods.
    """
    w_opt = np.asarray(w_opt, dtype=float)
    w_naive = np.asarray(w_naive, dtype=float)
    if w_opt.shape != w_naive.shape:
        raise ValueError("portfolios must have equal dimensions")
    Cmat = sp.csr_matrix(C)
    risk_opt = float(w_opt @ (Cmat @ w_opt))
    risk_naive = float(w_naive @ (Cmat @ w_naive))
    active_opt = int(np.count_nonzero(w_opt > 0))
    active_naive = int(np.count_nonzero(w_naive > 0))
    t_opt = count_transactions(w_opt, num_periods, eps)
    t_naive = count_transactions(w_naive, num_periods, eps)
    if risk_opt == 0 or active_opt == 0:
        raise UndefinedMetricError("optimal portfolio is empty")
    if t_opt == 0:
        if t_naive:
            raise UndefinedMetricError("optimal portfolio has no transactions")
        ratio_t = 1.0  # neither portfolio trades
    else:
        ratio_t = t_naive / t_opt
    return (risk_naive / risk_opt, active_naive / active_opt, ratio_t)


def corrected_overlap(wi: np.ndarray, wj: np.ndarray, q: int) -> float:
    """Support overlap of two weight vectors corrected by the expected
    overlap E = q * density_i * density_j of random supports."""
    Zi = set(np.flatnonzero(wi).tolist())
    Zj = set(np.flatnonzero(wj).tolist())
    if not Zi or not Zj:
        raise UndefinedMetricError("empty support")
    expected = q * (len(Zi) / q) * (len(Zj) / q)
    return (len(Zi & Zj) - expected) / max(len(Zi), len(Zj))


def classification_scores(weights: list, test_sets: list, q: int,
                          fraction: float = 1e-4):
    """LOSO-style scores over folds: accuracy, density and corrected pairwise
    overlap, each as (mean, std) percentages.

    ``test_sets`` holds (D_test, labels_test) pairs aligned with ``weights``;
    every weight vector is thresholded before scoring.  The classifier applies
    sign(D w); weight vectors may carry a trailing bias entry beyond q.
    """
    if len(weights) < 2:
        raise ValueError("need at least two folds for the overlap score")
    weights = [threshold_solution(np.asarray(w, dtype=float), fraction)
               for w in weights]
    acc = []
    den = []
    for w, (D, labels) in zip(weights, test_sets):
        D = np.asarray(D, dtype=float)
        if D.shape[1] == w.size - 1:  # account for a bias column
            D = np.hstack([D, np.ones((D.shape[0], 1))])
        pred = np.sign(D @ w)
        pred[pred == 0] = 1.0
        acc.append(100.0 * np.mean(pred == np.asarray(labels, dtype=float)))
        den.append(100.0 * np.count_nonzero(w[:q]) / q)
    ovr = []
    skipped = 0
    for i in range(len(weights)):
        for j in range(i + 1, len(weights)):
            try:
                ovr.append(100.0 * corrected_overlap(weights[i][:q],
                                                     weights[j][:q], q))
            except UndefinedMetricError:
                skipped += 1
    stats = {}
    for key, vals in (("ACC", acc), ("DEN", den), ("CORR_OVR", ovr)):
        arr = np.asarray(vals)
        stats[key] = (float(arr.mean()), float(arr.std())) if arr.size \
            else (np.nan, np.nan)
    stats["overlap_pairs_skipped"] = skipped
    return stats


# ---------------------------------------------------------------------------
# Image quality


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-coords ** 2 / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def mssim(img: np.ndarray, ref: np.ndarray, dynamic_range=None) -> float:
    """Mean structural similarity with the standard 11x11 Gaussian window
    (sigma = 1.5) and constants C1 = (0.01 R)^2, C2 = (0.03 R)^2."""
    img = np.asarray(img, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if img.shape != ref.shape or img.ndim != 2:
        raise ValueError("expected two equal-shape 2-d images")
    if dynamic_range is None:
        dynamic_range = float(ref.max() - ref.min())
        if dynamic_range == 0:
            dynamic_range = 1.0
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    win = _gaussian_window()

    def smooth(a):
        return convolve(a, win, mode="nearest")

    mu1, mu2 = smooth(img), smooth(ref)
    mu1sq, mu2sq, mu12 = mu1 * mu1, mu2 * mu2, mu1 * mu2
    s1 = smooth(img * img) - mu1sq
    s2 = smooth(ref * ref) - mu2sq
    s12 = smooth(img * ref) - mu12
    ssim_map = ((2 * mu12 + c1) * (2 * s12 + c2)) \
        / ((mu1sq + mu2sq + c1) * (s1 + s2 + c2))
    return float(ssim_map.mean())


def image_scores(w: np.ndarray, w_ref: np.ndarray, shape=None):
    """(RMSE, PSNR, MSSIM) of a restored image against the reference.

    RMSE = ||w - w_ref|| / sqrt(n); PSNR = 20 log10(max(w_ref) / RMSE), with
    +inf when the images coincide; MSSIM needs 2-d arrays (or ``shape``).
    """
    w = np.asarray(w, dtype=float)
    w_ref = np.asarray(w_ref, dtype=float)
    if w.shape != w_ref.shape:
        raise ValueError("images must have equal dimensions")
    n = w.size
    rmse = float(np.linalg.norm(w - w_ref)) / np.sqrt(n)
    peak = float(w_ref.max())
    if peak <= 0:
        raise UndefinedMetricError("reference image has no positive peak")
    psnr = np.inf if rmse == 0 else 20.0 * np.log10(peak / rmse)
    if w.ndim == 1:
        if shape is None:
            raise ValueError("flat images need an explicit shape for MSSIM")
        w = w.reshape(shape)
        w_ref = w_ref.reshape(shape)
    return rmse, psnr, mssim(w, w_ref)
