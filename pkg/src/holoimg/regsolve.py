"""TSVD-regularized estimation of ROI scattering coefficients.

The sensing model is ``y = G_R diag(x_tilde) gamma + w``. The backscattered
vector ``beta = x_tilde * gamma`` is recovered with a weighted pseudoinverse of
``G_R`` and divided elementwise by the illumination to give ``gamma_hat``.
The closed-form MSE splits into a regularization distortion term and a noise
term; the min-max illumination design works on an upper bound of it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

__all__ = [
    "UnilluminatedCellError",
    "ScatteringScene",
    "RegularizedSVD",
    "EstimateReport",
    "MseTerms",
    "max_scattering_coefficient",
    "svd_decompose",
    "truncate",
    "estimate",
    "theoretical_mse",
    "distortion_bound",
    "noise_term",
    "mse_upper_bound",
    "tx_channel_truncation",
]

ILLUMINATION_RTOL = 1e-12


class UnilluminatedCellError(ValueError):
    """An ROI cell receives (numerically) no illumination."""

    def __init__(self, index: int, magnitude: float):
        super().__init__(f"unilluminated cell {index} (|x_tilde| = {magnitude:.3e})")
        self.index = index


def max_scattering_coefficient(wavelength: float, cell_size: float) -> float:
    """Largest |gamma| of a cell: a PEC plate of area ``cell_size**2``.

    ``RCS_max = 4 pi cell_size^2 / wavelength^2`` and
    ``gamma_max = sqrt(4 pi RCS_max) / wavelength = 4 pi cell_size / wavelength^2``.
    """
    rcs_max = 4.0 * np.pi * cell_size**2 / wavelength**2
    return float(np.sqrt(4.0 * np.pi / wavelength**2 * rcs_max))


@dataclass(frozen=True)
class ScatteringScene:
    grid: object
    gamma: np.ndarray
    gamma_max: float

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=complex).reshape(-1)
        if self.grid is not None and g.size != len(self.grid):
            raise ValueError(f"gamma has {g.size} entries for a {len(self.grid)}-cell grid")
        if not self.gamma_max > 0:
            raise ValueError("gamma_max must be positive")
        if np.any(np.abs(g) > self.gamma_max * (1.0 + 1e-12)):
            raise ValueError("|gamma_n| exceeds gamma_max")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)

    @property
    def image(self) -> np.ndarray:
        """``gamma`` reshaped to the ``(ny, nx)`` image matrix."""
        return self.gamma.reshape(self.grid.shape)


@dataclass(frozen=True)
class RegularizedSVD:
    """SVD factors of a channel plus regularization state.

    ``weights`` has one entry per singular value; only the first ``R`` modes
    enter the pseudoinverse. With unit weights (TSVD) ``H`` is the orthogonal
    projector onto the first ``R`` right singular vectors.
    """

    U: np.ndarray
    xi: np.ndarray
    V: np.ndarray
    weights: np.ndarray
    R: int
    matrix: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.xi.size

    @property
    def lam(self) -> np.ndarray:
        """Diagonal of ``Lambda`` (length N): ``1/w_k`` on retained modes, 0 elsewhere."""
        out = np.zeros(self.V.shape[0])
        out[: self.R] = 1.0 / self.weights[: self.R]
        return out

    @property
    def H(self) -> np.ndarray:
        Vr = self.V[:, : self.R]
        return (Vr * (1.0 / self.weights[: self.R])) @ Vr.conj().T

    def inverse_gains(self) -> np.ndarray:
        """``1 / (w_k xi_k)`` for the retained modes."""
        xi = self.xi[: self.R]
        if np.any(xi == 0):
            raise ValueError("retained mode with zero singular value")
        return 1.0 / (self.weights[: self.R] * xi)

    def pinv(self) -> np.ndarray:
        """Regularized pseudoinverse ``V Sigma~^+ U^H``."""
        return (self.V[:, : self.R] * self.inverse_gains()) @ self.U[:, : self.R].conj().T

    def apply_pinv(self, y) -> np.ndarray:
        coeff = self.U[:, : self.R].conj().T @ np.asarray(y, dtype=complex)
        return self.V[:, : self.R] @ (self.inverse_gains() * coeff)

    def noise_gain(self) -> np.ndarray:
        """Per-cell ``sum_k (w_k xi_k)^-2 |v_nk|^2`` over the retained modes."""
        return np.abs(self.V[:, : self.R]) ** 2 @ (self.inverse_gains() ** 2)


class EstimateReport(NamedTuple):
    beta_hat: np.ndarray
    gamma_hat: np.ndarray
    theoretical_mse: float | None = None
    distortion_term: float | None = None
    noise_term: float | None = None


class MseTerms(NamedTuple):
    mse: float
    distortion: float
    noise: float


def _canonical_phase(U, V, K):
    # rotate each (u_k, v_k) pair so the first significant entry of v_k is real positive
    for k in range(V.shape[1]):
        col = V[:, k]
        mags = np.abs(col)
        j = int(np.argmax(mags > 1e-8 * mags.max()))
        p = col[j] / mags[j]
        V[:, k] = col * np.conj(p)
        if k < K:
            U[:, k] = U[:, k] * np.conj(p)


def svd_decompose(G) -> RegularizedSVD:
    """Full SVD with deterministic singular-vector phases (R = K, unit weights)."""
    m = np.array(getattr(G, "entries", G), dtype=complex)
    if m.ndim != 2 or not np.all(np.isfinite(m)):
        raise ValueError("matrix must be a finite 2-D array")
    U, xi, Vh = np.linalg.svd(m, full_matrices=True)
    V = Vh.conj().T
    _canonical_phase(U, V, xi.size)
    m.setflags(write=False)
    return RegularizedSVD(U, xi, V, np.ones(xi.size), int(xi.size), m)


def truncate(svd: RegularizedSVD, R: int) -> RegularizedSVD:
    """Keep the ``R`` strongest modes with unit weights."""
    if int(R) != R or not 1 <= R <= svd.K:
        raise ValueError(f"truncation index must be in 1..{svd.K}, got {R}")
    return replace(svd, weights=np.ones(svd.K), R=int(R))


def tx_channel_truncation(svd: RegularizedSVD, fraction: float = 0.99) -> RegularizedSVD:
    """Smallest leading set of modes holding ``fraction`` of ``sum xi_k^2``."""
    energy = svd.xi**2
    total = energy.sum()
    if total == 0:
        raise ValueError("zero channel")
    cum = np.cumsum(energy) / total
    R = int(np.searchsorted(cum, fraction * (1.0 - 1e-12)) + 1)
    return truncate(svd, min(R, svd.K))


def _check_illumination(x_tilde) -> np.ndarray:
    xt = np.asarray(x_tilde, dtype=complex).reshape(-1)
    mag = np.abs(xt)
    eps = ILLUMINATION_RTOL * mag.max() if mag.size else 0.0
    bad = np.flatnonzero(mag <= eps)
    if bad.size:
        raise UnilluminatedCellError(int(bad[0]), float(mag[bad[0]]))
    return xt


def estimate(y, reg: RegularizedSVD, x_tilde) -> EstimateReport:
    """LS estimate: ``beta_hat = V Sigma~^+ U^H y`` and ``gamma_hat = beta_hat / x_tilde``."""
    xt = _check_illumination(x_tilde)
    beta_hat = reg.apply_pinv(y)
    return EstimateReport(beta_hat, beta_hat / xt)


def _gamma_of(scene) -> np.ndarray:
    return np.asarray(getattr(scene, "gamma", scene), dtype=complex).reshape(-1)


def theoretical_mse(scene, x_tilde, reg: RegularizedSVD, sigma2: float) -> MseTerms:
    """Closed-form ``E||gamma - gamma_hat||^2`` for deterministic gamma.

    distortion = ``||X~^-1 (H - I) X~ gamma||^2`` and
    noise = ``sum_n sigma2 / |x~_n|^2 sum_k (w_k xi_k)^-2 |v_nk|^2``.
    """
    xt = _check_illumination(x_tilde)
    gamma = _gamma_of(scene)
    A = reg.H - np.eye(xt.size)
    q = (A @ (xt * gamma)) / xt
    dist = float(np.sum(np.abs(q) ** 2))
    noise = noise_term(xt, reg, sigma2)
    return MseTerms(dist + noise, dist, noise)


def distortion_bound(gamma_max: float, x_tilde, H) -> float:
    """Distortion surrogate ``N gamma_max^2 sum_n |sum_i (H-I)_ni x~_i / x~_n|^2``.

    This is ``N`` times the distortion at the all-``gamma_max`` image. It
    dominates the distortion of typical admissible images but is not a strict
    bound: phase patterns in gamma that cancel against ``H - I`` can exceed it.
    """
    xt = _check_illumination(x_tilde)
    A = np.asarray(H) - np.eye(xt.size)
    q = (A @ xt) / xt
    return float(xt.size * gamma_max**2 * np.sum(np.abs(q) ** 2))


def noise_term(x_tilde, reg: RegularizedSVD, sigma2: float) -> float:
    xt = _check_illumination(x_tilde)
    return float(sigma2 * np.sum(reg.noise_gain() / np.abs(xt) ** 2))


def mse_upper_bound(gamma_max: float, x_tilde, reg: RegularizedSVD, sigma2: float) -> tuple[float, float]:
    """Min-max objective terms ``(f, g)``: distortion surrogate and noise term."""
    return distortion_bound(gamma_max, x_tilde, reg.H), noise_term(x_tilde, reg, sigma2)
