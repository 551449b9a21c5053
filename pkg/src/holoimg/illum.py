"""Illumination design for minimum worst-case imaging error.

The ROI-side signal ``x_tilde = sqrt(b) * exp(j phi)`` is designed in two
steps. Magnitudes ``b`` minimize the noise term in closed form (KKT solution of
``min sum alpha_n / b_n  s.t.  sum b_n <= P``). Phases then minimize the
distortion surrogate by element-wise alternating updates. The transmit vector
is finally recovered through the regularized pseudoinverse of ``G_T``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import BFGS, NonlinearConstraint, minimize

from .regsolve import RegularizedSVD, distortion_bound, noise_term

__all__ = [
    "ZeroSensitivityError",
    "IlluminationPlan",
    "PhaseStepAux",
    "PhaseResult",
    "RefineResult",
    "UpperBoundObjective",
    "alpha_coefficients",
    "power_budget",
    "optimal_magnitudes",
    "noise_objective",
    "phase_step_aux",
    "phase_step",
    "coordinate_objective",
    "phase_objective",
    "optimize_phases",
    "optimize_illumination",
    "uniform_illumination",
    "transmit_recovery",
    "numerical_refine",
]

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


class ZeroSensitivityError(ValueError):
    """A cell has zero noise sensitivity (alpha_n == 0), so no finite allocation exists."""


@dataclass
class IlluminationPlan:
    """Designed illumination.

    ``x_tilde`` is the ROI-side design target ``sqrt(b) exp(j phases)``;
    ``achieved`` is what the recovered transmit vector actually delivers,
    ``G_T @ x``.
    """

    x: np.ndarray
    x_tilde: np.ndarray
    b: np.ndarray
    phases: np.ndarray
    P: float
    P_T: float
    achieved: np.ndarray | None = None
    scale: float = 1.0
    sweeps: int = 0
    objective_history: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class PhaseStepAux:
    c: np.ndarray
    d: np.ndarray
    delta: np.ndarray


@dataclass
class PhaseResult:
    phases: np.ndarray
    history: list[float]
    sweeps: int
    converged: bool


@dataclass
class RefineResult:
    x: np.ndarray
    x_tilde: np.ndarray
    objective: float
    initial_objective: float
    success: bool
    message: str = ""


def alpha_coefficients(reg: RegularizedSVD, sigma2: float) -> np.ndarray:
    """Per-cell noise sensitivity ``sigma2 * sum_k (w_k xi_k)^-2 |v_nk|^2``."""
    return float(sigma2) * reg.noise_gain()


def power_budget(P_T: float, G_T) -> float:
    """ROI-side budget ``P_T * sum_n ||g_T,n||^2`` (squared row norms of ``G_T``)."""
    if not P_T > 0:
        raise ValueError("P_T must be positive")
    g = np.asarray(getattr(G_T, "entries", G_T))
    return float(P_T * np.sum(np.abs(g) ** 2))


def optimal_magnitudes(alpha, P: float) -> np.ndarray:
    """``b_n = P sqrt(alpha_n) / sum_m sqrt(alpha_m)``.

    The resulting noise objective equals ``(sum_n sqrt(alpha_n))^2 / P``.
    """
    a = np.asarray(alpha, dtype=float).reshape(-1)
    if not P > 0:
        raise ValueError("P must be positive")
    zero = np.flatnonzero(a <= 0)
    if zero.size:
        raise ZeroSensitivityError(f"cell with zero noise sensitivity: index {int(zero[0])}")
    ra = np.sqrt(a)
    return P * ra / ra.sum()


def noise_objective(alpha, b) -> float:
    return float(np.sum(np.asarray(alpha) / np.asarray(b)))


def _illum(phases, b) -> np.ndarray:
    return np.sqrt(np.asarray(b, dtype=float)) * np.exp(1j * np.asarray(phases, dtype=float))


def phase_step_aux(phases, b, H) -> PhaseStepAux:
    """``c_n = h_nn - 1``, ``d_n = sum_{i != n} h_ni x~_i / sqrt(b_n)``, ``delta_n``."""
    H = np.asarray(H)
    xt = _illum(phases, b)
    diag = np.diag(H)
    c = diag - 1.0
    d = (H @ xt - diag * xt) / np.sqrt(b)
    delta = np.where(np.mod(np.angle(c), TWO_PI) < np.pi, 1, -1)
    return PhaseStepAux(c, d, delta)


def phase_step(n: int, phases, b, H) -> float:
    """Closed-form minimizer of the cell-``n`` term ``|c_n + e^{-j phi} d_n|^2``.

    ``phi* = [arg d_n - arg c_n - delta_n pi] mod 2 pi``; when ``c_n`` or
    ``d_n`` vanishes the term does not depend on ``phi`` and the current phase
    is returned.
    """
    H = np.asarray(H)
    s = np.sqrt(np.asarray(b, dtype=float))
    xt = s * np.exp(1j * np.asarray(phases, dtype=float))
    c = H[n, n] - 1.0
    d = (H[n] @ xt - H[n, n] * xt[n]) / s[n]
    if c == 0 or d == 0:
        return float(phases[n])
    arg_c = np.mod(np.angle(c), TWO_PI)
    delta = 1.0 if arg_c < np.pi else -1.0
    return float(np.mod(np.angle(d) - arg_c - delta * np.pi, TWO_PI))


def coordinate_objective(n: int, phi, phases, b, H) -> np.ndarray:
    """Cell-``n`` term as a function of its own phase (others held fixed)."""
    aux_phases = np.array(phases, dtype=float)
    H = np.asarray(H)
    s = np.sqrt(np.asarray(b, dtype=float))
    xt = s * np.exp(1j * aux_phases)
    c = H[n, n] - 1.0
    d = (H[n] @ xt - H[n, n] * xt[n]) / s[n]
    return np.abs(c + np.exp(-1j * np.asarray(phi)) * d) ** 2


def phase_objective(phases, b, H, gamma_max: float = 1.0) -> float:
    """Distortion surrogate evaluated at ``x_tilde = sqrt(b) exp(j phases)``."""
    return distortion_bound(gamma_max, _illum(phases, b), H)


def optimize_phases(b, H, phases0, gamma_max: float = 1.0, tol: float = 1e-8,
                    max_sweeps: int = 200) -> PhaseResult:
    """Alternating element-wise phase descent on the distortion surrogate.

    Each coordinate first tries the closed-form single-term update. The other
    cells' terms also depend on ``phi_n``, so if that proposal would raise the
    full objective the exact coordinate minimizer of the full objective is used
    instead; the objective is therefore nonincreasing sweep to sweep.
    """
    H = np.asarray(H, dtype=complex)
    b = np.asarray(b, dtype=float)
    N = b.size
    A = H - np.eye(N)
    s = np.sqrt(b)
    inv_b = 1.0 / b
    phases = np.mod(np.array(phases0, dtype=float), TWO_PI)
    scale = N * gamma_max**2

    def total(r):
        return float(np.sum(np.abs(r) ** 2 * inv_b))

    xt = s * np.exp(1j * phases)
    r = A @ xt
    history = [scale * total(r)]
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for n in range(N):
            cur = total(r)
            col = A[:, n]
            base = r - col * xt[n]  # r with cell n removed
            c = A[n, n]
            d = base[n] / s[n]
            new = None
            if c != 0 and d != 0:
                arg_c = np.mod(np.angle(c), TWO_PI)
                delta = 1.0 if arg_c < np.pi else -1.0
                cand = np.mod(np.angle(d) - arg_c - delta * np.pi, TWO_PI)
                r_cand = base + col * (s[n] * np.exp(1j * cand))
                if total(r_cand) <= cur:
                    new, r_new = cand, r_cand
            if new is None:
                B = col * s[n]
                Z = np.sum(B * np.conj(base) * inv_b)
                if Z == 0:
                    continue
                cand = np.mod(np.pi - np.angle(Z), TWO_PI)
                r_cand = base + col * (s[n] * np.exp(1j * cand))
                if total(r_cand) > cur:
                    continue
                new, r_new = cand, r_cand
            phases[n] = new
            xt[n] = s[n] * np.exp(1j * new)
            r = r_new
        r = A @ xt  # drop accumulated rounding
        val = scale * total(r)
        prev = history[-1]
        history.append(min(val, prev) if np.isclose(val, prev, rtol=1e-13, atol=0) else val)
        if abs(prev - val) <= tol * max(abs(prev), np.finfo(float).tiny):
            converged = True
            break
    return PhaseResult(phases, history, sweeps, converged)


def uniform_illumination(P_T: float, N_T: int) -> np.ndarray:
    """Uniform-ROI baseline ``sqrt(P_T) / (2 N_T) * (1 + j)`` on every element.

    Its energy is ``P_T / (2 N_T)``, below the budget, as published.
    """
    if int(N_T) != N_T or N_T < 1:
        raise ValueError("N_T must be a positive integer")
    return np.full(int(N_T), np.sqrt(P_T) / (2.0 * N_T) * (1.0 + 1.0j))


def transmit_recovery(GT_reg: RegularizedSVD, x_tilde, P_T: float) -> tuple[np.ndarray, float]:
    """Minimum-norm transmit vector ``G~_T^+ x_tilde`` scaled into ``||x||^2 <= P_T``.

    Returns:
        ``(x, scale)`` where ``scale <= 1`` is the applied rescaling.
    """
    x = GT_reg.apply_pinv(np.asarray(x_tilde, dtype=complex))
    norm = float(np.linalg.norm(x))
    scale = 1.0
    if norm > 0 and norm**2 > P_T:
        scale = float(np.sqrt(P_T) / norm)
        x = x * scale
        log.info("transmit vector rescaled by %.6g to meet the power budget", scale)
    return x, scale


def optimize_illumination(GT_reg: RegularizedSVD, GR_reg: RegularizedSVD, gamma_max: float,
                          P_T: float, sigma2: float, tol: float = 1e-8,
                          max_sweeps: int = 200) -> IlluminationPlan:
    """Analytic min-max illumination: KKT magnitudes, alternating phases, recovery.

    ``GT_reg`` is the (99%-energy truncated) SVD of the TX-ROI channel and
    must carry the channel matrix; ``GR_reg`` is the truncated sensing SVD.
    Phases start from those induced by the uniform baseline.
    """
    if GT_reg.matrix is None:
        raise ValueError("GT_reg must carry its channel matrix")
    if not (P_T > 0 and sigma2 >= 0 and tol > 0):
        raise ValueError("P_T and tol must be positive, sigma2 nonnegative")
    G_T = GT_reg.matrix
    alpha = alpha_coefficients(GR_reg, sigma2)
    P = power_budget(P_T, G_T)
    b = optimal_magnitudes(alpha, P)
    phi0 = np.mod(np.angle(G_T @ uniform_illumination(P_T, G_T.shape[1])), TWO_PI)
    res = optimize_phases(b, GR_reg.H, phi0, gamma_max, tol, max_sweeps)
    x_star = _illum(res.phases, b)
    x, scale = transmit_recovery(GT_reg, x_star, P_T)
    return IlluminationPlan(x=x, x_tilde=x_star, b=b, phases=res.phases, P=P, P_T=P_T,
                            achieved=G_T @ x, scale=scale, sweeps=res.sweeps,
                            objective_history=res.history)


class UpperBoundObjective:
    """``x_tilde -> f(gamma_max; x_tilde) + g(x_tilde)`` with its Wirtinger gradient."""

    def __init__(self, gamma_max: float, reg: RegularizedSVD, sigma2: float):
        self.gamma_max = float(gamma_max)
        self.reg = reg
        self.sigma2 = float(sigma2)
        self.A = reg.H - np.eye(reg.V.shape[0])
        self.alpha = alpha_coefficients(reg, sigma2)

    def __call__(self, x_tilde) -> float:
        return distortion_bound(self.gamma_max, x_tilde, self.reg.H) + noise_term(x_tilde, self.reg, self.sigma2)

    def gradient(self, x_tilde) -> np.ndarray:
        """``dF / d conj(x_tilde)``."""
        xt = np.asarray(x_tilde, dtype=complex)
        N = xt.size
        q = (self.A @ xt) / xt
        xc = np.conj(xt)
        gf = self.A.conj().T @ (q / xc) - np.abs(q) ** 2 / xc
        gg = -self.alpha / (np.abs(xt) ** 2 * xc)
        return N * self.gamma_max**2 * gf + gg


def numerical_refine(objective, x0, P_T: float, G_T, basis=None, maxiter: int = 300) -> RefineResult:
    """Local refinement of the transmit vector under ``||x||^2 <= P_T``.

    Minimizes ``objective(G_T @ x)`` with SciPy's interior-point style
    ``trust-constr`` solver over ``x = basis @ c`` (all of ``C^{N_T}`` when
    ``basis`` is None). ``objective.gradient`` is used when present. The result
    is only accepted if it does not increase the objective; otherwise a
    warning is issued and ``x0`` is returned.
    """
    G = np.asarray(getattr(G_T, "entries", G_T), dtype=complex)
    x0 = np.asarray(x0, dtype=complex)
    W = np.eye(G.shape[1], dtype=complex) if basis is None else np.asarray(basis, dtype=complex)
    B = G @ W
    f0 = float(objective(G @ x0))
    fallback = RefineResult(x0, G @ x0, f0, f0, False)
    if not np.isfinite(f0) or f0 <= 0:
        return fallback
    root = np.sqrt(P_T)
    c0 = W.conj().T @ x0 / root
    m = c0.size
    grad_fn = getattr(objective, "gradient", None)

    def unpack(z):
        return root * (z[:m] + 1j * z[m:])

    def fun(z):
        return float(objective(B @ unpack(z))) / f0

    def jac(z):
        gc = B.conj().T @ grad_fn(B @ unpack(z))
        g = 2.0 * root * gc / f0
        return np.concatenate([g.real, g.imag])

    con = NonlinearConstraint(lambda z: z @ z, -np.inf, 1.0, jac=lambda z: 2.0 * z[None, :],
                              hess=lambda z, v: 2.0 * v[0] * np.eye(z.size))
    z0 = np.concatenate([c0.real, c0.imag])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = minimize(fun, z0, method="trust-constr", jac=jac if grad_fn else "2-point",
                           hess=BFGS(), constraints=[con],
                           options={"maxiter": maxiter, "gtol": 1e-12, "xtol": 1e-14})
        c = unpack(res.x)
        if np.linalg.norm(c) ** 2 > P_T:
            c = c * (root / np.linalg.norm(c))
        x = W @ c
        f = float(objective(G @ x))
    except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        warnings.warn(f"numerical refinement failed ({exc}); keeping the starting point", RuntimeWarning)
        return fallback
    if not np.isfinite(f) or f > f0:
        warnings.warn("numerical refinement did not improve the objective; keeping the starting point",
                      RuntimeWarning)
        return fallback
    return RefineResult(x, G @ x, f, f0, True, str(res.message))
