"""Monte Carlo experiment engine.

A :class:`Scenario` fixes the geometry, budgets, regularization and
illumination mode. :func:`run_trials` synthesizes the channels, designs the
illumination, simulates noisy measurements and reduces the per-trial errors
into :class:`ExperimentMetrics`. All randomness is drawn from counter-based
Philox streams keyed by ``(seed, stream, trial)``, so results do not depend on
the number of worker threads or on which other rows a sweep computes.
"""

from __future__ import annotations

import enum
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelMatrix, RicianSpec, cascade_channel, complex_normal, freespace_channel, rician_channel
from .geometry import ArrayGeometry, RoiGrid
from .illum import UpperBoundObjective, numerical_refine, optimize_illumination, uniform_illumination
from .regsolve import (
    RegularizedSVD,
    ScatteringScene,
    UnilluminatedCellError,
    estimate,
    max_scattering_coefficient,
    svd_decompose,
    theoretical_mse,
    truncate,
    tx_channel_truncation,
)
from .ris import RISKind, RISReflection, matched_phase, pec_phase, random_phase

__all__ = [
    "Mode",
    "ImageKind",
    "ImageSpec",
    "Scenario",
    "SystemModel",
    "ExperimentMetrics",
    "TrialError",
    "CSV_COLUMNS",
    "make_l_shape",
    "make_random_dof_image",
    "image_dof",
    "stream_rng",
    "build_system",
    "design_illumination",
    "run_trials",
    "sweep_truncation",
    "worker_count",
]

log = logging.getLogger(__name__)

# Philox stream identifiers
NOISE_STREAM = 0
FADING_STREAM = 1
IMAGE_STREAM = 2
RIS_STREAM = 3

CSV_COLUMNS = ("scenario_id", "mode", "ris_mode", "R", "n_mc", "t_nmse", "e_nmse",
               "nmse_std", "psnr", "wall_ms", "seed")


class Mode(str, enum.Enum):
    NOREG_NOOPT = "noreg-noopt"
    NOOPT = "noopt"
    U_IP_OPT = "u-ip-opt"
    A_OPT = "a-opt"
    A_IP_OPT = "a-ip-opt"


class ImageKind(str, enum.Enum):
    L_SHAPE = "l_shape"
    RANDOM_DOF = "random_dof"


class TrialError(RuntimeError):
    """A Monte Carlo run aborted; the message names the scenario, mode and R."""


@dataclass(frozen=True)
class ImageSpec:
    """Target image recipe; ``magnitude`` is a fraction of ``gamma_max``."""

    kind: ImageKind = ImageKind.L_SHAPE
    magnitude: float = 0.1
    target_dof: int = 4

    def __post_init__(self):
        object.__setattr__(self, "kind", ImageKind(self.kind))
        if not 0.0 < self.magnitude <= 1.0:
            raise ValueError(f"image magnitude must be in (0, 1], got {self.magnitude}")
        if int(self.target_dof) != self.target_dof or self.target_dof < 1:
            raise ValueError("target DoF must be a positive integer")


@dataclass(frozen=True)
class Scenario:
    """Complete description of one imaging experiment.

    With ``ris`` set the direct TX-ROI link is blocked and both links go
    through the surface, configured per ``ris_mode``.
    """

    tx: ArrayGeometry
    rx: ArrayGeometry
    roi: RoiGrid
    wavelength: float
    P_T: float
    sigma2: float
    mode: Mode = Mode.NOOPT
    R: int | None = None
    seed: int = 0
    ris: ArrayGeometry | None = None
    ris_mode: RISKind | None = None
    ris_eta: complex = 1.0
    fading: RicianSpec | None = None
    scenario_id: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.ris_mode is not None:
            object.__setattr__(self, "ris_mode", RISKind(self.ris_mode))
        if not (self.wavelength > 0 and self.P_T > 0 and self.sigma2 >= 0):
            raise ValueError("wavelength and P_T must be positive, sigma2 nonnegative")
        if (self.ris is None) != (self.ris_mode is None):
            raise ValueError("ris geometry and ris_mode must be given together")
        if self.R is not None and (int(self.R) != self.R or self.R < 1):
            raise ValueError("truncation index must be a positive integer")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")

    @property
    def gamma_max(self) -> float:
        return max_scattering_coefficient(self.wavelength, self.roi.cell_size)

    @property
    def monostatic(self) -> bool:
        return (self.tx.positions.shape == self.rx.positions.shape
                and np.array_equal(self.tx.positions, self.rx.positions))


@dataclass
class SystemModel:
    """Channels and factorizations shared by every row of a sweep."""

    G_T: ChannelMatrix
    G_R: ChannelMatrix
    sensing: RegularizedSVD
    tx: RegularizedSVD
    reflection: RISReflection | None = None
    links: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.sensing.K


@dataclass(frozen=True)
class ExperimentMetrics:
    scenario_id: str
    mode: Mode
    ris_mode: str
    R: int
    n_mc: int
    e_mse: float
    e_nmse: float
    t_mse: float
    t_nmse: float
    nmse_std: float
    psnr: float
    seed: int
    wall_ms: float = 0.0

    def csv_row(self) -> list[str]:
        def num(v):
            return "%.17g" % v
        return [self.scenario_id, Mode(self.mode).value, self.ris_mode, str(self.R), str(self.n_mc),
                num(self.t_nmse), num(self.e_nmse), num(self.nmse_std), num(self.psnr),
                num(self.wall_ms), str(self.seed)]


def make_l_shape(grid: RoiGrid, M: float, gamma_max: float) -> ScatteringScene:
    """Leftmost column plus bottom row at ``M * gamma_max``; everything else empty."""
    if grid.nx < 2 or grid.ny < 2:
        raise ValueError("grid too small for an L-shape (needs nx, ny >= 2)")
    img = np.zeros(grid.shape)
    img[:, 0] = M * gamma_max
    img[-1, :] = M * gamma_max
    return ScatteringScene(grid, img.reshape(-1).astype(complex), gamma_max)


def make_random_dof_image(grid: RoiGrid, k: int, M: float, gamma_max: float,
                          rng: np.random.Generator, max_retries: int = 100) -> ScatteringScene:
    """Nonnegative image with exactly ``k`` principal components above 1% of the first.

    The image is a sum of ``k`` outer products of uniform random vectors,
    scaled so its peak equals ``M * gamma_max``.
    """
    if k > min(grid.nx, grid.ny) or k < 1:
        raise ValueError(f"target DoF must be in 1..{min(grid.nx, grid.ny)}")
    ny, nx = grid.shape
    for _ in range(max_retries):
        img = rng.random((ny, k)) @ rng.random((k, nx))
        if _dof_of_matrix(img) == k:
            img *= M * gamma_max / img.max()
            return ScatteringScene(grid, img.reshape(-1).astype(complex), gamma_max)
    raise RuntimeError(f"no image with DoF {k} after {max_retries} draws")


def _dof_of_matrix(m: np.ndarray, threshold: float = 0.01) -> int:
    s = np.linalg.svd(np.abs(m), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s >= threshold * s[0]))


def image_dof(scene: ScatteringScene, threshold: float = 0.01) -> int:
    """Number of singular values of the magnitude image at or above ``threshold * sigma_1``."""
    return _dof_of_matrix(scene.image, threshold)


def stream_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Independent Philox generator for ``(seed, stream, index)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(stream, index))))


def worker_count() -> int:
    env = os.environ.get("HOLOIMG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer HOLOIMG_THREADS=%r", env)
    return max(1, min(4, os.cpu_count() or 1))


def build_system(s: Scenario) -> SystemModel:
    """Deterministic (LOS or cascaded) channels and their SVDs for ``s``."""
    lam = s.wavelength
    links = {}
    reflection = None
    if s.ris is None:
        G_T = freespace_channel(s.tx, s.roi, lam)
        G_R = freespace_channel(s.roi, s.rx, lam)
    else:
        G2 = freespace_channel(s.tx, s.ris, lam)   # TX -> RIS
        G1 = freespace_channel(s.ris, s.roi, lam)  # RIS -> ROI
        n_ris = len(s.ris)
        if s.ris_mode is RISKind.MATCHED:
            reflection = matched_phase(G1, G2)
        elif s.ris_mode is RISKind.PEC:
            reflection = pec_phase(n_ris, s.ris_eta)
        else:
            reflection = random_phase(n_ris, stream_rng(s.seed, RIS_STREAM))
        G_T = cascade_channel(G1, reflection, G2)
        # reciprocal surface: the return link sees Phi^T
        back_in = freespace_channel(s.roi, s.ris, lam)
        back_out = freespace_channel(s.ris, s.rx, lam)
        G_R = cascade_channel(back_out, reflection.matrix.T, back_in)
        links = {"G1": G1, "G2": G2}
    return SystemModel(G_T, G_R, svd_decompose(G_R), tx_channel_truncation(svd_decompose(G_T)),
                       reflection, links)


def design_illumination(s: Scenario, system: SystemModel, reg: RegularizedSVD) -> np.ndarray:
    """Transmit vector for ``s.mode`` given the sensing regularization ``reg``."""
    N_T = len(s.tx)
    x_u = uniform_illumination(s.P_T, N_T)
    mode = s.mode
    if mode in (Mode.NOREG_NOOPT, Mode.NOOPT):
        return x_u
    gmax = s.gamma_max
    x0 = x_u
    if mode in (Mode.A_OPT, Mode.A_IP_OPT):
        x0 = optimize_illumination(system.tx, reg, gmax, s.P_T, s.sigma2).x
        if mode is Mode.A_OPT:
            return x0
    objective = UpperBoundObjective(gmax, reg, s.sigma2)
    basis = system.tx.V[:, : system.tx.R]
    return numerical_refine(objective, x0, s.P_T, system.G_T, basis=basis).x


def _scene_magnitude(s: Scenario, image) -> float:
    if isinstance(image, ImageSpec):
        return image.magnitude * s.gamma_max
    return float(np.max(np.abs(image.gamma)))


def _trial(s: Scenario, system: SystemModel, reg: RegularizedSVD, x: np.ndarray, image, t: int):
    G_T = system.G_T.entries
    G_R = system.G_R.entries
    if s.fading is not None:
        rng_f = stream_rng(s.seed, FADING_STREAM, t)
        faded_T = rician_channel(system.G_T, s.fading, rng_f).entries
        faded_R = faded_T.T if s.monostatic else rician_channel(system.G_R, s.fading, rng_f).entries
    else:
        faded_T, faded_R = G_T, G_R
    if isinstance(image, ImageSpec):
        if image.kind is ImageKind.L_SHAPE:
            scene = make_l_shape(s.roi, image.magnitude, s.gamma_max)
        else:
            scene = make_random_dof_image(s.roi, image.target_dof, image.magnitude, s.gamma_max,
                                          stream_rng(s.seed, IMAGE_STREAM, t))
    else:
        scene = image
    gamma = scene.gamma
    w = complex_normal(stream_rng(s.seed, NOISE_STREAM, t), G_R.shape[0], s.sigma2)
    y = faded_R @ (gamma * (faded_T @ x)) + w
    # the estimator only knows the deterministic channels
    x_tilde = G_T @ x
    gamma_hat = estimate(y, reg, x_tilde).gamma_hat
    err = float(np.sum(np.abs(gamma - gamma_hat) ** 2))
    t_mse = theoretical_mse(gamma, x_tilde, reg, s.sigma2).mse
    return err, t_mse


def run_trials(s: Scenario, image, n_mc: int, system: SystemModel | None = None,
               threads: int | None = None, timing: bool = False) -> ExperimentMetrics:
    """Monte Carlo evaluation of one scenario.

    Args:
        s: Scenario; ``s.R`` of None means no truncation (R = K).
        image: A fixed :class:`ScatteringScene` or an :class:`ImageSpec`.
            Random-DoF specs draw a fresh image every trial.
        n_mc: Number of trials.
        system: Precomputed channels (built from ``s`` when omitted).
        threads: Worker threads (``HOLOIMG_THREADS`` or up to 4 by default).
        timing: Record wall-clock time; otherwise ``wall_ms`` is 0 so output
            stays byte-reproducible.
    """
    if int(n_mc) != n_mc or n_mc < 1:
        raise ValueError("number of trials must be a positive integer")
    start = time.perf_counter()
    system = system or build_system(s)
    K = system.K
    R = K if (s.mode is Mode.NOREG_NOOPT or s.R is None) else int(s.R)
    if R > K:
        raise ValueError(f"truncation index {R} exceeds K = {K}")
    reg = truncate(system.sensing, R)
    M = _scene_magnitude(s, image)
    if not M > 0:
        raise ValueError("image magnitude must be positive for normalized metrics")
    N = len(s.roi)
    context = f"scenario {s.scenario_id!r}, mode {s.mode.value}, R={R}"
    try:
        x = design_illumination(s, system, reg)
        workers = threads or worker_count()
        if workers > 1 and n_mc > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda t: _trial(s, system, reg, x, image, t), range(n_mc)))
        else:
            results = [_trial(s, system, reg, x, image, t) for t in range(n_mc)]
    except UnilluminatedCellError as exc:
        raise TrialError(f"{context}: {exc}") from exc
    errs = np.array([r[0] for r in results])
    tmses = np.array([r[1] for r in results])
    norm = N * M * M
    nmse = errs / norm
    e_mse = float(np.mean(errs))
    t_mse = float(np.mean(tmses))
    e_nmse = e_mse / norm
    std = float(np.std(nmse, ddof=1)) if n_mc > 1 else 0.0
    wall = (time.perf_counter() - start) * 1e3 if timing else 0.0
    return ExperimentMetrics(
        scenario_id=s.scenario_id, mode=s.mode, ris_mode=s.ris_mode.value if s.ris_mode else "none",
        R=R, n_mc=int(n_mc), e_mse=e_mse, e_nmse=e_nmse, t_mse=t_mse, t_nmse=t_mse / norm,
        nmse_std=std, psnr=1.0 / e_nmse if e_nmse > 0 else float("inf"), seed=int(s.seed), wall_ms=wall,
    )


def sweep_truncation(s: Scenario, image, R_list, n_mc: int, modes=None,
                     threads: int | None = None, timing: bool = False) -> list[ExperimentMetrics]:
    """Rows for every ``(R, mode)`` plus the untruncated ``noreg-noopt`` benchmark first.

    ``noreg-noopt`` in ``modes`` is covered by the benchmark row alone.
    """
    modes = [Mode(m) for m in (modes if modes is not None else [s.mode])]
    if not modes:
        raise ValueError("at least one mode is required")
    system = build_system(s)
    K = system.K
    R_list = [int(r) for r in R_list]
    bad = [r for r in R_list if not 1 <= r <= K]
    if bad:
        raise ValueError(f"truncation indices outside 1..{K}: {bad}")
    rows = [run_trials(replace(s, mode=Mode.NOREG_NOOPT, R=K), image, n_mc, system, threads, timing)]
    for R in R_list:
        for mode in modes:
            if mode is Mode.NOREG_NOOPT:
                continue
            rows.append(run_trials(replace(s, mode=mode, R=R), image, n_mc, system, threads, timing))
    return rows
