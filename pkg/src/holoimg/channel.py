"""Free-space, Rician and RIS-cascade channel synthesis.

Matrices are oriented destination x source, so an illumination chain composes
as ``y = G_R @ diag(gamma) @ G_T @ x`` with ``G_T`` of shape ``(N, N_T)`` and
``G_R`` of shape ``(N_R, N)``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .geometry import pair_geometry

__all__ = [
    "ChannelKind",
    "ChannelMatrix",
    "GainPattern",
    "RicianSpec",
    "freespace_channel",
    "rician_channel",
    "cascade_channel",
    "dof_estimate",
    "numerical_rank",
    "complex_normal",
    "write_channel_file",
    "read_channel_file",
    "CHANNEL_FILE_MAGIC",
]

CHANNEL_FILE_MAGIC = b"HOLOCM1\0"


class ChannelKind(str, enum.Enum):
    LOS = "los"
    RICIAN = "rician"
    CASCADE = "cascade"


@dataclass(frozen=True)
class ChannelMatrix:
    """Complex amplitude gains, rows = destination elements, cols = sources."""

    entries: np.ndarray
    wavelength: float
    kind: ChannelKind = ChannelKind.LOS

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.ndim != 2:
            raise ValueError(f"channel must be a matrix, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("channel entries must be finite")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "kind", ChannelKind(self.kind))

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def T(self) -> "ChannelMatrix":
        return ChannelMatrix(self.entries.T, self.wavelength, self.kind)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class GainPattern:
    """Power gain pattern ``G(azimuth, elevation) >= 0``."""

    kind: str = "isotropic"
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    @classmethod
    def isotropic(cls) -> "GainPattern":
        return cls("isotropic", None)

    @classmethod
    def custom(cls, evaluator) -> "GainPattern":
        return cls("custom", evaluator)

    def __call__(self, azimuth, elevation) -> np.ndarray:
        az = np.asarray(azimuth, dtype=float)
        if self.evaluator is None:
            return np.ones_like(az)
        g = np.broadcast_to(np.asarray(self.evaluator(az, np.asarray(elevation, dtype=float)), dtype=float), az.shape)
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("gain pattern returned negative or non-finite values")
        return g


@dataclass(frozen=True)
class RicianSpec:
    kappa: float
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise ValueError(f"Rician factor must be >= 0, got {self.kappa}")


def complex_normal(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """Draw CN(0, variance): independent real and imaginary parts of variance/2."""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def freespace_channel(src, dst, wavelength: float, gain: GainPattern | None = None) -> ChannelMatrix:
    """Near-field LOS channel from ``src`` elements to ``dst`` elements.

    ``entry[n, i] = wavelength / (4 pi d) * sqrt(G) * exp(-j 2 pi d / wavelength)``
    using exact element-to-element distances; ``G`` is evaluated for the
    departure direction in the source frame (isotropic by default).
    """
    if not np.isfinite(wavelength) or wavelength <= 0:
        raise ValueError(f"wavelength must be positive, got {wavelength}")
    geo = pair_geometry(src, dst)
    d = geo.distances.T  # (dst, src)
    amp = wavelength / (4.0 * np.pi * d)
    if gain is not None and gain.kind != "isotropic":
        amp = amp * np.sqrt(gain(geo.azimuths.T, geo.elevations.T))
    # reduce the phase argument first so large d/wavelength keeps precision
    phase = np.mod(d / wavelength, 1.0)
    return ChannelMatrix(amp * np.exp(-2j * np.pi * phase), wavelength, ChannelKind.LOS)


def rician_channel(mean: ChannelMatrix, spec: RicianSpec, rng: np.random.Generator | None = None) -> ChannelMatrix:
    """Rician-faded draw around a deterministic channel.

    ``sqrt(k/(k+1)) g + sqrt(1/(k+1)) s`` with per-entry independent
    ``s ~ CN(0, |g|^2)``. Without ``rng`` the draw is seeded from ``spec.seed``.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    g = mean.entries
    k = float(spec.kappa)
    s = complex_normal(rng, g.shape, np.abs(g) ** 2)
    if np.isinf(k):
        out = g
    else:
        out = np.sqrt(k / (k + 1.0)) * g + np.sqrt(1.0 / (k + 1.0)) * s
    return ChannelMatrix(out, mean.wavelength, ChannelKind.RICIAN)


def cascade_channel(G1: ChannelMatrix, phi, G2: ChannelMatrix) -> ChannelMatrix:
    """Composite channel ``G1 @ Phi @ G2`` through a reflecting surface.

    ``phi`` may be an ``(N_RIS, N_RIS)`` array or any object exposing ``matrix``.
    """
    P = np.asarray(getattr(phi, "matrix", phi), dtype=complex)
    a = np.asarray(G1.entries)
    b = np.asarray(G2.entries)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"reflection matrix must be square, got {P.shape}")
    if a.shape[1] != P.shape[0] or P.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: G1 {a.shape}, Phi {P.shape}, G2 {b.shape}")
    return ChannelMatrix(a @ P @ b, G1.wavelength, ChannelKind.CASCADE)


def dof_estimate(L: float, S: float, d: float, wavelength: float) -> float:
    """Channel degrees of freedom between a square device of side ``L`` and a
    square region of side ``S`` whose centers are ``d`` apart.

    Both addends of the closed form are kept as published (one per transverse
    axis of the square geometry); round to the nearest integer for reporting.
    """
    for name, val in (("L", L), ("S", S), ("d", d), ("wavelength", wavelength)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    root = np.sqrt(4.0 * d * d + S * S)
    term = S * np.arctan(S / root) / root
    return float(2.0 * L * L / wavelength**2 * (term + term))


def numerical_rank(matrix, rtol: float = 1e-9) -> int:
    """Number of singular values above ``rtol * sigma_1``."""
    s = np.linalg.svd(np.asarray(matrix), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def write_channel_file(path, channel) -> None:
    """Write ``HOLOCM1\\0``, u32 rows, u32 cols, then column-major complex128 (little endian)."""
    m = np.asarray(getattr(channel, "entries", channel), dtype="<c16")
    rows, cols = m.shape
    with open(Path(path), "wb") as fh:
        fh.write(CHANNEL_FILE_MAGIC + struct.pack("<II", rows, cols))
        fh.write(np.asfortranarray(m).tobytes(order="F"))


def read_channel_file(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != CHANNEL_FILE_MAGIC:
        raise ValueError(f"{path}: not a channel matrix file")
    rows, cols = struct.unpack("<II", data[8:16])
    body = np.frombuffer(data, dtype="<c16", offset=16)
    if body.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} entries, found {body.size}")
    return body.reshape((rows, cols), order="F").astype(complex)
