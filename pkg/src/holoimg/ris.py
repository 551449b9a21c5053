"""Reflection-matrix designs for RIS-aided NLOS imaging.

The cascade ``G = G1 @ Phi @ G2`` cannot gain rank through ``Phi`` when
``Phi`` is full rank, so the design target is the channel energy
``||G||_F^2``. The matched design aligns the right singular vectors of ``G1``
with the left singular vectors of ``G2`` and attains the singular-value
product bound.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RISKind",
    "RISReflection",
    "matched_phase",
    "pec_phase",
    "random_phase",
    "random_unitary",
    "frobenius_gain",
    "cascade_gain_bound",
]


class RISKind(str, enum.Enum):
    MATCHED = "matched"
    PEC = "pec"
    RANDOM = "random"


@dataclass(frozen=True)
class RISReflection:
    """Reflection matrix ``Phi`` of an ``N_RIS``-element surface."""

    matrix: np.ndarray
    kind: RISKind
    eta: complex | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"reflection matrix must be square, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "kind", RISKind(self.kind))

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_diagonal(self) -> bool:
        """Whether a conventional per-element phase-shifting surface can realize it."""
        m = self.matrix
        return bool(np.all(m[~np.eye(m.shape[0], dtype=bool)] == 0))

    def unitarity_error(self) -> float:
        """``||Phi^H Phi - I||_F``."""
        m = self.matrix
        return float(np.linalg.norm(m.conj().T @ m - np.eye(m.shape[0])))

    def is_lossless(self, tol: float = 1e-9) -> bool:
        return self.unitarity_error() <= tol


def _entries(G) -> np.ndarray:
    m = np.asarray(getattr(G, "entries", G), dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"channel must be a matrix, got shape {m.shape}")
    return m


def matched_phase(G1, G2) -> RISReflection:
    """``Phi = V1 U2^H`` for ``G1 = U1 S1 V1^H`` (RIS -> ROI) and ``G2 = U2 S2 V2^H`` (TX -> RIS).

    Args:
        G1: ``(N_out, N_RIS)`` channel leaving the surface.
        G2: ``(N_RIS, N_in)`` channel arriving at the surface.
    """
    a, b = _entries(G1), _entries(G2)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: G1 {a.shape} and G2 {b.shape} disagree on N_RIS")
    _, _, V1h = np.linalg.svd(a, full_matrices=True)
    U2, _, _ = np.linalg.svd(b, full_matrices=True)
    return RISReflection(V1h.conj().T @ U2.conj().T, RISKind.MATCHED)


def pec_phase(n_ris: int, eta: complex = 1.0) -> RISReflection:
    """Mirror-like surface ``Phi = eta I`` with ``0 < |eta| <= 1``."""
    if int(n_ris) != n_ris or n_ris < 1:
        raise ValueError("N_RIS must be a positive integer")
    mag = abs(eta)
    if not 0.0 < mag <= 1.0:
        raise ValueError(f"|eta| must lie in (0, 1], got {mag}")
    return RISReflection(complex(eta) * np.eye(int(n_ris)), RISKind.PEC, complex(eta))


def random_phase(n_ris: int, rng: np.random.Generator) -> RISReflection:
    """Diagonal surface with independent phases uniform on ``[0, 2 pi)``."""
    if int(n_ris) != n_ris or n_ris < 1:
        raise ValueError("N_RIS must be a positive integer")
    theta = rng.uniform(0.0, 2.0 * np.pi, int(n_ris))
    return RISReflection(np.diag(np.exp(1j * theta)), RISKind.RANDOM)


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary from the QR factorization of a complex Gaussian matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def frobenius_gain(G) -> float:
    """``||G||_F^2``, the total channel energy ``sum_n xi_n^2``."""
    m = _entries(G)
    return float(np.sum(m.real**2 + m.imag**2))


def cascade_gain_bound(G1, G2) -> float:
    """Upper bound ``sum_n sigma_n^2(G1) sigma_n^2(G2)`` on ``||G1 Phi G2||_F^2`` over unitary ``Phi``."""
    s1 = np.linalg.svd(_entries(G1), compute_uv=False)
    s2 = np.linalg.svd(_entries(G2), compute_uv=False)
    k = min(s1.size, s2.size)
    return float(np.sum(s1[:k] ** 2 * s2[:k] ** 2))
