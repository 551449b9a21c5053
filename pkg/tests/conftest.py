from __future__ import annotations

import numpy as np
import pytest

from holoimg.geometry import build_planar_layout, build_roi
from holoimg.harness import Scenario

WAVELENGTH = 0.0107
SIGMA2 = 1e-20 * 1.2e5
P_T = 1.0

ACCEPTANCE_LINES: dict[int, str] = {}


def xl_monostatic(y: float, **kw) -> Scenario:
    """20x20 half-wavelength transceiver facing an 8x8 ROI at distance ``y``."""
    tx = build_planar_layout(20, 20, WAVELENGTH / 2)
    roi = build_roi(8, 8, 93.75 * WAVELENGTH, center=(0.0, y, 0.0))
    kw.setdefault("seed", 7)
    return Scenario(tx, tx, roi, WAVELENGTH, P_T, SIGMA2, **kw)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


def desk_scenario(sigma2: float = SIGMA2, y: float = 0.5, **kw) -> Scenario:
    """10x10 transceiver and a well-conditioned 4x4 ROI half a meter away."""
    tx = build_planar_layout(10, 10, WAVELENGTH / 2)
    roi = build_roi(4, 4, 10 * WAVELENGTH, center=(0.0, y, 0.0))
    kw.setdefault("seed", 3)
    return Scenario(tx, tx, roi, WAVELENGTH, P_T, sigma2, **kw)
