import math

import numpy as np
import pytest

from clsplat.geometry import LaminographyGeometry
from clsplat.types import GaussianScene

BOX = np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])


def random_scene(rng, m=5, spread=0.5, smin=0.05, smax=0.2, rho=(0.5, 2.0)) -> GaussianScene:
    return GaussianScene.from_activated(
        density=rng.uniform(*rho, m),
        position=rng.uniform(-spread, spread, (m, 3)),
        scale=rng.uniform(smin, smax, (m, 3)),
        bounds=BOX,
        quaternion=rng.normal(size=(m, 4)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def geom30():
    return LaminographyGeometry.desk(math.pi / 6)


@pytest.fixture
def geom0():
    return LaminographyGeometry.desk(0.0)


_CACHE = {}


def simulated(kind="engine", tilt_deg=30.0, n_views=50, dims=64):
    """Phantom, geometry and noiseless stack, cached for the whole session."""
    key = (kind, tilt_deg, n_views, dims)
    if key not in _CACHE:
        from clsplat.phantom import PhantomSpec, generate_phantom, simulate_dataset

        ph = generate_phantom(PhantomSpec(kind=kind, dims=dims))
        geom = LaminographyGeometry.desk(math.radians(tilt_deg))
        _CACHE[key] = (ph, geom, simulate_dataset(ph, geom, n_views))
    return _CACHE[key]


_ACCEPTANCE = {}


def acceptance_report(n: int, ok: bool, detail: str) -> None:
    """Record one acceptance line; all lines are repeated in the terminal summary."""
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    _ACCEPTANCE[n] = line


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
