import numpy as np
import pytest

from graphdiff.beamline import Beam, BeamlineGeometry
from graphdiff.lattice import DirectLattice, enumerate_rings, reciprocal_basis
from graphdiff.synth import PatternParams, synthesize


@pytest.fixture(scope="session")
def rl():
    return reciprocal_basis(DirectLattice())


@pytest.fixture(scope="session")
def rings(rl):
    return enumerate_rings(rl, 8)


@pytest.fixture(scope="session")
def geom():
    return BeamlineGeometry()


@pytest.fixture(scope="session")
def he706():
    return Beam.of("He", 706)


def small_params(**kw):
    """1024^2 px at 80 um: quarter of the pixels of the default detector image."""
    base = dict(image_size=(1024, 1024), pixel_pitch=80e-6, reference_region=(8, 8, 40, 40))
    base.update(kw)
    return PatternParams(**base)


@pytest.fixture(scope="session")
def small_image(he706, rings, rl, geom):
    """Noisy He 706 eV pattern, beam centre off axis by (+3.7, -2.1) px."""
    p = small_params(noise_seed=3, center=(3.7 * 80e-6, -2.1 * 80e-6), damping_alpha=2e-23)
    return synthesize(he706, rings, rl, geom, p), p


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":").rstrip("ab"))):
            terminalreporter.write_line(line)
