import numpy as np
import pytest

from thzmimo.beamspace import build_dictionary, design_sounding, make_grid, sensing_operator
from thzmimo.channel import ChannelConfig


@pytest.fixture(scope="session")
def system2():
    """System-II dictionaries, minimum-coherence sounding design and unit-noise operator."""
    cfg = ChannelConfig()
    tx, rx = cfg.geometries()
    A_T = build_dictionary(make_grid(20), tx)
    A_R = build_dictionary(make_grid(20), rx)
    design = design_sounding(16, 16, 4, 12, 12, mixing="dft")
    op = sensing_operator(design, A_T, A_R, 1.0)
    return {"cfg": cfg, "A_T": A_T, "A_R": A_R, "design": design, "op": op,
            "k_abs": cfg.absorption()}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
