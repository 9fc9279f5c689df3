from pathlib import Path

import numpy as np
import pytest

from elastograv.config import load_config
from elastograv.core import DomainSpec, ElasticMedium, SourceModel
from elastograv.solver import simulate

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_INI = ROOT / "configs" / "default.ini"


@pytest.fixture(scope="session")
def cfg():
    return load_config(DEFAULT_INI)


@pytest.fixture(scope="session")
def medium():
    return ElasticMedium(2.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def src(cfg):
    return cfg.truth


@pytest.fixture(scope="session")
def small_domain():
    return DomainSpec(1.0, 1.2, 32)


@pytest.fixture(scope="session")
def traj(cfg):
    """Default-resolution run sampled at the configured times."""
    return simulate(cfg.medium, cfg.domain, cfg.truth, cfg.times, cfg.cfl)


@pytest.fixture(scope="session")
def coarse_traj(cfg):
    c = cfg.with_tier("coarse")
    return simulate(c.medium, c.domain, c.truth, c.times, c.cfl)


def random_trace_free(rng, norm=1.0):
    A = rng.standard_normal((3, 3))
    M = A + A.T
    M -= np.trace(M) / 3.0 * np.eye(3)
    return norm * M / np.linalg.norm(M)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_src(M, P=(0.05, -0.02, 0.03), d0=0.4):
    return SourceModel.create(np.asarray(M, dtype=float), P, d0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
