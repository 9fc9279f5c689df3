import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elastograv.core import DomainSpec, SourceModel
from elastograv.harmonics import basis_all, basis_h2
from elastograv.inversion import functional_closed_form
from elastograv.solver import WaveState
from elastograv.verify import (
    OracleReport,
    bump,
    duhamel_check,
    functional_oracle,
    lemma_q_report,
    mollifier_moments,
    poisson_residual,
    random_bumps,
    weak_poisson_sides,
    z_growth_slope,
    z_volume_oracle,
)


def test_oracle_report_modes():
    assert OracleReport("a", 1.0, 1.0005, 1e-3).passed
    assert not OracleReport("a", 1.0, 1.1, 1e-3, relative=True).passed
    assert OracleReport("b", 0.9, 1.0, 0.0, bound=True).passed
    assert not OracleReport("b", 1.1, 1.0, 0.0, bound=True).passed
    zero = OracleReport("c", 0.0, 0.0, 0.0, relative=True)
    assert zero.rel_err == 0.0 and zero.passed
    assert math.isinf(OracleReport("c", 1.0, 0.0, 1.0, relative=True).rel_err)
    row = OracleReport("d", 1.0, 2.0, 0.5, meta={"resolution": "n=4"}).row()
    assert row["abs_err"] == 1.0 and row["pass"] is False and row["resolution"] == "n=4"


@pytest.mark.parametrize("d0", [0.2, 0.4, 1.0])
def test_lemma_q_report_passes(d0):
    reps = lemma_q_report(d0)
    assert len(reps) == 19
    assert all(r.passed for r in reps), [r.row() for r in reps if not r.passed]


def test_lemma_q_diagonal_second_moments():
    mom = mollifier_moments(0.4)
    for i in range(3):
        assert mom[(i, i)] == pytest.approx(-1.0, abs=1e-10)
    assert abs(mom[(0, 1)]) < 1e-12 and abs(mom[(0, 0, 1)]) < 1e-12


def test_midpoint_self_convergence():
    errs = []
    for n in (32, 64, 128):
        errs.append(abs(mollifier_moments(0.4, n, rule="midpoint")[(0, 0)] + 1.0))
    assert errs[0] / errs[1] >= 4 and errs[1] / errs[2] >= 4


def test_unknown_radial_rule():
    with pytest.raises(ValueError):
        mollifier_moments(0.4, 8, rule="simpson")


@pytest.mark.parametrize("phi", basis_all(), ids=lambda p: p.name)
def test_functional_oracle_matches_closed_form(src, phi):
    val, warn = functional_oracle(src, phi, src.d0 / 40)
    ref = functional_closed_form(src.M, src.position, phi)
    assert not warn
    assert val == pytest.approx(ref, rel=1e-4, abs=1e-12)


def test_functional_oracle_zero_cases(src):
    zero = SourceModel((0.0,) * 6, src.P, src.d0)
    for phi in basis_all():
        assert functional_oracle(zero, phi, src.d0 / 20)[0] == 0.0
    # a degree-one potential has a constant gradient, and the source field integrates to zero
    from elastograv.harmonics import X1
    val, _ = functional_oracle(src, X1, src.d0 / 40)
    assert abs(val) < 1e-10


def test_functional_oracle_warns_when_coarse(src):
    _, warn = functional_oracle(src, basis_h2()[0], src.d0 / 10)
    assert warn and "under-resolved" in warn[0]


def test_z_volume_oracle_zero_state(cfg):
    s = WaveState.zeros(cfg.domain)
    assert z_volume_oracle(s, cfg.medium, basis_h2()[0]) == 0.0


def test_z_grows_quadratically(traj, cfg):
    early = [s for s in traj.snapshots if 0.2 * cfg.t1 <= s.t <= cfg.t1 * (1 + 1e-9)]
    assert len(early) >= 2
    for phi in basis_all():
        assert z_growth_slope(early, cfg.medium, phi) == pytest.approx(2.0, abs=0.05)


def test_z_is_half_t_squared_times_functional(traj, cfg):
    s = traj.at(cfg.t1)
    for phi in basis_all():
        G = functional_closed_form(cfg.truth.M, cfg.truth.position, phi)
        assert z_volume_oracle(s, cfg.medium, phi) == pytest.approx(0.5 * cfg.t1**2 * G, rel=2e-2)


def test_duhamel(cfg):
    c = cfg.with_tier("coarse")
    rep = duhamel_check(c.medium, c.domain, c.truth, c.t1, c.cfl)
    assert rep.passed and rep.value < 1e-12
    assert rep.meta["velocity_init"] == "f/rho0"


def test_duhamel_zero_source(medium):
    z = SourceModel((0.0,) * 6, (0.0, 0.0, 0.0), 0.4)
    rep = duhamel_check(medium, DomainSpec(1.0, 1.2, 24), z, 0.02)
    assert rep.value == 0.0 and rep.passed


@given(x=st.tuples(*[st.floats(-1, 1)] * 3), r=st.floats(0.2, 1.0))
@settings(max_examples=40)
def test_bump_derivatives(x, r):
    c = np.array([0.1, -0.2, 0.05])
    psi, grad, lap = bump(c, r)
    x = np.array(x)
    eps = 1e-5
    fd = np.array([(psi(x + eps * e) - psi(x - eps * e)) / (2 * eps) for e in np.eye(3)])
    assert np.allclose(grad(x), fd, atol=1e-6 / r**2)
    if np.linalg.norm(x - c) >= r:
        assert psi(x) == 0.0 and np.all(grad(x) == 0.0) and lap(x) == 0.0


def test_bump_laplacian_fd():
    c = np.zeros(3)
    psi, _, lap = bump(c, 0.5)
    x = np.array([0.1, 0.2, -0.05])
    eps = 1e-4
    fd = sum(psi(x + eps * e) - 2 * psi(x) + psi(x - eps * e) for e in np.eye(3)) / eps**2
    assert fd == pytest.approx(lap(x), rel=1e-5)


def test_random_bumps_reproducible(src):
    a, b = random_bumps(src, 4, seed=3), random_bumps(src, 4, seed=3)
    assert all(np.array_equal(p[0], q[0]) and p[1] == q[1] for p, q in zip(a, b))
    assert all(0.35 <= r <= 0.65 for _, r in a)
    assert any(np.linalg.norm(c) + r > 1.0 for c, r in random_bumps(src, 8, seed=0))


def test_weak_poisson_zero_state(cfg):
    lhs, rhs = weak_poisson_sides(WaveState.zeros(cfg.domain), cfg.medium, (0.0, 0.0, 0.0), 0.5)
    assert lhs == 0.0 and rhs == 0.0


def test_poisson_residual_and_refinement(traj, coarse_traj, cfg):
    bumps = random_bumps(cfg.truth, 5, seed=cfg.seed)
    fine = poisson_residual(traj.at(cfg.t1), cfg.medium, bumps)
    coarse = poisson_residual(coarse_traj.at(cfg.t1), cfg.medium, bumps)
    assert fine.passed, fine.value
    assert fine.value < coarse.value
    assert len(fine.meta["lhs"]) == 5
