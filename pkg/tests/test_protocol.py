import math

import numpy as np
import pytest

from amlattice import protocol as P
from amlattice.effective import EffectiveDispersion, group_velocity
from amlattice.units import reference_config

TB = P.EnsembleSpec(backend="tb", sigma0_sites=2.0)


@pytest.fixture(scope="module")
def cfg():
    return reference_config(11.2, 1, 0.23)


def test_ensemble_members_and_weights():
    spec = P.EnsembleSpec(loading="packet", n_k=8, k_width=2.0, sigma0_sites=1.0)
    ens = P.build_ensemble(spec)
    assert len(ens.states) == 8
    assert ens.n_members == 8 * len(ens.offsets) == len(ens.members)
    assert sum(w for _, w in ens.members) == pytest.approx(1.0)
    # midpoints of the zone are symmetric, so the mean group velocity vanishes
    v = group_velocity(EffectiveDispersion(1.0, 1), ens.k)
    assert ens.k_weights @ v == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError, match="n_k"):
        P.EnsembleSpec(loading="packet", n_k=4)
    single = P.build_ensemble(P.EnsembleSpec(loading="packet", k_width=0.0, sigma0_sites=0))
    assert single.n_members == 1


def test_jittered_grid_is_seeded():
    a, _ = P.k_grid(8, 0.0, 2.0, seed=3, jitter=True)
    b, _ = P.k_grid(8, 0.0, 2.0, seed=3, jitter=True)
    c, _ = P.k_grid(8, 0.0, 2.0, seed=4, jitter=True)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    strata = np.floor((a + 1) / 0.25)
    np.testing.assert_array_equal(strata, np.arange(8))


def test_pool_matches_explicit_mixture(rng):
    mean = rng.normal(size=(3, 4))
    var = rng.random((3, 4))
    kw = np.array([0.2, 0.5, 0.3])
    off, ow = P.site_offsets(1.5)
    m, v = P.pool(mean, var, kw, off, ow)
    w = np.outer(kw, ow).ravel()
    mu = (mean[:, None, :] + off[None, :, None]).reshape(-1, 4)
    vv = np.repeat(var, len(off), axis=0)
    em = w @ mu
    np.testing.assert_allclose(m, em)
    np.testing.assert_allclose(v, w @ (vv + mu**2) - em**2)


def test_box_for_is_power_of_two():
    assert P.box_for(4, 0) == 64
    b = P.box_for(4, 100, ballistic=True)
    assert b & (b - 1) == 0 and b / 2 > 104


def test_tb_echo_refocuses(cfg):
    tb = cfg.bloch_period
    t_fr = np.array([0.0, 0.25, 0.5, 1.0]) * tb
    r = P.run_echo_scan(cfg, 1, 0.23, 5 * tb, t_fr, TB)
    s0 = r.summary["sigma_initial"]
    assert r.mean[2] == pytest.approx(s0, abs=1e-9)
    assert r.columns["fidelity"][2] == pytest.approx(1.0, abs=1e-10)
    # no freezing and a full period double the spread
    assert r.mean[0] > 1.5 * r.summary["sigma_after_burst1"]
    assert r.mean[3] == pytest.approx(r.mean[0], rel=1e-9)


def test_echo_symmetric_about_half_period(cfg):
    tb = cfg.bloch_period
    d = np.array([0.1, 0.2])
    r = P.run_echo_scan(cfg, 1, 0.23, 5 * tb, np.concatenate([0.5 - d, 0.5 + d]) * tb, TB)
    np.testing.assert_allclose(r.mean[:2], r.mean[2:][::-1], rtol=1e-9)


def test_echo_rejects_short_bursts(cfg):
    with pytest.raises(ValueError, match="5 Bloch"):
        P.run_echo_scan(cfg, 1, 0.2, 2 * cfg.bloch_period, [0.0], TB)


def test_burst_phase_scan_sign_flip(cfg):
    tb = cfg.bloch_period
    spec = P.EnsembleSpec(backend="tb", loading="packet", n_k=8, k_width=0.1, sigma0_sites=0)
    r = P.run_burst_phase_scan(cfg, 1, 0.23, 2 * tb, [0.0, 0.5 * tb], spec)
    assert r.mean[0] == pytest.approx(-r.mean[1], rel=1e-6)
    assert abs(r.mean[0]) > 1.0
    wide = P.EnsembleSpec(backend="tb", loading="packet", n_k=8, k_width=2.0)
    with pytest.raises(ValueError, match="momentum RMS"):
        P.run_burst_phase_scan(cfg, 1, 0.23, 2 * tb, [0.0], wide)


def test_mirror_reverses_and_control_does_not():
    cfg = reference_config(14.0, 1, 0.33, band=2)
    tb = cfg.bloch_period
    spec = P.EnsembleSpec(backend="tb", band=2, loading="packet", k_width=0.0, sigma0_sites=0)
    r = P.run_mirror(cfg, spec, burst_duration=5 * tb)
    s = r.summary
    assert s["speed_ratio"] == pytest.approx(-1.0, abs=1e-6)
    assert s["sigma_ratio"] == pytest.approx(1.0, abs=1e-9)
    c = P.run_mirror(cfg, spec, burst_duration=5 * tb, t_fr=tb).summary
    assert c["speed_ratio"] == pytest.approx(1.0, abs=1e-6)


def test_alpha_scan_matches_rms_speed(cfg10):
    r = P.run_alpha_scan(cfg10, 1, [0.0, 0.1, 0.2, 0.3], 10 * cfg10.bloch_period, TB)
    assert r.mean[0] == pytest.approx(0.0, abs=1e-8)
    np.testing.assert_allclose(r.mean[1:], r.columns["oracle"][1:], rtol=1e-10)
    assert r.summary["slope_ratio"] == pytest.approx(1.0, rel=1e-10)


def test_tdse_runs_are_deterministic_across_jobs(cfg):
    tb = cfg.bloch_period
    spec = P.EnsembleSpec(backend="tdse", loading="packet", n_k=16, k_width=0.1, packet_dk=0.1,
                          sigma0_sites=0)
    kw = dict(box_sites=64)
    prog = [0.0, 0.5 * tb]
    a = P.run_burst_phase_scan(cfg, 1, 0.23, tb, prog, spec, **kw)
    b = P.run_burst_phase_scan(cfg, 1, 0.23, tb, prog, spec, jobs=2, **kw)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.spread, b.spread)


def test_numerical_failure_names_scan_point(cfg):
    tb = cfg.bloch_period
    with pytest.raises(P.ProtocolError, match="alpha=0.9"):
        P.run_alpha_scan(cfg, 1, [0.9], 6 * tb, P.EnsembleSpec(backend="tdse"),
                         box_sites=64)
