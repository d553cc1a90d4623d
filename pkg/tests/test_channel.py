import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from atfrelay import channel as ch
from atfrelay import distributions as dist
from atfrelay.validation import _exact_eh_samples, reference_config


def test_path_loss_values():
    assert ch.path_loss_gain(0.0, 2.0) == 1.0
    assert ch.path_loss_gain(6.0, 2.0) == pytest.approx(1 / 37, rel=1e-15)
    assert ch.path_loss_gain(20.0, 3.0) == pytest.approx(1 / 8001, rel=1e-15)
    assert ch.path_loss_gain(12.0, 2.0) == pytest.approx(1 / 145, rel=1e-15)
    assert ch.path_loss_gain(12.0, 4.0) == pytest.approx(1 / 20737, rel=1e-15)


def test_reference_gains():
    cfg = reference_config()
    assert cfg.source_gain == pytest.approx(1 / 37)
    assert cfg.destination_gain == pytest.approx(1 / 197)
    np.testing.assert_allclose(cfg.interferer_gains, (1 / 145, 1 / 170, 1 / 197))


def test_no_interferers_topology():
    base = ch.LinkBudget(source_power=1.0)
    cfg = ch.config_from_topology(base, ch.Topology(d_ir=()))
    assert cfg.interferer_gains == () and cfg.num_interferers == 0


def test_geometry_errors():
    with pytest.raises(ch.GeometryError):
        ch.Topology(d_sd=5.0, d_sr=6.0)
    with pytest.raises(ch.GeometryError):
        ch.config_from_topology(ch.LinkBudget(1.0, (1.0,)), ch.Topology())


def test_dbm_round_trip():
    for dbm in (-80.0, 0.0, 17.3, 50.0):
        assert ch.watts_to_dbm(ch.dbm_to_watts(dbm)) == pytest.approx(dbm, rel=1e-12, abs=1e-12)
    assert ch.dbm_to_watts(30.0) == pytest.approx(1.0)


def _draw(h0, g0=None, h_int=()):
    h0 = np.asarray(h0, dtype=complex)
    g0 = np.ones_like(h0) if g0 is None else np.asarray(g0, dtype=complex)
    h_int = np.asarray(h_int, dtype=complex).reshape(len(h_int), h0.shape[-1])
    return ch.ChannelDraw(h0=h0, g0=g0, h_int=h_int)


def test_energy_examples():
    cfg = ch.SystemConfig(source_power=2.0, efficiency=1.0, antennas=1)
    assert ch.harvested_energy_eh(_draw([1.0]), cfg) == pytest.approx(1.0)
    assert ch.harvested_energy_eh(_draw([0.0]), cfg) == 0.0
    assert ch.harvested_energy_cci_only(_draw([1.0]), cfg) == 0.0
    cfg1 = ch.SystemConfig(source_power=1.0, interferer_powers=(2.0,), interferer_gains=(0.1,),
                           efficiency=0.5, antennas=1)
    assert ch.harvested_energy_cci_only(_draw([0.3], h_int=[[1.0]]), cfg1) == pytest.approx(0.5)


def test_energy_term_by_term():
    cfg = reference_config(33.0, 27.0)
    d = ch.draw_channel(dist.RngStream(8, 0), cfg)
    eta = cfg.efficiency
    ref = 0.5 * eta * cfg.source_power * sum(abs(x) ** 2 for x in d.h0)
    for p, h in zip(cfg.interferer_powers, d.h_int):
        ref += eta * p * sum(abs(x) ** 2 for x in h)
    assert ch.harvested_energy_eh(d, cfg) == pytest.approx(ref, rel=1e-12)


def test_energy_identity_batch():
    # the second-half interference energy appears in both modes, the first-half one only in EH mode
    cfg = reference_config()
    d = ch.draw_channel(dist.RngStream(1, 0), cfg, 1000)
    e1, e2 = ch.harvested_energy_eh(d, cfg), ch.harvested_energy_cci_only(d, cfg)
    source = 0.5 * cfg.efficiency * cfg.source_power * np.sum(np.abs(d.h0) ** 2, axis=-1)
    assert np.all(e2 <= e1)
    np.testing.assert_allclose(e1 - e2, source + e2, rtol=1e-12)


def test_mrc_direct_combining_oracle():
    cfg = reference_config(25.0, 30.0)
    d = ch.draw_channel(dist.RngStream(2, 0), cfg)
    w = np.conj(d.h0) / np.linalg.norm(d.h0)
    signal = cfg.source_power * abs(w @ d.h0) ** 2
    interference = sum(p * abs(w @ h) ** 2 for p, h in zip(cfg.interferer_powers, d.h_int))
    noise = cfg.noise_relay * np.linalg.norm(w) ** 2
    assert ch.mrc_sinr(d, cfg) == pytest.approx(signal / (interference + noise), rel=1e-12)


def test_mrc_reductions():
    cfg0 = ch.SystemConfig(source_power=0.3, antennas=2, noise_relay=0.01)
    d = _draw([0.5 + 0.5j, 1.0])
    assert ch.mrc_sinr(d, cfg0) == pytest.approx(0.3 * 1.5 / 0.01)
    cfg1 = ch.SystemConfig(source_power=0.3, antennas=1, interferer_powers=(0.2, 0.1),
                           interferer_gains=(1.0, 1.0), noise_relay=0.01)
    d1 = _draw([0.7j], h_int=[[0.4], [1.0 - 1.0j]])
    ref = 0.3 * 0.49 / (0.2 * 0.16 + 0.1 * 2.0 + 0.01)
    assert ch.mrc_sinr(d1, cfg1) == pytest.approx(ref, rel=1e-12)


def test_degenerate_channels():
    cfg = ch.SystemConfig(source_power=1.0, antennas=2)
    with pytest.raises(ch.DegenerateChannel):
        ch.mrc_sinr(_draw([0, 0]), cfg)
    with pytest.raises(ch.DegenerateChannel):
        ch.required_relay_power(_draw([1, 0], g0=[0, 0]), cfg)


def test_required_power_example_and_snr():
    cfg = ch.SystemConfig(source_power=1.0, antennas=1, rate=1.0, noise_dest=1.0)
    d = _draw([1.0], g0=[math.sqrt(3.0)])
    assert cfg.threshold == 3.0
    assert ch.required_relay_power(d, cfg) == pytest.approx(1.0)
    big = reference_config()
    draws = ch.draw_channel(dist.RngStream(3, 0), big, 2000)
    p = ch.required_relay_power(draws, big)
    np.testing.assert_allclose(ch.destination_snr(draws, big, p), big.threshold, rtol=1e-12)


@given(st.floats(0.1, 100.0), st.floats(1e-3, 1e3))
@settings(max_examples=50, deadline=None)
def test_sinr_ratio_invariance(ps, scale):
    cfg = reference_config()
    cfg = replace(cfg, source_power=ps * 1e-3)
    d = ch.draw_channel(dist.RngStream(7, 0), cfg)
    scaled = replace(cfg, source_power=cfg.source_power * scale,
                     interferer_powers=tuple(p * scale for p in cfg.interferer_powers),
                     noise_relay=cfg.noise_relay * scale)
    assert ch.mrc_sinr(d, scaled) == pytest.approx(ch.mrc_sinr(d, cfg), rel=1e-12)


def test_cdf_required_power_reductions():
    cfg = ch.SystemConfig(source_power=1.0, antennas=1, destination_gain=0.2, noise_dest=0.5)
    for x in (0.1, 1.0, 30.0):
        assert ch.cdf_required_power(x, cfg) == pytest.approx(math.exp(-3 * 0.5 / (0.2 * x)), rel=1e-12)
    assert ch.cdf_required_power(0.0, cfg) == 0.0
    assert ch.cdf_required_power(-1.0, cfg) == 0.0
    assert ch.cdf_required_power(1e300, reference_config()) == pytest.approx(1.0)


def test_cdf_required_power_monotone():
    cfg = reference_config()
    grid = np.logspace(-12, 2, 1000)
    f = ch.cdf_required_power(grid, cfg)
    assert np.all((f >= 0) & (f <= 1)) and np.all(np.diff(f) >= 0)


def test_cdf_required_power_empirical():
    cfg = reference_config()
    n = 10**7
    g2 = dist.sample_gamma(dist.RngStream(11, 0), cfg.antennas, cfg.antennas * cfg.destination_gain, n)
    p_r = np.sort(cfg.threshold * cfg.noise_dest / g2)
    for x in np.quantile(p_r, np.linspace(0.05, 0.95, 10)):
        f = ch.cdf_required_power(x, cfg)
        emp = np.searchsorted(p_r, x, side="right") / n
        assert abs(emp - f) <= 3 * math.sqrt(f * (1 - f) / n)


def test_gamma_fit_without_interference_is_exact():
    cfg = reference_config(interferer_dbm=None)
    p = ch.eh_energy_gamma_params(cfg)
    assert p.shape == cfg.nakagami_m * cfg.antennas
    assert p.mean == pytest.approx(0.5 * cfg.efficiency * cfg.source_power * cfg.antennas * cfg.source_gain)
    z = ch.cci_energy_gamma_params(cfg)
    assert isinstance(z, dist.ZeroDistribution)
    assert z.cdf(0.0) == 0.0 and z.cdf(1e-30) == 1.0


def test_gamma_fit_mean_and_variance():
    cfg = reference_config()
    n, eta = cfg.antennas, cfg.efficiency
    p = ch.eh_energy_gamma_params(cfg)
    mean = 0.5 * eta * cfg.source_power * n * cfg.source_gain + eta * sum(
        pw * n * g for pw, g in zip(cfg.interferer_powers, cfg.interferer_gains))
    var = (0.5 * eta * cfg.source_power * cfg.source_gain) ** 2 * n / cfg.nakagami_m + sum(
        (eta * pw * g) ** 2 * n for pw, g in zip(cfg.interferer_powers, cfg.interferer_gains))
    assert p.mean == pytest.approx(mean, rel=1e-12)
    assert p.variance == pytest.approx(var, rel=1e-12)


def test_gamma_fit_ks_distance():
    cfg = reference_config()
    e = _exact_eh_samples(cfg, dist.RngStream(12, 0), 10**7)
    p = ch.eh_energy_gamma_params(cfg)
    d = stats.kstest(e, stats.gamma(a=p.shape, scale=p.mean / p.shape).cdf).statistic
    print(f"gamma-fit KS distance {d:.4g}")
    assert d <= 0.02


def test_config_validation():
    with pytest.raises(ValueError):
        ch.SystemConfig(source_power=-1.0)
    with pytest.raises(ValueError):
        ch.SystemConfig(source_power=1.0, nakagami_m=1.5)
    with pytest.raises(ValueError):
        ch.SystemConfig(source_power=1.0, interferer_powers=(1.0,))
