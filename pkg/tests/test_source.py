from dataclasses import replace

import numpy as np
import pytest

from noonproj.analysis import ScanCurve, fit_dips, infer_ea
from noonproj.errors import InvalidArgument, UnstableEstimate
from noonproj.source import (SourceConfig, accidental_fourfold, build_event, calibrate_jitter,
                             calibrate_sigma, effective_ea, fourfold_rate, inject_poisson_noise,
                             sample_offsets, scan_tv, triple_grams)
from noonproj.temporal import mu_for_beta

# the wings sit 7-12 sigma from the dip; their residual overlap biases E/A by < 1e-6
WINGS_TRUNCATION = 1e-5


def unit(**kw):
    return SourceConfig(sigma=1.0, **kw)


def analytic_ea(j):
    # <s^2> for the pair-overlap factor s = exp(-(tau1 - tau2)^2 / 8 sigma^2)
    return 1 / np.sqrt(1 + j * j)


# ---------------------------------------------------------------- events

def test_build_event_zero_delays():
    ev = build_event(unit(mu_spatial=0.9), 0.0, 0.0)
    assert [p.packet.center for p in ev.ensemble.photons] == [0.0, 0.0, 0.0]
    g = ev.ensemble.gram
    assert g[0, 1] == pytest.approx(1.0)          # H-H: no spatial factor
    assert g[0, 2] == pytest.approx(0.9) and g[1, 2] == pytest.approx(0.9)
    ev_all = build_event(unit(mu_spatial=0.9, mismatch="all"), 0.0, 0.0)
    assert np.allclose(ev_all.ensemble.gram[np.triu_indices(3, 1)], 0.9)


def test_build_event_separated_h():
    ev = build_event(unit(t_h=5.0), 0.0, 0.0)
    g = ev.ensemble.gram
    assert g[1, 2] == pytest.approx(1.0)
    assert g[0, 1] == pytest.approx(np.exp(-25 / 8))
    assert [p.origin for p in ev.ensemble.photons] == [1, 2, 2]


def test_gate_irrelevance():
    cfg = unit(t_h=0.3, t_v=-0.2, mu_spatial=0.8)
    ref = build_event(cfg, 0.0, 0.4)
    for tau1 in (-3.0, 0.7, 5.0):
        ev = build_event(cfg, tau1, 0.4)
        assert ev.trigger.packet.center == tau1
        assert len(ev.ensemble) == 3
        assert ev.trigger not in ev.ensemble.photons
        # the crystal-2 block never sees tau1; only H1's entries move with it
        assert ev.ensemble.gram[1, 2] == ref.ensemble.gram[1, 2]
    ev = build_event(cfg, 0.7, 0.4)
    assert np.allclose(triple_grams(cfg, np.array([[0.7, 0.4]]), cfg.t_v)[0], ev.ensemble.gram)


def test_same_crystal_photons_share_offset():
    ev = build_event(unit(t_v=2.0), 0.1, -0.6)
    c = [p.packet.center for p in ev.ensemble.photons]
    assert c[2] - c[1] == pytest.approx(2.0)


def test_jitter_distribution():
    cfg = unit(jitter_s=0.7, mc_samples=200_000, seed=3)
    off = sample_offsets(cfg)
    assert off.shape == (200_000, 2)
    assert np.allclose(off.var(axis=0), 0.49, rtol=0.01)
    assert np.allclose(off.mean(axis=0), 0.0, atol=0.01)
    assert abs(np.corrcoef(off.T)[0, 1]) < 0.01
    assert sample_offsets(unit()).shape == (1, 2)


# ---------------------------------------------------------------- rates

def test_fourfold_ideal_overlap_is_zero():
    r = fourfold_rate(unit())
    assert r.value < 1e-12 and r.stderr == 0.0


def test_fourfold_separated_h_half_dip():
    cfg = unit(t_h=50.0)
    far = fourfold_rate(replace(cfg, t_v=-100.0)).value
    assert fourfold_rate(cfg).value == pytest.approx(far / 2, rel=1e-12)


@pytest.mark.parametrize("j", [0.0, 0.5, 1.0])
def test_wings_ratio_is_one_plus_ea(j):
    cfg = unit(jitter_s=j, mc_samples=20000)
    scan = scan_tv(cfg, [-15.0, 15.0])
    ratio = scan.fourfold.y / scan.accidental.y
    ratio_se = scan.fourfold.yerr / scan.accidental.y
    assert np.all(np.abs(ratio - 1 - analytic_ea(j)) <= 5 * ratio_se + 1e-6)


def test_accidental_equals_fourfold_when_h1_distinguishable():
    cfg = unit(t_h=1e4)
    scan = scan_tv(cfg, np.linspace(-5, 5, 21))
    assert np.allclose(scan.fourfold.y, scan.accidental.y, rtol=1e-12, atol=0)


def test_accidental_examples():
    keys = ("AB", "CD", "AC", "BD", "AD", "BC")
    assert accidental_fourfold({k: 0.3 for k in keys}) == pytest.approx(3 * 0.09)
    assert accidental_fourfold({k: 0.3 for k in keys}, r0=2) == pytest.approx(3 * 0.09 / 2)
    zeros = dict(AB=0, CD=1, AC=1, BD=0, AD=0, BC=1)
    assert accidental_fourfold(zeros) == 0
    with pytest.raises(InvalidArgument):
        accidental_fourfold({k: 0.3 for k in keys}, r0=0)
    with pytest.raises(InvalidArgument):
        accidental_fourfold({"AB": 1})


# ---------------------------------------------------------------- scans

def test_scan_single_dip_at_zero():
    scan = scan_tv(unit(jitter_s=0.5, mc_samples=2000), np.linspace(-8, 8, 65))
    assert scan.fourfold.x[np.argmin(scan.fourfold.y)] == 0.0
    assert set(scan.two_fold) == {"AB", "AC", "BC"}


def test_scan_two_dips():
    cfg = unit(jitter_s=0.5, t_h=12.0, mc_samples=2000)
    fit = fit_dips(scan_tv(cfg, np.arange(-10, 22.01, 0.25)).fourfold, 2, init=[0, 12])
    centers = sorted(d.center for d in fit.dips)
    assert centers == pytest.approx([0.0, 12.0], abs=0.05)


def test_scan_flat_far_from_dips():
    cfg = unit(jitter_s=0.5, mc_samples=5000)
    scan = scan_tv(cfg, np.linspace(30, 40, 11))
    y, e = scan.fourfold.y, scan.fourfold.yerr
    assert np.all(np.abs(y - y.mean()) <= 3 * e.max() + 1e-15)


def test_scan_reproducible_across_workers():
    cfg = unit(jitter_s=0.8, t_h=3.0, mc_samples=3000, seed=99)
    grid = np.linspace(-6, 9, 31)
    a = scan_tv(cfg, grid, workers=1)
    b = scan_tv(cfg, grid, workers=4)
    assert np.array_equal(a.fourfold.y, b.fourfold.y)
    assert np.array_equal(a.fourfold.yerr, b.fourfold.yerr)
    assert np.array_equal(a.accidental.y, b.accidental.y)
    c = scan_tv(replace(cfg, seed=100), grid)
    assert not np.array_equal(a.fourfold.y, c.fourfold.y)


def test_scan_empty_grid():
    with pytest.raises(InvalidArgument):
        scan_tv(unit(), [])


def test_config_validation():
    for kw in (dict(sigma=0), dict(jitter_s=-1), dict(mu_spatial=1.1), dict(mc_samples=0),
               dict(mismatch="some")):
        with pytest.raises(InvalidArgument):
            SourceConfig(**kw)


# ---------------------------------------------------------------- E/A

def test_effective_ea_extremes():
    zero = effective_ea(unit(mc_samples=20000))
    assert abs(zero.value - 1.0) <= 2 * zero.stderr + WINGS_TRUNCATION
    assert zero.method == "wings"
    assert effective_ea(unit(jitter_s=20.0, mc_samples=20000)).value < 0.05


@pytest.mark.parametrize("j", [0.25, 0.5, 1.0, 2.0])
def test_effective_ea_matches_analytic_average(j):
    est = effective_ea(unit(jitter_s=j, mc_samples=20000))
    assert est.value == pytest.approx(analytic_ea(j), abs=3 * est.stderr + 2e-3)


def test_effective_ea_monotone():
    values = [effective_ea(unit(jitter_s=j, mc_samples=20000)).value
              for j in (0, 0.25, 0.5, 1, 2, 4)]
    assert np.all(np.diff(values) < 0)


def test_effective_ea_scale_free():
    a = effective_ea(unit(jitter_s=0.7, mc_samples=5000))
    b = effective_ea(unit(jitter_s=0.7, mc_samples=5000).scaled(52.0))
    assert a.value == pytest.approx(b.value, abs=1e-10)


def test_unstable_estimate():
    with pytest.raises(UnstableEstimate) as info:
        effective_ea(unit(jitter_s=1.0, mc_samples=50), max_se=1e-4)
    assert info.value.stderr > 1e-4
    assert 0 < info.value.value < 1.5


def test_calibrations():
    cfg = unit(mc_samples=20000)
    j = calibrate_jitter(cfg, 0.82)
    assert effective_ea(replace(cfg, jitter_s=j)).value == pytest.approx(0.82, abs=1e-4)
    assert calibrate_jitter(cfg, 1.0) == 0.0
    cal = calibrate_sigma(replace(cfg, jitter_s=j), 185.0)
    grid = np.arange(-600, 600.1, 25.0)
    fit = fit_dips(scan_tv(cal, grid).fourfold, 1)
    assert fit.dips[0].fwhh == pytest.approx(185.0, abs=1.0)
    assert cal.jitter_s / cal.sigma == pytest.approx(j, rel=1e-12)


def test_inference_routes_agree_on_one_dataset():
    beta, target = 0.92, 0.86
    mu = mu_for_beta(beta)
    base = unit(mu_spatial=mu, mc_samples=20000)
    j = calibrate_jitter(base, target)
    cfg3 = replace(base, jitter_s=j)
    cfg4 = replace(cfg3, t_h=12.0)
    wings = effective_ea(cfg3)
    scan3 = scan_tv(cfg3, np.arange(-12, 12.01, 0.25))
    scan4 = scan_tv(cfg4, np.arange(-12, 24.01, 0.25))
    v3 = fit_dips(scan3.fourfold, 1).dips[0].visibility
    dip2 = fit_dips(scan4.fourfold, 2, init=[0, 12]).dips[1].visibility
    routes = [wings.value, infer_ea(v3, beta, "v3"), infer_ea(dip2, beta, "dip2")]
    assert max(routes) - min(routes) <= 0.06
    for r in routes:
        assert r == pytest.approx(target, abs=0.03)


# ---------------------------------------------------------------- noise

def test_poisson_noise():
    curve = ScanCurve(np.arange(50.0), 1 + 0.5 * np.cos(np.arange(50.0) / 5))
    a = inject_poisson_noise(curve, 1e6, seed=4)
    b = inject_poisson_noise(curve, 1e6, seed=4)
    assert np.array_equal(a.y, b.y)
    assert np.allclose(a.y, curve.y, rtol=5e-3)
    assert np.all(a.yerr > 0)
    floored = inject_poisson_noise(curve, 1e6, floor=1e5, seed=4)
    assert np.allclose(floored.y, curve.y, rtol=1e-2)
    with pytest.raises(InvalidArgument):
        inject_poisson_noise(curve, 0)
