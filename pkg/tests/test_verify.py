import math

import numpy as np
import pytest

from conftest import curve_quantile_sample
from kernel_spectra import ensemble as en
from kernel_spectra import kernels as kn
from kernel_spectra import limitlaw as ll
from kernel_spectra import verify as vf

SQRT_2_PI = math.sqrt(2.0 / math.pi)


def quantile_spectrum(curve, n, p=10):
    lam = curve_quantile_sample(curve, n)
    cfg = en.EnsembleConfig(p=p, n=n, kernel=kn.sign_kernel(), seed=0)
    return en.SpectrumSample(eigenvalues=lam, config_echo=cfg)


class TestCdfSupDistance:
    def test_quantile_sample_metric_floor(self):
        params = ll.ModelParams(0.0, 1.0, 1.0)
        curve = ll.density_curve(params, ll.default_grid(params))
        n = 2000
        s = quantile_spectrum(curve, n)
        assert vf.cdf_sup_distance(s, curve) <= 1.0 / n + 1e-3

    def test_quantile_sample_with_atom(self):
        params = ll.ModelParams(1.0, 1.0, 0.5)
        curve = ll.density_curve(params, ll.default_grid(params))
        s = quantile_spectrum(curve, 2000)
        assert vf.cdf_sup_distance(s, curve) <= 2e-3

    def test_distinguishes_wrong_law(self):
        # semicircle quantiles against the M.P.(y=1) law differ grossly
        semi = ll.density_curve(ll.ModelParams(0.0, 1.0, 1.0),
                                ll.default_grid(ll.ModelParams(0.0, 1.0, 1.0)))
        s = quantile_spectrum(semi, 1000)
        mp = ll.density_curve(ll.ModelParams(1.0, 1.0, 1.0),
                              ll.default_grid(ll.ModelParams(1.0, 1.0, 1.0)))
        assert vf.cdf_sup_distance(s, mp) > 0.1

    def test_atom_mass_mismatch_detected(self):
        params = ll.ModelParams(1.0, 1.0, 0.5)
        curve = ll.density_curve(params, ll.default_grid(params))
        # sample with only 25% mass at the atom instead of 50%
        n = 2000
        bulk_curve = ll.density_curve(
            ll.ModelParams(1.0, 1.0, 0.5), ll.default_grid(params))
        lam = curve_quantile_sample(curve, n).copy()
        at_atom = np.isclose(lam, -1.0)
        idx = np.flatnonzero(at_atom)[: int(0.25 * n)]
        lam[idx] = 1.0  # move a quarter of the total mass into the bulk
        s = en.SpectrumSample(eigenvalues=np.sort(lam),
                              config_echo=en.EnsembleConfig(p=10, n=n, kernel=kn.sign_kernel(), seed=0))
        assert vf.cdf_sup_distance(s, curve) >= 0.2

    def test_coarse_grid_rejected(self):
        params = ll.ModelParams(0.0, 1.0, 1.0)
        coarse = ll.DensityCurve(
            grid=np.linspace(-0.5, 0.5, 11),
            values=np.full(11, ll.density_semicircle(0.0, 1.0, 1.0)),
            atoms=(), params=params, normalization_error=0.0,
        )
        s = quantile_spectrum(ll.density_curve(params, ll.default_grid(params)), 100)
        with pytest.raises(ValueError):
            vf.cdf_sup_distance(s, coarse)

    def test_monotone_grid_refinement(self):
        params = ll.ModelParams(0.5, 1.0, 1.0)
        sample = en.spectrum_sample(en.EnsembleConfig(p=150, n=300, kernel=kn.sign_kernel(), seed=2))
        d1 = vf.cdf_sup_distance(sample, ll.density_curve(params, ll.default_grid(params, points=4001)))
        d2 = vf.cdf_sup_distance(sample, ll.density_curve(params, ll.default_grid(params, points=8001)))
        assert abs(d1 - d2) <= 1e-3


class TestHistL1:
    def test_self_distance_small(self):
        params = ll.ModelParams(0.0, 1.0, 1.0)
        curve = ll.density_curve(params, ll.default_grid(params))
        s = quantile_spectrum(curve, 4000)
        assert vf.hist_l1(s, curve, bins=40) <= 0.02

    def test_mismatched_gamma_is_larger(self):
        kernel = kn.sign_kernel()
        cfg = en.EnsembleConfig(p=150, n=300, kernel=kernel, seed=6)
        sample = en.spectrum_sample(cfg)
        lc = kn.limit_constants(kernel)
        good = ll.ModelParams(lc.a, lc.nu, cfg.gamma)
        bad = ll.ModelParams(lc.a, lc.nu, cfg.gamma * 2.5)
        d_good = vf.hist_l1(sample, ll.density_curve(good, ll.default_grid(good)))
        d_bad = vf.hist_l1(sample, ll.density_curve(bad, ll.default_grid(bad)))
        assert d_bad > d_good


class TestStieltjesPointCheck:
    def test_quantile_sample_error_floor(self):
        params = ll.ModelParams(0.0, 1.0, 1.0)
        curve = ll.density_curve(params, ll.default_grid(params))
        s = quantile_spectrum(curve, 4000)
        errs = vf.stieltjes_point_check(s, params, [1j, 2j])
        assert all(err <= 2e-3 for _, err in errs)

    def test_smoothing_improves_with_height(self):
        # median error over seeds is smaller at z = 2i than at z = i
        kernel = kn.sign_kernel()
        params = ll.ModelParams(SQRT_2_PI, 1.0, 0.5)
        errs_i, errs_2i = [], []
        for seed in range(20):
            cfg = en.EnsembleConfig(p=100, n=200, kernel=kernel, seed=seed)
            s = en.spectrum_sample(cfg)
            out = dict(vf.stieltjes_point_check(s, params, [1j, 2j]))
            errs_i.append(out[1j])
            errs_2i.append(out[2j])
        assert np.median(errs_2i) < np.median(errs_i)

    def test_requires_offset_from_axis(self):
        params = ll.ModelParams(0.0, 1.0, 1.0)
        s = quantile_spectrum(ll.density_curve(params, ll.default_grid(params)), 100)
        with pytest.raises(ValueError):
            vf.stieltjes_point_check(s, params, [0.05j])


class TestCompare:
    def test_matched_sign_kernel_passes(self):
        kernel = kn.sign_kernel()
        cfg = en.EnsembleConfig(p=200, n=400, kernel=kernel, seed=3)
        sample = en.spectrum_sample(cfg)
        lc = kn.limit_constants(kernel)
        params = ll.ModelParams(lc.a, lc.nu, cfg.gamma)
        curve = ll.density_curve(params, ll.default_grid(params))
        report = vf.compare(sample, curve, params)
        assert report.passed
        assert report.moment_errors[0] <= 1e-12  # zero diagonal: exact zero mean
        payload = report.to_json_dict()
        assert set(payload) == {"config", "metrics", "per_seed", "tolerances", "pass"}
        assert payload["pass"] is True

    def test_mismatched_gamma_fails(self):
        kernel = kn.sign_kernel()
        cfg = en.EnsembleConfig(p=200, n=400, kernel=kernel, seed=3)
        sample = en.spectrum_sample(cfg)
        lc = kn.limit_constants(kernel)
        wrong = ll.ModelParams(lc.a, lc.nu, cfg.gamma * 4)
        curve = ll.density_curve(wrong, ll.default_grid(wrong))
        report = vf.compare(sample, curve, wrong)
        assert not report.passed


class TestConcentrationSweep:
    def test_requires_twenty_trials(self):
        base = en.EnsembleConfig(p=40, n=40, kernel=kn.sign_kernel(), seed=5)
        with pytest.raises(ValueError):
            vf.concentration_sweep(base, 1j, sizes=(40,), trials=10)

    def test_deterministic_kernel_zero_std(self):
        base = en.EnsembleConfig(p=40, n=40, kernel=kn.linear_kernel(0.0), seed=5)
        res = vf.concentration_sweep(base, 1j, sizes=(40, 80), trials=20)
        assert res.stds == (0.0, 0.0)
        assert math.isnan(res.slope)

    def test_negative_slope_small_sizes(self):
        base = en.EnsembleConfig(p=40, n=40, kernel=kn.sign_kernel(), seed=5)
        res = vf.concentration_sweep(base, 1j, sizes=(40, 80, 160), trials=20)
        assert res.slope < -0.4
        assert list(res.trial_ids) == [40, 80, 160]

    def test_thread_count_invariance(self):
        base = en.EnsembleConfig(p=30, n=30, kernel=kn.sign_kernel(), seed=8)
        r1 = vf.concentration_sweep(base, 1j, sizes=(30, 60), trials=20, threads=1)
        r2 = vf.concentration_sweep(base, 1j, sizes=(30, 60), trials=20, threads=4)
        assert r1.stds == r2.stds

    def test_bootstrap_stability_under_doubling(self, rng):
        # slope with 20 trials lies inside the bootstrap CI built from 40 trials
        base = en.EnsembleConfig(p=40, n=40, kernel=kn.sign_kernel(), seed=5)
        sizes = (40, 80, 160)
        r20 = vf.concentration_sweep(base, 1j, sizes=sizes, trials=20)
        r40 = vf.concentration_sweep(base, 1j, sizes=sizes, trials=40)
        # rebuild per-trial m values for the 40-trial sweep to bootstrap
        gamma = 1.0
        per_size = []
        for s_idx, n in enumerate(sizes):
            cfg = en.EnsembleConfig(p=n, n=n, kernel=kn.sign_kernel(), seed=5)
            ms = [en.empirical_stieltjes(en.spectrum_sample(cfg, trial=s_idx * 40 + t), 1j)
                  for t in range(40)]
            per_size.append(np.array(ms))
        slopes = []
        for _ in range(200):
            stds = []
            for ms in per_size:
                pick = rng.integers(0, 40, 40)
                sub = ms[pick]
                stds.append(np.sqrt(np.mean(np.abs(sub - sub.mean()) ** 2)))
            slopes.append(np.polyfit(np.log(sizes), np.log(stds), 1)[0])
        lo, hi = np.quantile(slopes, [0.005, 0.995])
        assert lo <= r20.slope <= hi
        assert lo <= r40.slope <= hi


class TestNormGrowthSweep:
    def test_ratio_structure(self):
        res = vf.norm_growth_sweep(2, 1.0, sizes=(50, 100, 200), trials=5, seed=9)
        assert len(res.mean_spectral_norm) == 3
        assert res.ratios == tuple(
            m / n ** 0.25 for m, n in zip(res.mean_spectral_norm, res.sizes))

    def test_linear_kernel_obeys_mp_edge_bound(self):
        res = vf.norm_growth_sweep(1, 1.0, sizes=(400,), trials=5, seed=2)
        bound = vf.mp_edge_bound(1.0)
        assert all(s < bound for s in res.per_size_norms[400])

    def test_thread_invariance(self):
        r1 = vf.norm_growth_sweep(2, 1.0, sizes=(50, 100), trials=4, seed=3, threads=1)
        r2 = vf.norm_growth_sweep(2, 1.0, sizes=(50, 100), trials=4, seed=3, threads=3)
        assert r1.mean_spectral_norm == r2.mean_spectral_norm
