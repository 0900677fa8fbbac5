"""Quantitative empirical-vs-theory comparison and paper-property sweeps.

The CDF distance is Kolmogorov-Smirnov-style with explicit atom handling:
a theory point mass smears, at finite p, into an eigenvalue cluster of
width ~p^(-1/2) straddling the atom location, so eigenvalues inside a
window around each atom are assigned to it and the window contributes
|empirical mass - atom mass| instead of a pointwise CDF deviation.  Without
atoms this reduces to the plain two-sided KS statistic.

Sweeps fan trials out to a thread pool; every trial is a pure function of
(base seed, trial index) via the counter-based generator, so results are
independent of scheduling and thread count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ensemble import EnsembleConfig, SpectrumSample, empirical_stieltjes, esd_histogram, spectrum_sample
from .kernels import adapted_hermite_kernel
from .limitlaw import DensityCurve, ModelParams, solve_m


def _run_indexed(tasks, threads: int):
    if threads <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda task: task(), tasks))


# ---------------------------------------------------------------------------
# Distribution distances


def _atom_windows(curve: DensityCurve, halfwidth_frac: float = 0.75):
    """Capture window around each atom: a fraction of the gap to the nearest
    positive-density point or other atom."""
    if not curve.atoms:
        return ()
    support_pts = curve.grid[curve.values > 1e-12]
    span = float(curve.grid[-1] - curve.grid[0])
    windows = []
    for loc, _ in curve.atoms:
        gaps = []
        if support_pts.size:
            gaps.append(float(np.min(np.abs(support_pts - loc))))
        for other, _ in curve.atoms:
            if other != loc:
                gaps.append(abs(other - loc) / 2.0)
        h = halfwidth_frac * min(gaps) if gaps else 0.05 * span
        windows.append((loc - h, loc + h))
    return tuple(windows)


def _check_curve_normalized(curve: DensityCurve):
    gap = abs(curve.grid_mass - 1.0)
    if gap > 2.0 * curve.normalization_tol:
        raise ValueError(
            f"curve grid mass off by {gap:.3e}; grid too coarse or support not covered"
        )


def cdf_sup_distance(sample: SpectrumSample, curve: DensityCurve) -> float:
    """Sup-distance between the empirical CDF and the theory CDF.

    Atoms are handled by mass matching inside their capture windows (see
    module docstring); outside the windows this is the two-sided KS
    statistic evaluated at the eigenvalues and window edges.
    """
    _check_curve_normalized(curve)
    lam = sample.eigenvalues
    n = lam.size
    windows = _atom_windows(curve)

    in_any_window = np.zeros(n, dtype=bool)
    deviations = [0.0]
    for (lo, hi), (_, mass) in zip(windows, curve.atoms):
        inside = (lam >= lo) & (lam <= hi)
        in_any_window |= inside
        deviations.append(abs(inside.mean() - mass))

    outside = lam[~in_any_window]
    if outside.size:
        F = np.atleast_1d(curve.cdf(outside))
        rank_hi = np.searchsorted(lam, outside, side="right") / n
        rank_lo = np.searchsorted(lam, outside, side="left") / n
        deviations.append(float(np.max(np.abs(rank_hi - F))))
        deviations.append(float(np.max(np.abs(rank_lo - F))))
    for lo, hi in windows:
        for edge in (lo, hi):
            F_edge = float(curve.cdf(edge))
            deviations.append(abs(np.searchsorted(lam, edge, side="right") / n - F_edge))
    return float(max(deviations))


def hist_l1(sample: SpectrumSample, curve: DensityCurve, bins: int = 60) -> float:
    """L1 distance between the sample histogram and the bin-averaged curve.

    The range is the union of the curve's grid span and the sample range;
    atom mass lands in its bin through the theory CDF increments.
    """
    _check_curve_normalized(curve)
    lam = sample.eigenvalues
    lo = min(float(curve.grid[0]), float(lam[0]))
    hi = max(float(curve.grid[-1]), float(lam[-1]))
    heights, edges = esd_histogram(sample, bins, (lo, hi))
    width = edges[1] - edges[0]
    theory = np.diff(np.atleast_1d(curve.cdf(edges))) / width
    return float(np.sum(np.abs(heights - theory)) * width)


def stieltjes_point_check(sample: SpectrumSample, params: ModelParams, z_list):
    """|m_emp(z) - m_theory(z)| per test point; needs Im z >= 0.1."""
    out = []
    for z in z_list:
        z = complex(z)
        if z.imag < 0.1:
            raise ValueError("test points must have Im z >= 0.1")
        out.append((z, abs(empirical_stieltjes(sample, z) - solve_m(params, z))))
    return out


# ---------------------------------------------------------------------------
# Comparison report

_DEFAULT_TOLERANCES = {
    "cdf_sup_distance": 0.05,
    "hist_l1": 0.20,
    "mean_abs": 1e-9,
    "second_moment_rel": 0.10,
    "stieltjes_abs": 0.10,
}


@dataclass
class ComparisonReport:
    cdf_sup_distance: float
    hist_l1: float
    moment_errors: tuple
    stieltjes_point_errors: tuple
    seeds_used: tuple
    wall_time: float
    tolerances: dict
    passed: bool
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "metrics": {
                "cdf_sup_distance": self.cdf_sup_distance,
                "hist_l1": self.hist_l1,
                "moment_errors": {
                    "mean_abs": self.moment_errors[0],
                    "second_moment_err": self.moment_errors[1],
                },
                "stieltjes_point_errors": [
                    {"z": [z.real, z.imag], "error": err}
                    for z, err in self.stieltjes_point_errors
                ],
                "wall_time_s": self.wall_time,
            },
            "per_seed": list(self.seeds_used),
            "tolerances": dict(self.tolerances),
            "pass": self.passed,
        }


def compare(
    sample: SpectrumSample,
    curve: DensityCurve,
    params: ModelParams,
    z_list=(1j, 2j),
    bins: int = 60,
    tolerances: dict | None = None,
) -> ComparisonReport:
    """All enabled empirical-vs-theory metrics for one spectrum draw."""
    tol = dict(_DEFAULT_TOLERANCES)
    if tolerances:
        tol.update(tolerances)
    t0 = time.perf_counter()
    lam = sample.eigenvalues
    cdf_d = cdf_sup_distance(sample, curve)
    h1 = hist_l1(sample, curve, bins)
    mean_abs = abs(float(np.mean(lam)))
    target_m2 = params.nu / params.gamma
    m2_err = abs(float(np.mean(lam ** 2)) - target_m2)
    st_errors = tuple(stieltjes_point_check(sample, params, z_list))
    wall = time.perf_counter() - t0
    passed = (
        cdf_d <= tol["cdf_sup_distance"]
        and h1 <= tol["hist_l1"]
        and mean_abs <= tol["mean_abs"]
        and m2_err <= tol["second_moment_rel"] * max(target_m2, 1e-12)
        and all(err <= tol["stieltjes_abs"] for _, err in st_errors)
    )
    cfg = sample.config_echo
    return ComparisonReport(
        cdf_sup_distance=cdf_d,
        hist_l1=h1,
        moment_errors=(mean_abs, m2_err),
        stieltjes_point_errors=st_errors,
        seeds_used=(cfg.seed,),
        wall_time=wall,
        tolerances=tol,
        passed=passed,
        config={
            "p": cfg.p, "n": cfg.n, "model": cfg.vector_model,
            "kernel": str(cfg.kernel), "seed": cfg.seed,
            "params": {"a": params.a, "nu": params.nu, "gamma": params.gamma},
        },
    )


# ---------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class ConcentrationResult:
    sizes: tuple
    stds: tuple
    slope: float
    z: complex
    trials: int
    base_seed: int
    trial_ids: dict

    def table(self):
        return list(zip(self.sizes, self.stds))


def concentration_sweep(
    base: EnsembleConfig, z, sizes, trials: int, threads: int = 1,
) -> ConcentrationResult:
    """Sample std of m_A(z) across trials per size; log-log slope vs n.

    Trial t at size index s uses the child stream (seed, s * trials + t),
    so the sweep is reproducible and order-independent.
    """
    if trials < 20:
        raise ValueError("need at least 20 trials for a meaningful slope")
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("z must lie in the open upper half plane")
    gamma = base.gamma
    sizes = tuple(int(n) for n in sizes)
    trial_ids = {}
    stds = []
    for s_idx, n in enumerate(sizes):
        p = max(1, round(gamma * n))
        cfg = EnsembleConfig(p=p, n=n, kernel=base.kernel,
                             vector_model=base.vector_model, seed=base.seed)
        ids = [s_idx * trials + t for t in range(trials)]
        trial_ids[n] = ids

        def one(trial_id, cfg=cfg):
            return empirical_stieltjes(spectrum_sample(cfg, trial=trial_id), z)

        ms = np.array(_run_indexed([lambda tid=tid: one(tid) for tid in ids], threads))
        stds.append(float(np.sqrt(np.mean(np.abs(ms - ms.mean()) ** 2))))
    stds_arr = np.array(stds)
    if np.any(stds_arr <= 0):
        slope = float("nan")
    else:
        slope = float(np.polyfit(np.log(sizes), np.log(stds_arr), 1)[0])
    return ConcentrationResult(
        sizes=sizes, stds=tuple(stds), slope=slope, z=z,
        trials=trials, base_seed=base.seed, trial_ids=trial_ids,
    )


@dataclass(frozen=True)
class NormGrowthResult:
    l: int
    gamma: float
    sizes: tuple
    mean_spectral_norm: tuple
    ratios: tuple            # E s(A) / n^(1/4)
    ratio_non_increasing: bool
    raw_bounded_hint: bool
    per_size_norms: dict
    base_seed: int

    def table(self):
        return list(zip(self.sizes, self.mean_spectral_norm, self.ratios))


def norm_growth_sweep(
    l: int, gamma: float, sizes, trials: int, seed: int = 0,
    model: str = "gaussian", threads: int = 1,
) -> NormGrowthResult:
    """Mean spectral norm of the degree-l finite-p Hermite kernel matrix.

    Uses the moment-adapted polynomial P_{l,p} at each dimension.  Reports
    whether E s(A) / n^(1/4) is non-increasing beyond the two smallest sizes
    and, informationally, whether raw E s(A) looks bounded.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    sizes = tuple(int(n) for n in sizes)
    moment_model = "sphere-inner" if model == "sphere" else "gaussian-inner"
    per_size = {}
    means = []
    for s_idx, n in enumerate(sizes):
        p = max(1, round(gamma * n))
        kernel = adapted_hermite_kernel(l, p, model=moment_model)
        cfg = EnsembleConfig(p=p, n=n, kernel=kernel, vector_model=model, seed=seed)
        ids = [s_idx * trials + t for t in range(trials)]

        def one(trial_id, cfg=cfg):
            return spectrum_sample(cfg, trial=trial_id).spectral_norm

        norms = _run_indexed([lambda tid=tid: one(tid) for tid in ids], threads)
        per_size[n] = tuple(norms)
        means.append(float(np.mean(norms)))
    ratios = tuple(m / n ** 0.25 for m, n in zip(means, sizes))
    non_increasing = all(ratios[i + 1] <= ratios[i] + 1e-12 for i in range(1, len(ratios) - 1))
    bounded_hint = bool(means[-1] <= max(means) + 1e-12 and means[-1] <= means[0] * 1.5)
    return NormGrowthResult(
        l=l, gamma=gamma, sizes=sizes,
        mean_spectral_norm=tuple(means), ratios=ratios,
        ratio_non_increasing=non_increasing,
        raw_bounded_hint=bounded_hint,
        per_size_norms=per_size, base_seed=seed,
    )


def mp_edge_bound(gamma: float) -> float:
    """Almost-sure spectral-norm bound b(1/gamma) + 1 for the linear kernel."""
    y = 1.0 / gamma
    return (1.0 + y ** 0.5) ** 2 + 1.0
