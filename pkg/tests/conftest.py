import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def curve_quantile_sample(curve, n):
    """Eigenvalue-like sample placed at the n-quantiles of a theory curve."""
    qs = (np.arange(n) + 0.5) / n
    cdf_vals = np.atleast_1d(curve.cdf(curve.grid))
    out = np.empty(n)
    for loc, mass in curve.atoms:
        lo = float(curve.cdf(loc)) - mass
        hit = (qs > lo) & (qs <= lo + mass)
        out[hit] = loc
        out[~hit] = np.nan
    if curve.atoms:
        miss = np.isnan(out)
        out[miss] = np.interp(qs[miss], cdf_vals, curve.grid)
    else:
        out = np.interp(qs, cdf_vals, curve.grid)
    return np.sort(out)
