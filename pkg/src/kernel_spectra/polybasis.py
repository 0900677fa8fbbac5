"""Orthonormal polynomial machinery for inner-product kernel expansions.

Provides normalized Hermite polynomials h_l (orthonormal under the standard
Gaussian weight q), exact raw moments of the rescaled inner product of two
random vectors under the Gaussian and sphere models, moment-based
Gram-Schmidt producing the finite-dimension orthonormal polynomials P_{l,p},
and quadrature machinery for expansion coefficients of (possibly singular)
kernel functions.

Quadrature conventions: the standard Gaussian weight is
q(x) = (2*pi)^(-1/2) exp(-x^2/2).  Kernels with an algebraic singularity
|x|^(-r) at the origin are integrated by splitting at 0 and +-1 and applying
the substitution x = t^(1/(1-r)) on (0, 1), which removes the singularity
exactly; refinement doubles the panel count until two successive levels
agree to ``accept_tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_hermite

DEGREE_CAP = 64

# piecewise scheme: outer truncation of the Gaussian-weighted real line.
# x^128 * q(x) < 1e-140 at |x| = 40, so the truncation error is far below
# every tolerance used here even for degree-64 polynomial factors.
_TAIL_CUTOFF = 40.0

_ACCEPT_TOL = 1e-8   # successive-refinement agreement for acceptance
_REPORT_TOL = 1e-6   # beyond this the integral is reported as non-converged


class DegenerateMomentsError(ValueError):
    """Moment Hankel matrix is numerically singular."""


class QuadratureConvergenceError(RuntimeError):
    """Successive quadrature refinements failed to agree.

    Carries the last estimate and the achieved agreement so callers can
    report the tolerance actually reached.
    """

    def __init__(self, message: str, estimate: float, achieved: float):
        super().__init__(f"{message} (achieved tolerance {achieved:.3e})")
        self.estimate = estimate
        self.achieved = achieved


@dataclass(frozen=True)
class PolynomialCoeffs:
    """Monomial coefficients of a polynomial, index j = coefficient of x^j."""

    degree: int
    monomial_coeffs: tuple[float, ...]

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if len(self.monomial_coeffs) != self.degree + 1:
            raise ValueError("need degree+1 monomial coefficients")
        if self.degree >= 1 and self.monomial_coeffs[-1] == 0.0:
            raise ValueError("leading coefficient must be nonzero")
        if not all(math.isfinite(c) for c in self.monomial_coeffs):
            raise ValueError("coefficients must be finite")


@dataclass(frozen=True)
class MomentSequence:
    """Raw moments mu_0..mu_K of one of the three inner-product weights.

    model is one of "unit-gaussian", "gaussian-inner", "sphere-inner";
    p is the dimension (None for unit-gaussian).
    """

    model: str
    p: int | None
    moments: tuple[float, ...]

    def __post_init__(self):
        if self.model not in ("unit-gaussian", "gaussian-inner", "sphere-inner"):
            raise ValueError(f"unknown moment model {self.model!r}")
        if (self.p is None) != (self.model == "unit-gaussian"):
            raise ValueError("p is required exactly when the model is dimension-dependent")
        if self.moments[0] != 1.0:
            raise ValueError("mu_0 must be 1")

    @property
    def max_order(self) -> int:
        return len(self.moments) - 1


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights integrating f against the standard Gaussian density."""

    nodes: np.ndarray
    weights: np.ndarray
    target_weight: str = "standard-gaussian"

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


@lru_cache(maxsize=32)
def gauss_hermite_rule(n: int) -> QuadratureRule:
    """Gauss-Hermite rule rescaled to the standard Gaussian weight.

    Exact for polynomials of degree <= 2n-1; weights sum to 1.
    """
    if n < 1:
        raise ValueError("need at least one node")
    x, w = roots_hermite(n)
    return QuadratureRule(nodes=x * math.sqrt(2.0), weights=w / math.sqrt(math.pi))


# ---------------------------------------------------------------------------
# Hermite polynomials


@lru_cache(maxsize=None)
def _hermite_he_int_coeffs(l: int) -> tuple[int, ...]:
    """Exact integer monomial coefficients of the probabilists' Hermite He_l.

    Three-term recurrence He_{l+1} = x He_l - l He_{l-1}.
    """
    if l == 0:
        return (1,)
    if l == 1:
        return (0, 1)
    prev2 = _hermite_he_int_coeffs(l - 2)
    prev1 = _hermite_he_int_coeffs(l - 1)
    out = [0] * (l + 1)
    for i, c in enumerate(prev1):
        out[i + 1] += c
    for i, c in enumerate(prev2):
        out[i] -= (l - 1) * c
    return tuple(out)


def hermite_orthonormal(l: int) -> PolynomialCoeffs:
    """Normalized Hermite polynomial h_l = He_l / sqrt(l!).

    Computed by the exact integer recurrence, then normalized; orthonormal
    under the standard Gaussian weight.
    """
    if l < 0:
        raise ValueError("degree must be >= 0")
    if l > DEGREE_CAP:
        raise ValueError(f"degree {l} exceeds cap {DEGREE_CAP}")
    norm = math.sqrt(math.factorial(l))
    coeffs = tuple(c / norm for c in _hermite_he_int_coeffs(l))
    return PolynomialCoeffs(degree=l, monomial_coeffs=coeffs)


def eval_poly(c: PolynomialCoeffs, x):
    """Horner evaluation of a PolynomialCoeffs at scalar or ndarray x."""
    xs = np.asarray(x, dtype=float)
    acc = np.full_like(xs, c.monomial_coeffs[-1])
    for coef in c.monomial_coeffs[-2::-1]:
        acc = acc * xs + coef
    return float(acc) if np.isscalar(x) else acc


# ---------------------------------------------------------------------------
# Exact moments


def _double_factorial(k: int) -> int:
    out = 1
    for j in range(1, k, 2):
        out *= j
    return out


def gaussian_inner_moment_exact(p: int, k: int) -> Fraction:
    """Exact k-th raw moment of sqrt(p) X^T Y for X, Y ~ N(0, I_p / p).

    Conditioned on X the inner product is |X| times a standard normal, and
    |X|^2 is a chi-square over p, giving
    mu_{2m} = (2m-1)!! * prod_{j<m} (1 + 2j/p).
    """
    if k % 2:
        return Fraction(0)
    m = k // 2
    v = Fraction(_double_factorial(k))
    for j in range(m):
        v *= Fraction(p + 2 * j, p)
    return v


def sphere_inner_moment_exact(p: int, k: int) -> Fraction:
    """Exact k-th raw moment of sqrt(p) X^T Y for X, Y uniform on S^{p-1}.

    Obtained by dividing the Gaussian moments by (E|X|^{2m})^2, since the
    Gaussian inner product factors as |X| |Y| times the sphere one.
    """
    if k % 2:
        return Fraction(0)
    m = k // 2
    v = Fraction(_double_factorial(k))
    for j in range(m):
        v /= Fraction(p + 2 * j, p)
    return v


def unit_gaussian_moments(K: int) -> MomentSequence:
    mus = tuple(float(_double_factorial(k)) if k % 2 == 0 else 0.0 for k in range(K + 1))
    return MomentSequence(model="unit-gaussian", p=None, moments=mus)


def gaussian_inner_moments(p: int, K: int) -> MomentSequence:
    """Moments of the rescaled Gaussian inner product, exact then floated."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if K < 0 or K > 2 * DEGREE_CAP:
        raise ValueError(f"moment order K={K} out of range")
    mus = tuple(float(gaussian_inner_moment_exact(p, k)) for k in range(K + 1))
    return MomentSequence(model="gaussian-inner", p=p, moments=mus)


def sphere_inner_moments(p: int, K: int) -> MomentSequence:
    """Moments of the rescaled sphere inner product, exact then floated."""
    if p < 2:
        raise ValueError("p must be >= 2 for the sphere model")
    if K < 0 or K > 2 * DEGREE_CAP:
        raise ValueError(f"moment order K={K} out of range")
    mus = tuple(float(sphere_inner_moment_exact(p, k)) for k in range(K + 1))
    return MomentSequence(model="sphere-inner", p=p, moments=mus)


# ---------------------------------------------------------------------------
# Moment-based Gram-Schmidt

_HANKEL_COND_LIMIT = 1e12


def _cholesky_longdouble(H: np.ndarray) -> np.ndarray:
    n = H.shape[0]
    L = np.zeros_like(H)
    for i in range(n):
        for j in range(i + 1):
            s = H[i, j] - np.dot(L[i, :j], L[j, :j])
            if i == j:
                if s <= 0:
                    raise DegenerateMomentsError("Hankel matrix is not positive definite")
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    return L


def orthonormal_from_moments(m: MomentSequence, l: int) -> PolynomialCoeffs:
    """Degree-l orthonormal polynomial of the weight with moments m.

    Cholesky of the Hankel matrix [mu_{i+j}] in 80-bit extended precision;
    the degree-l polynomial's coefficients are row l of the inverse factor.
    Leading coefficient is positive.  Conditioning is judged on the
    diagonally equilibrated Hankel matrix; above 1e12 the moments are
    reported as degenerate.
    """
    if l < 0:
        raise ValueError("degree must be >= 0")
    if m.max_order < 2 * l:
        raise ValueError(f"need moments through order {2 * l}, have {m.max_order}")
    H = np.array(
        [[m.moments[i + j] for j in range(l + 1)] for i in range(l + 1)],
        dtype=np.longdouble,
    )
    d = np.sqrt(np.diag(H))
    Hs = H / np.outer(d, d)
    cond = np.linalg.cond(Hs.astype(float))
    if not np.isfinite(cond) or cond > _HANKEL_COND_LIMIT:
        raise DegenerateMomentsError(
            f"equilibrated Hankel condition number {cond:.3e} exceeds {_HANKEL_COND_LIMIT:.0e}"
        )
    L = _cholesky_longdouble(Hs)
    # row l of (diag(d) L)^{-1} via back substitution on L^T
    w = np.zeros(l + 1, dtype=np.longdouble)
    w[l] = 1.0 / L[l, l]
    for i in range(l - 1, -1, -1):
        w[i] = -np.dot(L[i + 1:, i], w[i + 1:]) / L[i, i]
    coeffs = (w / d).astype(float)
    return PolynomialCoeffs(degree=l, monomial_coeffs=tuple(float(c) for c in coeffs))


# ---------------------------------------------------------------------------
# Integration core


def gaussian_density(x):
    return np.exp(-0.5 * np.asarray(x, dtype=float) ** 2) / math.sqrt(2.0 * math.pi)


def _composite_legendre(f, lo: float, hi: float, panels: int, nodes_per_panel: int = 16) -> float:
    xg, wg = leggauss(nodes_per_panel)
    edges = np.linspace(lo, hi, panels + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    xs = (mids[:, None] + half[:, None] * xg[None, :]).ravel()
    vals = np.asarray(f(xs), dtype=float).reshape(panels, nodes_per_panel)
    return float(np.sum(half * (vals @ wg)))


def _split_segments(split_points, upper: float):
    """Break (0, upper] at the interior split points, mirrored for x < 0."""
    pts = sorted({abs(s) for s in split_points if 0 < abs(s) < upper})
    edges = [0.0] + pts + ([1.0] if 1.0 < upper and 1.0 not in pts else []) + [upper]
    edges = sorted(set(edges))
    return list(zip(edges[:-1], edges[1:]))


def _piecewise_weighted_integral(
    f,
    weight,
    upper: float,
    split_points=(),
    singular_exponent: float | None = None,
    panels: int = 64,
) -> float:
    """One refinement level of integral f(x) weight(x) dx over [-upper, upper].

    Splits at 0 (and any declared points); on the segment adjacent to 0 an
    algebraic singularity |x|^(-r) is removed by x = t^(1/(1-r)).
    """
    total = 0.0
    segments = _split_segments(split_points, upper)
    for sign in (1.0, -1.0):
        for (lo, hi) in segments:
            width = hi - lo
            npan = max(4, int(round(panels * min(1.0, width / 2.0))))
            if lo == 0.0 and singular_exponent:
                r = singular_exponent
                s = 1.0 / (1.0 - r)

                def g(t, sign=sign, hi=hi, r=r, s=s):
                    x = sign * hi * t ** s
                    return (
                        np.asarray(f(x), dtype=float)
                        * np.asarray(weight(x), dtype=float)
                        * hi
                        * s
                        * t ** (s - 1.0)
                    )

                total += _composite_legendre(g, 0.0, 1.0, npan)
            else:
                def g(x, sign=sign):
                    xs = sign * x
                    return np.asarray(f(xs), dtype=float) * np.asarray(weight(xs), dtype=float)

                total += _composite_legendre(g, lo, hi, npan)
    return total


def _refine_to_agreement(evaluate, what: str, accept_tol: float = _ACCEPT_TOL):
    """Run evaluate(level) with doubling resolution until agreement."""
    prev = evaluate(0)
    best_gap = math.inf
    for level in range(1, 6):
        cur = evaluate(level)
        gap = abs(cur - prev)
        scale = max(1.0, abs(cur))
        best_gap = min(best_gap, gap / scale)
        if gap <= accept_tol * scale:
            return cur
        prev = cur
    if best_gap > _REPORT_TOL:
        raise QuadratureConvergenceError(f"quadrature for {what} did not converge", prev, best_gap)
    return prev


def gaussian_expectation(
    f,
    split_points=(),
    singular_exponent: float | None = None,
    rule: QuadratureRule | None = None,
    accept_tol: float = _ACCEPT_TOL,
    what: str = "E[f(zeta)]",
) -> float:
    """E[f(zeta)] for zeta ~ N(0,1), with singularity-aware refinement.

    Smooth integrands use the Gauss-Hermite rule with node doubling;
    integrands with declared split points use the piecewise composite scheme.
    """
    def evaluate_piecewise(level):
        return _piecewise_weighted_integral(
            f,
            gaussian_density,
            _TAIL_CUTOFF,
            split_points=split_points or (0.0,),
            singular_exponent=singular_exponent,
            panels=64 << level,
        )

    if split_points or singular_exponent:
        return _refine_to_agreement(evaluate_piecewise, what, accept_tol)

    # smooth path: Gauss-Hermite with node doubling, falling back to the
    # composite scheme for integrands GH cannot settle (kinks, heavy tails)
    base = rule.nodes.size if rule is not None else 200
    prev = rule.integrate(f) if rule is not None else gauss_hermite_rule(base).integrate(f)
    for n in (2 * base, 4 * base):
        cur = gauss_hermite_rule(min(n, 1600)).integrate(f)
        if abs(cur - prev) <= accept_tol * max(1.0, abs(cur)):
            return cur
        prev = cur
    return _refine_to_agreement(evaluate_piecewise, what, accept_tol)


def _chi_scale_density(p: int):
    """Density of s = |X| for X ~ N(0, I_p/p): scaled chi distribution."""
    log_norm = math.log(2.0) + 0.5 * p * math.log(p / 2.0) - math.lgamma(p / 2.0)

    def pdf(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(log_norm + (p - 1) * np.log(s[pos]) - 0.5 * p * s[pos] ** 2)
        return out

    return pdf


def _sphere_inner_density(p: int):
    """Density of sqrt(p) X^T Y for X, Y uniform on S^{p-1}; support |x| < sqrt(p)."""
    log_norm = (
        math.lgamma(p / 2.0)
        - math.lgamma((p - 1) / 2.0)
        - 0.5 * math.log(p * math.pi)
    )

    def pdf(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = np.abs(x) < math.sqrt(p)
        out[inside] = np.exp(log_norm + (0.5 * (p - 3)) * np.log1p(-x[inside] ** 2 / p))
        return out

    return pdf


def inner_product_expectation(
    f,
    model: str,
    p: int,
    split_points=(),
    singular_exponent: float | None = None,
    accept_tol: float = _ACCEPT_TOL,
    what: str = "E[f(xi_p)]",
) -> float:
    """E[f(xi)] under the finite-p inner-product weight of the given model.

    gaussian-inner uses the chi scale mixture q_p(x) = E_s[q(x/s)/s];
    sphere-inner uses the closed-form beta-type density.
    """
    if model == "unit-gaussian":
        return gaussian_expectation(
            f, split_points=split_points, singular_exponent=singular_exponent,
            accept_tol=accept_tol, what=what,
        )
    if model == "sphere-inner":
        weight = _sphere_inner_density(p)
        upper = math.sqrt(p) * (1.0 - 1e-12)

        def evaluate(level):
            return _piecewise_weighted_integral(
                f, weight, upper,
                split_points=split_points or (0.0,),
                singular_exponent=singular_exponent,
                panels=64 << level,
            )

        return _refine_to_agreement(evaluate, what, accept_tol)
    if model == "gaussian-inner":
        spdf = _chi_scale_density(p)
        sigma = 1.0 / math.sqrt(2.0 * p)
        s_lo = max(1e-6, 1.0 - 14.0 * sigma)
        s_hi = 1.0 + 14.0 * sigma
        xs, ws = leggauss(48)
        mid, half = 0.5 * (s_hi + s_lo), 0.5 * (s_hi - s_lo)
        s_nodes = mid + half * xs
        s_weights = half * ws * spdf(s_nodes)
        s_weights /= s_weights.sum()  # renormalize the truncated mixture

        def weight(x):
            x = np.asarray(x, dtype=float)
            z = x[..., None] / s_nodes
            return np.dot(np.exp(-0.5 * z * z), s_weights / s_nodes) / math.sqrt(2 * math.pi)

        upper = _TAIL_CUTOFF * max(1.0, s_hi)

        def evaluate(level):
            return _piecewise_weighted_integral(
                f, weight, upper,
                split_points=split_points or (0.0,),
                singular_exponent=singular_exponent,
                panels=64 << level,
            )

        return _refine_to_agreement(evaluate, what, accept_tol)
    raise ValueError(f"unknown model {model!r}")


# ---------------------------------------------------------------------------
# Expansion coefficients


def _kernel_integrand_meta(kernel):
    """Duck-typed view of a kernel: centered evaluator + quadrature hints."""
    if callable(kernel) and not hasattr(kernel, "centered_eval"):
        return kernel, (), None
    return (
        kernel.centered_eval,
        tuple(getattr(kernel, "quadrature_split_points", ()) or ()),
        getattr(kernel, "singular_exponent_at_zero", None),
    )


def expansion_coefficients(
    kernel,
    basis="hermite",
    L: int = 10,
    rule: QuadratureRule | None = None,
    weight: str = "gaussian",
) -> np.ndarray:
    """Expansion coefficients c_0..c_L of a kernel in an orthonormal basis.

    basis is "hermite" (normalized Hermite polynomials) or a MomentSequence,
    in which case the moment-based orthonormal polynomials are used.  With
    weight="gaussian" coefficients are c_l = E[k(zeta) basis_l(zeta)] under
    the standard Gaussian; weight="matched" integrates under the weight the
    MomentSequence describes (the finite-p expansion coefficients).
    """
    if L < 0 or L > DEGREE_CAP:
        raise ValueError(f"max degree {L} out of range (cap {DEGREE_CAP})")
    if weight not in ("gaussian", "matched"):
        raise ValueError("weight must be 'gaussian' or 'matched'")
    if isinstance(basis, MomentSequence):
        polys = [orthonormal_from_moments(basis, l) for l in range(L + 1)]
        model = basis.model if weight == "matched" else "unit-gaussian"
        p = basis.p
    else:
        if basis != "hermite":
            raise ValueError("basis must be 'hermite' or a MomentSequence")
        if weight == "matched":
            raise ValueError("matched weight requires a MomentSequence basis")
        polys = [hermite_orthonormal(l) for l in range(L + 1)]
        model, p = "unit-gaussian", None

    f, splits, exponent = _kernel_integrand_meta(kernel)
    out = np.empty(L + 1)
    for l, poly in enumerate(polys):
        def integrand(x, poly=poly):
            return np.asarray(f(x), dtype=float) * eval_poly(poly, x)

        if model == "unit-gaussian":
            out[l] = gaussian_expectation(
                integrand, split_points=splits, singular_exponent=exponent,
                rule=rule, what=f"c_{l}",
            )
        else:
            out[l] = inner_product_expectation(
                integrand, model, p, split_points=splits,
                singular_exponent=exponent, what=f"c_{l}",
            )
    return out


def jl_dimension(l: int, p: int) -> int:
    """Number of degree-l spherical harmonics in p variables.

    C(p+l-1, l) - C(p+l-3, l-2) for l >= 2; p for l = 1; 1 for l = 0.
    Exact integer arithmetic, no overflow.
    """
    if l < 0:
        raise ValueError("degree must be >= 0")
    if p < 2:
        raise ValueError("dimension must be >= 2")
    if l == 0:
        return 1
    if l == 1:
        return p
    return math.comb(p + l - 1, l) - math.comb(p + l - 3, l - 2)
