"""Kernel catalog and limit-parameter extraction.

A kernel is the function k applied to the rescaled inner product
x = sqrt(p) * Xi^T Xj; the matrix entry is p^(-1/2) k(x).  Each descriptor
carries its centering offset (so the constant expansion term vanishes), the
value assigned at x = 0 for discontinuous or singular kernels, and the
quadrature hints (split points, algebraic exponent) the integration core
needs.

The two limit constants are a (coefficient of the linear expansion term)
and nu (variance of the centered kernel under the Gaussian weight); built-in
kernels have closed forms, custom kernels fall back to quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import polybasis
from .polybasis import (
    MomentSequence,
    eval_poly,
    expansion_coefficients,
    gaussian_expectation,
    gaussian_inner_moments,
    hermite_orthonormal,
    inner_product_expectation,
    orthonormal_from_moments,
    sphere_inner_moments,
)

_VARIANTS = ("sign", "power-even", "power-odd", "linear", "hermite-unit", "series", "custom")

_CENTER_TOL = 1e-9


class KernelSpecError(ValueError):
    """Malformed kernel specification string."""


def _gaussian_abs_moment(s: float) -> float:
    """E|zeta|^s for zeta ~ N(0,1), s > -1."""
    return 2.0 ** (s / 2.0) * math.gamma((s + 1.0) / 2.0) / math.sqrt(math.pi)


@dataclass(frozen=True)
class LimitConstants:
    """The pair (a, nu) governing the limiting spectral law."""

    a: float
    nu: float
    provenance: str

    def __post_init__(self):
        if self.provenance not in ("closed-form", "quadrature"):
            raise ValueError("provenance must be 'closed-form' or 'quadrature'")
        if self.nu < -1e-12:
            raise ValueError("nu must be non-negative")
        if self.nu < self.a * self.a - 1e-9:
            raise ValueError(f"invalid limit constants: nu={self.nu} < a^2={self.a * self.a}")


@dataclass(frozen=True)
class KernelDescriptor:
    variant: str
    r: float | None = None
    c: float | None = None
    l: int | None = None
    series_coeffs: tuple[float, ...] = ()
    evaluator: Callable | None = None
    centering_offset: float = 0.0
    value_at_zero: float = 0.0
    quadrature_split_points: tuple[float, ...] = ()
    singular_exponent_at_zero: float | None = None
    label: str = ""

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if self.variant in ("power-even", "power-odd"):
            if self.r is None or not (0.0 < self.r < 0.5):
                raise ValueError("power kernels require exponent r in (0, 1/2)")

    # -- raw (uncentered) evaluation -------------------------------------
    def raw_eval(self, x):
        xs = np.asarray(x, dtype=float)
        v = self.variant
        if v == "sign":
            out = np.sign(xs)
        elif v == "power-even":
            with np.errstate(divide="ignore"):
                out = np.abs(xs) ** (-self.r)
        elif v == "power-odd":
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.sign(xs) * np.abs(xs) ** (-self.r)
        elif v == "linear":
            out = self.c * xs
        elif v == "hermite-unit":
            out = eval_poly(hermite_orthonormal(self.l), xs)
        elif v == "series":
            out = np.zeros_like(xs)
            for l, cl in enumerate(self.series_coeffs, start=1):
                if cl != 0.0:
                    out = out + cl * eval_poly(hermite_orthonormal(l), xs)
        else:
            out = np.asarray(self.evaluator(xs), dtype=float)
        out = np.where(xs == 0.0, self.value_at_zero, out)
        return float(out) if np.isscalar(x) else out

    def centered_eval(self, x):
        out = self.raw_eval(x)
        return out - self.centering_offset

    def __str__(self):
        return self.label or self.variant


def sign_kernel(value_at_zero: float = 0.0) -> KernelDescriptor:
    return KernelDescriptor(
        variant="sign",
        value_at_zero=value_at_zero,
        quadrature_split_points=(0.0,),
        label="sign",
    )


def power_even_kernel(r: float, value_at_zero: float = 0.0) -> KernelDescriptor:
    """Even divergent kernel |x|^(-r), centered by its Gaussian mean."""
    return KernelDescriptor(
        variant="power-even",
        r=r,
        value_at_zero=value_at_zero,
        centering_offset=_gaussian_abs_moment(-r),
        quadrature_split_points=(0.0,),
        singular_exponent_at_zero=r,
        label=f"power_even:r={r:g}",
    )


def power_odd_kernel(r: float, value_at_zero: float = 0.0) -> KernelDescriptor:
    """Odd divergent kernel sign(x) |x|^(-r); odd, so already centered."""
    return KernelDescriptor(
        variant="power-odd",
        r=r,
        value_at_zero=value_at_zero,
        quadrature_split_points=(0.0,),
        singular_exponent_at_zero=r,
        label=f"power_odd:r={r:g}",
    )


def linear_kernel(c: float = 1.0) -> KernelDescriptor:
    return KernelDescriptor(variant="linear", c=c, label=f"linear:c={c:g}")


def hermite_unit_kernel(l: int) -> KernelDescriptor:
    """Normalized Hermite polynomial h_l as a kernel (unit variance)."""
    if l < 0:
        raise ValueError("degree must be >= 0")
    k = KernelDescriptor(variant="hermite-unit", l=l, label=f"hermite:l={l}")
    return replace(k, value_at_zero=float(eval_poly(hermite_orthonormal(l), 0.0)))


def series_kernel(coeffs) -> KernelDescriptor:
    """Finite series sum_l c_l h_l(x), coefficients starting at l = 1."""
    cs = tuple(float(c) for c in coeffs)
    if not cs:
        raise ValueError("series kernel needs at least one coefficient")
    at_zero = sum(
        cl * hermite_orthonormal(l).monomial_coeffs[0]
        for l, cl in enumerate(cs, start=1)
    )
    label = "series:" + ",".join(
        f"c{l}={cl:g}" for l, cl in enumerate(cs, start=1) if cl != 0.0
    )
    return KernelDescriptor(
        variant="series", series_coeffs=cs, value_at_zero=float(at_zero), label=label,
    )


def custom_kernel(
    evaluator: Callable,
    singular_points=(),
    singular_exponent: float | None = None,
    value_at_zero: float = 0.0,
    label: str = "custom",
) -> KernelDescriptor:
    """Wrap an arbitrary vectorized evaluator; declare its singular points."""
    return KernelDescriptor(
        variant="custom",
        evaluator=evaluator,
        value_at_zero=value_at_zero,
        quadrature_split_points=tuple(singular_points),
        singular_exponent_at_zero=singular_exponent,
        label=label,
    )


# ---------------------------------------------------------------------------
# Operations


def kernel_eval(k: KernelDescriptor, x):
    """Centered kernel value(s); exact zeros map to value_at_zero - offset."""
    return k.centered_eval(x)


def rescaled_f(k: KernelDescriptor, p: int, xi):
    """Entry-scale kernel f(xi; p) = p^(-1/2) k(sqrt(p) xi)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    s = math.sqrt(p)
    return kernel_eval(k, s * xi) / s


def center(k: KernelDescriptor) -> KernelDescriptor:
    """Set the centering offset to E[k_raw(zeta)]; idempotent.

    Built-ins use closed forms (odd kernels and Hermite/series kernels have
    mean zero); custom kernels are centered by quadrature.
    """
    v = k.variant
    if v in ("sign", "power-odd", "linear"):
        offset = 0.0
    elif v == "hermite-unit":
        offset = 1.0 if k.l == 0 else 0.0
    elif v == "series":
        offset = 0.0
    elif v == "power-even":
        offset = _gaussian_abs_moment(-k.r)
    else:
        offset = gaussian_expectation(
            k.raw_eval,
            split_points=k.quadrature_split_points,
            singular_exponent=k.singular_exponent_at_zero,
            what="E[k(zeta)]",
        )
    centered = replace(k, centering_offset=offset)
    return centered


def limit_constants(k: KernelDescriptor) -> LimitConstants:
    """The limiting pair (a, nu) for a centered kernel.

    Closed forms for the catalog; custom kernels use the linear expansion
    coefficient for a and quadrature of k^2 for nu (computed from the raw
    kernel as E k^2 - (E k)^2, avoiding a second centering error).
    """
    v = k.variant
    if v == "sign":
        return LimitConstants(a=math.sqrt(2.0 / math.pi), nu=1.0, provenance="closed-form")
    if v == "linear":
        return LimitConstants(a=k.c, nu=k.c * k.c, provenance="closed-form")
    if v == "hermite-unit":
        if k.l == 0:
            return LimitConstants(a=0.0, nu=0.0, provenance="closed-form")
        if k.l == 1:
            return LimitConstants(a=1.0, nu=1.0, provenance="closed-form")
        return LimitConstants(a=0.0, nu=1.0, provenance="closed-form")
    if v == "power-odd":
        r = k.r
        a = math.sqrt(2.0 / math.pi) * 2.0 ** (-r / 2.0) * math.gamma(1.0 - r / 2.0)
        nu = _gaussian_abs_moment(-2.0 * r)
        return LimitConstants(a=a, nu=nu, provenance="closed-form")
    if v == "power-even":
        r = k.r
        nu = _gaussian_abs_moment(-2.0 * r) - _gaussian_abs_moment(-r) ** 2
        return LimitConstants(a=0.0, nu=nu, provenance="closed-form")
    if v == "series":
        a = k.series_coeffs[0]
        nu = float(sum(c * c for c in k.series_coeffs))
        return LimitConstants(a=a, nu=nu, provenance="closed-form")
    # custom: quadrature route
    a = float(expansion_coefficients(k, basis="hermite", L=1)[1])
    mean = gaussian_expectation(
        k.raw_eval, split_points=k.quadrature_split_points,
        singular_exponent=k.singular_exponent_at_zero, what="E[k]",
    )
    second = gaussian_expectation(
        lambda x: np.asarray(k.raw_eval(x)) ** 2,
        split_points=k.quadrature_split_points,
        singular_exponent=(2.0 * k.singular_exponent_at_zero
                           if k.singular_exponent_at_zero else None),
        what="E[k^2]",
    )
    return LimitConstants(a=a, nu=second - mean * mean, provenance="quadrature")


@dataclass(frozen=True)
class ConditionRow:
    """Per-dimension diagnostics of the expansion conditions."""

    p: int
    a0: float
    a1: float
    nu_p: float
    partial_sum: float
    tail_mass: float


@dataclass(frozen=True)
class ConditionReport:
    kernel: str
    L: int
    rows: tuple[ConditionRow, ...]
    limit_a: float
    limit_nu: float
    flags: tuple[str, ...]

    @property
    def max_tail_mass(self) -> float:
        return max(r.tail_mass for r in self.rows)


def check_conditions(k: KernelDescriptor, p_list, L: int = 10, model: str = "gaussian-inner") -> ConditionReport:
    """Finite-p diagnostics for the variance / p-uniformity / a_1 conditions.

    For each p the kernel is expanded in the moment-based orthonormal
    polynomials under the matched weight; reports a_{1,p}, nu_p, the partial
    coefficient sum through degree L and the implied tail mass.  Violations
    are flagged rather than raised.
    """
    if not p_list:
        raise ValueError("p_list must be nonempty")
    lim = limit_constants(k)
    rows = []
    for p in p_list:
        moments = (gaussian_inner_moments(p, 2 * L) if model == "gaussian-inner"
                   else sphere_inner_moments(p, 2 * L))
        coeffs = expansion_coefficients(k, basis=moments, L=L, weight="matched")
        mean = inner_product_expectation(
            k.centered_eval, model, p,
            split_points=k.quadrature_split_points,
            singular_exponent=k.singular_exponent_at_zero, what="E_p[k]",
        )
        second = inner_product_expectation(
            lambda x: np.asarray(k.centered_eval(x)) ** 2, model, p,
            split_points=k.quadrature_split_points,
            singular_exponent=(2.0 * k.singular_exponent_at_zero
                               if k.singular_exponent_at_zero else None),
            what="E_p[k^2]",
        )
        nu_p = second - mean * mean
        partial = float(np.sum(coeffs[1:] ** 2))
        rows.append(ConditionRow(
            p=int(p), a0=float(coeffs[0]), a1=float(coeffs[1]),
            nu_p=nu_p, partial_sum=partial, tail_mass=nu_p - partial,
        ))
    flags = []
    if any(r.tail_mass < -1e-6 for r in rows):
        flags.append("negative tail mass (expansion inconsistency)")
    if any(abs(r.a0) > 1e-3 for r in rows):
        flags.append("kernel not centered under the finite-p weight")
    if len(rows) >= 2:
        drift = [abs(r.a1 - lim.a) for r in rows]
        if drift[-1] > drift[0] + 1e-6:
            flags.append("a_1 drifting away from its limit")
        nudrift = [abs(r.nu_p - lim.nu) for r in rows]
        if nudrift[-1] > nudrift[0] + 1e-6:
            flags.append("nu_p drifting away from its limit")
    return ConditionReport(
        kernel=str(k), L=L, rows=tuple(rows),
        limit_a=lim.a, limit_nu=lim.nu, flags=tuple(flags),
    )


def adapted_hermite_kernel(l: int, p: int, model: str = "gaussian-inner") -> KernelDescriptor:
    """Finite-p analogue of the degree-l Hermite kernel: P_{l,p} from moments.

    This is the kernel whose matrix has exactly unit entry variance at
    dimension p; it converges coefficientwise to hermite_unit_kernel(l).
    """
    moments = (gaussian_inner_moments(p, 2 * l) if model == "gaussian-inner"
               else sphere_inner_moments(p, 2 * l))
    poly = orthonormal_from_moments(moments, l)

    def evaluator(x, poly=poly):
        return eval_poly(poly, x)

    return custom_kernel(
        evaluator,
        value_at_zero=float(eval_poly(poly, 0.0)),
        label=f"hermite_adapted:l={l},p={p}",
    )


# ---------------------------------------------------------------------------
# Kernel specification mini-grammar

_SPEC_BUILDERS = {
    "sign": (sign_kernel, ()),
    "power_even": (power_even_kernel, ("r",)),
    "power_odd": (power_odd_kernel, ("r",)),
    "linear": (linear_kernel, ("c",)),
    "hermite": (hermite_unit_kernel, ("l",)),
}


def parse_kernel_spec(text: str) -> KernelDescriptor:
    """Parse the CLI grammar, e.g. 'sign', 'power_even:r=0.25', 'series:c1=0.5,c3=0.1'.

    Case-insensitive; unknown variants or keys are errors.
    """
    spec = text.strip().lower()
    name, _, argstr = spec.partition(":")
    kwargs = {}
    if argstr:
        for item in argstr.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise KernelSpecError(f"malformed kernel argument {item!r} in {text!r}")
            kwargs[key.strip()] = val.strip()
    if name == "series":
        coeffs = {}
        for key, val in kwargs.items():
            if not key.startswith("c") or not key[1:].isdigit() or int(key[1:]) < 1:
                raise KernelSpecError(f"unknown series key {key!r} in {text!r}")
            coeffs[int(key[1:])] = float(val)
        if not coeffs:
            raise KernelSpecError("series kernel needs at least one coefficient")
        top = max(coeffs)
        return series_kernel([coeffs.get(i, 0.0) for i in range(1, top + 1)])
    if name not in _SPEC_BUILDERS:
        raise KernelSpecError(f"unknown kernel variant {name!r}")
    builder, allowed = _SPEC_BUILDERS[name]
    for key in kwargs:
        if key not in allowed:
            raise KernelSpecError(f"unknown key {key!r} for kernel {name!r}")
    try:
        args = {key: (int(v) if key == "l" else float(v)) for key, v in kwargs.items()}
    except ValueError as exc:
        raise KernelSpecError(f"bad numeric value in {text!r}: {exc}") from exc
    try:
        return builder(**args)
    except TypeError as exc:
        raise KernelSpecError(f"missing required key for kernel {name!r}: {exc}") from exc
