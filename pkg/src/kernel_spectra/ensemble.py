"""Monte Carlo side: seeded vector ensembles, kernel matrices, spectra.

Sampling uses the counter-based Philox generator keyed by (seed, trial), so
trial streams are independent, order-independent and parallel-safe.  The
sphere model normalizes the Gaussian draw of the same stream, which makes
sign-kernel matrices under the two models identical entrywise (positive
column scalings cannot change the sign of an inner product).

Matrices are built once per unordered pair from the Gram matrix X^T X with
zero diagonal, so they are exactly symmetric and have zero trace.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .kernels import KernelDescriptor, parse_kernel_spec, rescaled_f

MEMORY_CEILING_N = 8192

_VECTOR_MODELS = ("gaussian", "sphere", "hypercube")


class ResourceLimitError(RuntimeError):
    """Requested matrix exceeds the configured memory ceiling."""


class EigensolverError(RuntimeError):
    """Dense symmetric eigensolver failed to converge."""


@dataclass(frozen=True)
class EnsembleConfig:
    """One reproducible Monte Carlo draw: dimensions, model, kernel, seed."""

    p: int
    n: int
    kernel: KernelDescriptor
    vector_model: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.vector_model not in _VECTOR_MODELS:
            raise ValueError(f"unknown vector model {self.vector_model!r}")
        if not (0 <= self.seed < 2 ** 64):
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def gamma(self) -> float:
        return self.p / self.n


@dataclass(frozen=True)
class SpectrumSample:
    """Sorted eigenvalues of one kernel-matrix draw."""

    eigenvalues: np.ndarray
    config_echo: EnsembleConfig

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size != self.config_echo.n:
            raise ValueError("eigenvalue list must have length n")
        if np.any(np.diff(lam) < 0):
            raise ValueError("eigenvalues must be sorted ascending")
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def spectral_norm(self) -> float:
        return max(abs(float(self.eigenvalues[0])), abs(float(self.eigenvalues[-1])))


def child_rng(seed: int, trial: int = 0) -> np.random.Generator:
    """Philox stream keyed by the 128-bit word (seed << 64) | trial."""
    if not (0 <= trial < 2 ** 64):
        raise ValueError("trial index must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(trial)))


def sample_vectors(config: EnsembleConfig, trial: int = 0) -> np.ndarray:
    """p x n matrix of i.i.d. columns under the configured vector model.

    gaussian: entries N(0, 1/p); sphere: gaussian columns normalized to unit
    length; hypercube: independent signs times p^(-1/2).  Deterministic in
    (seed, trial).
    """
    rng = child_rng(config.seed, trial)
    p, n = config.p, config.n
    if config.vector_model == "hypercube":
        signs = rng.integers(0, 2, size=(p, n)).astype(float) * 2.0 - 1.0
        return signs / math.sqrt(p)
    X = rng.standard_normal((p, n)) / math.sqrt(p)
    if config.vector_model == "sphere":
        X = X / np.linalg.norm(X, axis=0, keepdims=True)
    return X


def build_kernel_matrix(X: np.ndarray, kernel: KernelDescriptor, return_diagnostics: bool = False):
    """n x n symmetric kernel matrix A_ij = f(X_i^T X_j; p), zero diagonal.

    Inner products come from one Gram product; the kernel map is applied to
    the strict lower triangle and mirrored.  Non-finite kernel values (a
    singular kernel hit away from zero) are replaced by the kernel's
    declared value at zero and tallied.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a p x n matrix")
    p, n = X.shape
    if n > MEMORY_CEILING_N:
        raise ResourceLimitError(
            f"n={n} exceeds the dense-matrix ceiling {MEMORY_CEILING_N} "
            f"({8 * n * n / 1e9:.1f} GB per matrix)"
        )
    if not np.all(np.isfinite(X)):
        raise ValueError("X must be finite")
    G = X.T @ X
    V = rescaled_f(kernel, p, G)
    bad = ~np.isfinite(V)
    np.fill_diagonal(bad, False)
    replaced = int(np.count_nonzero(bad))
    if replaced:
        fallback = (kernel.value_at_zero - kernel.centering_offset) / math.sqrt(p)
        V[bad] = fallback
    A = np.tril(V, -1)
    A = A + A.T
    if return_diagnostics:
        return A, {"nonfinite_replaced": replaced}
    return A


def eigenvalues(A: np.ndarray) -> np.ndarray:
    """Full ascending spectrum of a symmetric matrix (LAPACK syevd).

    The input must be symmetric within 1e-12; the solver is backward stable
    and deterministic for identical input.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    skew = float(np.max(np.abs(A - A.T))) if A.size else 0.0
    if skew > 1e-12:
        raise ValueError(f"matrix is not symmetric: max |A - A^T| = {skew:.3e}")
    try:
        return np.linalg.eigvalsh(A)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(
            f"eigvalsh failed to converge on a {A.shape[0]}x{A.shape[0]} matrix: {exc}"
        ) from exc


def spectrum_sample(config: EnsembleConfig, trial: int = 0) -> SpectrumSample:
    """Draw vectors, build the kernel matrix, and return its spectrum."""
    X = sample_vectors(config, trial)
    A = build_kernel_matrix(X, config.kernel)
    return SpectrumSample(eigenvalues=eigenvalues(A), config_echo=config)


def empirical_stieltjes(sample, z) -> complex:
    """m_A(z) = (1/n) sum_i (lambda_i - z)^{-1}; |m| <= 1/Im(z)."""
    lam = sample.eigenvalues if isinstance(sample, SpectrumSample) else np.asarray(sample, dtype=float)
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("z must lie in the open upper half plane")
    return complex(np.mean(1.0 / (lam - z)))


def esd_histogram(sample, bins: int, value_range):
    """Equal-width normalized histogram: heights integrate to the in-range mass.

    Returns (heights, edges).
    """
    lam = sample.eigenvalues if isinstance(sample, SpectrumSample) else np.asarray(sample, dtype=float)
    lo, hi = value_range
    if bins < 1 or not lo < hi:
        raise ValueError("need bins >= 1 and lo < hi")
    counts, edges = np.histogram(lam, bins=bins, range=(lo, hi))
    width = (hi - lo) / bins
    heights = counts / (lam.size * width)
    return heights, edges


# ---------------------------------------------------------------------------
# Serialization


def spectrum_to_csv(sample: SpectrumSample, header_comments=()) -> str:
    cfg = sample.config_echo
    buf = io.StringIO()
    for line in header_comments:
        buf.write(f"# {line}\n")
    buf.write(f"# p={cfg.p},n={cfg.n},model={cfg.vector_model},kernel={cfg.kernel},seed={cfg.seed}\n")
    buf.write("lambda\n")
    for lam in sample.eigenvalues:
        buf.write(f"{float(lam)!r}\n")
    return buf.getvalue()


def spectrum_from_csv(text: str) -> SpectrumSample:
    lams = []
    meta = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body and "," in body and body.startswith("p="):
                for item in body.split(","):
                    key, _, val = item.partition("=")
                    meta[key.strip()] = val.strip()
            continue
        if line == "lambda":
            continue
        lams.append(float(line))
    config = EnsembleConfig(
        p=int(meta["p"]), n=int(meta["n"]),
        kernel=parse_kernel_spec(meta["kernel"]),
        vector_model=meta["model"], seed=int(meta["seed"]),
    )
    return SpectrumSample(eigenvalues=np.array(lams), config_echo=config)
