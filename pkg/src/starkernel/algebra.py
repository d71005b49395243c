"""The algebra behind the element-wise product of two linear branches.

A single fused layer (w1.x) * (w2.x) over a d-channel input (bias absorbed
into an augmented last slot) is exactly a degree-2 polynomial in the input
with (d+2)(d+1)/2 monomials x_i x_j, i <= j. This module builds that
coefficient table explicitly, evaluates it, counts the implicit dimensions
produced by stacking fused layers (in log space; the numbers are
astronomical), and provides the classical kernel functions and a kernel
ridge classifier used as comparison baselines.

Everything here is pure and safe to call concurrently.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .rngs import make_rng


@dataclass
class AugmentedVector:
    """A feature vector with the constant 1 appended (bias absorption)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size < 2:
            raise ValueError("need a 1-D vector of length >= 2")
        if self.values[-1] != 1.0:
            raise ValueError("last slot must hold the constant 1")

    @classmethod
    def from_features(cls, x) -> "AugmentedVector":
        return cls(np.append(np.asarray(x, dtype=np.float64), 1.0))

    @property
    def width(self) -> int:
        return self.values.size - 1


@dataclass
class StarExpansion:
    """Coefficient table of one fused layer as a quadratic form.

    Coefficients are stored once per unordered index pair (i, j), i <= j,
    with the symmetric merge already applied: c[i,i] = w1[i] w2[i] and
    c[i,j] = w1[i] w2[j] + w1[j] w2[i] for i < j. Index d is the bias slot.
    """

    width: int
    coefficients: dict[tuple[int, int], float] = field(repr=False)
    term_count: int

    def as_matrix(self) -> np.ndarray:
        """Dense symmetric matrix Q with x.Q.x = evaluate(...), split evenly."""
        n = self.width + 1
        q = np.zeros((n, n))
        for (i, j), a in self.coefficients.items():
            if i == j:
                q[i, i] = a
            else:
                q[i, j] = q[j, i] = a / 2.0
        return q


def expand_star(w1, w2) -> StarExpansion:
    """Exact monomial coefficients of (w1 . x)(w2 . x) for augmented x."""
    w1 = np.asarray(getattr(w1, "values", w1), dtype=np.float64)
    w2 = np.asarray(getattr(w2, "values", w2), dtype=np.float64)
    if w1.shape != w2.shape or w1.ndim != 1:
        raise ValueError("weight vectors must be 1-D with equal length")
    n = w1.size
    coeff: dict[tuple[int, int], float] = {}
    for i in range(n):
        coeff[(i, i)] = w1[i] * w2[i]
        for j in range(i + 1, n):
            coeff[(i, j)] = w1[i] * w2[j] + w1[j] * w2[i]
    d = n - 1
    return StarExpansion(width=d, coefficients=coeff, term_count=(d + 2) * (d + 1) // 2)


def evaluate_expansion(expansion: StarExpansion, x) -> float:
    """Sum of c[i,j] x_i x_j over i <= j for an augmented input vector."""
    xv = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if xv.size != expansion.width + 1:
        raise ValueError(f"input length {xv.size} != {expansion.width + 1}")
    total = 0.0
    for (i, j), a in expansion.coefficients.items():
        total += a * xv[i] * xv[j]
    return total


@dataclass
class EquivalenceReport:
    width: int
    trials: int
    tol: float
    max_deviation: float
    failures: int

    @property
    def passed(self) -> bool:
        return self.failures == 0


def verify_star_equivalence(
    d: int,
    trials: int,
    tol: float,
    seed: int = 0,
    coefficient_perturbation: float = 0.0,
) -> EquivalenceReport:
    """Check (w1.x)(w2.x) against the expanded coefficient table.

    Draws random augmented weights and inputs and compares the direct
    product with the monomial sum under relative tolerance
    tol * max(1, |value|). ``coefficient_perturbation`` corrupts one
    coefficient per trial, as a self-test that the checker catches faults.
    Failures are counted, not raised.
    """
    if d < 1 or trials < 1:
        raise ValueError("need d >= 1 and trials >= 1")
    rng = make_rng(seed, d)
    max_dev = 0.0
    failures = 0
    for _ in range(trials):
        w1 = rng.standard_normal(d + 1)
        w2 = rng.standard_normal(d + 1)
        x = AugmentedVector.from_features(rng.standard_normal(d))
        direct = float(w1 @ x.values) * float(w2 @ x.values)
        expansion = expand_star(w1, w2)
        if coefficient_perturbation:
            expansion.coefficients[(0, 0)] += coefficient_perturbation
        dev = abs(direct - evaluate_expansion(expansion, x))
        max_dev = max(max_dev, dev)
        if dev > tol * max(1.0, abs(direct)):
            failures += 1
    return EquivalenceReport(d, trials, tol, max_dev, failures)


def implicit_dims_one_layer(d: int) -> int:
    """Monomial count of one fused layer: (d+2)(d+1)/2."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return (d + 2) * (d + 1) // 2


@dataclass
class ImplicitDimReport:
    width: int
    layers: int
    log10_dims: float


def implicit_dims_multi_layer(d: int, layers: int) -> ImplicitDimReport:
    """log10 of (d/sqrt(2)) ** (2**layers), never materializing the number."""
    if d < 2 or layers < 1:
        raise ValueError("need d >= 2 and layers >= 1")
    doubling = 2.0 ** layers
    if not math.isfinite(doubling):
        raise OverflowError(f"2**{layers} exceeds the float exponent range")
    log10_dims = doubling * math.log10(d / math.sqrt(2.0))
    if not math.isfinite(log10_dims):
        raise OverflowError("implicit dimension magnitude overflows log space")
    return ImplicitDimReport(width=d, layers=layers, log10_dims=log10_dims)


CASE_ONE_BRANCH = "one_branch"  # (w1 . x) * x
CASE_SELF_PRODUCT = "self_product"  # x * x


def special_case_dims(case: str, d: int) -> int:
    """Implicit dimension counts when one or both transforms are dropped."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if case == CASE_ONE_BRANCH:
        return 2 * d
    if case == CASE_SELF_PRODUCT:
        return d
    raise ValueError(f"unknown case {case!r}")


# ------------------------------------------------------------------ kernels


def poly_kernel(x1, x2, gamma: float, c: float, degree: int) -> float:
    """(gamma <x1, x2> + c) ** degree."""
    x1, x2 = np.asarray(x1, dtype=np.float64), np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise ValueError("inputs must have equal length")
    if degree < 1:
        raise ValueError("degree must be >= 1")
    return float((gamma * (x1 @ x2) + c) ** degree)


def gaussian_kernel(x1, x2, sigma: float) -> float:
    """Closed form exp(-||x1 - x2||^2 / (2 sigma^2))."""
    x1, x2 = np.asarray(x1, dtype=np.float64), np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise ValueError("inputs must have equal length")
    diff = x1 - x2
    return float(np.exp(-(diff @ diff) / (2.0 * sigma * sigma)))


def gaussian_kernel_taylor(x1, x2, sigma: float, terms: int) -> float:
    """Truncated product-series form of the Gaussian kernel.

    exp(-||u1||^2) exp(-||u2||^2) sum_i (2 u1.u2)^i / i!  with
    u = x / (sqrt(2) sigma). At unit scale (2 sigma^2 = 1) the rescaling is
    the identity and this is the textbook infinite-feature-space expansion;
    the closed form is the ground truth it converges to for any sigma.
    """
    if terms < 1:
        raise ValueError("terms must be >= 1")
    u1 = np.asarray(x1, dtype=np.float64) / (math.sqrt(2.0) * sigma)
    u2 = np.asarray(x2, dtype=np.float64) / (math.sqrt(2.0) * sigma)
    if u1.shape != u2.shape:
        raise ValueError("inputs must have equal length")
    dot2 = 2.0 * float(u1 @ u2)
    series = 0.0
    term = 1.0
    for i in range(terms):
        if i:
            term *= dot2 / i
        series += term
    return float(np.exp(-(u1 @ u1)) * np.exp(-(u2 @ u2)) * series)


def poly_gram(a: np.ndarray, b: np.ndarray, gamma: float, c: float, degree: int) -> np.ndarray:
    return (gamma * (a @ b.T) + c) ** degree


def rbf_gram(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-np.maximum(sq, 0.0) / (2.0 * sigma * sigma))


CONDITION_WARN_THRESHOLD = 1e12


def solve_regularized(gram: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Solve (K + lam I) a = y, Cholesky first, pivoted elimination fallback."""
    if lam <= 0.0:
        raise ValueError("regularization must be positive (lam=0 can be singular)")
    a = gram + lam * np.eye(gram.shape[0])
    try:
        factor = cho_factor(a)
        diag = np.diag(factor[0])
        cond_lower_bound = (diag.max() / diag.min()) ** 2
        if cond_lower_bound > CONDITION_WARN_THRESHOLD:
            warnings.warn("ill-conditioned kernel system; using pivoted elimination")
            return np.linalg.solve(a, y)
        return cho_solve(factor, y)
    except LinAlgError:
        return np.linalg.solve(a, y)


class KernelRidgeClassifier:
    """Binary classifier: ridge regression on +-1 targets in a kernel space.

    Stands in for an SVM baseline: same kernels, closed-form fit, and
    qualitatively the same decision boundaries.
    """

    def __init__(self, kernel: str = "poly", lam: float = 1e-3, *, gamma: float = 1.0,
                 c: float = 1.0, degree: int = 3, sigma: float = 0.5):
        if kernel not in ("poly", "rbf"):
            raise ValueError(f"unknown kernel {kernel!r}")
        self.kernel = kernel
        self.lam = lam
        self.gamma, self.c, self.degree, self.sigma = gamma, c, degree, sigma
        self.points: np.ndarray | None = None
        self.dual_coef: np.ndarray | None = None

    def _gram(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.kernel == "poly":
            return poly_gram(a, b, self.gamma, self.c, self.degree)
        return rbf_gram(a, b, self.sigma)

    def fit(self, points: np.ndarray, labels: np.ndarray) -> "KernelRidgeClassifier":
        points = np.asarray(points, dtype=np.float64)
        y = np.asarray(labels, dtype=np.float64)
        if set(np.unique(y)) - {-1.0, 1.0}:
            raise ValueError("labels must be +-1")
        self.points = points
        self.dual_coef = solve_regularized(self._gram(points, points), y, self.lam)
        return self

    def decision_function(self, points: np.ndarray) -> np.ndarray:
        if self.points is None:
            raise RuntimeError("fit first")
        return self._gram(np.asarray(points, dtype=np.float64), self.points) @ self.dual_coef

    def predict(self, points: np.ndarray) -> np.ndarray:
        return np.where(self.decision_function(points) >= 0.0, 1.0, -1.0)
