"""Sigmoidal generators and the activation kernels built from them.

A generator ``eta`` is an increasing sigmoidal function with ``eta(s) - 1/2``
odd, concave on ``[0, inf)`` and with algebraic (or faster) tail decay of
order ``|s|**(-1 - rho)``.  The activation kernel is the centred difference

    sigma_eta(s) = (eta(s + 1) - eta(s - 1)) / 2

and its ``d``-dimensional version is the tensor product over coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

__all__ = [
    "ConfigurationError",
    "EXPONENTIAL_DECAY",
    "DEFAULT_TRUNCATION",
    "SigmoidalGenerator",
    "ActivationKernel",
    "register_generator",
    "available_generators",
    "validate_generator",
    "eval_generator",
    "eval_kernel_1d",
    "eval_kernel_nd",
    "discrete_moment",
    "tail_mass",
    "partition_residual",
    "denominator_range",
    "lipschitz_estimate",
    "concavity_residual",
    "check_kernel",
]

#: Sentinel decay exponent for generators with exponentially decaying tails.
EXPONENTIAL_DECAY = math.inf

#: Default cut-off for the infinite sums over ``k``: terms with ``|s - k| > 40``
#: are dropped (logistic kernel mass there is below 1e-15).
DEFAULT_TRUNCATION = 40.0


class ConfigurationError(ValueError):
    """Raised for unknown or invalid generator/kernel configurations."""


def _logistic(s):
    return expit(s)


def _algebraic(s):
    # eta(s) = 1/2 + s / (2 sqrt(1 + s^2)), written without cancellation in
    # the left tail; eta(-s) ~ 1/(4 s^2), so rho = 1.
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    r = np.sqrt(1.0 + a * a)
    left = 1.0 / (2.0 * r * (r + a))
    return np.where(s < 0, left, 1.0 - left)


_REGISTRY: dict[str, tuple[Callable, float]] = {
    "logistic": (_logistic, EXPONENTIAL_DECAY),
    "algebraic": (_algebraic, 1.0),
}


def available_generators() -> list[str]:
    return sorted(_REGISTRY)


def validate_generator(func: Callable, rho: float) -> dict[str, float]:
    """Numerically check the sigmoidal conditions for ``func``.

    Returns the measured residuals.  Raises :class:`ConfigurationError` if any
    condition fails: monotonicity, the limits at +-inf, ``eta(1) < 1``, odd
    symmetry of ``eta - 1/2`` (P1), concavity on ``[0, 20]`` via second
    differences (P2), and the ``|s|**(-1-rho)`` left-tail decay (P3).
    """
    if not rho > 0:
        raise ConfigurationError(f"decay exponent rho must be positive, got {rho!r}")

    s = np.linspace(-50.0, 50.0, 20001)
    v = np.asarray(func(s), dtype=float)
    residuals = {
        "monotone": float(max(0.0, -np.min(np.diff(v)))),
        "symmetry": float(np.max(np.abs((v - 0.5) + (np.asarray(func(-s)) - 0.5)))),
        "limit_low": float(func(np.array([-1e6]))[0]),
        "limit_high": float(1.0 - func(np.array([1e6]))[0]),
        "eta_at_one": float(func(np.array([1.0]))[0]),
        "concavity": concavity_residual(func),
    }

    # |s|^(1+rho) eta(-s) must stay bounded: measure its growth over the
    # last three decades of [10, 1e6].
    t = np.geomspace(10.0, 1e6, 201)
    expo = 10.0 if math.isinf(rho) else 1.0 + rho
    scaled = t**expo * np.asarray(func(-t), dtype=float)
    mid = scaled[100]
    residuals["decay"] = float(scaled[-1] / mid) if mid > 0 else 0.0

    failures = []
    if residuals["monotone"] > 0.0:
        failures.append("monotone")
    if residuals["symmetry"] > 1e-12:
        failures.append("P1 symmetry")
    if residuals["limit_low"] > 1e-3 or residuals["limit_high"] > 1e-3:
        failures.append("limits")
    if not residuals["eta_at_one"] < 1.0:
        failures.append("eta(1) < 1")
    if residuals["concavity"] > 1e-10:
        failures.append("P2 concavity")
    if not np.isfinite(scaled).all() or residuals["decay"] > 1.25:
        failures.append("P3 decay")
    if failures:
        raise ConfigurationError("generator violates: " + ", ".join(failures))
    return residuals


def register_generator(name: str, func: Callable, rho: float, *, replace: bool = False) -> "SigmoidalGenerator":
    """Validate ``func`` and make it available as ``SigmoidalGenerator(name)``.

    ``func`` must be vectorised over numpy arrays.
    """
    if name in _REGISTRY and not replace:
        raise ConfigurationError(f"generator {name!r} is already registered")
    validate_generator(func, rho)
    _REGISTRY[name] = (func, float(rho))
    return SigmoidalGenerator(name)


@dataclass(frozen=True)
class SigmoidalGenerator:
    """A registered sigmoidal generator.

    ``rho`` is filled in from the registry; ``EXPONENTIAL_DECAY`` (``inf``)
    means every discrete absolute moment is finite.
    """

    kind: str = "logistic"
    rho: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.kind not in _REGISTRY:
            raise ConfigurationError(
                f"unsupported generator {self.kind!r}; choose from {available_generators()}"
            )
        if self.rho is None:
            object.__setattr__(self, "rho", _REGISTRY[self.kind][1])

    def __call__(self, s):
        return eval_generator(self, s)

    def moment_is_finite(self, r: float) -> bool:
        return 0 <= r < self.rho


def eval_generator(g: SigmoidalGenerator, s):
    """Evaluate ``eta(s)``; scalar in, float out; array in, array out."""
    try:
        func = _REGISTRY[g.kind][0]
    except KeyError:
        raise ConfigurationError(f"unsupported generator {g.kind!r}") from None
    out = func(np.asarray(s, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ActivationKernel:
    """The activation ``sigma_eta`` and its ``dimension``-fold tensor product.

    ``truncation`` bounds the range ``|s - k| <= truncation`` of every sum
    over the integers; ``None`` disables the cut-off where a finite range is
    available from the context.
    """

    generator: SigmoidalGenerator = field(default_factory=SigmoidalGenerator)
    dimension: int = 1
    truncation: float | None = DEFAULT_TRUNCATION

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ConfigurationError(f"dimension must be a positive integer, got {self.dimension!r}")
        if self.truncation is not None and self.truncation < 0:
            raise ConfigurationError("truncation must be nonnegative")

    def __call__(self, s):
        if self.dimension == 1 and np.ndim(s) == 0:
            return eval_kernel_1d(self, s)
        return eval_kernel_nd(self, s)

    @property
    def floor_value(self) -> float:
        """``sigma_eta(1)``, the lower bound of every one-dimensional denominator."""
        return eval_kernel_1d(self, 1.0)

    def with_dimension(self, d: int) -> "ActivationKernel":
        return ActivationKernel(self.generator, d, self.truncation)


def eval_kernel_1d(k: ActivationKernel, s):
    """``sigma_eta(s) = (eta(s+1) - eta(s-1)) / 2``.

    Evaluated as ``(eta(1-|s|) - eta(-1-|s|)) / 2``, which is the same
    quantity under odd symmetry of ``eta - 1/2`` but keeps full relative
    accuracy in the tails and makes the result exactly even.
    """
    a = np.abs(np.asarray(s, dtype=float))
    g = k.generator
    out = 0.5 * (eval_generator(g, 1.0 - a) - eval_generator(g, -1.0 - a))
    out = np.maximum(out, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def eval_kernel_nd(k: ActivationKernel, s):
    """Product of ``sigma_eta`` over the last axis of ``s`` (length ``k.dimension``)."""
    s = np.asarray(s, dtype=float)
    if s.ndim == 0 or s.shape[-1] != k.dimension:
        got = 1 if s.ndim == 0 else s.shape[-1]
        raise ValueError(f"point has {got} coordinates, kernel dimension is {k.dimension}")
    out = np.prod(eval_kernel_1d(k, s), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _unit_grid(grid):
    return np.linspace(0.0, 1.0, 101) if grid is None else np.atleast_1d(np.asarray(grid, dtype=float))


def _shift_sums(k: ActivationKernel, grid, lo_dist, hi_dist, weight=None):
    """Rows of ``sigma_eta(s - j)`` for integers ``j`` with ``lo_dist < |s - j| <= hi_dist``.

    Returns the per-grid-point sums.  ``weight`` maps ``|s - j|`` to an extra
    factor.
    """
    grid = np.asarray(grid, dtype=float)
    j = np.arange(math.floor(grid.min() - hi_dist), math.ceil(grid.max() + hi_dist) + 1, dtype=float)
    dist = grid[:, None] - j[None, :]
    adist = np.abs(dist)
    mask = (adist <= hi_dist) & (adist > lo_dist)
    vals = np.where(mask, eval_kernel_1d(k, dist), 0.0)
    if weight is not None:
        vals = vals * np.where(mask, weight(adist), 0.0)
    return vals.sum(axis=1)


def discrete_moment(k: ActivationKernel, r: float, truncation: float | None = None, grid=None) -> float:
    """Truncated discrete absolute moment of order ``r``.

    ``max_s sum_{|s-j| <= truncation} sigma_eta(s - j) |s - j|**r`` over
    ``grid`` (101 points on ``[0, 1]`` by default; the sum is 1-periodic in
    ``s``).  This is a lower bound on the full moment and increases with
    ``truncation``.
    """
    if r < 0:
        raise ValueError("moment order must be nonnegative")
    trunc = k.truncation if truncation is None else truncation
    if trunc is None:
        raise ValueError("discrete_moment needs a finite truncation")
    if trunc < 0:
        raise ValueError("truncation must be nonnegative")
    weight = None if r == 0 else (lambda a: a**r)
    sums = _shift_sums(k, _unit_grid(grid), -1.0, trunc, weight)
    return float(sums.max())


def tail_mass(
    k: ActivationKernel,
    n: int,
    delta: float,
    grid=None,
    interval: tuple[float, float] = (0.0, 1.0),
    truncation: float | None = None,
) -> float:
    """``sup_s sum_{|ns - j| > n delta} sigma_eta(ns - j)`` over grid points in ``interval``.

    The sum runs over ``n delta < |ns - j| <= truncation``; by default the
    window is ``n (b - a) + n delta + 50``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    a, b = interval
    pts = np.linspace(a, b, 101) if grid is None else np.atleast_1d(np.asarray(grid, dtype=float))
    window = n * (b - a) + n * delta + 50 if truncation is None else truncation
    if window <= n * delta:
        return 0.0
    return float(_shift_sums(k, n * pts, n * delta, window).max())


def partition_residual(k: ActivationKernel, truncation: float | None = None, grid=None) -> float:
    """``max_s |sum_{|s-j| <= truncation} sigma_eta(s - j) - 1|`` over ``grid``."""
    trunc = k.truncation if truncation is None else truncation
    sums = _shift_sums(k, _unit_grid(grid), -1.0, trunc)
    return float(np.max(np.abs(sums - 1.0)))


def denominator_range(k: ActivationKernel, a: float, b: float, n: int, grid=None) -> tuple[float, float]:
    """Min and max over ``s in [a, b]`` of ``sum_{ceil(na)}^{floor(nb)} sigma_eta(ns - j)``."""
    pts = np.linspace(a, b, 1001) if grid is None else np.asarray(grid, dtype=float)
    j = np.arange(math.ceil(n * a), math.floor(n * b) + 1, dtype=float)
    sums = eval_kernel_1d(k, n * pts[:, None] - j[None, :]).sum(axis=1)
    return float(sums.min()), float(sums.max())


def lipschitz_estimate(k: ActivationKernel, lo: float = -10.0, hi: float = 10.0, num: int = 200001) -> float:
    """Largest finite-difference slope of ``sigma_eta`` on a fine grid."""
    s = np.linspace(lo, hi, num)
    return float(np.max(np.abs(np.diff(eval_kernel_1d(k, s)) / np.diff(s))))


def concavity_residual(eta, lo: float = 0.0, hi: float = 20.0, num: int = 2001) -> float:
    """Largest central second difference of ``eta`` on ``[lo, hi]``; <= 0 means concave."""
    s = np.linspace(lo, hi, num)
    h = s[1] - s[0]
    v = np.asarray(eta(np.concatenate(([lo - h], s, [hi + h]))), dtype=float)
    return float(np.max(v[2:] - 2.0 * v[1:-1] + v[:-2]))


def check_kernel(k: ActivationKernel, truncation: float | None = None) -> dict:
    """Run the kernel invariants and return ``{name: {"residual", "tolerance", "passed"}}``.

    Used by the ``kernel-check`` command.  ``truncation`` overrides the
    kernel's cut-off for the sums (partition of unity and ``M_0``).
    """
    trunc = k.truncation if truncation is None else truncation
    rng = np.random.default_rng(0)
    s = rng.uniform(-10.0, 10.0, 1000)
    g = k.generator
    checks = {}

    def record(name, residual, tol, passed=None):
        residual = float(residual)
        checks[name] = {
            "residual": residual,
            "tolerance": tol,
            "passed": bool(residual <= tol if passed is None else passed),
        }

    grid = np.linspace(-20.0, 20.0, 4001)
    record("generator_monotone", max(0.0, -np.min(np.diff(g(grid)))), 0.0)
    record("generator_symmetry", np.max(np.abs((g(grid) - 0.5) + (g(-grid) - 0.5))), 1e-14)
    record("generator_eta1_below_one", g(1.0), 1.0, passed=g(1.0) < 1.0)
    record("generator_concavity", concavity_residual(g), 1e-10)
    record("partition_of_unity", partition_residual(k, trunc), 1e-10)
    record("moment_m0", abs(discrete_moment(k, 0.0, trunc) - 1.0), 1e-10)
    record("evenness", np.max(np.abs(eval_kernel_1d(k, s) - eval_kernel_1d(k, -s))), 1e-14)
    record("nonnegativity", max(0.0, -np.min(eval_kernel_1d(k, grid))), 0.0)
    if math.isinf(g.rho):
        record("vanishing_at_40", max(eval_kernel_1d(k, 40.0), eval_kernel_1d(k, -40.0)), 1e-12)
    floor = k.floor_value
    record("floor_positive", floor, 0.0, passed=floor > 0)
    worst = 0.0
    for n in (5, 10, 50):
        lo, hi = denominator_range(k, 0.0, 1.0, n)
        worst = max(worst, floor - lo, hi - 1.0 - 1e-12)
    record("denominator_bounds", max(worst, 0.0), 0.0)
    lip = lipschitz_estimate(k)
    t = rng.uniform(-10.0, 10.0, 1000)
    slack = np.abs(eval_kernel_1d(k, s) - eval_kernel_1d(k, t)) - lip * np.abs(s - t) * (1 + 1e-6)
    record("lipschitz", max(0.0, float(np.max(slack))), 0.0)
    tm200 = tail_mass(k, 200, 0.1)
    tm400 = tail_mass(k, 400, 0.1)
    record("localization_n200", tm200, 1e-6)
    record("localization_decreasing", tm400, tm200, passed=tm400 < tm200)
    return checks
