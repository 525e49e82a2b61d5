"""Stancu-type neural network operators on a box ``K = prod [a_i, b_i]``.

For ``s`` in ``K`` the operator is the kernel-weighted average

    F(f; s) = sum_k sigma(n s - k) f(s_k) / sum_k sigma(n s - k),

with ``k`` running over the index set ``ceil(n a_i) <= k_i <= floor(n b_i)``
and perturbed nodes ``s_k = (k + alpha) / (n + beta)``.  ``alpha = beta = 0``
gives the classical operator with nodes ``k / n``.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .kernel import DEFAULT_TRUNCATION, ActivationKernel, discrete_moment, eval_kernel_1d

__all__ = [
    "ResolutionError",
    "SampleCoverageError",
    "DomainBox",
    "StancuParams",
    "IndexSet",
    "AnalyticSource",
    "SampledSource",
    "OperatorSpec",
    "index_set",
    "perturbed_node",
    "node_bounds",
    "node_shift_constant",
    "evaluate",
    "evaluate_grid",
    "boundedness_constant",
]

THREADS_ENV = "STANCU_NNO_THREADS"


class ResolutionError(ValueError):
    """The resolution ``n`` leaves some coordinate of the index set empty."""


class SampleCoverageError(ValueError):
    """A sampled source does not provide a value for every index."""


def _exact(x: float) -> Fraction:
    # Interpret a float through its shortest repr so that 0.7 * 10 floors to 7.
    return Fraction(repr(float(x)))


def _round_down(q: Fraction) -> float:
    x = float(q)
    return x if Fraction(x) <= q else math.nextafter(x, -math.inf)


def _round_up(q: Fraction) -> float:
    x = float(q)
    return x if Fraction(x) >= q else math.nextafter(x, math.inf)


@dataclass(frozen=True)
class DomainBox:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) != len(upper) or not lower:
            raise ValueError("lower and upper must be nonempty and of equal length")
        for i, (a, b) in enumerate(zip(lower, upper)):
            if not a < b:
                raise ValueError(f"coordinate {i}: need a < b, got [{a}, {b}]")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def cube(cls, d: int = 1, a: float = 0.0, b: float = 1.0) -> "DomainBox":
        return cls((a,) * d, (b,) * d)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def diameter(self) -> float:
        """Max-norm diameter."""
        return max(b - a for a, b in zip(self.lower, self.upper))

    def as_points(self, s) -> np.ndarray:
        """Reshape ``s`` to an ``(m, d)`` array of points."""
        s = np.asarray(s, dtype=float)
        d = self.dimension
        if s.ndim == 0:
            s = s.reshape(1, 1)
        elif s.ndim == 1:
            s = s.reshape(-1, 1) if d == 1 else s.reshape(1, -1)
        if s.ndim != 2 or s.shape[1] != d:
            raise ValueError(f"points must have {d} coordinates, got shape {np.shape(s)}")
        return s

    def contains(self, points) -> np.ndarray:
        p = self.as_points(points)
        return np.all((p >= np.array(self.lower)) & (p <= np.array(self.upper)), axis=1)

    def clamp(self, points) -> np.ndarray:
        return np.clip(self.as_points(points), self.lower, self.upper)

    def grid(self, size: int) -> np.ndarray:
        """Uniform tensor grid with ``size`` points per coordinate, shape ``(size**d, d)``."""
        axes = [np.linspace(a, b, size) for a, b in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class StancuParams:
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if not 0 <= self.alpha <= self.beta:
            raise ValueError(f"need 0 <= alpha <= beta, got alpha={self.alpha}, beta={self.beta}")

    @property
    def is_classical(self) -> bool:
        return self.alpha == 0 and self.beta == 0


@dataclass(frozen=True)
class IndexSet:
    """Per-coordinate integer ranges ``[ceil(n a_i), floor(n b_i)]``."""

    n: int
    ranges: tuple[tuple[int, int], ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(hi - lo + 1 for lo, hi in self.ranges)

    @property
    def cardinality(self) -> int:
        return math.prod(self.shape)

    def axis(self, i: int) -> np.ndarray:
        lo, hi = self.ranges[i]
        return np.arange(lo, hi + 1)

    def __len__(self) -> int:
        return self.cardinality

    def __iter__(self):
        return itertools.product(*(range(lo, hi + 1) for lo, hi in self.ranges))


def index_set(domain: DomainBox, n: int) -> IndexSet:
    if int(n) != n or n < 1:
        raise ResolutionError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    ranges = []
    for i, (a, b) in enumerate(zip(domain.lower, domain.upper)):
        lo = math.ceil(n * _exact(a))
        hi = math.floor(n * _exact(b))
        if lo > hi:
            raise ResolutionError(
                f"coordinate {i}: no integer in [{n}*{a}, {n}*{b}]; n is too small for the box"
            )
        ranges.append((lo, hi))
    return IndexSet(n, tuple(ranges))


def perturbed_node(k, n: int, p: StancuParams):
    """``(k + alpha) / (n + beta)`` componentwise."""
    k = np.asarray(k, dtype=float)
    out = (k + p.alpha) / (n + p.beta)
    return float(out) if out.ndim == 0 else out


def node_bounds(domain: DomainBox, n: int, p: StancuParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate interval guaranteed to contain every perturbed node.

    Lower end ``a - beta a / (n + beta)``; upper end ``b + beta / (n + beta)``
    for ``b >= 0`` and ``(n b + beta) / (n + beta)`` otherwise (the former is
    not an upper bound when ``b < 0``).  Computed exactly and rounded outward.
    """
    lo, hi = [], []
    beta = Fraction(p.beta)
    for a, b in zip(domain.lower, domain.upper):
        a, b = _exact(a), _exact(b)
        den = n + beta
        lo.append(_round_down(a - beta * a / den))
        hi.append(_round_up(b + beta * max(Fraction(1), 1 - b) / den))
    return np.array(lo), np.array(hi)


def node_shift_constant(domain: DomainBox, p: StancuParams) -> float:
    """``C1`` with ``|(k + alpha)/(n + beta) - k/n| <= C1 / n`` for all ``k`` in the index set.

    ``|n alpha - k beta| / (n + beta) <= alpha + beta max_i max(|a_i|, |b_i|)``.
    """
    reach = max(max(abs(a), abs(b)) for a, b in zip(domain.lower, domain.upper))
    return max(p.alpha, p.beta * reach + p.alpha)


class AnalyticSource:
    """A function given by formula, called as ``func(x_1, ..., x_d)`` on arrays.

    ``extension`` selects how nodes outside ``K`` are handled: ``"direct"``
    evaluates the formula there, ``"clamp"`` projects nodes onto ``K`` first,
    and ``"auto"`` evaluates directly and falls back to clamping if that
    raises or produces non-finite values.
    """

    def __init__(self, func: Callable, extension: str = "auto"):
        if extension not in ("auto", "direct", "clamp"):
            raise ValueError(f"unknown extension mode {extension!r}")
        self.func = func
        self.extension = extension

    def _call(self, pts: np.ndarray) -> np.ndarray:
        out = np.asarray(self.func(*pts.T), dtype=float)
        return np.broadcast_to(out, pts.shape[:1]).astype(float)

    def values(self, spec: "OperatorSpec") -> np.ndarray:
        grids = np.meshgrid(
            *(perturbed_node(spec.indices.axis(i), spec.n, spec.params) for i in range(spec.dimension)),
            indexing="ij",
        )
        pts = np.stack([g.ravel() for g in grids], axis=1)
        if self.extension == "clamp":
            vals = self._call(spec.domain.clamp(pts))
        else:
            try:
                with np.errstate(all="ignore"):
                    vals = self._call(pts)
                ok = np.isfinite(vals).all()
            except (ValueError, ArithmeticError):
                if self.extension == "direct":
                    raise
                ok = False
            if not ok:
                if self.extension == "direct":
                    raise ValueError("function is not finite at every perturbed node")
                vals = self._call(spec.domain.clamp(pts))
        return vals.reshape(spec.indices.shape)


class SampledSource:
    """Values ``y_k`` for ``k`` in an index set, stored as an array.

    ``offset`` is the multi-index of ``values[0, ..., 0]``.  With the default
    ``node_rule="index"`` the value ``y_k`` is used for index ``k`` whatever
    the Stancu parameters, i.e. the perturbation relabels where the sample is
    taken to sit.  ``node_rule="linear"`` instead interpolates the samples
    (assumed to lie at ``k / n``) linearly at the perturbed nodes, holding
    the end values outside the sample range; this is only available for
    ``d = 1``.
    """

    def __init__(self, values, offset=0, n: int | None = None, node_rule: str = "index"):
        self.data = np.asarray(values, dtype=float)
        self.offset = tuple(int(o) for o in np.atleast_1d(offset))
        if len(self.offset) != self.data.ndim:
            raise ValueError("offset must have one entry per array axis")
        if node_rule not in ("index", "linear"):
            raise ValueError(f"unknown node rule {node_rule!r}")
        if node_rule == "linear" and self.data.ndim != 1:
            raise ValueError("linear node rule requires one-dimensional samples")
        self.n = n
        self.node_rule = node_rule

    def values(self, spec: "OperatorSpec") -> np.ndarray:
        if self.n is not None and self.n != spec.n:
            raise SampleCoverageError(f"samples were taken at n={self.n}, operator uses n={spec.n}")
        if self.data.ndim != spec.dimension:
            raise SampleCoverageError("sample array dimension does not match the domain")
        sl = []
        for i, (lo, hi) in enumerate(spec.indices.ranges):
            start, stop = lo - self.offset[i], hi - self.offset[i] + 1
            if start < 0 or stop > self.data.shape[i]:
                have = (self.offset[i], self.offset[i] + self.data.shape[i] - 1)
                raise SampleCoverageError(f"coordinate {i}: samples cover {have}, index set needs {(lo, hi)}")
            sl.append(slice(start, stop))
        vals = self.data[tuple(sl)]
        if self.node_rule == "linear":
            k = np.arange(self.data.shape[0]) + self.offset[0]
            nodes = perturbed_node(spec.indices.axis(0), spec.n, spec.params)
            vals = np.interp(nodes, k / spec.n, self.data)
        return vals


@dataclass(frozen=True)
class OperatorSpec:
    domain: DomainBox
    n: int
    params: StancuParams = field(default_factory=StancuParams)
    source: AnalyticSource | SampledSource | None = None
    kernel: ActivationKernel | None = None

    def __post_init__(self):
        if self.kernel is None:
            object.__setattr__(self, "kernel", ActivationKernel(dimension=self.domain.dimension))
        if self.kernel.dimension != self.domain.dimension:
            raise ValueError(
                f"kernel dimension {self.kernel.dimension} does not match domain dimension {self.domain.dimension}"
            )
        if self.source is None:
            raise ValueError("an operator needs a function source")
        if not isinstance(self.source, (AnalyticSource, SampledSource)):
            object.__setattr__(self, "source", AnalyticSource(self.source))
        object.__setattr__(self, "indices", index_set(self.domain, self.n))
        object.__setattr__(self, "_values", None)

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    def node_values(self) -> np.ndarray:
        """``f`` at every perturbed node, shaped like the index set (cached)."""
        if self._values is None:
            object.__setattr__(self, "_values", self.source.values(self))
        return self._values

    def with_n(self, n: int) -> "OperatorSpec":
        return OperatorSpec(self.domain, n, self.params, self.source, self.kernel)

    def __call__(self, s):
        return evaluate_grid(self, s)


def _axis_weights(spec: OperatorSpec, coord: np.ndarray, i: int):
    """Kernel weights ``sigma_eta(n s_i - k_i)`` on each point's window.

    Returns ``(start, weights)``: ``weights[p, j]`` belongs to index
    ``start[p] + j`` and is zero outside ``[lo, hi]`` and outside the
    truncation window.
    """
    lo, hi = spec.indices.ranges[i]
    size = hi - lo + 1
    ns = spec.n * coord
    trunc = spec.kernel.truncation
    if trunc is None:
        start = np.full(coord.shape, lo, dtype=np.int64)
        width = size
        upper = np.full(coord.shape, hi, dtype=np.int64)
    else:
        start = np.maximum(lo, np.ceil(ns - trunc)).astype(np.int64)
        width = min(size, int(math.floor(2 * trunc)) + 1)
        upper = np.minimum(hi, np.floor(ns + trunc)).astype(np.int64)
    k = start[:, None] + np.arange(width)[None, :]
    w = np.where(k <= upper[:, None], eval_kernel_1d(spec.kernel, ns[:, None] - k), 0.0)
    return start - lo, w


def _neumaier(total, comp, x):
    """One step of Neumaier compensated summation, elementwise; updates ``comp`` in place."""
    t = total + x
    comp += np.where(np.abs(total) >= np.abs(x), (total - t) + x, (x - t) + total)
    return t


def _weighted_sum(weights: np.ndarray, terms) -> np.ndarray:
    """``sum_j weights[:, j] * terms(j)`` over the window, in order of increasing ``j``."""
    total = comp = None
    for j in range(weights.shape[1]):
        x = terms(j)
        w = weights[:, j].reshape((-1,) + (1,) * (x.ndim - 1))
        if total is None:
            total, comp = w * x, np.zeros(np.broadcast_shapes(w.shape, x.shape))
        else:
            total = _neumaier(total, comp, w * x)
    return total + comp


def _evaluate_block(spec: OperatorSpec, pts: np.ndarray) -> np.ndarray:
    values = spec.node_values()
    d = spec.dimension
    starts, weights = zip(*(_axis_weights(spec, pts[:, i], i) for i in range(d)))
    shape = values.shape
    m = pts.shape[0]

    # The weights are a tensor product over a box of indices, so the numerator is
    # contracted one axis at a time (last axis first) and the denominator is the
    # product of one-dimensional sums.  Each point sees a fixed sequence of
    # operations, independent of the other points in the block.
    prefix = []
    for i in range(d - 1):
        k = np.minimum(starts[i][:, None] + np.arange(weights[i].shape[1]), shape[i] - 1)
        prefix.append(k.reshape((m,) + (1,) * i + (-1,) + (1,) * (d - 2 - i)))
    last = d - 1

    def gather(j):
        k = np.minimum(starts[last] + j, shape[last] - 1).reshape((m,) + (1,) * (d - 1))
        return values[tuple(prefix) + (k,)]

    num = _weighted_sum(weights[last], gather)
    for i in range(d - 2, -1, -1):
        acc = num
        num = _weighted_sum(weights[i], lambda j: acc[..., j])
    den = np.ones(m)
    for w in weights:
        den = den * _weighted_sum(w, lambda j: np.ones(m))
    if not np.all(den > 0):
        raise ValueError("empty kernel window: truncation is too small for this resolution")
    return num / den


_BLOCK_ELEMENTS = 1 << 21


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def evaluate_grid(spec: OperatorSpec, grid, threads: int | None = None, block: int = 4096) -> np.ndarray:
    """Evaluate the operator at each point of ``grid``; returns an array of length ``m``.

    Each point's value is computed by the same fixed sequence of elementwise
    operations, so the result does not depend on how the grid is split into
    blocks or threads.  ``threads`` defaults to ``$STANCU_NNO_THREADS`` (1).
    """
    pts = spec.domain.as_points(grid)
    inside = spec.domain.contains(pts)
    if not inside.all():
        bad = pts[np.argmin(inside)]
        raise ValueError(f"point {bad.tolist()} lies outside the domain")
    spec.node_values()
    # Intermediate arrays hold one window per leading axis for every point.
    trunc = spec.kernel.truncation
    widths = [hi - lo + 1 if trunc is None else min(hi - lo + 1, int(math.floor(2 * trunc)) + 1) for lo, hi in spec.indices.ranges]
    block = max(1, min(block, _BLOCK_ELEMENTS // max(1, math.prod(widths[:-1]))))
    chunks = [pts[i : i + block] for i in range(0, len(pts), block)] or [pts]
    threads = _thread_count() if threads is None else max(1, threads)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _evaluate_block(spec, c), chunks))
    else:
        parts = [_evaluate_block(spec, c) for c in chunks]
    return np.concatenate(parts)


def evaluate(spec: OperatorSpec, s) -> float:
    """Operator value at a single point ``s`` of ``K``."""
    pts = spec.domain.as_points(s)
    if pts.shape[0] != 1:
        raise ValueError("evaluate takes a single point; use evaluate_grid for several")
    return float(evaluate_grid(spec, pts)[0])


def boundedness_constant(kernel: ActivationKernel) -> float:
    """``(M_0 / sigma_eta(1)) ** d`` with the truncated zeroth moment."""
    trunc = DEFAULT_TRUNCATION if kernel.truncation is None else kernel.truncation
    m0 = discrete_moment(kernel, 0.0, trunc)
    return (m0 / kernel.floor_value) ** kernel.dimension
