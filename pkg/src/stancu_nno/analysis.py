"""Error measurement, convergence series and modulus-of-continuity estimates."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .operator import DomainBox, OperatorSpec, boundedness_constant, evaluate_grid, node_shift_constant

__all__ = [
    "ErrorReport",
    "ConvergenceSeries",
    "ModulusEstimate",
    "max_error",
    "convergence_series",
    "fit_loglog_slope",
    "estimate_modulus",
    "modulus_curve",
    "rate_constant",
    "theoretical_bound",
    "write_series_csv",
    "write_series_json",
    "OMEGA_INFLATION",
    "DEGENERATE_ERROR",
]

#: Safety factor applied to estimated moduli when they appear on the bound side.
OMEGA_INFLATION = 1.25

#: Series whose errors all fall below this are not fitted.
DEGENERATE_ERROR = 1e-12


@dataclass(frozen=True)
class ErrorReport:
    n: int
    max_error: float
    argmax_point: tuple[float, ...]
    mean_abs_error: float


@dataclass
class ConvergenceSeries:
    """Error reports ordered by ``n`` with the fitted log-log slope.

    ``fitted_slope`` is ``nan`` and ``degenerate`` is set when the fit is
    skipped (fewer than two usable points or all errors below
    ``DEGENERATE_ERROR``).
    """

    entries: list[ErrorReport]
    fitted_slope: float
    window: tuple[int, int]
    degenerate: bool = False
    bounds: list[float] | None = None

    def __post_init__(self):
        ns = [e.n for e in self.entries]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("entries must be strictly increasing in n")

    @property
    def ns(self) -> np.ndarray:
        return np.array([e.n for e in self.entries])

    @property
    def errors(self) -> np.ndarray:
        return np.array([e.max_error for e in self.entries])

    @classmethod
    def from_reports(cls, reports: Sequence[ErrorReport], window=None) -> "ConvergenceSeries":
        reports = sorted(reports, key=lambda r: r.n)
        ns = np.array([r.n for r in reports], dtype=float)
        errs = np.array([r.max_error for r in reports], dtype=float)
        lo, hi = _resolve_window(ns, window)
        sel = (ns >= lo) & (ns <= hi)
        degenerate = bool(sel.sum() < 2 or np.all(errs < DEGENERATE_ERROR))
        slope = math.nan
        if not degenerate:
            usable = sel & (errs > 0)
            if usable.sum() < 2:
                degenerate = True
            else:
                slope = fit_loglog_slope(ns[usable], errs[usable])
        return cls(list(reports), slope, (int(lo), int(hi)), degenerate)


def _resolve_window(ns: np.ndarray, window) -> tuple[float, float]:
    if len(ns) == 0:
        return 0, 0
    if window is None:
        upper_half = ns[len(ns) // 2 :]
        return upper_half[0], upper_half[-1]
    return window


def fit_loglog_slope(ns, errors) -> float:
    """Least-squares slope of ``log(errors)`` against ``log(ns)``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    x = x - x.mean()
    return float(np.dot(x, y - y.mean()) / np.dot(x, x))


def max_error(spec: OperatorSpec, truth: Callable, grid) -> ErrorReport:
    """Max and mean of ``|F(f; s) - truth(s)|`` over ``grid``."""
    pts = spec.domain.as_points(grid)
    if len(pts) == 0:
        raise ValueError("grid is empty")
    approx = evaluate_grid(spec, pts)
    exact = np.broadcast_to(np.asarray(truth(*pts.T), dtype=float), approx.shape)
    err = np.abs(approx - exact)
    i = int(np.argmax(err))
    return ErrorReport(spec.n, float(err[i]), tuple(float(v) for v in pts[i]), float(err.mean()))


def convergence_series(spec: OperatorSpec, truth: Callable, n_list: Sequence[int], grid, window=None) -> ConvergenceSeries:
    """One :class:`ErrorReport` per ``n`` in ``n_list`` (``spec.n`` is replaced).

    The slope is fitted over ``window = (n_lo, n_hi)``; by default the upper
    half of ``n_list``.
    """
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly ascending")
    reports = []
    for n in n_list:
        try:
            reports.append(max_error(spec.with_n(n), truth, grid))
        except Exception as exc:
            raise RuntimeError(f"convergence series failed at n={n}: {exc}") from exc
    return ConvergenceSeries.from_reports(reports, window)


@dataclass(frozen=True)
class ModulusEstimate:
    """Lower-bound estimate of ``omega(f, delta) = sup_{|u-v|_inf <= delta} |f(u) - f(v)|``."""

    delta: float
    omega: float
    pairs: int = 0


def _f_values(f, pts):
    return np.broadcast_to(np.asarray(f(*pts.T), dtype=float), pts.shape[:1])


def estimate_modulus(
    f: Callable,
    delta: float,
    sample_pairs: int = 4096,
    domain: DomainBox | None = None,
    resolution: int | None = None,
) -> ModulusEstimate:
    """Estimate the modulus of continuity of ``f`` on ``domain`` (max-norm).

    Two deterministic schemes are combined and the larger variation kept:

    * structured: on a uniform grid of spacing ``h``, every pair whose index
      shift is at most ``delta / h`` per axis, plus the pairs at distance
      exactly ``delta`` along each axis;
    * quasi-random: ``sample_pairs`` unscrambled Halton pairs ``(u, v)`` with
      ``v`` inside the ``delta`` box around ``u`` (clipped to the domain).

    When ``delta`` is at least the diameter the estimate is
    ``max f - min f`` over all sampled points.  The result never exceeds the
    true modulus.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    domain = DomainBox.cube(1) if domain is None else domain
    d = domain.dimension
    lower, upper = np.array(domain.lower), np.array(domain.upper)
    if resolution is None:
        resolution = {1: 20001, 2: 201}.get(d, 21)
    axes = [np.linspace(a, b, resolution) for a, b in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid_vals = _f_values(f, np.stack([m.ravel() for m in mesh], axis=1)).reshape(mesh[0].shape)

    best = 0.0
    count = 0
    saturated = delta >= domain.diameter
    if saturated:
        best = float(grid_vals.max() - grid_vals.min())
    else:
        # Index shifts within the delta box; only half of them are needed by symmetry.
        steps = [int(math.floor(delta * (resolution - 1) / (b - a))) for a, b in zip(lower, upper)]
        steps = [min(m, resolution - 1) for m in steps]
        for shift in np.ndindex(*(2 * m + 1 for m in steps)):
            sh = tuple(s - m for s, m in zip(shift, steps))
            if sh <= (0,) * d:
                continue
            a_sl = tuple(slice(max(0, -t), resolution - max(0, t)) for t in sh)
            b_sl = tuple(slice(max(0, t), resolution - max(0, -t)) for t in sh)
            diff = np.abs(grid_vals[b_sl] - grid_vals[a_sl])
            if diff.size:
                best = max(best, float(diff.max()))
                count += diff.size
        for i in range(d):
            if delta < upper[i] - lower[i]:
                u = np.stack([m.ravel() for m in mesh], axis=1)
                u = u[u[:, i] <= upper[i] - delta]
                v = u.copy()
                v[:, i] = u[:, i] + delta
                best = max(best, float(np.max(np.abs(_f_values(f, v) - _f_values(f, u)))))
                count += len(u)

    if sample_pairs > 0:
        sample = qmc.Halton(d=2 * d, scramble=False).random(sample_pairs + 1)[1:]
        u = lower + sample[:, :d] * (upper - lower)
        v = np.clip(u + (2 * sample[:, d:] - 1) * delta, lower, upper)
        fu, fv = _f_values(f, u), _f_values(f, v)
        if saturated:
            allv = np.concatenate([fu, fv, grid_vals.ravel()])
            best = max(best, float(allv.max() - allv.min()))
        else:
            best = max(best, float(np.max(np.abs(fu - fv))))
        count += sample_pairs
    return ModulusEstimate(float(delta), best, count)


def modulus_curve(f: Callable, deltas: Sequence[float], **kwargs) -> list[ModulusEstimate]:
    """Estimates at increasing ``deltas``, made nondecreasing by a running max.

    Any pair admissible at a smaller ``delta`` is admissible at a larger one,
    so the running max is still a lower bound.
    """
    out, running = [], 0.0
    for delta in sorted(deltas):
        est = estimate_modulus(f, delta, **kwargs)
        running = max(running, est.omega)
        out.append(ModulusEstimate(est.delta, running, est.pairs))
    return out


def rate_constant(spec: OperatorSpec) -> float:
    """``C = (M_0 / sigma_eta(1))**d * (2 + C1)``."""
    return boundedness_constant(spec.kernel) * (2.0 + node_shift_constant(spec.domain, spec.params))


def theoretical_bound(spec: OperatorSpec, modulus: ModulusEstimate, inflation: float = OMEGA_INFLATION) -> float:
    """``C * omega(f, 1/n)``, with the estimated modulus scaled by ``inflation``."""
    if not math.isclose(modulus.delta, 1.0 / spec.n, rel_tol=1e-12):
        raise ValueError(f"modulus must be taken at delta = 1/n = {1.0 / spec.n}, got {modulus.delta}")
    return rate_constant(spec) * inflation * modulus.omega


def write_series_csv(series: ConvergenceSeries, path) -> None:
    bounds = series.bounds or [math.nan] * len(series.entries)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "max_error", "mean_abs_error", "bound"])
        for e, b in zip(series.entries, bounds):
            bound = "" if b is None or math.isnan(b) else f"{b:.17g}"
            w.writerow([e.n, f"{e.max_error:.17g}", f"{e.mean_abs_error:.17g}", bound])


def write_series_json(series: ConvergenceSeries, path, **extra) -> None:
    payload = {
        "fitted_slope": None if math.isnan(series.fitted_slope) else series.fitted_slope,
        "degenerate": series.degenerate,
        "window": list(series.window),
        "entries": [asdict(e) for e in series.entries],
        "bounds": series.bounds,
        **extra,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
