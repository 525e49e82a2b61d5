"""Command-line front end: ``stancu-nno <command> [--config FILE] [flags]``.

Commands
--------
approximate   operator values for several (alpha, beta) pairs at one n
converge      maximum-error series E_n with log-log slope and rate bound
nodes         classical versus perturbed sampling nodes
denoise       synthetic ECG denoising (single n, or ``--batch`` sweep)
kernel-check  kernel invariants with residuals; exit 1 if any fails

Config files hold ``key = value`` lines (an optional ``[section]`` header is
allowed); command-line flags override them.  Every run writes
``resolved_config.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .functions import FUNCTION_NAMES, named_function
from .kernel import ActivationKernel, ConfigurationError, SigmoidalGenerator, check_kernel
from .operator import (
    DomainBox,
    OperatorSpec,
    StancuParams,
    evaluate_grid,
    index_set,
    node_shift_constant,
    perturbed_node,
)
from .signals import EcgModel, denoise, sample_noisy, write_denoise_files, write_signal_csv

COMMANDS = ("approximate", "converge", "nodes", "denoise", "kernel-check")


class UsageError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class RunConfig:
    command: str
    lower: list[float] = field(default_factory=lambda: [0.0])
    upper: list[float] = field(default_factory=lambda: [1.0])
    pairs: list[tuple[float, float]] = field(default_factory=lambda: [(0.5, 0.5)])
    n: int = 50
    n_list: list[int] = field(default_factory=list)
    function: str = "kink"
    constant: float = 7.3
    grid_size: int = 1001
    seed: int = 0
    noise_std: float = 0.15
    truncation: float = 40.0
    generator: str = "logistic"
    window: list[int] | None = None
    batch: bool = False
    synthetic_c: float | None = None

    @property
    def domain(self) -> DomainBox:
        return DomainBox(tuple(self.lower), tuple(self.upper))

    @property
    def params(self) -> list[StancuParams]:
        return [StancuParams(a, b) for a, b in self.pairs]


DEFAULTS = {
    "approximate": {"n": 50, "pairs": [(0.0, 0.0), (0.5, 0.5), (1.0, 2.0)], "grid_size": 1001},
    "converge": {"n_list": list(range(10, 1001, 10)), "pairs": [(0.5, 0.5)], "grid_size": 2001},
    "nodes": {"n": 50, "pairs": [(0.5, 0.5)]},
    "denoise": {
        "n": 1000,
        "pairs": [(0.5, 1.0)],
        "noise_std": 0.15,
        "seed": 0,
        "grid_size": 1000,
        "n_list": [100, 200, 400, 600, 800, 1000],
    },
    "kernel-check": {},
}


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    text = text.strip()
    if ":" in text:
        start, stop, step = (int(v) for v in text.split(":"))
        return list(range(start, stop + 1, step))
    return [int(v) for v in text.split(",") if v.strip()]


def _pairs(text: str) -> list[tuple[float, float]]:
    out = []
    for chunk in text.split(";"):
        if chunk.strip():
            a, b = _floats(chunk)
            out.append((a, b))
    return out


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


PARSERS = {
    "lower": _floats,
    "upper": _floats,
    "pairs": _pairs,
    "alpha": float,
    "beta": float,
    "n": int,
    "n_list": _int_list,
    "function": str,
    "constant": float,
    "grid_size": int,
    "seed": int,
    "noise_std": float,
    "truncation": float,
    "generator": str,
    "window": _int_list,
    "batch": _bool,
    "synthetic_c": float,
}


def read_config_file(path) -> dict[str, str]:
    text = Path(path).read_text()
    if not any(line.lstrip().startswith("[") for line in text.splitlines()):
        text = "[run]\n" + text
    parser = configparser.ConfigParser()
    parser.read_string(text)
    raw = {}
    for section in parser.sections():
        for key, value in parser[section].items():
            raw[key.replace("-", "_")] = value
    return raw


def resolve_config(command: str, raw: dict[str, str], overrides: dict) -> RunConfig:
    values = dict(DEFAULTS[command])
    for key, text in raw.items():
        if key not in PARSERS:
            raise UsageError(key, "unknown config key")
        try:
            values[key] = PARSERS[key](text)
        except (ValueError, TypeError) as exc:
            raise UsageError(key, f"cannot parse {text!r} ({exc})") from None
    values.update({k: v for k, v in overrides.items() if v is not None})

    alpha, beta = values.pop("alpha", None), values.pop("beta", None)
    if alpha is not None or beta is not None:
        a0, b0 = values.get("pairs", [(0.5, 0.5)])[0]
        values["pairs"] = [(a0 if alpha is None else alpha, b0 if beta is None else beta)]
    cfg = RunConfig(command=command, **values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if len(cfg.lower) != len(cfg.upper):
        raise UsageError("lower", "lower and upper need the same number of coordinates")
    try:
        cfg.domain
    except ValueError as exc:
        raise UsageError("lower", str(exc)) from None
    for a, b in cfg.pairs:
        if not 0 <= a <= b:
            raise UsageError("pairs", f"need 0 <= alpha <= beta, got ({a}, {b})")
    if not cfg.pairs:
        raise UsageError("pairs", "at least one (alpha, beta) pair is required")
    if cfg.n < 1:
        raise UsageError("n", "must be a positive integer")
    if cfg.n_list and any(b <= a for a, b in zip(cfg.n_list, cfg.n_list[1:])):
        raise UsageError("n_list", "must be strictly ascending")
    if cfg.n_list and cfg.n_list[0] < 1:
        raise UsageError("n_list", "entries must be positive")
    if cfg.grid_size < 1:
        raise UsageError("grid_size", "must be positive")
    if cfg.noise_std < 0:
        raise UsageError("noise_std", "must be nonnegative")
    if cfg.function not in FUNCTION_NAMES:
        raise UsageError("function", f"choose from {', '.join(FUNCTION_NAMES)}")
    if cfg.window is not None and len(cfg.window) != 2:
        raise UsageError("window", "expects two integers n_lo,n_hi")
    if cfg.truncation < 0:
        raise UsageError("truncation", "must be nonnegative")
    if cfg.command == "denoise" and (cfg.lower != [0.0] or cfg.upper != [1.0]):
        raise UsageError("lower", "denoise works on [0, 1]")
    if cfg.command in ("nodes", "converge", "approximate") and cfg.function == "ecg" and len(cfg.lower) != 1:
        raise UsageError("function", "the ECG model is one-dimensional")


def _fmt(x) -> str:
    return f"{x:.17g}"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, np.integer)) else _fmt(v) for v in row])


def _write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _kernel(cfg: RunConfig, d: int) -> ActivationKernel:
    return ActivationKernel(SigmoidalGenerator(cfg.generator), d, cfg.truncation)


def _function(cfg: RunConfig):
    return named_function(cfg.function, cfg.constant)


def _eval_grid(cfg: RunConfig) -> np.ndarray:
    return cfg.domain.grid(cfg.grid_size)


def cmd_approximate(cfg: RunConfig, out: Path) -> int:
    f = _function(cfg)
    grid = _eval_grid(cfg)
    kernel = _kernel(cfg, cfg.domain.dimension)
    columns = []
    for p in cfg.params:
        spec = OperatorSpec(cfg.domain, cfg.n, p, f, kernel)
        columns.append(evaluate_grid(spec, grid))
    truth = np.broadcast_to(np.asarray(f(*grid.T), dtype=float), grid.shape[:1])
    coord_names = ["s"] if grid.shape[1] == 1 else [f"s{i + 1}" for i in range(grid.shape[1])]
    header = coord_names + ["f_true"] + [f"F_a{p.alpha:g}_b{p.beta:g}" for p in cfg.params]
    _write_csv(out / "approximate.csv", header, (list(g) + [t] + [c[i] for c in columns] for i, (g, t) in enumerate(zip(grid, truth))))
    return 0


def cmd_converge(cfg: RunConfig, out: Path) -> int:
    f = _function(cfg)
    p = cfg.params[0]
    window = tuple(cfg.window) if cfg.window else None
    if cfg.synthetic_c is not None:
        # Test hook: exact E_n = c / n, the operator is not evaluated.
        reports = [analysis.ErrorReport(n, cfg.synthetic_c / n, (0.0,), cfg.synthetic_c / n) for n in cfg.n_list]
        series = analysis.ConvergenceSeries.from_reports(reports, window)
    else:
        kernel = _kernel(cfg, cfg.domain.dimension)
        spec = OperatorSpec(cfg.domain, cfg.n_list[0], p, f, kernel)
        series = analysis.convergence_series(spec, f, cfg.n_list, _eval_grid(cfg), window)
        bounds = []
        for n in cfg.n_list:
            omega = analysis.estimate_modulus(f, 1.0 / n, domain=cfg.domain)
            bounds.append(analysis.theoretical_bound(spec.with_n(n), omega))
        series.bounds = bounds
    analysis.write_series_csv(series, out / "convergence.csv")
    extra = {"alpha": p.alpha, "beta": p.beta, "omega_inflation": analysis.OMEGA_INFLATION}
    analysis.write_series_json(series, out / "convergence.json", **extra)
    if series.bounds is not None and any(e.max_error > b for e, b in zip(series.entries, series.bounds)):
        print("warning: measured error exceeds the rate bound", file=sys.stderr)
        return 1
    return 0


def cmd_nodes(cfg: RunConfig, out: Path) -> int:
    if cfg.domain.dimension != 1:
        raise UsageError("lower", "nodes is one-dimensional")
    p = cfg.params[0]
    k = index_set(cfg.domain, cfg.n).axis(0)
    classical = k / cfg.n
    stancu = perturbed_node(k, cfg.n, p)
    shift = stancu - classical
    _write_csv(out / "nodes.csv", ["k", "classical_node", "stancu_node", "shift"], zip(k.tolist(), classical, stancu, shift))
    limit = node_shift_constant(cfg.domain, p) / cfg.n
    return 0 if np.max(np.abs(shift)) <= limit * (1 + 1e-12) else 1


def cmd_denoise(cfg: RunConfig, out: Path) -> int:
    p = cfg.params[0]
    model = EcgModel()
    grid = np.linspace(0.0, 1.0, cfg.grid_size)
    kernel = _kernel(cfg, 1)
    ns = cfg.n_list if cfg.batch else [cfg.n]
    table = []
    for n in ns:
        signal = sample_noisy(model, n, cfg.noise_std, cfg.seed)
        result = denoise(signal, p, grid, kernel)
        suffix = f"_n{n}" if cfg.batch else ""
        write_signal_csv(signal, out / f"signal{suffix}.csv")
        write_denoise_files(result, signal, out / f"denoise{suffix}.csv", out / f"denoise{suffix}.json")
        table.append(result.metrics())
    if cfg.batch:
        _write_csv(out / "rmse_table.csv", ["n", "rmse"], ((m["n"], m["rmse"]) for m in table))
        _write_json(out / "rmse_table.json", table)
    return 0


def cmd_kernel_check(cfg: RunConfig, out: Path) -> int:
    kernel = _kernel(cfg, 1)
    checks = check_kernel(kernel, truncation=cfg.truncation)
    passed = all(c["passed"] for c in checks.values())
    _write_json(out / "kernel_check.json", {"generator": cfg.generator, "truncation": cfg.truncation, "passed": passed, "checks": checks})
    for name, c in checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}: residual={c['residual']:.3e} tol={c['tolerance']:.3e}")
    return 0 if passed else 1


HANDLERS = {
    "approximate": cmd_approximate,
    "converge": cmd_converge,
    "nodes": cmd_nodes,
    "denoise": cmd_denoise,
    "kernel-check": cmd_kernel_check,
}


def make_cli() -> argparse.ArgumentParser:
    cli = argparse.ArgumentParser(prog="stancu-nno", description="Stancu-type neural network operator experiments")
    cli.add_argument("command", choices=COMMANDS)
    cli.add_argument("--config", type=Path)
    cli.add_argument("--out", type=Path, default=Path("."))
    cli.add_argument("--seed", type=int)
    cli.add_argument("--n", type=int)
    cli.add_argument("--n-list", dest="n_list", type=_int_list, help="comma list or start:stop:step")
    cli.add_argument("--alpha", type=float)
    cli.add_argument("--beta", type=float)
    cli.add_argument("--pairs", type=_pairs, help="alpha,beta pairs separated by ';'")
    cli.add_argument("--noise-std", dest="noise_std", type=float)
    cli.add_argument("--grid-size", dest="grid_size", type=int)
    cli.add_argument("--function", choices=FUNCTION_NAMES)
    cli.add_argument("--constant", type=float)
    cli.add_argument("--truncation", type=float)
    cli.add_argument("--window", type=_int_list)
    cli.add_argument("--batch", action="store_true", default=None)
    cli.add_argument("--synthetic-c", dest="synthetic_c", type=float, help=argparse.SUPPRESS)
    return cli


def main(argv=None) -> int:
    args = make_cli().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "out")}
    try:
        raw = read_config_file(args.config) if args.config else {}
        cfg = resolve_config(args.command, raw, overrides)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (OSError, configparser.Error) as exc:
        print(f"usage error: config: {exc}", file=sys.stderr)
        return 2
    if cfg.command == "converge" and not cfg.n_list:
        print("usage error: n_list: required for converge", file=sys.stderr)
        return 2

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    resolved = asdict(cfg)
    resolved["pairs"] = [list(p) for p in cfg.pairs]
    _write_json(out / "resolved_config.json", resolved)
    try:
        return HANDLERS[cfg.command](cfg, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
