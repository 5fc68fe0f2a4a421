"""Monte Carlo harnesses: noise sweeps, cardinality histograms, constants tables.

Every trial draws its own matrix, ground truth and noise from a seed derived
from ``(seed, trial, noise_index)``, so adding noise levels or trials never
changes existing cells. CSV output is byte-identical for identical configs;
timing and version information only go into the JSON report.
"""
import csv
import io
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .certificates import DEFAULT_CAP, crt_condition, rlip_table, subset_count
from .exceptions import DivergenceError, EnumerationCapError, InvalidArgumentError
from .model import SensingMatrix, generate_sensing_matrix, make_instance, oracle_solution
from .penalties import L1, make_penalty
from .solver import SolverConfig, fbs_solve

logger = logging.getLogger(__name__)

__all__ = [
    "ALL_METHODS",
    "SweepConfig",
    "SweepReport",
    "HistConfig",
    "HistReport",
    "ConstantsReport",
    "trial_seed",
    "l1_weight",
    "run_noise_sweep",
    "run_cardinality_histogram",
    "run_constants_table",
]

ALL_METHODS = ("l1", "card", "pk", "qcard", "qpk")
DEFAULT_NOISE_GRID = tuple(0.5 * i for i in range(11))


def trial_seed(seed, trial, noise_index=0):
    return np.random.SeedSequence([int(seed), int(trial), int(noise_index)])


def l1_weight(noise_norm, n):
    """``lam = ||eps|| / sqrt(n) * sqrt(2 log n)`` (uses the true noise norm)."""
    return noise_norm / math.sqrt(n) * math.sqrt(2.0 * math.log(n))


def _method_penalty(method, mu, K, noise_norm, n):
    if method == "l1":
        lam = l1_weight(noise_norm, n)
        # lam = 0 at zero noise; keep the soft threshold well defined
        return L1(max(lam, 1e-12))
    return make_penalty(method, mu=mu, K=K)


@dataclass(frozen=True)
class SweepConfig:
    m: int = 100
    n: int = 200
    K: int = 10
    noise_grid: tuple = DEFAULT_NOISE_GRID
    trials: int = 50
    methods: tuple = ALL_METHODS
    mu: float = 1.0
    seed: int = 0
    start: str = "zero"
    max_iter: int = 1000
    x0_norm: float = 11.0
    mag_range: tuple = (2.0, 4.0)

    def __post_init__(self):
        object.__setattr__(self, "noise_grid", tuple(float(v) for v in self.noise_grid))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "mag_range", tuple(float(v) for v in self.mag_range))
        if self.trials < 1:
            raise InvalidArgumentError("trials must be >= 1")
        grid = np.asarray(self.noise_grid)
        if grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid) <= 0):
            raise InvalidArgumentError("noise_grid must be non-negative and strictly ascending")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise InvalidArgumentError(f"unknown methods {sorted(unknown)}")
        if self.start not in ("zero", "lstsq"):
            raise InvalidArgumentError("start must be 'zero' or 'lstsq'")
        if not 0 <= self.K <= self.n:
            raise InvalidArgumentError("need 0 <= K <= n")


_TRIAL_FIELDS = (
    "method", "noise_index", "noise", "trial", "err_x0", "err_xS", "card", "recovered",
    "snr", "iterations", "converged", "stationarity", "shadow_norm", "monotone", "error",
)


def _run_cell(cfg, trial, noise_index):
    noise = cfg.noise_grid[noise_index]
    inst = make_instance(cfg.m, cfg.n, cfg.K, noise, trial_seed(cfg.seed, trial, noise_index),
                         mag_range=cfg.mag_range, target_norm=cfg.x0_norm)
    x_S = oracle_solution(inst.A, inst.b, inst.support)
    signal = float(np.linalg.norm(inst.A.entries @ inst.x0))
    snr = signal / noise if noise > 0 else math.inf
    solver_cfg = SolverConfig(max_iter=cfg.max_iter, start=cfg.start)
    rows = []
    for method in cfg.methods:
        kind = _method_penalty(method, cfg.mu, cfg.K, noise, cfg.n)
        row = {"method": method, "noise_index": noise_index, "noise": noise, "trial": trial,
               "snr": snr}
        try:
            res = fbs_solve(inst.A, inst.b, kind, solver_cfg)
        except DivergenceError as exc:
            row.update(error=str(exc))
            rows.append(row)
            continue
        trace = res.objective_trace
        trace = trace[int(np.argmax(np.isfinite(trace))):]  # pk from lstsq starts at inf
        row.update(
            err_x0=float(np.linalg.norm(res.x_final - inst.x0)),
            err_xS=float(np.linalg.norm(res.x_final - x_S)),
            card=int(res.support.size),
            recovered=bool(np.array_equal(res.support, inst.support)),
            iterations=res.iterations_used,
            converged=res.converged,
            stationarity=res.stationarity_residual,
            shadow_norm=res.shadow_norm,
            monotone=bool(np.all(np.diff(trace) <= 1e-9)),
            error="",
        )
        rows.append(row)
    return rows


def _format(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _csv_text(rows, fields):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fields, lineterminator="\r\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({f: _format(row.get(f)) for f in fields})
    return buf.getvalue()


@dataclass
class SweepReport:
    config: SweepConfig
    trials: list
    summary: list
    wall_clock: float = 0.0
    version: str = __version__
    warnings: list = field(default_factory=list)

    def cell(self, method, noise):
        for row in self.summary:
            if row["method"] == method and math.isclose(row["noise"], noise):
                return row
        raise KeyError((method, noise))

    def summary_csv(self):
        return _csv_text(self.summary, _SUMMARY_FIELDS)

    def trials_csv(self):
        return _csv_text(self.trials, _TRIAL_FIELDS)

    def to_dict(self):
        return {
            "config": asdict(self.config),
            "version": self.version,
            "wall_clock_seconds": self.wall_clock,
            "trial_seeds": {
                f"{t}:{i}": list(trial_seed(self.config.seed, t, i).entropy)
                for t in range(self.config.trials) for i in range(len(self.config.noise_grid))
            },
            "summary": self.summary,
            "warnings": self.warnings,
        }


_SUMMARY_FIELDS = (
    "method", "noise", "trials", "failed", "mean_err_x0", "mean_err_xS", "recovery_rate",
    "mean_card", "mean_snr", "converged", "max_rel_stationarity", "all_monotone",
)


def _summarize(cfg, rows):
    summary = []
    for method in cfg.methods:
        for i, noise in enumerate(cfg.noise_grid):
            cell = [r for r in rows if r["method"] == method and r["noise_index"] == i]
            ok = [r for r in cell if not r.get("error")]
            mean = (lambda key: float(np.mean([r[key] for r in ok])) if ok else math.nan)
            summary.append({
                "method": method,
                "noise": noise,
                "trials": len(ok),
                "failed": len(cell) - len(ok),
                "mean_err_x0": mean("err_x0"),
                "mean_err_xS": mean("err_xS"),
                "recovery_rate": mean("recovered"),
                "mean_card": mean("card"),
                "mean_snr": float(np.mean([r["snr"] for r in cell])),
                "converged": int(sum(r["converged"] for r in ok)),
                "max_rel_stationarity": max(
                    (r["stationarity"] / (1.0 + r["shadow_norm"]) for r in ok), default=math.nan),
                "all_monotone": all(r["monotone"] for r in ok),
            })
    return summary


def _monotone_warnings(cfg, summary, slack=0.05):
    out = []
    for method in cfg.methods:
        rates = [row["recovery_rate"] for row in summary if row["method"] == method]
        for i in range(1, len(rates)):
            if rates[i] > rates[i - 1] + slack:
                out.append(f"{method}: recovery rate rises from {rates[i - 1]:.2f} to "
                           f"{rates[i]:.2f} at noise {cfg.noise_grid[i]}")
    return out


def run_noise_sweep(cfg, n_jobs=1):
    """Run every method on ``trials`` fresh instances per noise level.

    Solver divergences are recorded per trial and excluded from the means;
    the summary carries their count in ``failed``.
    """
    started = time.perf_counter()
    cells = [(t, i) for i in range(len(cfg.noise_grid)) for t in range(cfg.trials)]
    results = Parallel(n_jobs=n_jobs)(delayed(_run_cell)(cfg, t, i) for t, i in cells)
    rows = [row for cell in results for row in cell]
    rows.sort(key=lambda r: (cfg.methods.index(r["method"]), r["noise_index"], r["trial"]))
    summary = _summarize(cfg, rows)
    report = SweepReport(cfg, rows, summary, time.perf_counter() - started)
    report.warnings = _monotone_warnings(cfg, summary)
    for w in report.warnings:
        logger.warning(w)
    return report


# -- cardinality histogram ----------------------------------------------------------

@dataclass(frozen=True)
class HistConfig:
    m: int = 100
    n: int = 200
    K: int = 10
    noise: float = 2.5
    trials: int = 50
    method: str = "qcard"
    mu: float = 1.0
    seed: int = 0
    start: str = "lstsq"
    max_iter: int = 1000
    x0_norm: float = 11.0
    mag_range: tuple = (2.0, 4.0)

    def __post_init__(self):
        object.__setattr__(self, "mag_range", tuple(float(v) for v in self.mag_range))
        if self.trials < 1:
            raise InvalidArgumentError("trials must be >= 1")
        if self.method not in ALL_METHODS:
            raise InvalidArgumentError(f"unknown method {self.method!r}")
        if self.noise < 0:
            raise InvalidArgumentError("noise must be >= 0")


@dataclass
class HistReport:
    config: HistConfig
    cards: list
    counts: np.ndarray
    trial_rows: list
    wall_clock: float = 0.0
    version: str = __version__

    def counts_csv(self):
        rows = [{"card": c, "count": int(v)} for c, v in enumerate(self.counts)]
        return _csv_text(rows, ("card", "count"))

    def trials_csv(self):
        return _csv_text(self.trial_rows, _TRIAL_FIELDS)

    def to_dict(self):
        return {
            "config": asdict(self.config),
            "version": self.version,
            "wall_clock_seconds": self.wall_clock,
            "trial_seeds": {str(t): list(trial_seed(self.config.seed, t).entropy)
                            for t in range(self.config.trials)},
            "cards": list(self.cards),
        }


def run_cardinality_histogram(cfg, n_jobs=1):
    """Histogram (bins ``0..n``) of the final cardinality over ``trials`` solves."""
    started = time.perf_counter()
    sweep_cfg = SweepConfig(m=cfg.m, n=cfg.n, K=cfg.K, noise_grid=(cfg.noise,),
                            trials=cfg.trials, methods=(cfg.method,), mu=cfg.mu, seed=cfg.seed,
                            start=cfg.start, max_iter=cfg.max_iter, x0_norm=cfg.x0_norm,
                            mag_range=cfg.mag_range)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_run_cell)(sweep_cfg, t, 0) for t in range(cfg.trials))
    rows = [row for cell in results for row in cell]
    cards = [r["card"] for r in rows if not r.get("error")]
    counts = np.bincount(np.asarray(cards, dtype=np.intp), minlength=cfg.n + 1)
    return HistReport(cfg, cards, counts, rows, time.perf_counter() - started)


# -- RLIP / RIP constants --------------------------------------------------------------

@dataclass
class ConstantsReport:
    m: int
    n: int
    seed: int
    rows: list
    crt: list
    warnings: list = field(default_factory=list)
    wall_clock: float = 0.0
    version: str = __version__

    def table_csv(self):
        return _csv_text(self.rows, ("matrix", "k", "beta_k", "inv_beta_k", "delta_k",
                                     "subsets_scanned"))

    def crt_csv(self):
        return _csv_text(self.crt, ("matrix", "K", "lhs", "holds"))

    def betas(self, matrix=0):
        return {r["k"]: r["beta_k"] for r in self.rows if r["matrix"] == matrix}

    def to_dict(self):
        return {"m": self.m, "n": self.n, "seed": self.seed, "version": self.version,
                "wall_clock_seconds": self.wall_clock, "rows": self.rows, "crt": self.crt,
                "warnings": self.warnings}


def run_constants_table(m, n, k_max, num_matrices=1, seed=0, with_delta=False,
                        cap=DEFAULT_CAP, matrices=None, n_jobs=1):
    """``beta_k`` (optionally ``delta_k``) for ``k = 1..k_max`` on random matrices.

    ``k`` values whose enumeration would exceed ``cap`` are dropped with a
    warning, except that ``beta_k = 0`` is recorded without enumeration for
    ``k > m``. With ``with_delta`` the classical condition
    ``delta_{3K} + 3 delta_{4K} < 2`` is evaluated for every ``K`` with
    ``4K <= k_max``.
    """
    started = time.perf_counter()
    if matrices is None:
        matrices = [generate_sensing_matrix(m, n, np.random.SeedSequence([int(seed), i]))
                    for i in range(num_matrices)]
    k_max = min(int(k_max), n)
    report = ConstantsReport(m=m, n=n, seed=seed, rows=[], crt=[])
    ks = []
    for k in range(1, k_max + 1):
        if k > m and not with_delta:
            ks.append(k)
        elif subset_count(n, k) > cap:
            msg = f"k={k}: C({n},{k})={subset_count(n, k)} subsets exceeds cap {cap}; skipped"
            report.warnings.append(msg)
            warnings.warn(msg, stacklevel=2)
        else:
            ks.append(k)
    for i, A in enumerate(matrices):
        entries = A.entries if isinstance(A, SensingMatrix) else np.asarray(A, dtype=float)
        table = rlip_table(entries, ks, with_delta=with_delta, cap=cap, n_jobs=n_jobs)
        for k in ks:
            beta = table.betas[k]
            report.rows.append({
                "matrix": i, "k": k, "beta_k": beta,
                "inv_beta_k": 1.0 / beta if beta > 0 else math.inf,
                "delta_k": table.deltas.get(k, ""),
                "subsets_scanned": table.enumeration_counts[k],
            })
        if with_delta:
            for K in range(1, k_max // 4 + 1):
                if 3 * K in table.deltas and 4 * K in table.deltas:
                    lhs = table.deltas[3 * K] + 3.0 * table.deltas[4 * K]
                    report.crt.append({"matrix": i, "K": K, "lhs": lhs, "holds": lhs < 2.0})
    report.wall_clock = time.perf_counter() - started
    return report


# -- SVG rendering -------------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "quadenv"  # stable element ids
    return plt


def plot_sweep(report, path):
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for method in report.config.methods:
        rows = [r for r in report.summary if r["method"] == method]
        noise = [r["noise"] for r in rows]
        axes[0].plot(noise, [r["mean_err_x0"] for r in rows], marker="o", label=method)
        axes[1].plot(noise, [r["mean_err_xS"] for r in rows], marker="o", label=method)
    axes[0].set_ylabel("mean ||x' - x0||")
    axes[1].set_ylabel("mean ||x' - x_S||")
    for ax in axes:
        ax.set_xlabel("||eps||")
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_histogram(report, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(np.arange(report.counts.size), report.counts, width=1.0)
    ax.set_xlabel("card(x')")
    ax.set_ylabel("trials")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_constants(report, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in sorted({r["matrix"] for r in report.rows}):
        rows = [r for r in report.rows if r["matrix"] == i and r["beta_k"] > 0]
        ax.plot([r["k"] for r in rows], [r["inv_beta_k"] for r in rows], marker=".")
    ax.set_xlabel("k")
    ax.set_ylabel("1 / beta_k")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
