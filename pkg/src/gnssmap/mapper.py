"""Building-height estimators.

``run_4plb`` is the bootstrapped co-training estimator: signals are
labelled by a C/N0 classifier, a 4PL is fitted to the labels as a function
of intersection height, the signals are relabelled by ``h > c`` and the C/N0
classifier is refitted, until the height labelling stops changing.  The
other three estimators are comparison baselines that use the initial C/N0
classifier only.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateDataError, EmptyDatasetError
from .signal_model import (
    SIGNAL_INIT,
    PROB_CLAMP,
    FitOptions,
    FourPLParams,
    fit_4pl_mle,
    label_by_height,
    label_by_signal,
    signal_classifier,
)

logger = logging.getLogger(__name__)

ALGORITHMS = ("4plb", "4pl", "hinge", "bayes")
MAP_INIT = dict(a=0.9, b=1.0, d=0.1)
GRID_STEP = 0.01
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ConvergenceConfig:
    max_iterations: int = 10
    label_change_fraction: float = 0.01
    param_rel_tol: float = 1e-4

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not 0.0 < self.label_change_fraction < 1.0:
            raise ConfigError("label_change_fraction must lie in (0, 1)")
        if self.param_rel_tol < 0.0:
            raise ConfigError("param_rel_tol must be non-negative")


@dataclass(frozen=True)
class IterationSnapshot:
    iteration: int
    map_params: FourPLParams
    signal_params: FourPLParams
    labels_changed: int
    open_count: int


@dataclass(frozen=True)
class HeightEstimate:
    point: float
    range_low: float
    range_high: float
    map_params: FourPLParams | None
    signal_params: FourPLParams
    converged: bool
    iterations: int
    trace: list = field(default_factory=list)
    algorithm: str = "4plb"
    reason: str = ""

    @classmethod
    def from_map(cls, map_params, signal_params, converged, iterations, trace=(), algorithm="4plb",
                 reason=""):
        """Point estimate ``c + 1.5/b`` inside the range ``(c, c + 3/b)``."""
        if map_params is None:
            nan = float("nan")
            return cls(nan, nan, nan, None, signal_params, False, iterations, list(trace),
                       algorithm, reason)
        c, b = map_params.c, map_params.b
        return cls(c + 1.5 / b, c, c + 3.0 / b, map_params, signal_params, converged, iterations,
                   list(trace), algorithm, reason)

    @property
    def range_width(self):
        return self.range_high - self.range_low

    def to_dict(self):
        return {
            "algorithm": self.algorithm,
            "point": self.point,
            "range_low": self.range_low,
            "range_high": self.range_high,
            "map_params": None if self.map_params is None else self.map_params.to_dict(),
            "signal_params": self.signal_params.to_dict(),
            "converged": self.converged,
            "iterations": self.iterations,
            "reason": self.reason,
            "trace": [
                {
                    "iteration": s.iteration,
                    "map_params": s.map_params.to_dict(),
                    "signal_params": s.signal_params.to_dict(),
                    "labels_changed": s.labels_changed,
                    "open_count": s.open_count,
                }
                for s in self.trace
            ],
        }


@dataclass(frozen=True)
class BaselineEstimate:
    """Height from a non-probabilistic baseline; always yields a value."""

    point: float
    algorithm: str
    warning: str = ""
    converged: bool = True

    def __float__(self):
        return self.point

    def to_dict(self):
        return {"algorithm": self.algorithm, "point": self.point, "converged": self.converged,
                "warning": self.warning}


def _check_dataset(ds):
    if len(ds) == 0:
        raise EmptyDatasetError("dataset is empty")


def _relative_change(old, new):
    old_v, new_v = old.as_array(), new.as_array()
    return float(np.linalg.norm(new_v - old_v) / max(np.linalg.norm(old_v), 1e-12))


def initial_map_params(heights):
    return FourPLParams(c=float(np.median(heights)), **MAP_INIT)


def run_4plb(ds, init_signal, cfg=None, fit_opts=None):
    """Bootstrapped 4PL height estimate.

    Stops when the share of height labels that changed between two
    consecutive iterations drops below ``cfg.label_change_fraction``, when
    the map parameters move less than ``cfg.param_rel_tol`` (relative), or
    after ``cfg.max_iterations``; only the last case reports
    ``converged=False``.  A single-class labelling ends the run with
    ``converged=False`` and the reason recorded.
    """
    _check_dataset(ds)
    cfg = cfg or ConvergenceConfig()
    fit_opts = fit_opts or FitOptions()
    h = np.asarray(ds.height, dtype=float)
    cn0 = np.asarray(ds.cn0, dtype=float)
    received = ~np.isnan(cn0)
    n = len(h)

    signal = init_signal
    map_params = None
    prev_labels = None
    trace = []

    for it in range(1, cfg.max_iterations + 1):
        y = label_by_signal(signal, cn0)
        try:
            map_fit = fit_4pl_mle(y, h, map_params or initial_map_params(h), fit_opts)
        except DegenerateDataError as exc:
            return HeightEstimate.from_map(map_params, signal, False, it, trace,
                                           reason=f"map fit degenerate: {exc}")
        new_map = map_fit.params
        yh = label_by_height(new_map.c, h)
        changed = n if prev_labels is None else int(np.count_nonzero(yh != prev_labels))
        try:
            signal_fit = fit_4pl_mle(yh[received], cn0[received], signal, fit_opts)
        except DegenerateDataError as exc:
            return HeightEstimate.from_map(new_map, signal, False, it, trace,
                                           reason=f"signal fit degenerate: {exc}")
        trace.append(IterationSnapshot(it, new_map, signal_fit.params, changed,
                                       int(np.count_nonzero(yh))))
        logger.debug("4PL-B iteration %d: c=%.3f b=%.4f changed=%d", it, new_map.c, new_map.b, changed)

        reason = ""
        if prev_labels is not None and changed / n < cfg.label_change_fraction:
            reason = "label change below threshold"
        elif map_params is not None and _relative_change(map_params, new_map) < cfg.param_rel_tol:
            reason = "map parameters stable"
        map_params, signal, prev_labels = new_map, signal_fit.params, yh
        if reason:
            return HeightEstimate.from_map(map_params, signal, True, it, trace, reason=reason)

    return HeightEstimate.from_map(map_params, signal, False, cfg.max_iterations, trace,
                                   reason="iteration cap reached")


def run_4pl(ds, init_signal, fit_opts=None):
    """Single-pass 4PL: label by the initial C/N0 classifier, fit the map once."""
    _check_dataset(ds)
    h = np.asarray(ds.height, dtype=float)
    y = label_by_signal(init_signal, ds.cn0)
    try:
        fit = fit_4pl_mle(y, h, initial_map_params(h), fit_opts)
    except DegenerateDataError as exc:
        return HeightEstimate.from_map(None, init_signal, False, 1, algorithm="4pl",
                                       reason=f"map fit degenerate: {exc}")
    snap = IterationSnapshot(1, fit.params, init_signal, len(h),
                             int(np.count_nonzero(label_by_height(fit.params.c, h))))
    return HeightEstimate.from_map(fit.params, init_signal, fit.converged, 1, [snap],
                                   algorithm="4pl", reason=fit.message)


def golden_section_min(f, lo, hi, tol=GRID_STEP):
    """Golden-section search for the minimiser of a unimodal ``f`` on [lo, hi]."""
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def _sublevel_edge(f, level, inside, outside, tol=1e-4):
    """Bisect for the boundary of ``{f <= level}`` between two points."""
    while abs(outside - inside) > tol:
        mid = (inside + outside) / 2.0
        if f(mid) <= level:
            inside = mid
        else:
            outside = mid
    return inside


def hinge_loss(height, labels, candidate):
    """Penalty of open signals below and closed signals above ``candidate``."""
    open_h = height[labels == 1]
    closed_h = height[labels == 0]
    return float(np.sum(np.maximum(0.0, candidate - open_h))
                 + np.sum(np.maximum(0.0, closed_h - candidate)))


def run_hinge(ds, init_signal):
    """Hinge-loss height: minimise the misclassification penalty.

    The loss is convex and piecewise linear, so its minimisers form an
    interval; the midpoint of that interval is returned.
    """
    _check_dataset(ds)
    h = np.asarray(ds.height, dtype=float)
    y = label_by_signal(init_signal, ds.cn0)
    lo, hi = float(h.min()), float(h.max())
    n_open = int(np.count_nonzero(y))
    if n_open == 0:
        return BaselineEstimate(hi, "hinge", "no open signals: boundary solution")
    if n_open == len(y):
        return BaselineEstimate(lo, "hinge", "no closed signals: boundary solution")
    if hi == lo:
        return BaselineEstimate(lo, "hinge")

    def loss(H):
        return hinge_loss(h, y, H)

    best = golden_section_min(loss, lo, hi)
    level = loss(best)
    level += 1e-9 * max(1.0, abs(level))
    left = lo if loss(lo) <= level else _sublevel_edge(loss, level, best, lo)
    right = hi if loss(hi) <= level else _sublevel_edge(loss, level, best, hi)
    return BaselineEstimate((left + right) / 2.0, "hinge")


def bayes_grid(lo, hi, step=GRID_STEP):
    n = int(math.floor((hi - lo) / step + 1e-9))
    grid = lo + step * np.arange(n + 1)
    if grid[-1] < hi:
        grid = np.append(grid, hi)
    return grid


def bayes_log_likelihood(height, p_open, grid):
    """Log-likelihood of each candidate height given C/N0 open probabilities.

    A signal is implied open iff its intersection height exceeds the
    candidate; it then contributes ``ln p`` and otherwise ``ln(1 - p)``.
    """
    p = np.clip(p_open, PROB_CLAMP, 1.0 - PROB_CLAMP)
    order = np.argsort(height, kind="stable")
    hs = height[order]
    lp = np.log(p[order])
    lq = np.log1p(-p[order])
    cum_q = np.concatenate([[0.0], np.cumsum(lq)])
    cum_p = np.concatenate([[0.0], np.cumsum(lp)])
    k = np.searchsorted(hs, grid, side="right")  # count of h <= H
    return cum_q[k] + (cum_p[-1] - cum_p[k])


def run_bayes(ds, signal_params, step=GRID_STEP):
    """Maximum-likelihood height over a regular grid spanning the data."""
    _check_dataset(ds)
    h = np.asarray(ds.height, dtype=float)
    p = np.atleast_1d(signal_classifier(signal_params, ds.cn0))
    grid = bayes_grid(float(h.min()), float(h.max()), step)
    ll = bayes_log_likelihood(h, p, grid)
    return BaselineEstimate(float(grid[int(np.argmax(ll))]), "bayes")


def estimate(ds, algorithm, init_signal, cfg=None):
    if algorithm == "4plb":
        return run_4plb(ds, init_signal, cfg)
    if algorithm == "4pl":
        return run_4pl(ds, init_signal)
    if algorithm == "hinge":
        return run_hinge(ds, init_signal)
    if algorithm == "bayes":
        return run_bayes(ds, init_signal)
    raise ConfigError(f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}")


@dataclass(frozen=True)
class EvaluationReport:
    rmse: float
    n_converged: int
    n_total: int
    min_point: float
    max_point: float
    spread: float
    median_range_width: float
    no_result: bool

    def to_dict(self):
        return {k: (None if isinstance(v, float) and math.isnan(v) else v)
                for k, v in self.__dict__.items()}


def _point_of(est):
    if isinstance(est, (HeightEstimate, BaselineEstimate)):
        return est.point, est.converged
    return float(est), True


def evaluate(estimates, truth):
    """RMSE and spread of converged estimates against a true height."""
    estimates = list(estimates)
    if not estimates:
        raise ConfigError("evaluate needs at least one estimate")
    pts = np.array([p for p, ok in map(_point_of, estimates) if ok and math.isfinite(p)])
    widths = [e.range_width for e in estimates
              if isinstance(e, HeightEstimate) and e.converged and math.isfinite(e.point)]
    nan = float("nan")
    if len(pts) == 0:
        return EvaluationReport(nan, 0, len(estimates), nan, nan, nan, nan, True)
    return EvaluationReport(
        rmse=float(np.sqrt(np.mean((pts - truth) ** 2))),
        n_converged=len(pts),
        n_total=len(estimates),
        min_point=float(pts.min()),
        max_point=float(pts.max()),
        spread=float(pts.max() - pts.min()),
        median_range_width=float(np.median(widths)) if widths else nan,
        no_result=False,
    )


@dataclass(frozen=True)
class SweepRow:
    init_c: float
    algorithm: str
    estimate: HeightEstimate | BaselineEstimate


def _sweep_one(args):
    ds, c, base, algorithms, cfg = args
    init = FourPLParams(c=c, **base)
    return [SweepRow(c, algo, estimate(ds, algo, init, cfg)) for algo in algorithms]


def threshold_values(c_min=20.0, c_max=40.0, step=1.0):
    """Initial C/N0 inflections ``c_min, c_min + step, ...`` below ``c_max``.

    The upper bound is exclusive, so the defaults give 20 thresholds.
    """
    if step <= 0 or c_max <= c_min:
        raise ConfigError("sweep needs step > 0 and c_max > c_min")
    n = int(math.ceil((c_max - c_min) / step - 1e-9))
    return [c_min + k * step for k in range(n)]


def sweep(ds, c_values, base_init=None, algorithms=ALGORITHMS, cfg=None, jobs=1):
    """Run every algorithm for each initial C/N0 inflection in ``c_values``.

    Rows come back ordered by threshold, then by algorithm, whatever
    ``jobs`` is.
    """
    base = dict(SIGNAL_INIT if base_init is None else base_init)
    base.pop("c", None)
    tasks = [(ds, float(c), base, tuple(algorithms), cfg) for c in c_values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_sweep_one, tasks))
    else:
        chunks = [_sweep_one(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]
