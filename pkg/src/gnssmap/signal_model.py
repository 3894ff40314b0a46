"""Four-parameter logistic (4PL) classifier: evaluation, likelihood, fitting.

The same functional form serves both classifiers of the estimator: the
signal classifier (feature = C/N0 in dB-Hz) and the map classifier
(feature = intersection height in metres).  Both are fitted with
``b > 0`` and ``d < a`` so the open-signal probability rises with the
feature.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit, logit

from . import _backend
from .errors import DegenerateDataError, FitError, NumericalError

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-12
MIN_FIT_TUPLES = 8
MAX_SLOPE = 1e3  # keeps c + 3/b distinguishable from c for separable data
_SQUASH_EPS = 1e-10


@dataclass(frozen=True)
class FourPLParams:
    """Upper asymptote ``a``, slope ``b``, inflection ``c``, lower asymptote ``d``."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        vals = (self.a, self.b, self.c, self.d)
        if not all(map(math.isfinite, vals)):
            raise FitError(f"non-finite 4PL parameters {vals}")
        if not 0.0 <= self.d < self.a <= 1.0:
            raise FitError(f"4PL asymptotes must satisfy 0 <= d < a <= 1, got a={self.a}, d={self.d}")
        if self.b <= 0.0:
            raise FitError(f"4PL slope must be positive, got b={self.b}")

    def as_array(self):
        return np.array([self.a, self.b, self.c, self.d])

    def replace(self, **changes):
        return FourPLParams(**{**asdict(self), **changes})

    def to_dict(self):
        return asdict(self)


# Signal-classifier start values, except for c which is swept.
SIGNAL_INIT = dict(a=0.9, b=0.2, d=0.1)


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 500
    gtol: float = 1e-8


@dataclass(frozen=True)
class FitResult:
    params: FourPLParams
    log_likelihood: float
    converged: bool
    iterations: int
    grad_norm: float
    n_clamped: int = 0
    message: str = ""

    def to_dict(self):
        return {
            **self.params.to_dict(),
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "iterations": self.iterations,
        }


def fourpl_eval(p, x):
    """``d + (a - d) / (1 + exp(-b (x - c)))``, saturating for large ``|b(x-c)|``."""
    s = expit(p.b * (np.asarray(x, dtype=float) - p.c))
    # clip the one-ulp overshoot of d + (a - d) * 1 past a
    out = np.clip(p.d + (p.a - p.d) * s, p.d, p.a)
    return float(out) if np.ndim(out) == 0 else out


def signal_classifier(p, cn0):
    """Open-signal probability from C/N0; blocked signals (None/NaN) give 0."""
    if cn0 is None:
        return 0.0
    cn0 = np.asarray(cn0, dtype=float)
    blocked = np.isnan(cn0)
    prob = np.where(blocked, 0.0, fourpl_eval(p, np.where(blocked, p.c, cn0)))
    return float(prob) if prob.ndim == 0 else prob


def label_by_signal(p, cn0):
    """1 where the signal classifier gives probability strictly above 0.5."""
    return (np.atleast_1d(signal_classifier(p, cn0)) > 0.5).astype(np.int8)


def label_by_height(c, heights):
    """1 where the intersection height lies strictly above ``c``."""
    if not math.isfinite(c):
        raise FitError("height threshold must be finite")
    return (np.asarray(heights, dtype=float) > c).astype(np.int8)


def _check_xy(y, x):
    y = np.asarray(y, dtype=np.int8)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape or y.ndim != 1:
        raise FitError("labels and features must be 1-D arrays of equal length")
    if len(y) == 0:
        raise DegenerateDataError("no tuples to evaluate")
    return y, x


def log_likelihood(p, y, x, kernels=None):
    """Bernoulli log-likelihood with probabilities clamped to [1e-12, 1-1e-12]."""
    y, x = _check_xy(y, x)
    kernels = kernels or _backend.kernels
    ll, _, _ = kernels.loglik_grad(p.a, p.b, p.c, p.d, y, x, False)
    return ll


def log_likelihood_grad(p, y, x, kernels=None):
    """Gradient of :func:`log_likelihood` with respect to (a, b, c, d)."""
    y, x = _check_xy(y, x)
    kernels = kernels or _backend.kernels
    _, grad, _ = kernels.loglik_grad(p.a, p.b, p.c, p.d, y, x, True)
    return grad


# Unconstrained coordinates theta = (u, w, c, v):
#   d = sigmoid(v),  a = d + (1 - d) * sigmoid(u),  b = MAX_SLOPE * sigmoid(w)
# which keeps 0 < d < a < 1 and 0 < b < MAX_SLOPE for every real theta.

def _to_theta(p):
    d = min(max(p.d, _SQUASH_EPS), 1.0 - 2 * _SQUASH_EPS)
    frac = (p.a - d) / (1.0 - d)
    frac = min(max(frac, _SQUASH_EPS), 1.0 - _SQUASH_EPS)
    bfrac = min(max(p.b / MAX_SLOPE, _SQUASH_EPS), 1.0 - _SQUASH_EPS)
    return np.array([logit(frac), logit(bfrac), p.c, logit(d)])


def _from_theta(theta):
    u, w, c, v = theta
    d = float(expit(v))
    a = d + (1.0 - d) * float(expit(u))
    return a, MAX_SLOPE * float(expit(w)), float(c), d


def _theta_objective(theta, y, x, kernels):
    """Negative log-likelihood and its gradient in theta coordinates."""
    u, w, c, v = theta
    if not math.isfinite(c):
        return math.inf, None, 0
    a, b, c, d = _from_theta(theta)
    if not (a > d and b > 0.0):
        return math.inf, None, 0
    ll, g, nclamp = kernels.loglik_grad(a, b, c, d, y, x, True)
    su, sv = float(expit(u)), float(expit(v))
    ga, gb, gc, gd = g
    gtheta = np.array([
        ga * (1.0 - d) * su * (1.0 - su),
        gb * b * (1.0 - b / MAX_SLOPE),
        gc,
        (ga * (1.0 - su) + gd) * sv * (1.0 - sv),
    ])
    return -ll, -gtheta, nclamp


def fit_4pl_mle(y, x, init, opts=None, kernels=None):
    """Maximum-likelihood 4PL fit by BFGS with backtracking line search.

    Works in unconstrained coordinates, so the returned parameters always
    satisfy ``0 < d < a < 1`` and ``0 < b < MAX_SLOPE``.  Separable data
    push the slope towards ``MAX_SLOPE``; such fits report
    ``converged=False``.
    """
    opts = opts or FitOptions()
    kernels = kernels or _backend.kernels
    y, x = _check_xy(y, x)
    if len(y) < MIN_FIT_TUPLES:
        raise DegenerateDataError(f"need at least {MIN_FIT_TUPLES} tuples to fit, got {len(y)}")
    n_pos = int(np.count_nonzero(y == 1))
    if n_pos == 0 or n_pos == len(y):
        raise DegenerateDataError("single-class labels: cannot fit a 4PL classifier")
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite feature values", {"n_nonfinite": int(np.sum(~np.isfinite(x)))})

    theta = _to_theta(init)
    f, g, nclamp = _theta_objective(theta, y, x, kernels)
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericalError("objective not finite at initial parameters",
                             {"init": init.to_dict(), "objective": f})

    best = None
    total_it = 0
    for _ in range(1 + _MAX_ESCAPES):
        theta, f, g, nclamp, gnorm, it, message = _bfgs(theta, f, g, nclamp, y, x, opts, kernels,
                                                             opts.max_iter - total_it)
        total_it += it
        if best is None or f < best[1]:
            best = (theta, f, nclamp, gnorm, message)
        if total_it >= opts.max_iter:
            break
        restart = _escape_boundary(_from_theta(theta), kernels.loglik_grad(*_from_theta(theta), y, x, True)[1])
        if restart is None:
            break
        theta = _to_theta(restart)
        f, g, nclamp = _theta_objective(theta, y, x, kernels)
    theta, f, nclamp, gnorm, message = best

    a, b, c, d = _from_theta(theta)
    if not math.isfinite(f):
        raise NumericalError("objective became non-finite", {"theta": theta.tolist()})
    converged = gnorm < opts.gtol
    if not converged and message == "line search stalled" and gnorm < opts.gtol * max(1.0, abs(f)):
        # f no longer resolves the remaining descent: precision-limited optimum
        converged = True
        message = "gradient at precision floor"
    if converged and (nclamp == len(y) or b >= (1.0 - 1e-6) * MAX_SLOPE):
        # zero gradient only because the probabilities or the slope saturated
        converged = False
        message = "saturated: labels are separable"
    return FitResult(
        params=FourPLParams(a, b, c, d),
        log_likelihood=-f,
        converged=converged,
        iterations=total_it,
        grad_norm=gnorm,
        n_clamped=nclamp,
        message=message,
    )


_MAX_ESCAPES = 3
_BOUND_TOL = 1e-6
_KKT_TOL = 1e-3


def _escape_boundary(params, grad):
    """Restart point if a squashed bound stalled the search, else None.

    Near ``d = 0``, ``a = 1`` or ``b = 0`` the sigmoid coordinates flatten
    the gradient, so BFGS can stop there although the likelihood still
    rises into the interior.
    """
    a, b, c, d = params
    ga, gb, _, gd = grad
    if d < _BOUND_TOL and gd > _KKT_TOL:
        d = min(0.1, 0.25 * a)
    elif 1.0 - a < _BOUND_TOL and ga < -_KKT_TOL:
        a = 1.0 - 0.25 * (1.0 - d)
    elif b < _BOUND_TOL and gb > _KKT_TOL:
        b = 0.01
    else:
        return None
    return FourPLParams(a, b, c, d)


def _bfgs(theta, f, g, nclamp, y, x, opts, kernels, max_iter):
    H = np.eye(4) / max(1.0, float(np.linalg.norm(g)))
    gnorm = float(np.linalg.norm(g))
    message = "iteration cap reached"
    it = 0
    while it < max_iter:
        if gnorm < opts.gtol:
            message = "gradient tolerance reached"
            break
        it += 1
        step = -H @ g
        slope = float(g @ step)
        if slope >= 0.0:
            # BFGS lost positive definiteness; restart along steepest descent.
            H = np.eye(4) / max(1.0, gnorm)
            step = -H @ g
            slope = float(g @ step)
        alpha = 1.0
        accepted = False
        f_noise = 1e-13 * max(1.0, abs(f))
        for _ in range(60):
            cand = theta + alpha * step
            f_new, g_new, nclamp_new = _theta_objective(cand, y, x, kernels)
            if math.isfinite(f_new):
                if f_new < f and f_new <= f + 1e-4 * alpha * slope:
                    accepted = True
                # Near the optimum f stops resolving; accept reasonably long
                # steps that stay within rounding of f and shrink the gradient.
                elif (alpha >= 1e-3 and f_new <= f + f_noise
                      and np.linalg.norm(g_new) < gnorm):
                    accepted = True
            if accepted:
                break
            alpha *= 0.5
        if not accepted:
            message = "line search stalled"
            break
        s = cand - theta
        yk = g_new - g
        sy = float(s @ yk)
        if it == 1 and sy > 0:
            H = np.eye(4) * (sy / float(yk @ yk))
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yk):
            rho = 1.0 / sy
            V = np.eye(4) - rho * np.outer(s, yk)
            H = V @ H @ V.T + rho * np.outer(s, s)
        theta, f, g, nclamp = cand, f_new, g_new, nclamp_new
        gnorm = float(np.linalg.norm(g))
    else:
        if gnorm < opts.gtol:
            message = "gradient tolerance reached"
    return theta, f, g, nclamp, gnorm, it, message


def null_log_likelihood(y):
    """Log-likelihood of the intercept-only model (constant open rate)."""
    y = np.asarray(y)
    n1 = int(np.count_nonzero(y == 1))
    n0 = len(y) - n1
    ll = 0.0
    if n1:
        ll += n1 * math.log(n1 / len(y))
    if n0:
        ll += n0 * math.log(n0 / len(y))
    return ll


def mcfadden_r2(log_lik, y):
    """McFadden pseudo-R^2, ``1 - LL_model / LL_null``."""
    ll0 = null_log_likelihood(y)
    if ll0 == 0.0:
        return float("nan")
    return 1.0 - log_lik / ll0
