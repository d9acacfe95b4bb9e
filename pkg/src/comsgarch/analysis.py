"""Verification harnesses: exhaustive path enumeration, noise-injection
ensemble combinatorics, perturbation-stability quantities, and the evaluation
metrics used to score fitted runs.

The enumeration oracle re-derives everything with plain scalar arithmetic so
it stays an independent check on the vectorized/windowed implementations.
"""

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import volatility_path
from .errors import DomainError, ValidationError
from .types import DiffSeries, RegimeParams, StatePath, TransitionRates

ENUMERATION_CAP = 10**6


def _direct_log_joint(y, dt, s, params, rates, sigma2_0, exact):
    """Log joint of one path: straight per-step products, no shared kernels.

    For exact increment variances this uses the plain closed form, which is
    accurate away from beta == lam; oracle instances should keep
    |beta - lam| * dt above ~1e-3.
    """
    nu = params.nu
    prev = sigma2_0
    total = 0.0
    for i in range(len(y)):
        k = s[i] - 1
        a, b, lm = params.alpha[k], params.beta[k], params.lam[k]
        if exact:
            d = b - lm
            rho2 = (prev - a / d) * (math.expm1(d * dt[i]) / d) + a * dt[i] / d
        else:
            rho2 = prev * dt[i]
        if rho2 <= 0:
            raise DomainError("non-positive increment variance in oracle", index=i + 1)
        total += -0.5 * math.log(2.0 * math.pi * rho2) - y[i] ** 2 / (2.0 * rho2)
        if i > 0:
            kp = s[i - 1] - 1
            if k == kp:
                xi = 2.0 - nu
                for j in range(nu):
                    if j != kp:
                        xi += math.exp(-rates.eta[j, kp] * dt[i])
            else:
                xi = 1.0 - math.exp(-rates.eta[k, kp] * dt[i])
            if xi <= 0:
                raise DomainError("non-positive transition factor in oracle", index=i + 1)
            total += math.log(xi)
        prev = a * dt[i] + (prev + lm * y[i] ** 2) * math.exp(-b * dt[i])
    return total


@dataclass(frozen=True)
class PathEnumeration:
    """Every path with its exact log joint posterior (flat priors)."""

    paths: np.ndarray  # (count, n) int matrix of state labels
    log_joint: np.ndarray  # (count,)

    def posterior(self) -> np.ndarray:
        m = np.max(self.log_joint)
        w = np.exp(self.log_joint - m)
        return w / w.sum()


def enumerate_paths(
    diff: DiffSeries,
    params: RegimeParams,
    rates: TransitionRates,
    sigma2_0: float,
    rho_mode: str = "approx",
) -> PathEnumeration:
    """Exhaustively score all nu^n state paths (guarded at 10^6 paths)."""
    nu = params.nu
    n = diff.n
    if nu**n > ENUMERATION_CAP:
        raise ValidationError(f"{nu}^{n} paths exceed the enumeration cap of {ENUMERATION_CAP}")
    exact = rho_mode == "exact"
    y = diff.Y
    dt = diff.dt
    paths = np.array(list(itertools.product(range(1, nu + 1), repeat=n)), dtype=np.int64)
    log_joint = np.array(
        [_direct_log_joint(y, dt, p, params, rates, sigma2_0, exact) for p in paths]
    )
    return PathEnumeration(paths=paths, log_joint=log_joint)


def exact_state_conditional(
    i: int,
    path: StatePath,
    params: RegimeParams,
    rates: TransitionRates,
    diff: DiffSeries,
    sigma2_0: float,
    rho_mode: str = "approx",
) -> np.ndarray:
    """Exact conditional of the state at step i given everything else.

    Evaluates the full joint at each candidate with the rest of the path
    fixed, then renormalizes; the direct (unwindowed) counterpart of the
    inference routine.
    """
    n = diff.n
    if not 1 <= i <= n:
        raise ValidationError(f"index i={i} outside 1..{n}")
    exact = rho_mode == "exact"
    logw = np.empty(params.nu)
    for v in range(1, params.nu + 1):
        s = path.s.copy()
        s[i - 1] = v
        logw[v - 1] = _direct_log_joint(diff.Y, diff.dt, s, params, rates, sigma2_0, exact)
    m = np.max(logw)
    w = np.exp(logw - m)
    return w / w.sum()


def ensemble_weight(k: int, b: int, p: float):
    """Count and weight of length-k spans producing one pivotal window.

    A span of k consecutive observations yields a b-observation window by
    keeping the pivot plus b - 1 of the following k - 1 points: there are
    C(k-1, b-1) keep patterns, each of probability p^(k-b) (1-p)^(b-1)
    (0^0 = 1, so p = 0 keeps only the k = b span).
    """
    if b < 1 or k < b:
        raise DomainError(f"need k >= b >= 1, got k={k}, b={b}")
    if not 0 <= p < 1:
        raise ValidationError(f"rate p={p:g} must lie in [0, 1)")
    count = math.comb(k - 1, b - 1)
    weight = p ** (k - b) * (1.0 - p) ** (b - 1)
    return count, weight


def _check_rho2_values(rho2_values):
    r = np.asarray(rho2_values, dtype=float)
    if r.ndim != 1 or len(r) < 2:
        raise ValidationError("need at least two increment variances")
    if np.any(r <= 0):
        raise ValidationError("increment variances must be positive")
    return r


def dispersion_product(rho2_values) -> float:
    """sum(rho^2) * sum(1/rho^2) over a merged span; equals len^2 at equality
    and exceeds len^2 otherwise (the direction behind the stability claim)."""
    r = _check_rho2_values(rho2_values)
    return float(np.sum(r) * np.sum(1.0 / r))


def perturbation_gaps(rho2_values, eps: float):
    """Expected objective shifts from observation noise of scale eps on a span.

    Returns (merged, split): the shift when the span's increments are merged
    into one (noise terms pool against the summed variance) versus scored
    separately. merged = len * eps^2 / (2 sum(rho^2));
    split = sum(eps^2 / (2 rho^2)).
    """
    r = _check_rho2_values(rho2_values)
    if eps < 0:
        raise ValidationError(f"eps={eps:g} must be non-negative")
    merged = len(r) * eps**2 / (2.0 * float(np.sum(r)))
    split = float(np.sum(eps**2 / (2.0 * r)))
    return merged, split


def stability_ratio(rho2_values) -> float:
    """Merged-to-split ratio of the expected objective shifts; always < 1.

    For a pair this is 2 r1 r2 / (r1 + r2)^2 (equal variances give 1/2); in
    general it equals len / dispersion_product <= 1/len by Cauchy-Schwarz.
    """
    r = _check_rho2_values(rho2_values)
    return len(r) / dispersion_product(r)


def _bernoulli_spans(n, ni_rate, rng):
    """Increment spans induced by dropping interior points at the given rate.

    Points 0, 1, and n are always kept; increment i (1-based) ends at point i.
    Returns a list of index arrays partitioning range(n).
    """
    keep = np.ones(n + 1, dtype=bool)
    if n >= 3:
        keep[2:n] = rng.random(n - 2) >= ni_rate
    kept_points = np.nonzero(keep)[0]
    spans = []
    for a, b in zip(kept_points[:-1], kept_points[1:]):
        spans.append(np.arange(a, b))
    return spans


@dataclass(frozen=True)
class StabilityResult:
    mean_with_ni: float
    mean_without_ni: float
    se_difference: float


def stability_experiment(
    params: RegimeParams,
    rates: TransitionRates,
    path: StatePath,
    diff: DiffSeries,
    sigma2_0: float,
    eps: float,
    reps: int,
    seed: int = 0,
    ni_rate: float = 0.1,
    rho_mode: str = "approx",
) -> StabilityResult:
    """Monte Carlo estimate of the objective shift under observation noise,
    with and without merging dropped spans.

    The drop mask is drawn once and held fixed; only the noise varies across
    repetitions. Parameters, rates, and the path stay fixed, so transition
    factors and log-variance terms cancel in the shifts; merged spans are
    scored against the summed per-step variances (the model-consistent
    variance of a summed increment). `rates` participates only through that
    cancellation and is accepted for interface symmetry.
    """
    if eps < 0:
        raise ValidationError(f"eps={eps:g} must be non-negative")
    if reps < 2:
        raise ValidationError(f"reps={reps} must be at least 2")
    if not 0 <= ni_rate < 1:
        raise ValidationError(f"ni_rate={ni_rate:g} must lie in [0, 1)")
    del rates

    rng = np.random.default_rng(seed)
    n = diff.n
    vol = volatility_path(diff, path, params, sigma2_0, rho_mode)
    spans = _bernoulli_spans(n, ni_rate, rng)

    span_matrix = np.zeros((n, len(spans)))
    for j, span in enumerate(spans):
        span_matrix[span, j] = 1.0
    y_merged = diff.Y @ span_matrix
    rho2_merged = vol.rho2 @ span_matrix

    Z = rng.standard_normal((reps, n)) * eps
    d_split = ((diff.Y + Z) ** 2 - diff.Y**2) @ (0.5 / vol.rho2)
    ZS = Z @ span_matrix
    d_merged = ((y_merged + ZS) ** 2 - y_merged**2) @ (0.5 / rho2_merged)

    delta = d_split - d_merged
    se = float(np.std(delta, ddof=1) / math.sqrt(reps))
    return StabilityResult(
        mean_with_ni=float(np.mean(d_merged)),
        mean_without_ni=float(np.mean(d_split)),
        se_difference=se,
    )


def state_bias(true_path: StatePath, state2_frequency) -> float:
    """Mean absolute gap between the true 0/1 state indicator and the
    predicted frequency of state 2 (two-state convention)."""
    freq = np.asarray(state2_frequency, dtype=float)
    if freq.ndim == 2:
        if freq.shape[1] < 2:
            raise ValidationError("frequency matrix needs a column per state")
        freq = freq[:, 1]
    if len(freq) != true_path.n:
        raise ValidationError("length mismatch between path and frequencies")
    truth = (true_path.s == 2).astype(float)
    return float(np.mean(np.abs(truth - freq)))


def vol_rel_bias(true_sigma2, estimated_sigma2) -> float:
    """Mean relative absolute error of the variance estimates, in percent.

    Steps with zero true variance are excluded (with a warning).
    """
    t = np.asarray(true_sigma2, dtype=float)
    e = np.asarray(estimated_sigma2, dtype=float)
    if t.shape != e.shape:
        raise ValidationError("length mismatch between true and estimated variances")
    ok = t != 0
    if not np.all(ok):
        warnings.warn(f"excluding {int(np.sum(~ok))} step(s) with zero true variance")
    if not np.any(ok):
        raise ValidationError("no steps with non-zero true variance")
    return float(np.mean(np.abs(e[ok] - t[ok]) / t[ok]) * 100.0)
