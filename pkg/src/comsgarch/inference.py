"""Estimation primitives: the conditional state distribution with a truncated
lookahead window, single-state sampling, Gibbs sweeps, and block MAP fits.

The conditional distribution of the state at step i multiplies the incoming
and outgoing transition factors with the Gaussian increment densities from
step i forward; changing s_i only moves the density terms through the
variance recursion, so the product is truncated after the pivotal window of
b steps. Both MAP blocks optimize over log-transformed parameters with a
derivative-free local search, which keeps everything positive without a
constrained solver.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .core import (
    gaussian_block_nll,
    neg_log_pseudo_likelihood,
    transition_prob,
)
from .errors import DomainError, ValidationError
from .types import DiffSeries, PivotalWindow, RegimeParams, StatePath, TransitionRates

RATE_FLOOR = 1e-8
# switching rates are capped so the expected regime duration stays at or
# above one median gap: the latent state is identified through multi-step
# volatility patterns, and an uncapped rate MLE on a noisy path locks the
# sampler into forced per-step alternation (stay probability exp(-eta dt) -> 0)
RATE_CAP_GAPS = 2.0
PARAM_FLOOR = 1e-12
# box on log parameters: the likelihood is flat once exp(-beta dt) underflows,
# so unbounded search drifts to absurd coordinates along that ridge
LOG_PARAM_BOUND = math.log(1e10)
_BIG = 1e12


class ConvergenceWarning(UserWarning):
    """Raised (as a warning) when an optimizer stops at its evaluation cap."""


@dataclass(frozen=True)
class InferenceConfig:
    pivotal: PivotalWindow = field(default_factory=PivotalWindow)
    rho_mode: str = "approx"
    prior: str = "flat"
    step_tol: float = 1e-8
    max_evals: int = 2000

    def __post_init__(self):
        if self.rho_mode not in ("exact", "approx"):
            raise ValidationError(f"rho_mode must be 'exact' or 'approx', got {self.rho_mode!r}")
        if self.prior != "flat":
            raise ValidationError(f"only the flat prior is supported, got {self.prior!r}")
        if self.step_tol <= 0 or self.max_evals < 1:
            raise ValidationError("step_tol must be positive and max_evals at least 1")


def _log_xi(from_state, to_state, dt, rates):
    p = transition_prob(from_state, to_state, dt, rates)
    return math.log(p) if p > 0.0 else -math.inf


def _candidate_log_weights(y2, dt, ap, bp, lp, s, i0, prev_sigma2, params, rates, b, exact):
    """Unnormalized log weights of each candidate state at 0-based step i0.

    `ap`/`bp`/`lp` are per-index parameter vectors under the current path `s`;
    `prev_sigma2` is the variance level entering step i0.
    """
    n = len(y2)
    end = min(i0 + b + 1, n)
    nu = params.nu
    logw = np.empty(nu)
    for v in range(1, nu + 1):
        g = _kernels.window_log_density(
            y2, dt, ap, bp, lp, i0, end,
            params.alpha[v - 1], params.beta[v - 1], params.lam[v - 1],
            prev_sigma2, exact,
        )
        if math.isnan(g):
            raise DomainError(
                "increment variance left the positive domain while scoring a candidate state",
                index=i0 + 1,
                state=v,
            )
        w = g
        if i0 > 0:
            w += _log_xi(int(s[i0 - 1]), v, float(dt[i0]), rates)
        if i0 < n - 1:
            w += _log_xi(v, int(s[i0 + 1]), float(dt[i0 + 1]), rates)
        logw[v - 1] = w
    return logw


def _normalize_log_weights(logw, index):
    m = np.max(logw)
    if not np.isfinite(m):
        raise DomainError("every candidate state has zero posterior mass", index=index)
    w = np.exp(logw - m)
    return w / w.sum()


def _prefix_sigma2(diff, path, params, sigma2_0, i0):
    if i0 == 0:
        return float(sigma2_0)
    idx = path.s[:i0] - 1
    y2 = diff.Y[:i0] ** 2
    sigma2 = _kernels.garch_recursion(
        y2, diff.dt[:i0], params.alpha[idx], params.beta[idx], params.lam[idx], float(sigma2_0)
    )
    last = sigma2[-1]
    if not (last > 0 and np.isfinite(last)):
        raise DomainError("variance recursion left the positive domain", index=i0)
    return float(last)


def state_conditional(
    i: int,
    path: StatePath,
    params: RegimeParams,
    rates: TransitionRates,
    diff: DiffSeries,
    sigma2_0: float,
    cfg: InferenceConfig,
) -> np.ndarray:
    """Probability vector over candidate states at 1-based step i.

    The incoming transition factor is dropped at i = 1 and the outgoing one at
    i = n. With b >= n - i the window is untruncated and the result equals the
    exact full conditional.
    """
    n = diff.n
    if not 1 <= i <= n:
        raise ValidationError(f"index i={i} outside 1..{n}")
    if path.n != n:
        raise ValidationError(f"path length {path.n} != series length {n}")
    path.check_states(params.nu)
    if params.nu != rates.nu:
        raise ValidationError(f"params have {params.nu} states but rates have {rates.nu}")
    if params.nu == 1:
        return np.array([1.0])

    i0 = i - 1
    prev_sigma2 = _prefix_sigma2(diff, path, params, sigma2_0, i0)
    idx = path.s - 1
    logw = _candidate_log_weights(
        diff.Y**2, diff.dt,
        params.alpha[idx], params.beta[idx], params.lam[idx],
        path.s, i0, prev_sigma2, params, rates,
        cfg.pivotal.b, cfg.rho_mode == "exact",
    )
    return _normalize_log_weights(logw, i)


def _draw_categorical(probs, rng):
    u = rng.random()
    cum = np.cumsum(probs)
    j = int(np.searchsorted(cum, u, side="right"))
    return min(j, len(probs) - 1) + 1


def sample_state(i, path, params, rates, diff, sigma2_0, cfg, rng) -> int:
    """One categorical draw from the conditional state distribution at step i."""
    return _draw_categorical(state_conditional(i, path, params, rates, diff, sigma2_0, cfg), rng)


def gibbs_sweep(
    path: StatePath,
    params: RegimeParams,
    rates: TransitionRates,
    diff: DiffSeries,
    sigma2_0: float,
    cfg: InferenceConfig,
    rng,
    positions=None,
    conditioning: str = "frozen",
) -> StatePath:
    """Resample states at the given 1-based positions in ascending order.

    With "frozen" conditioning every draw sees the starting path, so a whole
    stretch of states can flip in one sweep; with "evolving" each draw sees
    the states already updated earlier in the sweep (textbook single-site
    Gibbs). Both carry the variance level forward, so a full sweep costs
    O(n * nu * b). Default positions are the interior steps 2..n-1.
    """
    n = diff.n
    if path.n != n:
        raise ValidationError(f"path length {path.n} != series length {n}")
    if conditioning not in ("frozen", "evolving"):
        raise ValidationError(f"conditioning must be 'frozen' or 'evolving', got {conditioning!r}")
    path.check_states(params.nu)
    s_new = path.s.copy()
    if positions is None:
        positions = range(2, n)
    wanted = set(int(p) for p in positions)
    for p in wanted:
        if not 1 <= p <= n:
            raise ValidationError(f"sweep position {p} outside 1..{n}")
    if params.nu == 1 or not wanted:
        return StatePath(s=s_new)

    s_cond = path.s.copy() if conditioning == "frozen" else s_new
    idx = s_cond - 1
    ap = params.alpha[idx].copy()
    bp = params.beta[idx].copy()
    lp = params.lam[idx].copy()
    y2 = diff.Y**2
    dt = diff.dt
    exact = cfg.rho_mode == "exact"
    b = cfg.pivotal.b

    prev = float(sigma2_0)
    for i0 in range(n):
        if (i0 + 1) in wanted:
            logw = _candidate_log_weights(
                y2, dt, ap, bp, lp, s_cond, i0, prev, params, rates, b, exact
            )
            v = _draw_categorical(_normalize_log_weights(logw, i0 + 1), rng)
            s_new[i0] = v
            if conditioning == "evolving":
                ap[i0] = params.alpha[v - 1]
                bp[i0] = params.beta[v - 1]
                lp[i0] = params.lam[v - 1]
        prev = ap[i0] * dt[i0] + (prev + lp[i0] * y2[i0]) * math.exp(-bp[i0] * dt[i0])
        if not (prev > 0 and math.isfinite(prev)):
            raise DomainError("variance recursion left the positive domain", index=i0 + 1)
    return StatePath(s=s_new)


def _run_nelder_mead(objective, x0, cfg):
    res = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={
            "xatol": cfg.step_tol,
            "fatol": cfg.step_tol,
            "maxfev": cfg.max_evals,
            "maxiter": cfg.max_evals,
        },
    )
    if not res.success:
        warnings.warn(
            f"optimizer stopped without convergence after {res.nfev} evaluations",
            ConvergenceWarning,
            stacklevel=3,
        )
    return res.x


def map_theta(
    path: StatePath,
    diff: DiffSeries,
    sigma2_0: float,
    cfg: InferenceConfig,
    init: RegimeParams,
) -> RegimeParams:
    """MAP of the per-state GARCH parameters at a fixed path (Gaussian block).

    With the flat prior this is the pseudo-ML estimate. The search runs over
    log parameters, never returns a worse objective than the initialization,
    and warns instead of aborting when the evaluation cap is hit.
    """
    path.check_states(init.nu)
    if path.n != diff.n:
        raise ValidationError(f"path length {path.n} != series length {diff.n}")
    nu = init.nu
    sidx = path.s - 1
    y2 = diff.Y**2
    dt = diff.dt
    exact = cfg.rho_mode == "exact"

    def objective(x):
        if np.any(np.abs(x) > LOG_PARAM_BOUND):
            return _BIG
        p = np.exp(x)
        a, b, lm = p[:nu], p[nu : 2 * nu], p[2 * nu :]
        val = _kernels.gaussian_nll(y2, dt, a[sidx], b[sidx], lm[sidx], float(sigma2_0), exact)
        return val if math.isfinite(val) else _BIG

    x0 = np.clip(
        np.log(np.concatenate([init.alpha, init.beta, init.lam])),
        -LOG_PARAM_BOUND,
        LOG_PARAM_BOUND,
    )
    x = _run_nelder_mead(objective, x0, cfg)
    p = np.maximum(np.exp(x), PARAM_FLOOR)
    return RegimeParams(alpha=p[:nu], beta=p[nu : 2 * nu], lam=p[2 * nu :])


def _transition_events(path, dt, nu):
    """Per source state: gaps of observed stays and switches along the path."""
    s = path.s
    prev = s[:-1]
    cur = s[1:]
    gaps = dt[1:]
    events = {}
    for k in range(1, nu + 1):
        out = prev == k
        events[k] = {
            "stay_gaps": gaps[out & (cur == k)],
            "switch": {
                j: gaps[out & (cur == j)] for j in range(1, nu + 1) if j != k
            },
        }
    return events


def map_eta(path: StatePath, dt, cfg: InferenceConfig, init: TransitionRates) -> TransitionRates:
    """MAP of the switching rates at a fixed path (transition block only).

    Each source state's outgoing rates form an independent sub-problem. A
    source with observed stays but no switches has its boundary ML estimate at
    zero, returned as the 1e-08 floor with a warning; a source never occupied
    keeps its initial rates.
    """
    nu = init.nu
    path.check_states(nu)
    dt = np.asarray(dt, dtype=float)
    if path.n != len(dt):
        raise ValidationError(f"path length {path.n} != gap count {len(dt)}")
    if path.n < 2:
        raise ValidationError("need at least 2 steps to estimate switching rates")
    if nu == 1:
        return init

    events = _transition_events(path, dt, nu)
    rate_cap = RATE_CAP_GAPS / float(np.median(dt))
    eta = init.eta.copy()
    for k in range(1, nu + 1):
        dests = [j for j in range(1, nu + 1) if j != k]
        stay_gaps = events[k]["stay_gaps"]
        switch_gaps = [events[k]["switch"][j] for j in dests]
        n_switch = sum(len(g) for g in switch_gaps)
        if len(stay_gaps) == 0 and n_switch == 0:
            continue  # source never observed; nothing to update
        if n_switch == 0:
            for j in dests:
                eta[j - 1, k - 1] = RATE_FLOOR
            warnings.warn(
                f"no switches out of state {k}; rates floored at {RATE_FLOOR:g}",
                ConvergenceWarning,
                stacklevel=2,
            )
            continue

        def objective(x, stay_gaps=stay_gaps, switch_gaps=switch_gaps):
            r = np.exp(x)
            if not np.all(np.isfinite(r)):
                return _BIG
            total = 0.0
            if len(stay_gaps):
                stay = 2.0 - nu + np.exp(-np.outer(stay_gaps, r)).sum(axis=1)
                if np.any(stay <= 0):
                    return _BIG
                total -= float(np.sum(np.log(stay)))
            for r_j, gaps_j in zip(r, switch_gaps):
                if len(gaps_j):
                    p = -np.expm1(-r_j * gaps_j)
                    if np.any(p <= 0):
                        return _BIG
                    total -= float(np.sum(np.log(p)))
            return total

        x0 = np.log(np.clip([init.eta[j - 1, k - 1] for j in dests], RATE_FLOOR, rate_cap))
        x = _run_nelder_mead(objective, x0, cfg)
        col = np.clip(np.exp(x), RATE_FLOOR, rate_cap)
        for j, value in zip(dests, col):
            eta[j - 1, k - 1] = value
    return TransitionRates(eta=eta)


def joint_log_posterior(
    params: RegimeParams,
    rates: TransitionRates,
    path: StatePath,
    diff: DiffSeries,
    sigma2_0: float,
    cfg: InferenceConfig,
) -> float:
    """Log joint posterior under flat priors; ranks candidate paths."""
    return -neg_log_pseudo_likelihood(diff, path, params, rates, sigma2_0, cfg.rho_mode)


def theta_block_nll(path, diff, sigma2_0, cfg, params) -> float:
    """The objective map_theta minimizes, exposed for verification."""
    return gaussian_block_nll(diff, path, params, sigma2_0, cfg.rho_mode)
