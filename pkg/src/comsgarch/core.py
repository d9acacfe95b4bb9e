"""Deterministic model math: variance recursion, transition probabilities,
increment variances (exact and first-order), and the joint pseudo-likelihood.

The model: increments Y_i over gaps dt_i follow Y_i | past ~ N(0, rho_i^2),
with the latent variance level evolving as

    sigma_i^2 = alpha(s_i) dt_i + (sigma_{i-1}^2 + lam(s_i) Y_i^2) exp(-beta(s_i) dt_i)

and the regime path s_i moving between states with hazard rates eta[j, k]
(from k to j), so a switch over a gap dt has probability 1 - exp(-eta dt).
The increment variance rho_i^2 is either the exact integral form or its
first-order approximation sigma_{i-1}^2 dt_i.

All functions are pure; identical inputs give bit-identical outputs.
"""

import math

import numpy as np

from . import _kernels
from .errors import DomainError, ValidationError
from .types import DiffSeries, ObservedSeries, RegimeParams, StatePath, TransitionRates, VolatilitySeries

RHO_MODES = ("exact", "approx")

LOG_2PI = _kernels.LOG_2PI


def _check_rho_mode(rho_mode):
    if rho_mode not in RHO_MODES:
        raise ValidationError(f"rho_mode must be one of {RHO_MODES}, got {rho_mode!r}")


def diff_series(obs: ObservedSeries) -> DiffSeries:
    """First differences of the observed series with their time gaps."""
    return DiffSeries(Y=np.diff(obs.G), dt=np.diff(obs.t))


def default_sigma2_0(diff: DiffSeries) -> float:
    """Method-of-moments starting variance: var(Y) / mean(dt).

    Matches the first-order relation E(Y^2) = sigma^2 dt on the whole series.
    """
    v = float(np.var(diff.Y))
    if v <= 0:
        raise ValidationError("cannot infer a starting variance from a constant series")
    return v / float(np.mean(diff.dt))


def _state_params(params: RegimeParams, state: int):
    if state < 1 or state > params.nu:
        raise ValidationError(f"state {state} outside 1..{params.nu}")
    k = state - 1
    return params.alpha[k], params.beta[k], params.lam[k]


def sigma2_next(sigma2_prev: float, y2: float, dt: float, params: RegimeParams, state: int) -> float:
    """One step of the variance recursion."""
    if sigma2_prev <= 0:
        raise DomainError(f"sigma2_prev={sigma2_prev:g} must be positive", state=state)
    if dt <= 0:
        raise DomainError(f"dt={dt:g} must be positive", state=state)
    if y2 < 0:
        raise DomainError(f"y2={y2:g} must be non-negative", state=state)
    a, b, lm = _state_params(params, state)
    return a * dt + (sigma2_prev + lm * y2) * math.exp(-b * dt)


def stay_prob(state: int, dt: float, rates: TransitionRates) -> float:
    """Probability of remaining in `state` over a gap dt.

    Uses the 2 - nu + sum(exp(-eta dt)) form, which makes each row of the
    one-step transition kernel sum to exactly 1.
    """
    if dt <= 0:
        raise DomainError(f"dt={dt:g} must be positive", state=state, dt=dt)
    nu = rates.nu
    if state < 1 or state > nu:
        raise ValidationError(f"state {state} outside 1..{nu}")
    k = state - 1
    total = 0.0
    for j in range(nu):
        if j != k:
            total += math.exp(-rates.eta[j, k] * dt)
    p = 2.0 - nu + total
    if p < -1e-12 or p > 1.0 + 1e-12:
        raise DomainError(
            f"stay probability {p:g} outside [0, 1]; rates too large for this gap",
            state=state,
            dt=dt,
        )
    return min(max(p, 0.0), 1.0)


def transition_prob(from_state: int, to_state: int, dt: float, rates: TransitionRates) -> float:
    """One-step probability of moving from `from_state` to `to_state` over dt."""
    if to_state == from_state:
        return stay_prob(from_state, dt, rates)
    if dt <= 0:
        raise DomainError(f"dt={dt:g} must be positive", dt=dt)
    nu = rates.nu
    if not (1 <= from_state <= nu and 1 <= to_state <= nu):
        raise ValidationError(f"states ({from_state}, {to_state}) outside 1..{nu}")
    return -math.expm1(-rates.eta[to_state - 1, from_state - 1] * dt)


def transition_matrix(dt: float, rates: TransitionRates) -> np.ndarray:
    """Full one-step kernel P[j-1, k-1] = Pr(next=j | current=k) over gap dt."""
    nu = rates.nu
    P = -np.expm1(-rates.eta * dt)
    for k in range(nu):
        P[k, k] = stay_prob(k + 1, dt, rates)
    return P


def rho2_approx(sigma2_prev: float, dt: float) -> float:
    """First-order increment variance sigma2_prev * dt."""
    if sigma2_prev <= 0 or dt <= 0:
        raise DomainError(f"sigma2_prev={sigma2_prev:g} and dt={dt:g} must be positive")
    return sigma2_prev * dt


def rho2_exact(sigma2_prev: float, dt: float, params: RegimeParams, state: int) -> float:
    """Exact increment variance over a gap dt in the given state.

    Near beta == lam the closed form cancels catastrophically; a series
    expansion takes over for |beta - lam| * dt below the switch point.
    """
    if sigma2_prev <= 0 or dt <= 0:
        raise DomainError(f"sigma2_prev={sigma2_prev:g} and dt={dt:g} must be positive", state=state)
    a, b, lm = _state_params(params, state)
    r = _kernels.rho2_exact_scalar(sigma2_prev, dt, a, b, lm)
    if r <= 0 or not math.isfinite(r):
        raise DomainError(
            f"exact increment variance {r:g} is not positive; parameters invalid for this gap",
            state=state,
            dt=dt,
        )
    return r


def _rho2_exact_array(prev_sigma2, dt, alpha_i, beta_i, lam_i):
    d = beta_i - lam_i
    x = d * dt
    small = np.abs(x) < _kernels.SERIES_SWITCH
    d_safe = np.where(small, 1.0, d)
    em = np.expm1(x)
    f1 = np.where(
        small,
        dt * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0),
        em / d_safe,
    )
    f2 = np.where(
        small,
        -dt * dt * (0.5 + x / 6.0 + x * x / 24.0 + x * x * x / 120.0),
        (dt * d - em) / (d_safe * d_safe),
    )
    return prev_sigma2 * f1 + alpha_i * f2


def _path_param_arrays(path: StatePath, params: RegimeParams):
    idx = path.s - 1
    return params.alpha[idx], params.beta[idx], params.lam[idx]


def volatility_path(
    diff: DiffSeries,
    path: StatePath,
    params: RegimeParams,
    sigma2_0: float,
    rho_mode: str = "approx",
) -> VolatilitySeries:
    """Forward recursion of the variance level plus increment variances.

    rho_i^2 uses the variance level entering step i (sigma2_0 for the first
    step), which is what the pseudo-likelihood conditions on.
    """
    _check_rho_mode(rho_mode)
    if path.n != diff.n:
        raise ValidationError(f"path length {path.n} != series length {diff.n}")
    path.check_states(params.nu)
    if sigma2_0 <= 0:
        raise DomainError(f"sigma2_0={sigma2_0:g} must be positive")

    alpha_i, beta_i, lam_i = _path_param_arrays(path, params)
    y2 = diff.Y * diff.Y
    sigma2 = _kernels.garch_recursion(y2, diff.dt, alpha_i, beta_i, lam_i, float(sigma2_0))
    bad = ~(np.isfinite(sigma2) & (sigma2 > 0))
    if np.any(bad):
        i = int(np.nonzero(bad)[0][0])
        raise DomainError("variance recursion left the positive domain", index=i + 1)

    prev = np.concatenate(([float(sigma2_0)], sigma2[:-1]))
    if rho_mode == "approx":
        rho2 = prev * diff.dt
    else:
        rho2 = _rho2_exact_array(prev, diff.dt, alpha_i, beta_i, lam_i)
    bad = ~(np.isfinite(rho2) & (rho2 > 0))
    if np.any(bad):
        i = int(np.nonzero(bad)[0][0])
        raise DomainError(
            "increment variance is not positive; parameters invalid for this gap",
            index=i + 1,
            state=int(path.s[i]),
            dt=float(diff.dt[i]),
        )
    return VolatilitySeries(sigma2=sigma2, rho2=rho2, sigma2_0=float(sigma2_0))


def gaussian_block_nll(
    diff: DiffSeries,
    path: StatePath,
    params: RegimeParams,
    sigma2_0: float,
    rho_mode: str = "approx",
) -> float:
    """Sum of per-step Gaussian negative log densities (no transition terms)."""
    vol = volatility_path(diff, path, params, sigma2_0, rho_mode)
    y2 = diff.Y * diff.Y
    return float(np.sum(0.5 * LOG_2PI + 0.5 * np.log(vol.rho2) + y2 / (2.0 * vol.rho2)))


def _pairwise_xi(path: StatePath, dt: np.ndarray, rates: TransitionRates) -> np.ndarray:
    """Transition factors xi for consecutive state pairs (one per step i >= 2)."""
    s = path.s
    nu = rates.nu
    prev = s[:-1] - 1
    cur = s[1:] - 1
    gaps = dt[1:]
    # row i: exp(-eta[j, prev_i] * gap_i) over destinations j
    E = np.exp(-rates.eta.T[prev] * gaps[:, None])
    stay = 1.0 - nu + E.sum(axis=1)
    bad = stay < -1e-12
    if np.any(bad):
        i = int(np.nonzero(bad)[0][0])
        raise DomainError(
            f"stay probability {stay[i]:g} outside [0, 1]; rates too large for this gap",
            index=i + 2,
            state=int(s[i]),
            dt=float(gaps[i]),
        )
    stay = np.clip(stay, 0.0, 1.0)
    switch = 1.0 - E[np.arange(len(cur)), cur]
    return np.where(cur == prev, stay, switch)


def transition_block_nll(path: StatePath, dt: np.ndarray, rates: TransitionRates) -> float:
    """Negative log of the product of transition factors along the path."""
    path.check_states(rates.nu)
    if path.n < 2:
        return 0.0
    xi = _pairwise_xi(path, np.asarray(dt, dtype=float), rates)
    bad = xi <= 0
    if np.any(bad):
        i = int(np.nonzero(bad)[0][0])
        raise DomainError(
            f"transition factor {xi[i]:g} outside (0, 1]",
            index=i + 2,
            state=int(path.s[i + 1]),
        )
    return float(-np.sum(np.log(xi)))


def neg_log_pseudo_likelihood(
    diff: DiffSeries,
    path: StatePath,
    params: RegimeParams,
    rates: TransitionRates,
    sigma2_0: float,
    rho_mode: str = "approx",
) -> float:
    """Joint objective: Gaussian increment terms plus transition factors."""
    if params.nu != rates.nu:
        raise ValidationError(f"params have {params.nu} states but rates have {rates.nu}")
    value = gaussian_block_nll(diff, path, params, sigma2_0, rho_mode)
    value += transition_block_nll(path, diff.dt, rates)
    if not math.isfinite(value):
        raise DomainError("pseudo-likelihood is not finite")
    return value
