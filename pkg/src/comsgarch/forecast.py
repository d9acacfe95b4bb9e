"""Multi-step volatility prediction by expanding the regime branch tree.

Starting from the fitted path's final state and variance level, every branch
spawns one child per state at each step: the child's variance advances the
recursion with the parent's predicted squared increment, and its probability
is the parent's times the one-step transition probability. The step forecast
is the probability-weighted variance across branches.
"""

from dataclasses import dataclass

import numpy as np

from .core import transition_matrix
from .crops import CropsResult
from .errors import ValidationError

BRANCH_CAP = 2**20
PRUNE_TOL = 1e-12


@dataclass(frozen=True)
class ForecastState:
    """Per-step branch arrays plus the weighted volatility forecast."""

    future_dt: np.ndarray
    states: tuple  # step -> int array of branch state labels
    sigma2: tuple  # step -> float array of branch variance levels
    prob: tuple  # step -> float array of branch probabilities
    sigma_bar: np.ndarray


def _resolve_future_dt(future_dt, horizon, history_dt):
    if future_dt is not None:
        dt = np.asarray(future_dt, dtype=float)
        if dt.ndim != 1 or len(dt) < 1:
            raise ValidationError("future_dt must be a non-empty vector")
        if np.any(dt <= 0):
            raise ValidationError("future gaps must be positive")
        return dt
    if horizon is None or horizon < 1:
        raise ValidationError("give future_dt or a horizon of at least 1")
    if history_dt is None:
        raise ValidationError("the median-gap default needs history_dt")
    return np.full(int(horizon), float(np.median(np.asarray(history_dt, dtype=float))))


def forecast_tree(
    result: CropsResult,
    future_dt=None,
    horizon=None,
    history_dt=None,
    branch_cap: int = BRANCH_CAP,
    prune: bool = False,
) -> ForecastState:
    """Expand the branch tree over the given future gaps.

    Without pruning the branch count is nu^h and must stay under branch_cap;
    with prune=True branches below probability 1e-12 are dropped and the rest
    renormalized after each step.
    """
    dt = _resolve_future_dt(future_dt, horizon, history_dt)
    h = len(dt)
    params = result.params
    rates = result.rates
    nu = params.nu
    if not prune and nu**h > branch_cap:
        raise ValidationError(
            f"{nu}^{h} branches exceed the cap of {branch_cap}; "
            "shorten the horizon or enable pruning"
        )

    states = np.array([result.path.s[-1]], dtype=np.int64)
    sigma2 = np.array([result.volatility.sigma2[-1]])
    prob = np.array([1.0])

    out_states, out_sigma2, out_prob = [], [], []
    sigma_bar = np.empty(h)
    child_labels = np.arange(1, nu + 1)
    for i in range(h):
        step = float(dt[i])
        P = transition_matrix(step, rates)
        y2_hat = sigma2 * step

        parent_sigma2 = np.repeat(sigma2, nu)
        parent_y2 = np.repeat(y2_hat, nu)
        parent_state = np.repeat(states, nu)
        child_state = np.tile(child_labels, len(states))

        a = params.alpha[child_state - 1]
        b = params.beta[child_state - 1]
        lm = params.lam[child_state - 1]
        sigma2 = a * step + (parent_sigma2 + lm * parent_y2) * np.exp(-b * step)
        prob = np.repeat(prob, nu) * P[child_state - 1, parent_state - 1]
        states = child_state

        if prune:
            keep = prob >= PRUNE_TOL
            if not np.any(keep):
                keep = prob == prob.max()
            states, sigma2, prob = states[keep], sigma2[keep], prob[keep]
            prob = prob / prob.sum()
            if len(prob) > branch_cap:
                raise ValidationError(
                    f"{len(prob)} branches exceed the cap of {branch_cap} even after pruning"
                )

        sigma_bar[i] = float(prob @ sigma2)
        out_states.append(states)
        out_sigma2.append(sigma2)
        out_prob.append(prob)

    return ForecastState(
        future_dt=dt,
        states=tuple(out_states),
        sigma2=tuple(out_sigma2),
        prob=tuple(out_prob),
        sigma_bar=sigma_bar,
    )


def forecast(
    result: CropsResult,
    future_dt=None,
    horizon=None,
    history_dt=None,
    branch_cap: int = BRANCH_CAP,
    prune: bool = False,
) -> np.ndarray:
    """Weighted volatility forecast, one value per future gap."""
    return forecast_tree(result, future_dt, horizon, history_dt, branch_cap, prune).sigma_bar
