"""Jitted inner loops for the variance recursion and likelihood sums.

Everything here works on plain float arrays with 0-based indexing and
per-index parameter vectors (state-dependent parameters already gathered).
Domain violations are signalled by returning NaN; callers translate that into
a proper error with context.
"""

import math

import numpy as np
from numba import njit

# |(beta-lam)*dt| below this uses the series form of the exact increment
# variance; the direct expression loses digits to cancellation much earlier
# than the analytic limit requires.
SERIES_SWITCH = 1e-4

LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def rho2_exact_scalar(sigma2_prev, dt, alpha, beta, lam):
    """Exact one-step increment variance; series expansion near beta == lam."""
    d = beta - lam
    x = d * dt
    if abs(x) < SERIES_SWITCH:
        f1 = dt * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0)
        f2 = -dt * dt * (0.5 + x / 6.0 + x * x / 24.0 + x * x * x / 120.0)
    else:
        em = math.expm1(x)
        f1 = em / d
        f2 = (dt * d - em) / (d * d)
    return sigma2_prev * f1 + alpha * f2


@njit(cache=True)
def garch_recursion(y2, dt, alpha, beta, lam, sigma2_0):
    """Forward variance recursion; parameters are per-index vectors."""
    n = y2.shape[0]
    sigma2 = np.empty(n)
    prev = sigma2_0
    for i in range(n):
        prev = alpha[i] * dt[i] + (prev + lam[i] * y2[i]) * math.exp(-beta[i] * dt[i])
        sigma2[i] = prev
    return sigma2


@njit(cache=True)
def gaussian_nll(y2, dt, alpha, beta, lam, sigma2_0, exact):
    """Sum of per-step Gaussian negative log densities along the recursion.

    Returns NaN if any increment variance is non-positive.
    """
    n = y2.shape[0]
    prev = sigma2_0
    total = 0.0
    for i in range(n):
        if exact:
            rho2 = rho2_exact_scalar(prev, dt[i], alpha[i], beta[i], lam[i])
        else:
            rho2 = prev * dt[i]
        if rho2 <= 0.0 or not np.isfinite(rho2):
            return np.nan
        total += 0.5 * LOG_2PI + 0.5 * math.log(rho2) + y2[i] / (2.0 * rho2)
        prev = alpha[i] * dt[i] + (prev + lam[i] * y2[i]) * math.exp(-beta[i] * dt[i])
    return total


@njit(cache=True)
def window_log_density(
    y2, dt, alpha_path, beta_path, lam_path, start, end,
    alpha_c, beta_c, lam_c, sigma2_start, exact,
):
    """Gaussian log density over positions [start, end) with a candidate state.

    The candidate's parameters apply at `start` only; later positions use the
    per-index path parameters. `sigma2_start` is the variance level entering
    position `start`. Returns NaN on a non-positive increment variance.
    """
    prev = sigma2_start
    total = 0.0
    for i in range(start, end):
        if i == start:
            a = alpha_c
            b = beta_c
            lm = lam_c
        else:
            a = alpha_path[i]
            b = beta_path[i]
            lm = lam_path[i]
        if exact:
            rho2 = rho2_exact_scalar(prev, dt[i], a, b, lm)
        else:
            rho2 = prev * dt[i]
        if rho2 <= 0.0 or not np.isfinite(rho2):
            return np.nan
        total += -0.5 * math.log(rho2) - y2[i] / (2.0 * rho2)
        prev = a * dt[i] + (prev + lm * y2[i]) * math.exp(-b * dt[i])
    return total
