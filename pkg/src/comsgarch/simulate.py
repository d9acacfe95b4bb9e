"""Synthetic series generation for the one-state and switching processes.

Generation is causal: the increment over step i is drawn with variance
sigma_{i-1}^2 * dt_i (the level entering the step), and the level is then
advanced with the freshly drawn increment. This makes the first-order
pseudo-likelihood exactly correctly specified on simulated data.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import stay_prob, transition_matrix
from .errors import ValidationError
from .types import DiffSeries, ObservedSeries, RegimeParams, StatePath, TransitionRates, VolatilitySeries

GAP_MODES = ("fixed", "exponential")
INNOVATIONS = ("gaussian",)
PERTURB_MODES = ("global_sd", "per_state_sd")


@dataclass(frozen=True)
class SimConfig:
    """Settings for one simulated series.

    `n` counts increments; the emitted level series has n + 1 points. Gaps are
    either fixed at 1/zeta or drawn Exponential with rate zeta. `balance`
    holds the per-state constants c_k used to build balanced parameters.
    """

    n: int
    zeta: float
    balance: tuple
    rates: TransitionRates = field(default_factory=lambda: TransitionRates(np.zeros((1, 1))))
    seed: int = 0
    gap_mode: str = "fixed"
    innovation: str = "gaussian"
    sigma2_0: float | None = None
    perturb_eps: float | None = None
    perturb_mode: str = "global_sd"

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError(f"n={self.n} must be at least 2")
        if self.zeta <= 0:
            raise ValidationError(f"zeta={self.zeta:g} must be positive")
        balance = tuple(float(c) for c in np.atleast_1d(self.balance))
        for c in balance:
            if not 0.0 < c < 1.0:
                raise ValidationError(f"balance constant c={c:g} must lie in (0, 1)")
        object.__setattr__(self, "balance", balance)
        if self.gap_mode not in GAP_MODES:
            raise ValidationError(f"gap_mode must be one of {GAP_MODES}, got {self.gap_mode!r}")
        if self.innovation not in INNOVATIONS:
            raise ValidationError(f"innovation must be one of {INNOVATIONS}, got {self.innovation!r}")
        if self.sigma2_0 is not None and self.sigma2_0 <= 0:
            raise ValidationError(f"sigma2_0={self.sigma2_0:g} must be positive")
        if self.perturb_eps is not None and self.perturb_eps < 0:
            raise ValidationError(f"perturb_eps={self.perturb_eps:g} must be non-negative")
        if self.perturb_mode not in PERTURB_MODES:
            raise ValidationError(f"perturb_mode must be one of {PERTURB_MODES}")

    @property
    def nu(self):
        return len(self.balance)


def balanced_params(zeta: float, c, family: str = "comsgarch") -> RegimeParams:
    """Parameters that balance intercept, decay, and feedback contributions.

    One-state family ("cogarch"): alpha = c zeta, beta = -log(c) zeta,
    lam = c zeta. Switching family ("comsgarch"): alpha_k = c_k zeta,
    beta_k = -zeta log(c_k), lam_k = zeta.
    """
    if zeta <= 0:
        raise ValidationError(f"zeta={zeta:g} must be positive")
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if np.any(c <= 0) or np.any(c >= 1):
        raise ValidationError("balance constants must lie strictly inside (0, 1)")
    if family == "cogarch":
        if len(c) != 1:
            raise ValidationError("cogarch family takes a single balance constant")
        lam = c * zeta
    elif family == "comsgarch":
        lam = np.full(len(c), zeta)
    else:
        raise ValidationError(f"unknown family {family!r}")
    return RegimeParams(alpha=c * zeta, beta=-np.log(c) * zeta, lam=lam)


def _draw_states(u: np.ndarray, dt: np.ndarray, rates: TransitionRates, fixed_gaps: bool) -> np.ndarray:
    n = len(u)
    nu = rates.nu
    s = np.empty(n, dtype=np.int64)
    s[0] = int(u[0] * nu) + 1
    if nu == 1:
        s[:] = 1
        return s
    P = transition_matrix(float(dt[0]), rates) if fixed_gaps else None
    for i in range(1, n):
        kernel = P if fixed_gaps else transition_matrix(float(dt[i]), rates)
        cum = np.cumsum(kernel[:, s[i - 1] - 1])
        s[i] = int(np.searchsorted(cum, u[i], side="right")) + 1
        if s[i] > nu:  # guard against cum[-1] = 1 - rounding
            s[i] = nu
    return s


def simulate(config: SimConfig, params: RegimeParams):
    """Generate one series; returns (observed, diff, path, volatility).

    Deterministic given the seed: gaps, state-draw uniforms, and innovations
    are drawn up front in that order, then the recursion runs.
    """
    if params.nu != config.nu:
        raise ValidationError(
            f"params have {params.nu} states but config.balance has {config.nu}"
        )
    if config.nu > 1 and config.rates.nu != config.nu:
        raise ValidationError(
            f"rates have {config.rates.nu} states but config.balance has {config.nu}"
        )
    rng = np.random.default_rng(config.seed)
    n = config.n

    if config.gap_mode == "fixed":
        dt = np.full(n, 1.0 / config.zeta)
    else:
        dt = rng.exponential(1.0 / config.zeta, size=n)
        dt = np.maximum(dt, 1e-12)
    rates = config.rates if config.nu > 1 else TransitionRates(np.zeros((1, 1)))
    if config.nu > 1:
        # fail early if the rates cannot produce a valid kernel at these gaps
        for k in range(1, config.nu + 1):
            stay_prob(k, float(np.max(dt)), rates)
    u = rng.random(n)
    eps = rng.standard_normal(n)

    s = _draw_states(u, dt, rates, config.gap_mode == "fixed")

    if config.sigma2_0 is not None:
        sigma2_0 = float(config.sigma2_0)
    else:
        # no-shock fixed point of the recursion in the starting state
        k = s[0] - 1
        step = 1.0 / config.zeta
        decay = np.exp(-params.beta[k] * step)
        sigma2_0 = float(params.alpha[k] * step / (1.0 - decay))

    Y = np.empty(n)
    sigma2 = np.empty(n)
    rho2 = np.empty(n)
    prev = sigma2_0
    for i in range(n):
        rho2[i] = prev * dt[i]
        Y[i] = np.sqrt(rho2[i]) * eps[i]
        prev = params.alpha[s[i] - 1] * dt[i] + (prev + params.lam[s[i] - 1] * Y[i] ** 2) * np.exp(
            -params.beta[s[i] - 1] * dt[i]
        )
        sigma2[i] = prev

    t = np.concatenate(([0.0], np.cumsum(dt)))
    G = np.concatenate(([0.0], np.cumsum(Y)))
    obs = ObservedSeries(t=t, G=G)
    diff = DiffSeries(Y=Y, dt=dt)
    path = StatePath(s=s)
    vol = VolatilitySeries(sigma2=sigma2, rho2=rho2, sigma2_0=sigma2_0)
    return obs, diff, path, vol


def perturb(
    diff: DiffSeries,
    path: StatePath,
    eps_scale: float,
    mode: str = "global_sd",
    seed: int = 0,
) -> DiffSeries:
    """Add iid Gaussian observation noise scaled by a dispersion statistic.

    global_sd: noise sd = eps_scale * sample sd of all increments.
    per_state_sd: noise sd = eps_scale * sample sd of the increments sharing
    the step's state (each state needs at least 2 observations).
    """
    if eps_scale < 0:
        raise ValidationError(f"eps_scale={eps_scale:g} must be non-negative")
    if mode not in PERTURB_MODES:
        raise ValidationError(f"mode must be one of {PERTURB_MODES}, got {mode!r}")
    if path.n != diff.n:
        raise ValidationError(f"path length {path.n} != series length {diff.n}")

    if mode == "global_sd":
        sd = np.full(diff.n, np.std(diff.Y, ddof=1))
    else:
        sd = np.empty(diff.n)
        for state in np.unique(path.s):
            mask = path.s == state
            if mask.sum() < 2:
                raise ValidationError(
                    f"state {state} has {mask.sum()} observation(s); need at least 2 for its sd"
                )
            sd[mask] = np.std(diff.Y[mask], ddof=1)

    rng = np.random.default_rng(seed)
    z = rng.standard_normal(diff.n) * (eps_scale * sd)
    return DiffSeries(Y=diff.Y + z, dt=diff.dt)
