"""The iterative fit: drop random interior points, re-estimate both parameter
blocks on the merged sub-series, sample several candidate paths by Gibbs
sweeps, keep the one with the highest joint posterior, and fold its states
back into the full-grid path. Dropped steps keep their previous states, so
successive iterations average over different pivotal windows.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import default_sigma2_0, diff_series, volatility_path
from .errors import DomainError, ValidationError
from .inference import InferenceConfig, gibbs_sweep, joint_log_posterior, map_eta, map_theta
from .simulate import balanced_params
from .types import (
    DiffSeries,
    ObservedSeries,
    RegimeParams,
    StatePath,
    TransitionRates,
    VolatilitySeries,
)


@dataclass(frozen=True)
class NoiseMask:
    """Keep/drop indicators over the original points; endpoints and the first
    interior point are always kept."""

    e: np.ndarray
    p: float
    kept_index_map: np.ndarray

    @property
    def kept_count(self):
        return int(self.e.sum())


@dataclass(frozen=True)
class CropsConfig:
    iterations: int
    paths_per_iter: int = 6
    ni_rate: float = 0.0
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    seed: int = 0
    trace: bool = True
    freq_window: int = 200
    early_stop: bool = False
    early_stop_tol: float = 1e-5
    early_stop_lag: int = 50
    canonical_labels: bool = True
    sweep_conditioning: str = "frozen"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValidationError(f"iterations={self.iterations} must be at least 1")
        if self.paths_per_iter < 1:
            raise ValidationError(f"paths_per_iter={self.paths_per_iter} must be at least 1")
        if not 0.0 <= self.ni_rate < 1.0:
            raise ValidationError(f"ni_rate={self.ni_rate:g} must lie in [0, 1)")
        if self.freq_window < 1:
            raise ValidationError(f"freq_window={self.freq_window} must be at least 1")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    params: RegimeParams
    rates: TransitionRates
    kept: int
    error: str | None = None


@dataclass(frozen=True)
class CropsResult:
    path: StatePath
    params: RegimeParams
    rates: TransitionRates
    volatility: VolatilitySeries
    state_freq: np.ndarray  # (n, nu) share of the final iterations in each state
    trace: tuple
    iterations_run: int

    @property
    def sigma2_0(self):
        return self.volatility.sigma2_0


def bernoulli_ni(obs: ObservedSeries, p: float, rng) -> tuple[DiffSeries, NoiseMask]:
    """Drop interior points with probability p and merge increments across
    dropped spans. Totals are preserved: the merged increments still sum to
    G_last - G_first and the merged gaps to the full time span.
    """
    if not 0.0 <= p < 1.0:
        raise ValidationError(f"p={p:g} must lie in [0, 1)")
    P = obs.n_points
    if P < 3:
        raise ValidationError(f"noise injection needs at least 3 points, got {P}")
    rng = np.random.default_rng(rng)
    e = np.ones(P, dtype=bool)
    if P > 3:
        e[2 : P - 1] = rng.random(P - 3) >= p
    kept = np.nonzero(e)[0]
    sub = DiffSeries(Y=np.diff(obs.G[kept]), dt=np.diff(obs.t[kept]))
    return sub, NoiseMask(e=e, p=float(p), kept_index_map=kept)


INIT_SMOOTH_WINDOW = 25


def _magnitude_init_path(diff: DiffSeries, nu: int) -> StatePath:
    """Quantile-bin the smoothed squared-increment rate into nu states.

    An iid-uniform start makes the very first rate update see a rapidly
    alternating path, which drives the switching rates so high that the
    blockiness penalty vanishes and the fit settles into a per-point mixture.
    Binning a moving average of Y^2/dt starts the search in a blocky,
    level-aligned labeling instead.
    """
    if nu == 1:
        return StatePath(s=np.ones(diff.n, dtype=np.int64))
    z = diff.Y**2 / diff.dt
    w = min(INIT_SMOOTH_WINDOW, diff.n)
    zs = np.convolve(z, np.ones(w) / w, mode="same")
    cuts = np.quantile(zs, np.arange(1, nu) / nu)
    return StatePath(s=np.digitize(zs, cuts) + 1)


def default_init(obs: ObservedSeries, nu: int) -> tuple[RegimeParams, TransitionRates, StatePath]:
    """Scale-aware starting point: balanced parameters at the empirical gap
    rate with spread constants 0.5^k (ordered so higher-numbered states start
    more volatile, matching the canonical output labeling), uniform 0.1
    switching rates, and the smoothed-magnitude state path."""
    diff = diff_series(obs)
    zeta_hat = 1.0 / float(np.mean(diff.dt))
    c = 0.5 ** np.arange(nu, 0, -1)
    params = balanced_params(zeta_hat, c, family="comsgarch")
    eta = np.full((nu, nu), 0.1)
    np.fill_diagonal(eta, 0.0)
    rates = TransitionRates(eta=eta)
    return params, rates, _magnitude_init_path(diff, nu)


def _params_vector(params: RegimeParams, rates: TransitionRates) -> np.ndarray:
    off = rates.eta[~np.eye(rates.nu, dtype=bool)]
    return np.concatenate([params.alpha, params.beta, params.lam, off])


def _canonical_permutation(path_s, sigma2, nu):
    """Order state labels by their mean fitted variance level (calm first).

    State labels are exchangeable in the likelihood, so runs can settle in any
    relabeling; a fixed convention makes outputs comparable. Unoccupied states
    sort last; ties keep their original order.
    """
    keys = np.full(nu, np.inf)
    for k in range(1, nu + 1):
        mask = path_s == k
        if np.any(mask):
            keys[k - 1] = float(np.mean(sigma2[mask]))
    return np.argsort(keys, kind="stable")


def _apply_permutation(perm, params, rates, path_s, freq):
    relabel = np.empty(len(perm), dtype=np.int64)
    relabel[perm] = np.arange(1, len(perm) + 1)
    params = RegimeParams(alpha=params.alpha[perm], beta=params.beta[perm], lam=params.lam[perm])
    rates = TransitionRates(eta=rates.eta[np.ix_(perm, perm)])
    return params, rates, relabel[path_s - 1], freq[:, perm]


def run_crops(
    obs: ObservedSeries,
    nu: int,
    cfg: CropsConfig,
    init: tuple[RegimeParams, TransitionRates, StatePath] | None = None,
    sigma2_0: float | None = None,
) -> CropsResult:
    """Run the full iterative fit on an observed series.

    Per iteration: inject noise, restrict the current path to the kept steps,
    MAP-update the GARCH block then the rate block on the sub-series, draw
    `paths_per_iter` candidate paths by Gibbs sweeps over the kept interior
    steps, keep the best-scoring candidate, and merge it back (dropped steps
    retain their previous states). A failed iteration is retried once with a
    fresh mask; two consecutive failures abort. Deterministic given the seed.
    """
    if nu < 1:
        raise ValidationError(f"nu={nu} must be at least 1")
    diff_full = diff_series(obs)
    n = diff_full.n
    if obs.n_points < 3:
        raise ValidationError("need at least 3 observed points")

    rng = np.random.default_rng(cfg.seed)
    if sigma2_0 is None:
        sigma2_0 = default_sigma2_0(diff_full)
    if init is None:
        params, rates, path = default_init(obs, nu)
    else:
        params, rates, path = init
        if params.nu != nu or rates.nu != nu:
            raise ValidationError("init parameter dimensions disagree with nu")
        if path.n != n:
            raise ValidationError(f"init path length {path.n} != series length {n}")
        path.check_states(nu)

    icfg = cfg.inference
    path_s = path.s.copy()
    records = []
    freq_counts = np.zeros((n, nu))
    freq_len = min(cfg.freq_window, cfg.iterations)
    history = {}

    l = 1
    failures = 0
    completed = 0
    while l <= cfg.iterations:
        try:
            sub, mask = bernoulli_ni(obs, cfg.ni_rate, rng)
            inc_idx = mask.kept_index_map[1:] - 1
            sub_path = StatePath(s=path_s[inc_idx])

            params = map_theta(sub_path, sub, sigma2_0, icfg, params)
            if nu > 1:
                rates = map_eta(sub_path, sub.dt, icfg, rates)

            if nu > 1 and sub.n > 2:
                positions = range(2, sub.n)
                best_path = None
                best_obj = -math.inf
                objs = []
                for _ in range(cfg.paths_per_iter):
                    cand = gibbs_sweep(
                        sub_path, params, rates, sub, sigma2_0, icfg, rng, positions,
                        conditioning=cfg.sweep_conditioning,
                    )
                    obj = joint_log_posterior(params, rates, cand, sub, sigma2_0, icfg)
                    objs.append(obj)
                    if obj > best_obj:
                        best_obj = obj
                        best_path = cand
                assert all(best_obj >= o for o in objs)
                path_s[inc_idx] = best_path.s
                objective = best_obj
            else:
                objective = joint_log_posterior(params, rates, sub_path, sub, sigma2_0, icfg)
        except DomainError as err:
            failures += 1
            if cfg.trace:
                records.append(
                    IterationRecord(l, math.nan, params, rates, -1, error=str(err))
                )
            if failures >= 2:
                raise DomainError(
                    f"iteration {l} failed twice in a row: {err}", index=getattr(err, "index", None)
                ) from err
            continue

        failures = 0
        completed += 1
        if cfg.trace:
            records.append(IterationRecord(l, objective, params, rates, mask.kept_count))
        if l > cfg.iterations - freq_len:
            freq_counts[np.arange(n), path_s - 1] += 1.0

        if cfg.early_stop and l > cfg.early_stop_lag:
            ref = history.get(l - cfg.early_stop_lag)
            if ref is not None:
                cur = _params_vector(params, rates)
                move = np.max(np.abs(cur - ref) / (np.abs(ref) + 1e-300))
                if move < cfg.early_stop_tol:
                    break
        history[l] = _params_vector(params, rates)
        history.pop(l - cfg.early_stop_lag - 1, None)
        l += 1

    counted = freq_counts.sum(axis=1)
    if counted.max() > 0:
        state_freq = freq_counts / np.maximum(counted[:, None], 1.0)
    else:
        # early stop before the frequency window opened; use the final path
        state_freq = np.zeros((n, nu))
        state_freq[np.arange(n), path_s - 1] = 1.0

    final_path = StatePath(s=path_s)
    vol = volatility_path(diff_full, final_path, params, sigma2_0, icfg.rho_mode)
    if nu > 1 and cfg.canonical_labels:
        perm = _canonical_permutation(path_s, vol.sigma2, nu)
        if not np.array_equal(perm, np.arange(nu)):
            # relabeling leaves the fitted variance path itself unchanged
            params, rates, path_s, state_freq = _apply_permutation(
                perm, params, rates, path_s, state_freq
            )
            final_path = StatePath(s=path_s)
    return CropsResult(
        path=final_path,
        params=params,
        rates=rates,
        volatility=vol,
        state_freq=state_freq,
        trace=tuple(records),
        iterations_run=completed,
    )
