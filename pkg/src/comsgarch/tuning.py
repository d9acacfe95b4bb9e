"""Choosing the noise-injection rate by k-fold cross-validation.

Interior points are partitioned into folds; each fold is held out, the fit
runs on the remaining points, held-out states are filled in by
nearest-neighbor interpolation, squared increments are predicted through the
variance chain, and the chosen rate applies the one-standard-error correction
to the per-rate mean squared errors.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import sigma2_next
from .crops import CropsConfig, CropsResult, run_crops
from .errors import ValidationError
from .types import ObservedSeries, StatePath


@dataclass(frozen=True)
class CvConfig:
    crops: CropsConfig
    folds: int = 5
    grid: tuple = (0.0, 0.01, 0.02, 0.03, 0.04)
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValidationError(f"folds={self.folds} must be at least 2")
        grid = tuple(float(p) for p in self.grid)
        if not grid:
            raise ValidationError("rate grid must be non-empty")
        for p in grid:
            if not 0.0 <= p < 1.0:
                raise ValidationError(f"rate p={p:g} must lie in [0, 1)")
        if any(b <= a for a, b in zip(grid[:-1], grid[1:])):
            raise ValidationError("rate grid must be strictly ascending")
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class CvReport:
    grid: tuple
    mean_mse: np.ndarray
    se: np.ndarray
    fold_mse: np.ndarray  # (J, k)
    best_index: int  # 0-based argmin of mean_mse
    chosen_index: int  # 0-based, after the one-standard-error correction
    chosen_rate: float


def partition_folds(obs: ObservedSeries, k: int, seed=0):
    """Random partition of the interior point indices into k validation sets.

    The first and last points anchor the differencing and never validate.
    Returns k sorted index arrays covering all interior points exactly once.
    """
    interior = np.arange(1, obs.n_points - 1)
    if k < 2:
        raise ValidationError(f"k={k} must be at least 2")
    if k > len(interior):
        raise ValidationError(f"k={k} folds but only {len(interior)} interior points")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(interior)
    return [np.sort(chunk) for chunk in np.array_split(perm, k)]


def interpolate_states(train_times, train_path: StatePath, validation_times):
    """Assign each validation time the state of its nearest training time.

    `train_times` are the kept points (one more than the path length; the
    initial point inherits the first state). Exact midpoints take the earlier
    neighbor's state.
    """
    t = np.asarray(train_times, dtype=float)
    v = np.asarray(validation_times, dtype=float)
    if len(t) != train_path.n + 1:
        raise ValidationError("need one training time per state plus the initial point")
    if len(v) and (v.min() < t[0] or v.max() > t[-1]):
        raise ValidationError("validation times must lie within the training range")
    states_at_points = np.concatenate(([train_path.s[0]], train_path.s))
    right = np.searchsorted(t, v, side="left")
    right = np.clip(right, 1, len(t) - 1)
    left = right - 1
    take_left = (v - t[left]) <= (t[right] - v)
    return np.where(take_left, states_at_points[left], states_at_points[right]).astype(np.int64)


def predict_y2(
    trained: CropsResult,
    training: ObservedSeries,
    training_points,
    full: ObservedSeries,
    validation_points,
    validation_states,
):
    """Predict squared increments at held-out points through the variance chain.

    The level entering a held-out step comes from the trained run when the
    predecessor was kept, and otherwise is carried forward from the previous
    prediction via the recursion with the interpolated state. Points whose
    chain has no anchor are flagged unpredictable.

    Returns (y2_hat, predictable) aligned with ascending validation_points.
    """
    training_points = np.asarray(training_points)
    order = np.argsort(validation_points)
    val = np.asarray(validation_points)[order]
    val_states = np.asarray(validation_states)[order]
    if len(val) != len(val_states):
        raise ValidationError("one interpolated state per validation point is required")

    train_pos = {int(pt): j for j, pt in enumerate(training_points)}

    def trained_sigma2(pos):
        return trained.sigma2_0 if pos == 0 else float(trained.volatility.sigma2[pos - 1])

    chained = {}
    y2_hat = np.full(len(val), np.nan)
    predictable = np.zeros(len(val), dtype=bool)
    for idx, v in enumerate(val):
        prev = int(v) - 1
        if prev in train_pos:
            s2_prev = trained_sigma2(train_pos[prev])
        elif prev in chained:
            s2_prev = chained[prev]
        else:
            continue  # no anchor yet; flagged unpredictable
        dt_v = float(full.t[v] - full.t[v - 1])
        y2 = s2_prev * dt_v
        y2_hat[idx] = y2
        predictable[idx] = True
        chained[int(v)] = sigma2_next(s2_prev, y2, dt_v, trained.params, int(val_states[idx]))

    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    return y2_hat[inv], predictable[inv]


def select_rate(grid, fold_mse) -> CvReport:
    """Aggregate per-fold errors and apply the one-standard-error correction.

    The corrected choice is the first grid index at or after the argmin whose
    mean error reaches the argmin's mean plus one standard error; if none
    qualifies the argmin stands.
    """
    grid = tuple(float(p) for p in grid)
    mse = np.asarray(fold_mse, dtype=float)
    if mse.ndim != 2 or mse.shape[0] != len(grid):
        raise ValidationError("fold_mse must be a (grid, folds) matrix")
    if mse.shape[1] < 2:
        raise ValidationError("need at least 2 folds per grid point")
    k = mse.shape[1]
    mean = mse.mean(axis=1)
    se = np.sqrt(np.sum((mse - mean[:, None]) ** 2, axis=1) / ((k - 1) * k))
    best = int(np.argmin(mean))
    threshold = mean[best] + se[best]
    chosen = best
    for j in range(best, len(grid)):
        if mean[j] >= threshold:
            chosen = j
            break
    return CvReport(
        grid=grid,
        mean_mse=mean,
        se=se,
        fold_mse=mse,
        best_index=best,
        chosen_index=chosen,
        chosen_rate=grid[chosen],
    )


def _default_workers():
    try:
        return max(1, int(os.environ.get("COMSGARCH_THREADS", "1")))
    except ValueError:
        return 1


def _one_fold_mse(obs, nu, base_cfg, p, run_seed, val_idx):
    keep = np.setdiff1d(np.arange(obs.n_points), val_idx)
    train_obs = ObservedSeries(t=obs.t[keep], G=obs.G[keep])
    cfg = replace(base_cfg, ni_rate=p, seed=int(run_seed))
    result = run_crops(train_obs, nu, cfg)
    val = np.sort(val_idx)
    val_states = interpolate_states(train_obs.t, result.path, obs.t[val])
    y2_hat, ok = predict_y2(result, train_obs, keep, obs, val, val_states)
    if not np.any(ok):
        raise ValidationError("no predictable validation points in this fold")
    y2_obs = (obs.G[val] - obs.G[val - 1]) ** 2
    return float(np.mean((y2_obs[ok] - y2_hat[ok]) ** 2))


def run_cv(obs: ObservedSeries, nu: int, cfg: CvConfig, workers: int | None = None) -> CvReport:
    """Full grid-by-fold sweep; deterministic given cfg.seed.

    Each (rate, fold) run gets its own derived seed, so results do not depend
    on execution order; COMSGARCH_THREADS (or `workers`) caps parallelism.
    """
    folds = partition_folds(obs, cfg.folds, cfg.seed)
    J = len(cfg.grid)
    seeds = np.random.SeedSequence(cfg.seed).generate_state(J * cfg.folds, dtype=np.uint64)
    tasks = [
        (j, kf, cfg.grid[j], seeds[j * cfg.folds + kf], folds[kf])
        for j in range(J)
        for kf in range(cfg.folds)
    ]
    fold_mse = np.empty((J, cfg.folds))
    workers = _default_workers() if workers is None else max(1, int(workers))
    if workers == 1:
        for j, kf, p, run_seed, val in tasks:
            fold_mse[j, kf] = _one_fold_mse(obs, nu, cfg.crops, p, run_seed, val)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_one_fold_mse, obs, nu, cfg.crops, p, run_seed, val): (j, kf)
                for j, kf, p, run_seed, val in tasks
            }
            for fut, (j, kf) in futures.items():
                fold_mse[j, kf] = fut.result()
    return select_rate(cfg.grid, fold_mse)
