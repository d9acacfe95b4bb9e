"""Value types for the switching-GARCH model.

All containers are frozen dataclasses holding validated numpy arrays; they are
safe to share across threads. State labels are 1-based throughout the public
API (states live in {1..nu}).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


def _as_float_vector(x, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class ObservedSeries:
    """Raw series: levels G observed at strictly increasing times t."""

    t: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        t = _as_float_vector(self.t, "t")
        G = _as_float_vector(self.G, "G")
        if len(t) != len(G):
            raise ValidationError(f"t and G lengths differ: {len(t)} vs {len(G)}")
        if len(t) < 2:
            raise ValidationError("series needs at least 2 points")
        gaps = np.diff(t)
        bad = np.nonzero(gaps <= 0)[0]
        if bad.size:
            i = int(bad[0])
            raise ValidationError(
                f"timestamps must be strictly increasing; t[{i + 1}]={t[i + 1]:g} "
                f"does not exceed t[{i}]={t[i]:g}"
            )
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "G", G)

    @property
    def n_points(self):
        return len(self.t)


@dataclass(frozen=True)
class DiffSeries:
    """Increments Y with their positive time gaps dt (one pair per step)."""

    Y: np.ndarray
    dt: np.ndarray

    def __post_init__(self):
        Y = _as_float_vector(self.Y, "Y")
        dt = _as_float_vector(self.dt, "dt")
        if len(Y) != len(dt):
            raise ValidationError(f"Y and dt lengths differ: {len(Y)} vs {len(dt)}")
        if len(Y) == 0:
            raise ValidationError("empty increment series")
        if np.any(dt <= 0):
            i = int(np.nonzero(dt <= 0)[0][0])
            raise ValidationError(f"all gaps must be positive; dt[{i}]={dt[i]:g}")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "dt", dt)

    @property
    def n(self):
        return len(self.Y)


@dataclass(frozen=True)
class RegimeParams:
    """Per-state GARCH parameters: intercept alpha, decay beta, feedback lam.

    All entries are required strictly positive (a 1e-12 floor keeps the
    log-likelihood and the log-parameterized optimizer well-defined even for
    states meant to behave like alpha = 0 or lam = 0).
    """

    alpha: np.ndarray
    beta: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        alpha = _as_float_vector(self.alpha, "alpha")
        beta = _as_float_vector(self.beta, "beta")
        lam = _as_float_vector(self.lam, "lam")
        if not (len(alpha) == len(beta) == len(lam)):
            raise ValidationError("alpha, beta, lam must have equal lengths")
        if len(alpha) < 1:
            raise ValidationError("at least one state is required")
        for name, arr in (("alpha", alpha), ("beta", beta), ("lam", lam)):
            if np.any(arr <= 0):
                k = int(np.nonzero(arr <= 0)[0][0])
                raise ValidationError(
                    f"{name}[{k}]={arr[k]:g} must be strictly positive"
                )
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "lam", lam)

    @property
    def nu(self):
        return len(self.alpha)


@dataclass(frozen=True)
class TransitionRates:
    """Off-diagonal switching rates; eta[j-1, k-1] is the rate from k to j.

    The diagonal is unused and forced to zero. Whether the implied
    stay-probability lands in [0, 1] depends on the gap, so that check happens
    where a concrete dt is available (see core.transition_prob).
    """

    eta: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim != 2 or eta.shape[0] != eta.shape[1]:
            raise ValidationError(f"eta must be a square matrix, got shape {eta.shape}")
        if not np.all(np.isfinite(eta)):
            raise ValidationError("eta contains non-finite values")
        off = eta[~np.eye(eta.shape[0], dtype=bool)]
        if off.size and np.any(off < 0):
            raise ValidationError("off-diagonal rates must be non-negative")
        eta = eta.copy()
        np.fill_diagonal(eta, 0.0)
        object.__setattr__(self, "eta", eta)

    @property
    def nu(self):
        return self.eta.shape[0]


@dataclass(frozen=True)
class StatePath:
    """Regime labels, one per increment, each in {1..nu}."""

    s: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s)
        if s.ndim != 1 or len(s) == 0:
            raise ValidationError("state path must be a non-empty vector")
        if not np.issubdtype(s.dtype, np.integer):
            rounded = np.rint(np.asarray(s, dtype=float))
            if np.any(rounded != np.asarray(s, dtype=float)):
                raise ValidationError("state labels must be integers")
            s = rounded.astype(np.int64)
        else:
            s = s.astype(np.int64)
        if np.any(s < 1):
            i = int(np.nonzero(s < 1)[0][0])
            raise ValidationError(f"state labels start at 1; s[{i}]={s[i]}")
        object.__setattr__(self, "s", s)

    @property
    def n(self):
        return len(self.s)

    def check_states(self, nu):
        if np.any(self.s > nu):
            i = int(np.nonzero(self.s > nu)[0][0])
            raise ValidationError(f"s[{i}]={self.s[i]} exceeds the state count {nu}")


@dataclass(frozen=True)
class VolatilitySeries:
    """Recursion output: per-step variance levels and increment variances."""

    sigma2: np.ndarray
    rho2: np.ndarray
    sigma2_0: float

    def __post_init__(self):
        sigma2 = _as_float_vector(self.sigma2, "sigma2")
        rho2 = _as_float_vector(self.rho2, "rho2")
        if len(sigma2) != len(rho2):
            raise ValidationError("sigma2 and rho2 lengths differ")
        if self.sigma2_0 <= 0:
            raise ValidationError(f"sigma2_0={self.sigma2_0:g} must be positive")
        if np.any(sigma2 <= 0) or np.any(rho2 <= 0):
            raise ValidationError("variance series must be strictly positive")
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "rho2", rho2)
        object.__setattr__(self, "sigma2_0", float(self.sigma2_0))

    @property
    def n(self):
        return len(self.sigma2)


@dataclass(frozen=True)
class PivotalWindow:
    """Truncation length for state-conditional likelihood products."""

    b: int = 20

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 1:
            raise ValidationError(f"window length b={self.b} must be an integer >= 1")
        object.__setattr__(self, "b", int(self.b))
