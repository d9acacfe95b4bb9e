"""File formats: comma-separated series and result tables with one-line
headers, flat key=value parameter/metadata files, and the minute-data
ingestion pipeline. Floats are written with 17 significant digits so a
write/read round trip is exact.
"""

import hashlib
import math
import warnings
from datetime import datetime, timezone

import numpy as np

from .errors import ValidationError
from .types import ObservedSeries, RegimeParams, StatePath, TransitionRates


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_table(path, header, columns):
    rows = len(columns[0])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(rows):
            fh.write(",".join(fmt(col[i]) if not isinstance(col[i], (int, np.integer)) else str(int(col[i])) for col in columns) + "\n")


def _read_table(path, expected_header):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValidationError(f"{path}:1: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if header != list(expected_header):
        raise ValidationError(
            f"{path}:1: expected header {','.join(expected_header)!r}, got {lines[0]!r}"
        )
    out = [[] for _ in expected_header]
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(expected_header):
            raise ValidationError(
                f"{path}:{lineno}: expected {len(expected_header)} fields, got {len(parts)}"
            )
        for j, part in enumerate(parts):
            try:
                out[j].append(float(part))
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: cannot parse {part!r} as a number")
    return [np.asarray(col) for col in out]


def write_series(path, obs: ObservedSeries):
    _write_table(path, ("t", "G"), (obs.t, obs.G))


def read_series(path) -> ObservedSeries:
    t, G = _read_table(path, ("t", "G"))
    try:
        return ObservedSeries(t=t, G=G)
    except ValidationError as err:
        raise ValidationError(f"{path}: {err}") from err


def write_fit_table(path, t, Y, dt, states, sigma2):
    _write_table(path, ("t", "Y", "dt", "state", "sigma2"), (t, Y, dt, states.astype(int), sigma2))


def read_fit_table(path):
    t, Y, dt, state, sigma2 = _read_table(path, ("t", "Y", "dt", "state", "sigma2"))
    return t, Y, dt, state.astype(np.int64), sigma2


def write_cv_table(path, grid, mean_mse, se):
    _write_table(path, ("p", "mean_mse", "se"), (np.asarray(grid), mean_mse, se))


def write_forecast_table(path, sigma_bar):
    _write_table(path, ("step", "sigma2_bar"), (np.arange(1, len(sigma_bar) + 1), sigma_bar))


def write_ensemble_table(path, rows):
    """Rows of (k, count, weight)."""
    ks = [r[0] for r in rows]
    counts = [r[1] for r in rows]
    weights = [r[2] for r in rows]
    _write_table(path, ("k", "count", "weight"), (ks, counts, weights))


def write_keyvalues(path, mapping):
    with open(path, "w") as fh:
        for key in sorted(mapping):
            value = mapping[key]
            if isinstance(value, float):
                value = fmt(value)
            fh.write(f"{key}={value}\n")


def read_keyvalues(path):
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def config_hash(mapping) -> str:
    canon = "\n".join(f"{k}={mapping[k]}" for k in sorted(mapping))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def params_to_mapping(params: RegimeParams, rates: TransitionRates, sigma2_0: float):
    out = {"nu": params.nu, "sigma2_0": fmt(sigma2_0)}
    for k in range(params.nu):
        out[f"alpha_{k + 1}"] = fmt(params.alpha[k])
        out[f"beta_{k + 1}"] = fmt(params.beta[k])
        out[f"lam_{k + 1}"] = fmt(params.lam[k])
    for j in range(1, params.nu + 1):
        for k in range(1, params.nu + 1):
            if j != k:
                out[f"eta_{j}_{k}"] = fmt(rates.eta[j - 1, k - 1])
    return out


def mapping_to_params(mapping):
    try:
        nu = int(mapping["nu"])
        sigma2_0 = float(mapping["sigma2_0"])
        alpha = [float(mapping[f"alpha_{k}"]) for k in range(1, nu + 1)]
        beta = [float(mapping[f"beta_{k}"]) for k in range(1, nu + 1)]
        lam = [float(mapping[f"lam_{k}"]) for k in range(1, nu + 1)]
        eta = np.zeros((nu, nu))
        for j in range(1, nu + 1):
            for k in range(1, nu + 1):
                if j != k:
                    eta[j - 1, k - 1] = float(mapping[f"eta_{j}_{k}"])
    except KeyError as err:
        raise ValidationError(f"parameter file is missing {err.args[0]!r}")
    return RegimeParams(alpha=alpha, beta=beta, lam=lam), TransitionRates(eta=eta), sigma2_0


_TS_FORMATS = ("%Y%m%d %H%M%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y%m%d%H%M%S")


def _parse_timestamp_days(text):
    for fmt_ in _TS_FORMATS:
        try:
            stamp = datetime.strptime(text, fmt_).replace(tzinfo=timezone.utc)
            return stamp.timestamp() / 86400.0
        except ValueError:
            continue
    return None


def ingest_fx(path, downsample_factor=1, time_unit="days", tail=None, log_price=True):
    """Read a minute-quote file (timestamp and price in the first two fields,
    comma or semicolon separated), keep every factor-th row, log-transform the
    price, and convert timestamps to fractional days.

    time_unit "days" parses calendar timestamps; "raw" takes the first field
    as a number in its own unit. Unparseable rows are skipped and counted.
    Returns (series, skipped_row_count).
    """
    if downsample_factor < 1 or int(downsample_factor) != downsample_factor:
        raise ValidationError(f"downsample factor {downsample_factor} must be an integer >= 1")
    if time_unit not in ("days", "raw"):
        raise ValidationError(f"time_unit must be 'days' or 'raw', got {time_unit!r}")
    if tail is not None and tail < 2:
        raise ValidationError(f"tail={tail} must keep at least 2 points")

    times = []
    prices = []
    skipped = 0
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(";") if ";" in line else line.split(",")
            if len(parts) < 2:
                skipped += 1
                continue
            raw_t, raw_p = parts[0].strip(), parts[1].strip()
            if time_unit == "days":
                t = _parse_timestamp_days(raw_t)
            else:
                try:
                    t = float(raw_t)
                except ValueError:
                    t = None
            try:
                p = float(raw_p)
            except ValueError:
                p = None
            if t is None or p is None or (log_price and p <= 0):
                skipped += 1
                continue
            times.append(t)
            prices.append(p)
    if skipped:
        warnings.warn(f"{path}: skipped {skipped} unparseable row(s)")
    if len(times) < 2:
        raise ValidationError(f"{path}: fewer than 2 usable rows")

    times = np.asarray(times)[:: int(downsample_factor)]
    prices = np.asarray(prices)[:: int(downsample_factor)]
    if tail is not None:
        times = times[-int(tail):]
        prices = prices[-int(tail):]
    G = np.log(prices) if log_price else prices
    try:
        obs = ObservedSeries(t=times, G=G)
    except ValidationError as err:
        raise ValidationError(f"{path}: after downsampling, {err}") from err
    return obs, skipped


def gap_spread(obs: ObservedSeries) -> float:
    """max(dt) / median(dt); large values flag calendar gaps (weekends)."""
    dt = np.diff(obs.t)
    return float(np.max(dt) / np.median(dt))
