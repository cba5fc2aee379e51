"""Circular statistics used by the refinement pipeline.

All angles are radians on [0, 2*pi) unless a function says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special

from .dip import dip_statistic

__all__ = [
    "KAPPA_MAX",
    "WATSON_CRITICAL_001",
    "CircularStatsError",
    "TestResult",
    "bessel_i0",
    "circular_cut",
    "circular_dip",
    "dip_test",
    "estimate_kappa",
    "mean_resultant",
    "rao_critical_value",
    "rao_spacing_statistic",
    "rao_spacing_test",
    "von_mises_cdf",
    "von_mises_logpdf",
    "von_mises_pdf",
    "watson_u2",
    "watson_u2_test",
    "watson_u2_von_mises_test",
]

TWO_PI = 2.0 * math.pi
KAPPA_MAX = 700.0
# Watson U^2 critical value at alpha = 0.01 for a von Mises fit with
# estimated parameters, as used in the reference case study.
WATSON_CRITICAL_001 = 0.141

RAO_MIN_N = 4
DIP_MIN_N = 4
WATSON_MIN_N = 4


class CircularStatsError(ValueError):
    pass


@dataclass(frozen=True)
class TestResult:
    """Outcome of a hypothesis test.

    Either ``critical_value`` or ``p_value`` (or both) is set, depending on
    how the method decides.
    """

    __test__ = False  # not a pytest class

    method: str
    statistic: float
    alpha: float
    reject_null: bool
    n: int
    critical_value: float | None = None
    p_value: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def as_angles(sample) -> np.ndarray:
    a = np.asarray(sample, dtype=float).ravel()
    return np.mod(a, TWO_PI)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise CircularStatsError(f"alpha must lie in (0, 1), got {alpha}")


# --------------------------------------------------------------------------
# descriptive


def mean_resultant(sample) -> tuple[float, float]:
    """Mean direction in [0, 2*pi) and mean resultant length in [0, 1].

    For a sample whose resultant vanishes the direction is undefined and
    returned as NaN.
    """
    a = as_angles(sample)
    if a.size == 0:
        raise CircularStatsError("mean_resultant of an empty sample")
    c, s = np.cos(a).mean(), np.sin(a).mean()
    r = math.hypot(c, s)
    if r < 1e-12:
        return math.nan, 0.0
    return math.atan2(s, c) % TWO_PI, min(r, 1.0)


# --------------------------------------------------------------------------
# Bessel functions and the von Mises distribution


def bessel_i0(kappa: float) -> float:
    """Modified Bessel function of the first kind, order 0."""
    if kappa < 0 or kappa > KAPPA_MAX or math.isnan(kappa):
        raise CircularStatsError(f"kappa must lie in [0, {KAPPA_MAX}], got {kappa}")
    return float(special.i0(kappa))


def log_bessel_i0(kappa):
    k = np.asarray(kappa, dtype=float)
    return np.log(special.i0e(k)) + k


def bessel_ratio(kappa):
    """A(kappa) = I1(kappa) / I0(kappa)."""
    k = np.asarray(kappa, dtype=float)
    return special.i1e(k) / special.i0e(k)


_A_MAX = float(special.i1e(KAPPA_MAX) / special.i0e(KAPPA_MAX))


def estimate_kappa(r_bar: float, newton_steps: int = 5) -> float:
    """Solve A(kappa) = r_bar for the concentration.

    Closed-form starting point ``r(2 - r^2)/(1 - r^2)`` refined by Newton
    steps on A(kappa) - r; clipped to [0, KAPPA_MAX].
    """
    r = float(r_bar)
    if r <= 0.0:
        return 0.0
    if r >= _A_MAX:
        return KAPPA_MAX
    i0e, i1e = special.i0e, special.i1e
    kappa = r * (2.0 - r * r) / (1.0 - r * r)
    for _ in range(newton_steps):
        a = float(i1e(kappa)) / float(i0e(kappa))
        deriv = 1.0 - a * a - (a / kappa if kappa > 0 else 0.5)
        if deriv <= 0:
            break
        step = (a - r) / deriv
        kappa = min(max(kappa - step, 0.0), KAPPA_MAX)
        if abs(step) < 1e-14 * max(kappa, 1.0):
            break
    return kappa


def estimate_kappas(r_bar) -> np.ndarray:
    return np.array([estimate_kappa(r) for r in np.asarray(r_bar, dtype=float)])


def von_mises_logpdf(theta, mu: float, kappa: float):
    theta = np.asarray(theta, dtype=float)
    return kappa * (np.cos(theta - mu) - 1.0) - math.log(TWO_PI * special.i0e(kappa))


def von_mises_pdf(theta, mu: float, kappa: float):
    """Density exp(kappa cos(theta - mu)) / (2 pi I0(kappa)).

    Evaluated with exponentially scaled Bessel values so it stays finite up
    to ``KAPPA_MAX``.
    """
    if kappa < 0 or kappa > KAPPA_MAX:
        raise CircularStatsError(f"kappa must lie in [0, {KAPPA_MAX}], got {kappa}")
    out = np.exp(von_mises_logpdf(theta, mu, kappa))
    return float(out) if out.ndim == 0 else out


def von_mises_cdf(theta, mu: float, kappa: float, epsabs: float = 1e-10):
    """Distribution function with the cut point at angle 0.

    Integrates the density numerically between consecutive sorted query
    points and accumulates, so an array of n angles costs n short adaptive
    quadratures.
    """
    th = np.asarray(theta, dtype=float)
    flat = th.ravel()
    if np.any((flat < 0) | (flat > TWO_PI)):
        raise CircularStatsError("von_mises_cdf expects angles in [0, 2*pi]")
    mu = float(mu) % TWO_PI
    if kappa == 0:
        out = flat / TWO_PI
    else:
        norm = TWO_PI * float(special.i0e(kappa))
        pdf = lambda t: math.exp(kappa * (math.cos(t - mu) - 1.0)) / norm  # noqa: E731
        order = np.argsort(flat, kind="stable")
        out = np.empty_like(flat)
        acc, prev = 0.0, 0.0
        for idx in order:
            x = flat[idx]
            if x > prev:
                pts = [mu] if prev < mu < x else None
                val, _ = integrate.quad(pdf, prev, x, epsabs=epsabs, epsrel=1e-12, points=pts, limit=200)
                acc += val
                prev = x
            out[idx] = acc
        np.clip(out, 0.0, 1.0, out=out)
    out = out.reshape(th.shape)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Rao's spacing test


def rao_spacing_statistic(sample) -> float:
    """Rao's U in degrees: half the summed deviation of the circular spacings
    from 360/n."""
    deg = np.sort(np.degrees(as_angles(sample)))
    n = deg.size
    if n < 2:
        raise CircularStatsError("Rao's spacing statistic needs at least 2 angles")
    spacings = np.empty(n)
    spacings[:-1] = np.diff(deg)
    spacings[-1] = 360.0 - deg[-1] + deg[0]
    return 0.5 * float(np.abs(spacings - 360.0 / n).sum())


def _rao_null_draws(n: int, replicates: int, seed: int) -> np.ndarray:
    # Circular spacings of n uniform points are Dirichlet(1, ..., 1), i.e.
    # normalised exponentials; no sorting required.
    chunk = max(1, min(replicates, 2_000_000 // max(n, 1)))
    n_chunks = -(-replicates // chunk)
    streams = np.random.SeedSequence([seed, n]).spawn(n_chunks)
    out = np.empty(replicates)
    for i, ss in enumerate(streams):
        m = min(chunk, replicates - i * chunk)
        e = np.random.default_rng(ss).standard_exponential((m, n))
        d = e / e.sum(axis=1, keepdims=True)
        out[i * chunk : i * chunk + m] = 180.0 * np.abs(d - 1.0 / n).sum(axis=1)
    return out


@lru_cache(maxsize=256)
def _rao_null_sorted(n: int, replicates: int, seed: int) -> np.ndarray:
    draws = _rao_null_draws(n, replicates, seed)
    draws.sort()
    draws.setflags(write=False)
    return draws


def rao_critical_value(n: int, alpha: float = 0.01, replicates: int = 100_000, seed: int = 20170101) -> float:
    """Monte Carlo upper-alpha critical value of Rao's U for sample size n."""
    _check_alpha(alpha)
    null = _rao_null_sorted(int(n), int(replicates), int(seed))
    return float(np.quantile(null, 1.0 - alpha))


def rao_spacing_test(sample, alpha: float = 0.01, replicates: int = 100_000, seed: int = 20170101) -> TestResult:
    """Test circular uniformity; rejects when U exceeds its critical value."""
    _check_alpha(alpha)
    a = as_angles(sample)
    n = a.size
    if n < RAO_MIN_N:
        raise CircularStatsError(f"Rao's spacing test needs n >= {RAO_MIN_N}, got {n}")
    u = rao_spacing_statistic(a)
    null = _rao_null_sorted(n, int(replicates), int(seed))
    crit = float(np.quantile(null, 1.0 - alpha))
    exceed = null.size - np.searchsorted(null, u, side="left")
    p = (1.0 + exceed) / (null.size + 1.0)
    return TestResult("rao_spacing", u, alpha, bool(u > crit), n, critical_value=crit, p_value=float(p))


# --------------------------------------------------------------------------
# circular dip test


def circular_cut(sample) -> np.ndarray:
    """Unroll angles onto a line, cutting the circle inside the largest gap.

    Returned positions start at 0 (the point just after the gap) and are
    sorted ascending.
    """
    a = np.sort(as_angles(sample))
    if a.size < 2:
        return a - a[:1] if a.size else a
    gaps = np.empty(a.size)
    gaps[:-1] = np.diff(a)
    gaps[-1] = TWO_PI - a[-1] + a[0]
    start = (int(np.argmax(gaps)) + 1) % a.size
    return np.sort(np.mod(a - a[start], TWO_PI))


def circular_dip(sample) -> float:
    return dip_statistic(circular_cut(sample), is_sorted=True)


@lru_cache(maxsize=256)
def _dip_null_sorted(n: int, n_boot: int, seed: int) -> np.ndarray:
    streams = np.random.SeedSequence([seed, n]).spawn(n_boot)
    out = np.empty(n_boot)
    for i, ss in enumerate(streams):
        draw = np.random.default_rng(ss).uniform(0.0, TWO_PI, n)
        out[i] = circular_dip(draw)
    out.sort()
    out.setflags(write=False)
    return out


def dip_test(sample, alpha: float = 0.01, n_boot: int = 2000, seed: int = 20170102) -> TestResult:
    """Circular dip test of unimodality.

    The p-value is estimated from ``n_boot`` circular-uniform samples of the
    same size put through the same cut; rejection means at least two modes.
    """
    _check_alpha(alpha)
    a = as_angles(sample)
    n = a.size
    if n < DIP_MIN_N:
        raise CircularStatsError(f"dip test needs n >= {DIP_MIN_N}, got {n}")
    d = circular_dip(a)
    if d == 0.0:
        return TestResult("circular_dip", 0.0, alpha, False, n, p_value=1.0)
    null = _dip_null_sorted(n, int(n_boot), int(seed))
    exceed = null.size - np.searchsorted(null, d, side="left")
    p = (1.0 + exceed) / (null.size + 1.0)
    return TestResult("circular_dip", d, alpha, bool(p < alpha), n, p_value=float(p))


# --------------------------------------------------------------------------
# Watson U^2


def watson_u2(u) -> float:
    """U^2 from probability-integral transformed values F(theta_i)."""
    u = np.sort(np.asarray(u, dtype=float))
    n = u.size
    i = np.arange(1, n + 1)
    return float(np.sum((u - (2 * i - 1) / (2.0 * n)) ** 2) - n * (u.mean() - 0.5) ** 2 + 1.0 / (12.0 * n))


def watson_u2_test(
    sample,
    cdf: Callable[[np.ndarray], np.ndarray],
    alpha: float = 0.01,
    critical_value: float | None = None,
) -> TestResult:
    """Watson goodness-of-fit test against a distribution function.

    Without an explicit ``critical_value`` only alpha = 0.01 is supported
    (value 0.141); use :func:`watson_u2_von_mises_test` with
    ``bootstrap=True`` for other levels.
    """
    _check_alpha(alpha)
    a = as_angles(sample)
    n = a.size
    if n < WATSON_MIN_N:
        raise CircularStatsError(f"Watson U2 needs n >= {WATSON_MIN_N}, got {n}")
    if critical_value is None:
        if not math.isclose(alpha, 0.01):
            raise CircularStatsError("no tabulated Watson critical value for this alpha; use the bootstrap mode")
        critical_value = WATSON_CRITICAL_001
    stat = watson_u2(np.asarray(cdf(a), dtype=float))
    return TestResult("watson_u2", stat, alpha, bool(stat > critical_value), n, critical_value=float(critical_value))


def _fit_von_mises(a: np.ndarray) -> tuple[float, float]:
    mu, r = mean_resultant(a)
    return (0.0 if math.isnan(mu) else mu), estimate_kappa(r)


def watson_u2_von_mises_test(
    sample,
    mu: float,
    kappa: float,
    alpha: float = 0.01,
    bootstrap: bool = False,
    n_boot: int = 500,
    seed: int = 20170103,
) -> TestResult:
    """Watson U^2 of ``sample`` against von Mises(mu, kappa).

    In bootstrap mode the critical value is the upper-alpha quantile of U^2
    over parametric resamples, each refitted before testing, which accounts
    for the parameters having been estimated.
    """
    cdf = lambda t: von_mises_cdf(t, mu, kappa)  # noqa: E731
    if not bootstrap:
        return watson_u2_test(sample, cdf, alpha)
    _check_alpha(alpha)
    n = as_angles(sample).size
    stats = np.empty(n_boot)
    for i, ss in enumerate(np.random.SeedSequence(seed).spawn(n_boot)):
        draw = np.mod(np.random.default_rng(ss).vonmises(mu, kappa, n), TWO_PI)
        m, k = _fit_von_mises(draw)
        stats[i] = watson_u2(von_mises_cdf(draw, m, k))
    crit = float(np.quantile(stats, 1.0 - alpha))
    res = watson_u2_test(sample, cdf, alpha, critical_value=crit)
    p = (1.0 + np.sum(stats >= res.statistic)) / (n_boot + 1.0)
    return TestResult(res.method, res.statistic, alpha, res.reject_null, n, critical_value=crit, p_value=float(p))
