"""Mixtures of von Mises distributions fitted by EM, with BIC-based choice
of the number of components and hard cluster assignment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special
from scipy.special import logsumexp

from .circstats import KAPPA_MAX, TWO_PI, as_angles, estimate_kappa, estimate_kappas, mean_resultant, von_mises_logpdf

__all__ = [
    "BIC_THRESHOLD",
    "ClusterAssignment",
    "EMConfig",
    "FitError",
    "FitResult",
    "Selection",
    "VonMisesMixture",
    "assign_clusters",
    "bic",
    "circular_range",
    "cluster_time_ranges",
    "em_fit",
    "em_run",
    "log_likelihood",
    "n_parameters",
    "select_components",
]

# Decrease in BIC required before accepting one more component.
BIC_THRESHOLD = 10.0
COLLAPSE_MASS = 1e-12


class FitError(RuntimeError):
    pass


class _Collapsed(Exception):
    pass


@dataclass(frozen=True)
class VonMisesMixture:
    weights: tuple[float, ...]
    means: tuple[float, ...]
    kappas: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.weights) == len(self.means) == len(self.kappas) >= 1):
            raise ValueError("mixture needs matching, non-empty parameter lists")
        if abs(sum(self.weights) - 1.0) > 1e-9 or min(self.weights) <= 0:
            raise ValueError(f"weights must be positive and sum to 1: {self.weights}")
        if min(self.kappas) < 0 or max(self.kappas) > KAPPA_MAX:
            raise ValueError(f"kappas must lie in [0, {KAPPA_MAX}]: {self.kappas}")

    @classmethod
    def from_arrays(cls, weights, means, kappas) -> "VonMisesMixture":
        w = np.asarray(weights, dtype=float)
        return cls(
            tuple(map(float, w / w.sum())),
            tuple(float(m) % TWO_PI for m in means),
            tuple(map(float, kappas)),
        )

    @property
    def k(self) -> int:
        return len(self.weights)

    def component_logdensity(self, sample) -> np.ndarray:
        """(n, k) array of log(alpha_j) + log pdf_j(theta_i)."""
        a = as_angles(sample)
        cols = [
            math.log(w) + von_mises_logpdf(a, m, kap)
            for w, m, kap in zip(self.weights, self.means, self.kappas)
        ]
        return np.column_stack(cols) if cols else np.empty((a.size, 0))

    def pdf(self, theta):
        return np.exp(logsumexp(self.component_logdensity(theta), axis=1))

    def ordered(self) -> "VonMisesMixture":
        """Same mixture with components sorted by descending weight."""
        idx = sorted(range(self.k), key=lambda j: (-self.weights[j], self.means[j]))
        return VonMisesMixture(
            tuple(self.weights[j] for j in idx),
            tuple(self.means[j] for j in idx),
            tuple(self.kappas[j] for j in idx),
        )

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "means": list(self.means), "kappas": list(self.kappas)}


@dataclass(frozen=True)
class EMConfig:
    restarts: int = 20
    tol: float = 1e-8
    max_iter: int = 500
    seed: int = 0
    retries: int = 3  # fresh initialisations per restart after a collapse


@dataclass(frozen=True)
class FitResult:
    model: VonMisesMixture
    log_likelihood: float
    bic: float
    iterations: int
    converged: bool
    n: int
    ll_history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return self.model.k

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            **self.model.to_dict(),
            "log_likelihood": self.log_likelihood,
            "bic": self.bic,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def n_parameters(k: int) -> int:
    # k-1 free weights, k means, k concentrations
    return 3 * k - 1


def log_likelihood(model: VonMisesMixture, sample) -> float:
    return float(logsumexp(model.component_logdensity(sample), axis=1).sum())


def bic(fit: FitResult, n: int | None = None) -> float:
    n = fit.n if n is None else n
    return -2.0 * fit.log_likelihood + n_parameters(fit.k) * math.log(n)


# The EM loop works on plain arrays (w, mu, kappa); the dataclass is only
# built for the result.


def _logdens(w, mu, kap, cos_a, sin_a) -> np.ndarray:
    # log(w_j) + kappa_j (cos(theta - mu_j) - 1) - log(2 pi I0e(kappa_j))
    cos_d = cos_a[:, None] * np.cos(mu) + sin_a[:, None] * np.sin(mu)
    return kap * (cos_d - 1.0) + (np.log(w) - np.log(TWO_PI * special.i0e(kap)))


def _e_step(w, mu, kap, cos_a, sin_a) -> tuple[float, np.ndarray]:
    logp = _logdens(w, mu, kap, cos_a, sin_a)
    top = logp.max(axis=1, keepdims=True)
    dens = np.exp(logp - top)
    total = dens.sum(axis=1, keepdims=True)
    return float((np.log(total) + top).sum()), dens / total


def _m_step(resp: np.ndarray, cos_a: np.ndarray, sin_a: np.ndarray):
    mass = resp.sum(axis=0)
    if np.any(mass < COLLAPSE_MASS):
        raise _Collapsed()
    c = cos_a @ resp
    s = sin_a @ resp
    mu = np.arctan2(s, c) % TWO_PI
    rbar = np.minimum(np.hypot(c, s) / mass, 1.0)
    return mass / mass.sum(), mu, estimate_kappas(rbar)


def em_run(
    sample, init: VonMisesMixture, tol: float = 1e-8, max_iter: int = 500
) -> tuple[VonMisesMixture, list[float], bool]:
    """Run EM from ``init``.

    Returns the final model, the log-likelihood after every iteration
    (starting with that of ``init``) and whether the relative improvement
    fell below ``tol`` before ``max_iter``.  Raises FitError if a component
    loses all its mass.
    """
    a = as_angles(sample)
    cos_a, sin_a = np.cos(a), np.sin(a)
    w, mu, kap = (np.array(v, dtype=float) for v in (init.weights, init.means, init.kappas))
    ll, resp = _e_step(w, mu, kap, cos_a, sin_a)
    history = [ll]
    converged = False
    try:
        for _ in range(max_iter):
            w, mu, kap = _m_step(resp, cos_a, sin_a)
            ll_new, resp = _e_step(w, mu, kap, cos_a, sin_a)
            history.append(ll_new)
            if ll_new - ll < tol * abs(ll):
                converged = True
                break
            ll = ll_new
    except _Collapsed:
        raise FitError("mixture component collapsed") from None
    model = VonMisesMixture(tuple(map(float, w)), tuple(map(float, mu)), tuple(map(float, kap)))
    return model, history, converged


def _single_component(a: np.ndarray) -> VonMisesMixture:
    mu, r = mean_resultant(a)
    return VonMisesMixture((1.0,), (0.0 if math.isnan(mu) else mu,), (estimate_kappa(r),))


def _random_init(a: np.ndarray, k: int, rng: np.random.Generator) -> VonMisesMixture:
    idx = rng.choice(a.size, size=k, replace=False)
    return VonMisesMixture(tuple([1.0 / k] * k), tuple(float(a[i]) for i in idx), tuple([1.0] * k))


def em_fit(sample, k: int, config: EMConfig = EMConfig()) -> FitResult:
    """Maximum-likelihood k-component mixture, best of ``config.restarts``
    randomly initialised EM runs."""
    a = as_angles(sample)
    n = a.size
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < 2 * k:
        raise ValueError(f"need at least {2 * k} angles for k={k}, got {n}")

    if k == 1:
        model = _single_component(a)
        ll = log_likelihood(model, a)
        fit = FitResult(model, ll, 0.0, 1, True, n, (ll,))
        return FitResult(model, ll, bic(fit), 1, True, n, (ll,))

    best = None
    for ss in np.random.SeedSequence([config.seed, k]).spawn(config.restarts):
        rng = np.random.default_rng(ss)
        for _ in range(config.retries):
            try:
                model, hist, conv = em_run(a, _random_init(a, k, rng), config.tol, config.max_iter)
            except FitError:
                continue
            if best is None or hist[-1] > best[1][-1]:
                best = (model, hist, conv)
            break
    if best is None:
        raise FitError(f"all {config.restarts} EM restarts collapsed for k={k}")
    model, hist, conv = best
    model = model.ordered()
    ll = hist[-1]
    fit = FitResult(model, ll, 0.0, len(hist) - 1, conv, n, tuple(hist))
    return FitResult(model, ll, bic(fit), fit.iterations, conv, n, fit.ll_history)


@dataclass(frozen=True)
class Selection:
    k: int
    fits: tuple[FitResult, ...]

    def fit_for(self, k: int) -> FitResult:
        for f in self.fits:
            if f.k == k:
                return f
        raise KeyError(k)

    @property
    def best(self) -> FitResult:
        return self.fit_for(self.k)


def select_components(
    sample, k_max: int = 5, config: EMConfig = EMConfig(), threshold: float = BIC_THRESHOLD
) -> Selection:
    """Grow the mixture from one component while BIC drops by more than
    ``threshold``; return the last accepted k and every fit computed."""
    a = as_angles(sample)
    if a.size < 2:
        raise ValueError("need at least 2 angles")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    fits = [em_fit(a, 1, config)]
    chosen = 1
    for k in range(2, k_max + 1):
        if a.size < 2 * k:
            break
        fit = em_fit(a, k, config)
        fits.append(fit)
        if fits[-2].bic - fit.bic > threshold:
            chosen = k
        else:
            break
    return Selection(chosen, tuple(fits))


def circular_range(hours: Sequence[float]) -> tuple[float, float]:
    """Tightest arc (start, end) on the 24h clock holding all ``hours``.

    The arc is the complement of the largest gap between neighbouring
    points, so it may wrap past midnight (start > end).
    """
    h = np.sort(np.mod(np.asarray(hours, dtype=float), 24.0))
    if h.size == 0:
        raise ValueError("empty cluster has no time range")
    if h.size == 1:
        return float(h[0]), float(h[0])
    gaps = np.empty(h.size)
    gaps[:-1] = np.diff(h)
    gaps[-1] = 24.0 - h[-1] + h[0]
    g = int(np.argmax(gaps))
    return float(h[(g + 1) % h.size]), float(h[g])


@dataclass(frozen=True)
class ClusterAssignment:
    """Hard assignment of sample points to mixture components.

    ``ranges[j]`` is the hourfloat arc of cluster j, or None when no point
    was assigned to it.
    """

    labels: np.ndarray
    k: int
    ranges: tuple[tuple[float, float] | None, ...]

    def counts(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.k).tolist()

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "counts": self.counts(),
            "ranges": [list(r) if r is not None else None for r in self.ranges],
        }


def cluster_time_ranges(labels, sample, k: int) -> tuple[tuple[float, float] | None, ...]:
    labels = np.asarray(labels)
    hours = as_angles(sample) * 12.0 / math.pi
    return tuple(circular_range(hours[labels == j]) if np.any(labels == j) else None for j in range(k))


def assign_clusters(model: VonMisesMixture, sample) -> ClusterAssignment:
    """Assign each point to the component with the largest weighted density;
    ties go to the lower component index."""
    a = as_angles(sample)
    labels = np.argmax(model.component_logdensity(a), axis=1)
    return ClusterAssignment(labels, model.k, cluster_time_ranges(labels, a, model.k))
