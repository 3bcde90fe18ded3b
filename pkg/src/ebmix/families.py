"""Exponential-family kernels and their conjugate priors.

Two sampling families are supported:

* normal with known (possibly case-specific) variance, conjugate normal
  prior components ``N(mean, var)``; ``var = 0`` encodes a point mass,
* binomial with case-specific trial counts, conjugate beta prior
  components ``Be(alpha, beta)``.

Component marginals f^(j), component posteriors g_j(delta | z) and the
normal marginal cdfs F^(j) are computed here.  Everything is evaluated
in log space and vectorized over cases.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from scipy.special import betaln, gammaln, ndtr

from .errors import ContractError, NumericError, UnsupportedError

LOG_2PI = float(np.log(2.0 * np.pi))


def logsumexp_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp of a 2-D array; lean hot-path variant.

    Rows that are identically -inf come back as -inf rather than nan.
    """
    m = np.max(a, axis=1)
    ok = np.isfinite(m)
    out = np.full(a.shape[0], -np.inf)
    if np.all(ok):
        return m + np.log(np.exp(a - m[:, None]).sum(axis=1))
    if np.any(ok):
        sub = a[ok]
        out[ok] = m[ok] + np.log(np.exp(sub - m[ok, None]).sum(axis=1))
    # +inf rows propagate for the caller's finiteness checks
    out[np.isposinf(m)] = np.inf
    return out


class Family(str, Enum):
    NORMAL = "normal"
    BINOMIAL = "binomial"


@dataclass(frozen=True)
class NormalComponent:
    """Normal prior component N(mean, var) on the effect scale.

    ``var = 0`` is an exact point mass and is handled as a degenerate
    branch everywhere, never as a small-variance limit.
    """

    mean: float
    var: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.var)):
            raise ContractError("normal component parameters must be finite")
        if self.var < 0:
            raise ContractError(f"component variance must be >= 0, got {self.var}")


@dataclass(frozen=True)
class BetaComponent:
    """Beta prior component Be(alpha, beta) on the success probability."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ContractError("beta component parameters must be finite")
        if self.alpha <= 0 or self.beta <= 0:
            raise ContractError(
                f"beta shapes must be > 0, got ({self.alpha}, {self.beta})"
            )

    @property
    def mean(self):
        return self.alpha / (self.alpha + self.beta)


Component = Union[NormalComponent, BetaComponent]


@dataclass(frozen=True)
class Observations:
    """A batch of cases from one sampling family.

    Normal cases carry a statistic ``z`` and a known sampling variance
    ``s2`` (default 1 for every case).  Binomial cases carry success
    counts ``counts`` and trial counts ``trials``.
    """

    family: Family
    z: np.ndarray | None = None
    s2: np.ndarray | None = None
    counts: np.ndarray | None = None
    trials: np.ndarray | None = None

    @classmethod
    def normal(cls, z, s2=None) -> "Observations":
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if s2 is None:
            s2 = np.ones_like(z)
        else:
            s2 = np.broadcast_to(np.asarray(s2, dtype=float), z.shape).copy()
        if not np.all(np.isfinite(z)):
            raise ContractError("normal statistics must be finite")
        if not np.all(s2 > 0):
            raise ContractError("per-case variances s2 must be > 0")
        return cls(family=Family.NORMAL, z=z, s2=s2)

    @classmethod
    def binomial(cls, counts, trials) -> "Observations":
        counts = np.atleast_1d(np.asarray(counts))
        trials = np.broadcast_to(np.atleast_1d(np.asarray(trials)), counts.shape).copy()
        if not (np.issubdtype(counts.dtype, np.integer) and np.issubdtype(trials.dtype, np.integer)):
            counts_f, trials_f = np.asarray(counts, dtype=float), np.asarray(trials, dtype=float)
            if np.any(counts_f != np.round(counts_f)) or np.any(trials_f != np.round(trials_f)):
                raise ContractError("binomial counts and trials must be integers")
            counts = counts_f.astype(np.int64)
            trials = trials_f.astype(np.int64)
        counts = counts.astype(np.int64)
        trials = trials.astype(np.int64)
        if np.any(trials < 1):
            raise ContractError("trial counts must be >= 1")
        if np.any(counts < 0) or np.any(counts > trials):
            raise ContractError("counts must satisfy 0 <= H <= N")
        return cls(family=Family.BINOMIAL, counts=counts, trials=trials)

    def __len__(self) -> int:
        arr = self.z if self.family is Family.NORMAL else self.counts
        return int(arr.shape[0])


@dataclass(frozen=True)
class ComponentPosterior:
    """Per-case posterior of one prior component given the data.

    ``mean`` and ``var`` are always populated; for the binomial family
    ``alpha`` and ``beta`` carry the updated Beta shapes.
    """

    mean: np.ndarray
    var: np.ndarray
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None


def _check_family(obs: Observations, comp: Component) -> None:
    if obs.family is Family.NORMAL and not isinstance(comp, NormalComponent):
        raise ContractError("normal observations require a NormalComponent")
    if obs.family is Family.BINOMIAL and not isinstance(comp, BetaComponent):
        raise ContractError("binomial observations require a BetaComponent")


def component_log_marginal(obs: Observations, comp: Component) -> np.ndarray:
    """Log of the component marginal density f^(j) at each case.

    Normal:   log phi(z; mean, var + s2).
    Binomial: log of the beta-binomial pmf
              C(N,H) B(alpha+H, beta+N-H) / B(alpha, beta),
              via log-gamma throughout (no factorial tables).
    """
    _check_family(obs, comp)
    if obs.family is Family.NORMAL:
        v = comp.var + obs.s2
        out = -0.5 * (LOG_2PI + np.log(v)) - 0.5 * (obs.z - comp.mean) ** 2 / v
    else:
        h, n = obs.counts, obs.trials
        choose = gammaln(n + 1) - gammaln(h + 1) - gammaln(n - h + 1)
        out = choose + betaln(comp.alpha + h, comp.beta + n - h) - betaln(
            comp.alpha, comp.beta
        )
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite component log marginal")
    return out


def component_posterior(obs: Observations, comp: Component) -> ComponentPosterior:
    """Posterior of one component's effect given each case.

    Normal with case variance s2: N((s2*mean + var*z)/(var + s2),
    var*s2/(var + s2)); a point-mass prior (var = 0) stays a point mass.
    Binomial: Be(alpha + H, beta + N - H) with standard Beta moments.
    """
    _check_family(obs, comp)
    if obs.family is Family.NORMAL:
        if comp.var == 0.0:
            # degenerate branch: data cannot move a point mass
            mean = np.full(len(obs), comp.mean)
            var = np.zeros(len(obs))
        else:
            denom = comp.var + obs.s2
            mean = (obs.s2 * comp.mean + comp.var * obs.z) / denom
            var = comp.var * obs.s2 / denom
        return ComponentPosterior(mean=mean, var=var)
    a = comp.alpha + obs.counts.astype(float)
    b = comp.beta + (obs.trials - obs.counts).astype(float)
    tot = a + b
    mean = a / tot
    var = a * b / (tot**2 * (tot + 1.0))
    return ComponentPosterior(mean=mean, var=var, alpha=a, beta=b)


def log_marginal_matrix(obs: Observations, components) -> np.ndarray:
    """Stacked component log marginals, shape (n, J), one vectorized pass."""
    components = tuple(components)
    for c in components:
        _check_family(obs, c)
    if obs.family is Family.NORMAL:
        mu = np.array([c.mean for c in components])
        var = np.array([c.var for c in components])
        v = var[None, :] + obs.s2[:, None]
        out = -0.5 * (LOG_2PI + np.log(v)) - 0.5 * (obs.z[:, None] - mu) ** 2 / v
    else:
        a = np.array([c.alpha for c in components])
        b = np.array([c.beta for c in components])
        h = obs.counts[:, None]
        n = obs.trials[:, None]
        choose = gammaln(obs.trials + 1) - gammaln(obs.counts + 1) - gammaln(
            obs.trials - obs.counts + 1
        )
        out = choose[:, None] + betaln(a + h, b + (n - h)) - betaln(a, b)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite component log marginal")
    return out


def component_marginal_cdf(z, comp: Component, s2=1.0) -> np.ndarray:
    """Marginal cdf F^(j)(z) = Phi((z - mean)/sqrt(var + s2)); normal only."""
    if not isinstance(comp, NormalComponent):
        raise UnsupportedError("marginal cdfs are defined for the normal family only")
    z = np.asarray(z, dtype=float)
    return ndtr((z - comp.mean) / np.sqrt(comp.var + np.asarray(s2, dtype=float)))


def component_marginal_sf(z, comp: Component, s2=1.0) -> np.ndarray:
    """Upper tail 1 - F^(j)(z), computed directly for tail accuracy."""
    if not isinstance(comp, NormalComponent):
        raise UnsupportedError("marginal cdfs are defined for the normal family only")
    z = np.asarray(z, dtype=float)
    return ndtr(-(z - comp.mean) / np.sqrt(comp.var + np.asarray(s2, dtype=float)))
