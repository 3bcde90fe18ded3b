"""Mixture priors and their penalized marginal maximum-likelihood fit.

The prior is g = sum_j pi_j g_j with component 0 conventionally the
null.  Fitting maximizes

    L(pi, theta) = sum_i log sum_j pi_j f^(j)(z_i) + sum_j beta_j log pi_j

by EM; the Dirichlet-style penalty enters the M-step as pseudo-counts
pi_j ∝ n_j + beta_j, which keeps the update well defined when some
beta_j = 0 and realizes "a larger penalty forces a bigger null group".
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.special import polygamma, psi

from . import families
from .errors import ContractError, FitError, NumericError
from .families import BetaComponent, Family, NormalComponent, Observations, logsumexp_rows
from .seeding import STREAM_INIT, derive_rng

_MONOTONE_SLACK = 1e-9


class NullMode(str, Enum):
    THEORETICAL = "theoretical"
    EMPIRICAL = "empirical"
    NONE = "none"


@dataclass(frozen=True)
class FitDiagnostics:
    penalized_loglik: float
    iterations: int
    converged: bool
    # per-iteration penalized log-likelihood, kept for monotonicity checks;
    # not serialized, excluded from equality
    trace: tuple = field(default=(), compare=False, repr=False)


@dataclass(frozen=True)
class MixtureModel:
    """A fitted (or constructed) mixture prior.

    Component 0 is the designated null when ``null_mode`` is theoretical
    or empirical; with ``NullMode.NONE`` no component is special and
    fdr/FDR operations are unavailable.
    """

    family: Family
    pi: np.ndarray
    components: tuple
    null_mode: NullMode
    penalty: np.ndarray
    diagnostics: FitDiagnostics | None = None

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        penalty = np.asarray(self.penalty, dtype=float)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "penalty", penalty)
        object.__setattr__(self, "components", tuple(self.components))
        j = len(self.components)
        if j < 1 or pi.shape != (j,) or penalty.shape != (j,):
            raise ContractError("pi, penalty and components must share length J >= 1")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ContractError("mixture proportions must be a simplex point")
        if np.any(penalty < 0):
            raise ContractError("penalty entries must be nonnegative")
        want = NormalComponent if self.family is Family.NORMAL else BetaComponent
        if not all(isinstance(c, want) for c in self.components):
            raise ContractError(f"all components must be {want.__name__}")
        if self.null_mode is NullMode.THEORETICAL:
            c0 = self.components[0]
            if self.family is not Family.NORMAL:
                raise ContractError(
                    "theoretical null requires the normal family "
                    "(no point-mass beta component exists)"
                )
            if c0.mean != 0.0 or c0.var != 0.0:
                raise ContractError("theoretical null must be the point mass at 0")
        if self.null_mode is NullMode.EMPIRICAL and j > 1:
            if np.any(penalty[0] < penalty[1:]):
                raise ContractError("empirical null requires beta_0 >= beta_j")

    def __eq__(self, other):
        if not isinstance(other, MixtureModel):
            return NotImplemented
        return (
            self.family == other.family
            and self.null_mode == other.null_mode
            and np.array_equal(self.pi, other.pi)
            and np.array_equal(self.penalty, other.penalty)
            and self.components == other.components
            and self.diagnostics == other.diagnostics
        )

    @property
    def n_components(self) -> int:
        return len(self.components)

    def log_marginal_matrix(self, obs: Observations) -> np.ndarray:
        """Per-case, per-component log marginals, shape (n, J)."""
        return families.log_marginal_matrix(obs, self.components)

    def log_marginal(self, obs: Observations) -> np.ndarray:
        """Log of the mixture marginal f(z) = sum_j pi_j f^(j)(z)."""
        with np.errstate(divide="ignore"):
            logpi = np.log(self.pi)
        return logsumexp_rows(self.log_marginal_matrix(obs) + logpi)

    def sample(self, n: int, rng: np.random.Generator, s2=1.0, trials=None) -> Observations:
        """Draw n cases from the model's marginal distribution."""
        comps = rng.choice(self.n_components, size=n, p=self.pi)
        if self.family is Family.NORMAL:
            mu = np.array([c.mean for c in self.components])[comps]
            var = np.array([c.var for c in self.components])[comps]
            s2 = np.broadcast_to(np.asarray(s2, dtype=float), (n,))
            z = mu + np.sqrt(var + s2) * rng.standard_normal(n)
            return Observations.normal(z, s2)
        if trials is None:
            raise ContractError("binomial sampling requires per-case trial counts")
        trials = np.broadcast_to(np.asarray(trials, dtype=np.int64), (n,))
        alpha = np.array([c.alpha for c in self.components])[comps]
        beta = np.array([c.beta for c in self.components])[comps]
        delta = rng.beta(alpha, beta)
        return Observations.binomial(rng.binomial(trials, delta), trials)


@dataclass(frozen=True)
class FitConfig:
    """EM fitting controls.

    ``penalty = None`` resolves to N/5 at fit time; the penalty vector is
    always (P, 0, ..., 0).
    """

    n_components: int = 3
    penalty: float | None = None
    null_mode: NullMode = NullMode.THEORETICAL
    max_iters: int = 1000
    rel_tol: float = 1e-8
    n_restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.n_components < 1:
            raise ContractError("n_components must be >= 1")
        if self.null_mode is not NullMode.NONE and self.n_components < 2:
            raise ContractError("a designated null requires J >= 2")
        if self.penalty is not None and self.penalty < 0:
            raise ContractError("penalty must be >= 0")
        if self.max_iters < 1 or self.rel_tol <= 0 or self.n_restarts < 1:
            raise ContractError("invalid convergence controls")

    def penalty_vector(self, n_cases: int) -> np.ndarray:
        p = n_cases / 5.0 if self.penalty is None else float(self.penalty)
        beta = np.zeros(self.n_components)
        beta[0] = p
        return beta


def _beta_mom(p: np.ndarray) -> BetaComponent:
    """Method-of-moments Beta fit to raw proportions, with safe fallbacks."""
    m = float(np.clip(np.mean(p), 1e-4, 1.0 - 1e-4))
    v = float(np.var(p))
    if v <= 1e-12 or v >= m * (1.0 - m):
        conc = 30.0
    else:
        conc = m * (1.0 - m) / v - 1.0
    conc = float(np.clip(conc, 0.01, 1e5))
    return BetaComponent(alpha=m * conc, beta=(1.0 - m) * conc)


def initialize(data: Observations, config: FitConfig, restart_index: int = 0) -> MixtureModel:
    """Deterministic starting model for one EM restart.

    Restart 0 is unjittered; restarts >= 1 add standard-normal jitter to
    the free component centers, drawn from a generator derived from
    (config.seed, restart_index).
    """
    if len(data) == 0:
        raise ContractError("data must be nonempty")
    j = config.n_components
    beta = config.penalty_vector(len(data))
    rng = derive_rng(config.seed, STREAM_INIT, restart_index)
    jitter = rng.standard_normal(j) if restart_index >= 1 else np.zeros(j)

    if data.family is Family.NORMAL:
        z = data.z
        comps: list = []
        if config.null_mode is NullMode.THEORETICAL:
            comps.append(NormalComponent(0.0, 0.0))
        elif config.null_mode is NullMode.EMPIRICAL:
            comps.append(NormalComponent(float(np.median(z)) + jitter[0], 0.0))
        n_free_slots = j - len(comps)
        if len(comps) == 0:
            qs = (np.arange(1, j + 1)) / (j + 1)
        else:
            qs = np.arange(1, n_free_slots + 1) / j
        centers = np.quantile(z, qs) if n_free_slots else np.array([])
        for c in centers:
            comps.append(NormalComponent(float(c) + jitter[len(comps)], 1.0))
    else:
        rate = data.counts / data.trials
        order = np.argsort(rate, kind="stable")
        groups = np.array_split(order, j)
        comps = []
        for g, idx in enumerate(groups):
            base = _beta_mom(rate[idx] if len(idx) else rate)
            if restart_index >= 1:
                base = BetaComponent(
                    alpha=float(base.alpha * np.exp(0.25 * jitter[g])),
                    beta=float(base.beta * np.exp(0.25 * rng.standard_normal())),
                )
            comps.append(base)

    if config.null_mode is NullMode.NONE:
        pi = np.full(j, 1.0 / j)
    else:
        pi = np.full(j, 0.1 / (j - 1) if j > 1 else 1.0)
        pi[0] = 0.9
    return MixtureModel(
        family=data.family,
        pi=pi,
        components=tuple(comps),
        null_mode=config.null_mode,
        penalty=beta,
    )


def e_step(data: Observations, model: MixtureModel):
    """Responsibilities and the penalized log-likelihood at the model.

    Returns (w, pll) with w row-stochastic of shape (n, J).
    """
    logf = model.log_marginal_matrix(data)
    with np.errstate(divide="ignore"):
        logpi = np.log(model.pi)
    logw = logf + logpi
    ll = logsumexp_rows(logw)
    bad = ~np.isfinite(ll)
    if np.any(bad):
        raise NumericError(f"zero marginal density at case {int(np.flatnonzero(bad)[0])}")
    w = np.exp(logw - ll[:, None])
    w[:, model.pi == 0.0] = 0.0
    beta = model.penalty
    active = beta > 0
    if np.any(active & (model.pi == 0.0)):
        raise NumericError("penalized component has zero proportion")
    pll = float(ll.sum() + np.sum(beta[active] * logpi[active]))
    if not np.isfinite(pll):
        raise NumericError("non-finite penalized log-likelihood")
    return w, pll


def _normal_weighted_obj(z, s2, w_j, comp: NormalComponent) -> float:
    v = comp.var + s2
    return float(np.sum(w_j * (-0.5 * (families.LOG_2PI + np.log(v)) - 0.5 * (z - comp.mean) ** 2 / v)))


def _betabinom_weighted_obj(h, n, w_j, alpha: float, beta: float) -> float:
    # choose(n, h) constant dropped; comparisons only ever share (h, n, w)
    from scipy.special import betaln

    return float(np.sum(w_j * (betaln(alpha + h, beta + n - h) - betaln(alpha, beta))))


def _fit_beta_newton(h, n, w_j, start: BetaComponent, max_inner: int = 50) -> BetaComponent:
    """Damped Newton ascent for the weighted beta-binomial log-likelihood.

    Works on (log alpha, log beta); steps are halved until the objective
    improves, so the update never decreases the EM objective.
    """
    h = h.astype(float)
    n = n.astype(float)
    alpha, beta = float(start.alpha), float(start.beta)
    obj = _betabinom_weighted_obj(h, n, w_j, alpha, beta)
    for _ in range(max_inner):
        ab = alpha + beta
        g_a = np.sum(w_j * (psi(alpha + h) - psi(ab + n) - psi(alpha) + psi(ab)))
        g_b = np.sum(w_j * (psi(beta + n - h) - psi(ab + n) - psi(beta) + psi(ab)))
        q_ab = np.sum(w_j * (polygamma(1, ab) - polygamma(1, ab + n)))
        q_aa = np.sum(w_j * (polygamma(1, alpha + h) - polygamma(1, alpha))) + q_ab
        q_bb = np.sum(w_j * (polygamma(1, beta + n - h) - polygamma(1, beta))) + q_ab
        # chain rule to (log alpha, log beta)
        ga, gb = alpha * g_a, beta * g_b
        haa = alpha * alpha * q_aa + ga
        hbb = beta * beta * q_bb + gb
        hab = alpha * beta * q_ab
        if max(abs(ga), abs(gb)) < 1e-9 * (1.0 + np.sum(w_j)):
            break
        det = haa * hbb - hab * hab
        if det > 0 and haa < 0:
            step_a = -(hbb * ga - hab * gb) / det
            step_b = -(haa * gb - hab * ga) / det
        else:
            scale = max(abs(ga), abs(gb))
            step_a, step_b = ga / scale, gb / scale
        # keep single steps bounded on the log scale
        norm = max(abs(step_a), abs(step_b))
        if norm > 2.0:
            step_a, step_b = step_a * 2.0 / norm, step_b * 2.0 / norm
        improved = False
        for _ in range(30):
            cand_a = float(np.clip(alpha * np.exp(step_a), 1e-8, 1e8))
            cand_b = float(np.clip(beta * np.exp(step_b), 1e-8, 1e8))
            cand_obj = _betabinom_weighted_obj(h, n, w_j, cand_a, cand_b)
            if cand_obj >= obj:
                alpha, beta, obj = cand_a, cand_b, cand_obj
                improved = True
                break
            step_a *= 0.5
            step_b *= 0.5
        if not improved or max(abs(step_a), abs(step_b)) < 1e-12:
            break
    return BetaComponent(alpha=alpha, beta=beta)


def _reinit_component(data: Observations, index: int, j_total: int):
    if data.family is Family.NORMAL:
        q = (index + 1) / (j_total + 1)
        return NormalComponent(float(np.quantile(data.z, q)), 1.0)
    rate = data.counts / data.trials
    order = np.argsort(rate, kind="stable")
    groups = np.array_split(order, j_total)
    idx = groups[min(index, len(groups) - 1)]
    return _beta_mom(rate[idx] if len(idx) else rate)


def m_step(data: Observations, w: np.ndarray, config: FitConfig, model: MixtureModel):
    """One penalized M-step.

    Returns (updated model, reinitialized flag); the flag is True when an
    empty component was restarted from the data quantiles, in which case
    the EM objective may legitimately dip for one iteration.
    """
    n, j = w.shape
    if j != model.n_components or n != len(data):
        raise ContractError("responsibility matrix shape does not match data/model")
    beta = model.penalty
    nj = w.sum(axis=0)
    pi = (nj + beta) / (n + beta.sum())
    reinitialized = False

    comps = list(model.components)
    homoscedastic = data.family is Family.NORMAL and data.s2.min() == data.s2.max()
    start_free = 1 if model.null_mode is NullMode.THEORETICAL else 0
    for k in range(start_free, j):
        if nj[k] + beta[k] == 0.0:
            comps[k] = _reinit_component(data, k, j)
            pi[k] = 1.0 / (n + beta.sum())
            reinitialized = True
            continue
        if nj[k] <= 0.0:
            continue  # penalty mass only; nothing to fit a component to
        w_k = w[:, k]
        if data.family is Family.NORMAL:
            mu = float(np.sum(w_k * data.z) / nj[k])
            s2bar = float(np.sum(w_k * data.s2) / nj[k])
            var = max(0.0, float(np.sum(w_k * (data.z - mu) ** 2) / nj[k]) - s2bar)
            cand = NormalComponent(mu, var)
            # moment update is exact for constant s2; with heterogeneous
            # s2 keep the old parameters if the update would not improve
            if homoscedastic or _normal_weighted_obj(
                data.z, data.s2, w_k, cand
            ) >= _normal_weighted_obj(data.z, data.s2, w_k, comps[k]):
                comps[k] = cand
        else:
            comps[k] = _fit_beta_newton(data.counts, data.trials, w_k, comps[k])

    pi = np.maximum(pi, 0.0)
    pi = pi / pi.sum()
    updated = MixtureModel(
        family=model.family,
        pi=pi,
        components=tuple(comps),
        null_mode=model.null_mode,
        penalty=beta,
        diagnostics=model.diagnostics,
    )
    return updated, reinitialized


def _run_em(data: Observations, config: FitConfig, restart_index: int) -> MixtureModel:
    model = initialize(data, config, restart_index)
    prev = None
    skip_check = False
    converged = False
    trace = []
    iterations = 0
    w, pll = e_step(data, model)
    trace.append(pll)
    for it in range(1, config.max_iters + 1):
        iterations = it
        model, reinit = m_step(data, w, config, model)
        try:
            w, pll = e_step(data, model)
        except NumericError as exc:
            raise NumericError(f"iteration {it}: {exc}") from exc
        trace.append(pll)
        prev = trace[-2]
        if pll < prev - _MONOTONE_SLACK and not skip_check:
            raise NumericError(
                f"iteration {it}: penalized log-likelihood decreased "
                f"({prev:.12g} -> {pll:.12g})"
            )
        skip_check = reinit
        if abs(pll - prev) / (abs(pll) + 1.0) < config.rel_tol:
            converged = True
            break
    diag = FitDiagnostics(
        penalized_loglik=trace[-1],
        iterations=iterations,
        converged=converged,
        trace=tuple(trace),
    )
    return replace(model, diagnostics=diag)


def em_fit(data: Observations, config: FitConfig) -> MixtureModel:
    """Fit the penalized mixture by EM, best of ``config.n_restarts`` runs."""
    if len(data) == 0:
        raise ContractError("data must be nonempty")
    if data.family is Family.BINOMIAL and config.null_mode is NullMode.THEORETICAL:
        raise ContractError("theoretical null is not defined for the binomial family")
    best = None
    last_error: Exception | None = None
    for r in range(config.n_restarts):
        try:
            fitted = _run_em(data, config, r)
        except (NumericError, FloatingPointError) as exc:
            last_error = exc
            continue
        if best is None or fitted.diagnostics.penalized_loglik > best.diagnostics.penalized_loglik:
            best = fitted
    if best is None:
        raise FitError(f"all {config.n_restarts} restarts failed: {last_error}")
    return best


def unpenalized_loglik(data: Observations, model: MixtureModel) -> float:
    return float(model.log_marginal(data).sum())


def n_free_parameters(model: MixtureModel) -> int:
    free = model.n_components
    if model.null_mode is NullMode.THEORETICAL:
        free -= 1
    return (model.n_components - 1) + 2 * free


def bic(data: Observations, model: MixtureModel) -> float:
    """-2 logL + k log N with the unpenalized marginal log-likelihood.

    k counts the free proportions (J - 1) plus two parameters per free
    component; a pinned theoretical null contributes none.
    """
    k = n_free_parameters(model)
    return -2.0 * unpenalized_loglik(data, model) + k * np.log(len(data))
