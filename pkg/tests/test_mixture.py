"""EM fitting contracts: E/M steps, penalties, pinning, determinism, BIC."""

import dataclasses

import numpy as np
import pytest

import oracles
from ebmix import (
    BetaComponent,
    ContractError,
    Family,
    FitConfig,
    MixtureModel,
    NormalComponent,
    NullMode,
    Observations,
    bic,
    e_step,
    em_fit,
    initialize,
    m_step,
)
from ebmix.mixture import n_free_parameters, unpenalized_loglik
from ebmix.seeding import derive_rng


def fdr_scenario_obs(seed=7, rep=0):
    from ebmix.harness import fdr_scenario_deltas, fdr_scenario_sample

    deltas = fdr_scenario_deltas(seed)
    return Observations.normal(fdr_scenario_sample(deltas, seed, rep))


class TestEStep:
    def test_single_component_gets_all_weight(self):
        model = MixtureModel(
            family=Family.NORMAL,
            pi=np.array([1.0]),
            components=(NormalComponent(0.3, 1.0),),
            null_mode=NullMode.NONE,
            penalty=np.zeros(1),
        )
        w, _ = e_step(Observations.normal([-1.0, 0.0, 2.0]), model)
        np.testing.assert_array_equal(w, 1.0)

    def test_zero_proportion_component_gets_zero_weight(self):
        model = MixtureModel(
            family=Family.NORMAL,
            pi=np.array([1.0, 0.0]),
            components=(NormalComponent(0.0, 1.0), NormalComponent(2.0, 1.0)),
            null_mode=NullMode.NONE,
            penalty=np.zeros(2),
        )
        w, _ = e_step(Observations.normal([0.0, 2.0, 4.0]), model)
        np.testing.assert_array_equal(w[:, 1], 0.0)

    def test_density_ratio(self, two_component_model):
        # oracle: phi(2;0,1)=0.05399097, phi(2;0,4)=0.12098536
        w, _ = e_step(Observations.normal([2.0]), two_component_model)
        np.testing.assert_allclose(w[0], [0.30856, 0.69144], atol=1e-3)

    def test_rows_sum_to_one(self, two_component_model):
        rng = np.random.default_rng(0)
        w, _ = e_step(Observations.normal(rng.normal(size=200)), two_component_model)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)

    def test_penalized_loglik_value(self, two_component_model):
        obs = Observations.normal([0.5, -1.0])
        model = dataclasses.replace(two_component_model, penalty=np.array([3.0, 0.0]))
        _, pll = e_step(obs, model)
        logf = model.log_marginal(obs).sum()
        np.testing.assert_allclose(pll, logf + 3.0 * np.log(0.5), rtol=1e-12)


class TestMStep:
    def test_unweighted_moment_match(self):
        rng = np.random.default_rng(1)
        z = rng.normal(1.0, 2.0, size=400)
        obs = Observations.normal(z)
        model = MixtureModel(
            family=Family.NORMAL,
            pi=np.array([1.0]),
            components=(NormalComponent(0.0, 5.0),),
            null_mode=NullMode.NONE,
            penalty=np.zeros(1),
        )
        w = np.ones((400, 1))
        config = FitConfig(n_components=1, penalty=0.0, null_mode=NullMode.NONE)
        updated, reinit = m_step(obs, w, config, model)
        assert not reinit
        np.testing.assert_allclose(updated.components[0].mean, z.mean(), rtol=1e-12)
        np.testing.assert_allclose(
            updated.components[0].var, max(0.0, z.var() - 1.0), rtol=1e-12
        )

    def test_pseudo_count_proportions(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=100)
        obs = Observations.normal(z)
        config = FitConfig(n_components=2, penalty=30.0, null_mode=NullMode.THEORETICAL)
        model = initialize(obs, config)
        w = np.zeros((100, 2))
        w[:60, 0] = 1.0
        w[60:, 1] = 1.0
        updated, _ = m_step(obs, w, config, model)
        np.testing.assert_allclose(updated.pi[0], (60 + 30) / 130, rtol=1e-12)
        np.testing.assert_allclose(updated.pi[1], 40 / 130, rtol=1e-12)

    def test_binomial_newton_matches_grid_search(self):
        rng = derive_rng(11, 99)
        n_tr = rng.integers(50, 51, size=2000)
        delta = rng.beta(2.0, 2.0, size=2000)
        h = rng.binomial(n_tr, delta)
        obs = Observations.binomial(h, n_tr)
        w = np.ones((2000, 1))
        config = FitConfig(n_components=1, penalty=0.0, null_mode=NullMode.NONE)
        model = initialize(obs, config)
        updated, _ = m_step(obs, w, config, model)
        # run the inner solver to convergence by iterating the M-step
        for _ in range(5):
            updated, _ = m_step(obs, w, config, updated)
        fit = updated.components[0]
        (a_star, b_star), _ = oracles.grid_search_beta_fit(
            h.astype(float), n_tr.astype(float), np.ones(2000)
        )
        assert abs(fit.alpha - a_star) / a_star < 0.01
        assert abs(fit.beta - b_star) / b_star < 0.01


class TestInitialize:
    def test_deterministic(self):
        obs = fdr_scenario_obs()
        config = FitConfig(n_components=3, penalty=50.0, seed=42)
        a = initialize(obs, config, restart_index=2)
        b = initialize(obs, config, restart_index=2)
        assert a == b

    def test_restarts_differ(self):
        obs = fdr_scenario_obs()
        config = FitConfig(n_components=3, penalty=50.0, seed=42)
        assert initialize(obs, config, 0) != initialize(obs, config, 1)

    def test_theoretical_null_pinned_at_zero(self):
        obs = fdr_scenario_obs()
        config = FitConfig(n_components=3, penalty=50.0)
        model = initialize(obs, config, restart_index=5)
        assert model.components[0] == NormalComponent(0.0, 0.0)

    def test_empirical_null_starts_at_median(self):
        z = np.concatenate([np.full(50, 4.2), np.full(49, 0.0), np.full(50, 8.0)])
        obs = Observations.normal(z)
        config = FitConfig(n_components=3, penalty=10.0, null_mode=NullMode.EMPIRICAL)
        model = initialize(obs, config, restart_index=0)
        assert model.components[0].mean == 4.2

    def test_proportions(self):
        obs = fdr_scenario_obs()
        model = initialize(obs, FitConfig(n_components=4, penalty=50.0))
        np.testing.assert_allclose(model.pi, [0.9, 0.1 / 3, 0.1 / 3, 0.1 / 3])


class TestEmFit:
    def test_fdr_scenario_recovers_null_fraction(self):
        obs = fdr_scenario_obs()
        config = FitConfig(n_components=3, penalty=50.0, null_mode=NullMode.THEORETICAL)
        model = em_fit(obs, config)
        assert abs(model.pi[0] - 0.95) <= 0.05
        assert model.diagnostics.converged

    def test_null_only_data_absorbed_by_null(self):
        rng = derive_rng(5, 1)
        obs = Observations.normal(rng.standard_normal(1000))
        config = FitConfig(n_components=3, penalty=200.0, null_mode=NullMode.THEORETICAL)
        model = em_fit(obs, config)
        assert model.pi[0] >= 0.9
        assert all(c.var <= 0.2 for c in model.components[1:])

    def test_binomial_single_component_recovery(self):
        rng = derive_rng(3, 2)
        n_tr = rng.integers(50, 400, size=500)
        delta = rng.beta(302.0, 884.0, size=500)
        h = rng.binomial(n_tr, delta)
        obs = Observations.binomial(h, n_tr)
        config = FitConfig(n_components=1, penalty=0.0, null_mode=NullMode.NONE)
        model = em_fit(obs, config)
        fit = model.components[0]
        target = 302.0 / 1186.0
        assert abs(fit.mean - target) <= 0.01
        # method-of-moments oracle on the same synthetic data
        mom = np.average(h / n_tr)
        assert abs(fit.mean - mom) <= 0.01

    def test_monotone_penalized_loglik(self):
        obs = fdr_scenario_obs()
        for null_mode, penalty in [
            (NullMode.THEORETICAL, 50.0),
            (NullMode.EMPIRICAL, 200.0),
            (NullMode.NONE, 0.0),
        ]:
            config = FitConfig(
                n_components=3 if null_mode is not NullMode.NONE else 2,
                penalty=penalty,
                null_mode=null_mode,
            )
            model = em_fit(obs, config)
            trace = np.array(model.diagnostics.trace)
            assert np.all(np.diff(trace) >= -1e-9)

    def test_monotone_with_heteroscedastic_nuisance(self):
        rng = derive_rng(9, 4)
        s2 = rng.uniform(0.5, 3.0, size=600)
        delta = np.where(rng.random(600) < 0.1, rng.uniform(2, 4, 600), 0.0)
        z = delta + np.sqrt(s2) * rng.standard_normal(600)
        obs = Observations.normal(z, s2)
        model = em_fit(obs, FitConfig(n_components=3, penalty=50.0))
        trace = np.array(model.diagnostics.trace)
        assert np.all(np.diff(trace) >= -1e-9)

    def test_simplex_preserved(self):
        obs = fdr_scenario_obs()
        model = em_fit(obs, FitConfig(n_components=4, penalty=50.0))
        assert abs(model.pi.sum() - 1.0) <= 1e-12
        assert np.all(model.pi >= 0)

    def test_theoretical_null_pinned_bit_identical(self):
        obs = fdr_scenario_obs()
        model = em_fit(obs, FitConfig(n_components=3, penalty=50.0))
        assert model.components[0].mean == 0.0
        assert model.components[0].var == 0.0

    def test_penalty_direction(self):
        """Raising P from 50 to N/2 never decreases the fitted null weight."""
        for seed in range(10):
            obs = fdr_scenario_obs(seed=seed)
            small = em_fit(obs, FitConfig(n_components=3, penalty=50.0, seed=seed))
            large = em_fit(obs, FitConfig(n_components=3, penalty=500.0, seed=seed))
            assert large.pi[0] >= small.pi[0] - 1e-9

    def test_seeded_determinism(self):
        obs = fdr_scenario_obs()
        config = FitConfig(n_components=3, penalty=50.0, seed=11, n_restarts=3)
        assert em_fit(obs, config) == em_fit(obs, config)

    def test_restart_selection_takes_best(self):
        obs = fdr_scenario_obs()
        config = FitConfig(n_components=3, penalty=50.0, n_restarts=4)
        best = em_fit(obs, config)
        singles = [
            em_fit(obs, dataclasses.replace(config, n_restarts=1))
        ]  # restart 0 only
        assert (
            best.diagnostics.penalized_loglik
            >= singles[0].diagnostics.penalized_loglik - 1e-9
        )

    def test_empty_data_rejected(self):
        with pytest.raises(ContractError):
            em_fit(
                Observations.normal(np.array([])),
                FitConfig(n_components=2, penalty=0.0),
            )

    def test_binomial_theoretical_null_rejected(self):
        obs = Observations.binomial([1, 2], [5, 5])
        with pytest.raises(ContractError):
            em_fit(obs, FitConfig(n_components=2, penalty=0.0, null_mode=NullMode.THEORETICAL))


class TestConfigValidation:
    def test_null_requires_two_components(self):
        with pytest.raises(ContractError):
            FitConfig(n_components=1, null_mode=NullMode.THEORETICAL)

    def test_penalty_vector_shape(self):
        config = FitConfig(n_components=3, penalty=50.0)
        np.testing.assert_array_equal(config.penalty_vector(1000), [50.0, 0.0, 0.0])

    def test_default_penalty_is_fifth_of_n(self):
        config = FitConfig(n_components=3, penalty=None)
        np.testing.assert_array_equal(config.penalty_vector(1000), [200.0, 0.0, 0.0])


class TestBic:
    def test_parameter_counts(self):
        binom = MixtureModel(
            family=Family.BINOMIAL,
            pi=np.array([1.0]),
            components=(BetaComponent(2.0, 2.0),),
            null_mode=NullMode.NONE,
            penalty=np.zeros(1),
        )
        assert n_free_parameters(binom) == 2
        normal3 = MixtureModel(
            family=Family.NORMAL,
            pi=np.array([0.8, 0.1, 0.1]),
            components=(
                NormalComponent(0.0, 0.0),
                NormalComponent(1.0, 1.0),
                NormalComponent(-1.0, 1.0),
            ),
            null_mode=NullMode.THEORETICAL,
            penalty=np.zeros(3),
        )
        assert n_free_parameters(normal3) == 6

    def test_bic_formula(self):
        obs = Observations.binomial([1, 4, 2], [5, 8, 6])
        model = em_fit(obs, FitConfig(n_components=1, penalty=0.0, null_mode=NullMode.NONE))
        expected = -2.0 * unpenalized_loglik(obs, model) + 2.0 * np.log(3)
        np.testing.assert_allclose(bic(obs, model), expected, rtol=1e-12)

    def test_selects_true_order_on_separated_mixture(self):
        rng = derive_rng(21, 6)
        delta = np.where(rng.random(2000) < 0.5, 0.0, 4.0)
        obs = Observations.normal(delta + rng.standard_normal(2000))
        scores = {}
        for j in (1, 2, 3):
            mode = NullMode.NONE if j == 1 else NullMode.THEORETICAL
            model = em_fit(
                obs, FitConfig(n_components=j, penalty=50.0, null_mode=mode, n_restarts=1)
            )
            scores[j] = bic(obs, model)
        assert min(scores, key=scores.get) == 2
