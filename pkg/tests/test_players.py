"""Per-player weight shrinkage toward the global mixture."""

import numpy as np
import pytest

from shotmix.errors import (
    InvalidInputError,
    InvalidParameterError,
    ModelHashMismatchError,
)
from shotmix.geometry import sample
from shotmix.mixture import MixtureModel, model_hash
from shotmix.players import (
    HierarchyConfig,
    fit_player_weights,
    load_player_weights,
    log_likelihood_per_shot,
    save_player_weights,
    check_model_hash,
)

from conftest import make_component


def player_points(model, theta, n, seed):
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(n, theta)
    parts = [
        sample(c.as_truncated(), rng, size=m)
        for c, m in zip(model.components, counts) if m > 0
    ]
    return np.ascontiguousarray(np.concatenate(parts, axis=0))


class TestConfig:
    def test_bad_alpha_rejected(self):
        with pytest.raises(InvalidParameterError):
            HierarchyConfig(alpha=0.0)
        with pytest.raises(InvalidParameterError):
            HierarchyConfig(alpha=float("inf"))

    def test_bad_max_iter_rejected(self):
        with pytest.raises(InvalidParameterError):
            HierarchyConfig(max_iter=0)


class TestShrinkage:
    def test_zero_shots_returns_global_weights(self, two_component_model):
        out = fit_player_weights({"p": np.empty((0, 2))}, two_component_model)
        assert np.array_equal(out["p"].theta, two_component_model.weights)
        assert out["p"].shot_count == 0

    def test_huge_alpha_pins_to_global(self, two_component_model):
        pts = player_points(two_component_model, [0.05, 0.95], 500, seed=0)
        cfg = HierarchyConfig(alpha=1e9)
        out = fit_player_weights({"p": pts}, two_component_model, cfg)
        assert np.abs(out["p"].theta - two_component_model.weights).max() < 1e-6

    def test_data_pulls_away_from_global(self, two_component_model):
        # player aims opposite to the population: theta should land between
        # the global weights and the player's own empirical split
        pts = player_points(two_component_model, [0.05, 0.95], 400, seed=1)
        out = fit_player_weights({"p": pts}, two_component_model)
        theta = out["p"].theta
        assert theta[1] > two_component_model.weights[1] + 0.3
        assert theta[1] < 0.95

    def test_shrinkage_exact_for_hard_assignments(self, two_component_model):
        # components are far apart, so responsibilities are effectively 0/1
        # and theta has the closed form (n_k + alpha beta_k) / (n + alpha)
        pts = player_points(two_component_model, [0.25, 0.75], 200, seed=2)
        n1 = int(np.sum(pts[:, 0] > 0))  # component 2 sits at y=+2.5
        n = len(pts)
        cfg = HierarchyConfig(alpha=30.0)
        out = fit_player_weights({"p": pts}, two_component_model, cfg)
        expected = (n1 + 30.0 * 0.3) / (n + 30.0)
        assert out["p"].theta[1] == pytest.approx(expected, abs=1e-6)

    def test_theta_strictly_interior(self, two_component_model):
        # even when every shot matches one component, alpha keeps every
        # coordinate of theta away from the boundary
        pts = player_points(two_component_model, [1.0, 0.0], 300, seed=3)
        out = fit_player_weights({"p": pts}, two_component_model)
        assert np.all(out["p"].theta > 0)
        assert np.all(out["p"].theta < 1)
        assert out["p"].theta.sum() == pytest.approx(1.0, abs=1e-12)

    def test_more_shots_move_further(self, two_component_model):
        thetas = {}
        for n in (10, 100, 1000):
            pts = player_points(two_component_model, [0.05, 0.95], n, seed=4)
            thetas[n] = fit_player_weights({"p": pts}, two_component_model)["p"].theta[1]
        assert thetas[10] < thetas[100] < thetas[1000]

    def test_many_players_keyed_independently(self, two_component_model):
        pts_a = player_points(two_component_model, [0.9, 0.1], 120, seed=5)
        pts_b = player_points(two_component_model, [0.1, 0.9], 120, seed=6)
        out = fit_player_weights({"a": pts_a, "b": pts_b}, two_component_model)
        assert set(out) == {"a", "b"}
        assert out["a"].theta[0] > out["b"].theta[0]

    def test_below_support_rejected(self, two_component_model):
        with pytest.raises(InvalidInputError):
            fit_player_weights({"p": np.array([[0.0, -0.5]])}, two_component_model)


class TestObjective:
    def test_log_posterior_increases_with_better_theta(self, two_component_model):
        pts = player_points(two_component_model, [0.05, 0.95], 400, seed=7)
        out = fit_player_weights({"p": pts}, two_component_model)
        # fitted log-posterior beats the starting point (theta = beta)
        from shotmix.players import _player_objective

        beta = two_component_model.weights
        log_dens = two_component_model.log_density_matrix(pts)
        from shotmix import kernels

        start_ll, _ = kernels.em_estep(log_dens, np.log(beta))
        start = _player_objective(start_ll, beta, beta, 30.0)
        assert out["p"].log_posterior > start


class TestScoring:
    def test_matches_manual_mixture_density(self, two_component_model):
        pts = np.array([[0.0, 0.5], [2.0, 1.4]])
        w = np.array([0.6, 0.4])
        from shotmix.geometry import trunc_pdf

        manual = np.mean([
            np.log(sum(wk * trunc_pdf(c.as_truncated(), p)
                       for wk, c in zip(w, two_component_model.components)))
            for p in pts
        ])
        got = log_likelihood_per_shot(pts, w, two_component_model)
        assert got == pytest.approx(manual, rel=1e-10)

    def test_unsupported_shot_hits_floor(self, two_component_model, caplog):
        import logging

        pts = np.array([[0.0, -1.0]])
        with caplog.at_level(logging.INFO, logger="shotmix.players"):
            got = log_likelihood_per_shot(pts, np.array([0.5, 0.5]), two_component_model)
        assert got == pytest.approx(np.log(1e-300))
        assert any("density floor" in r.message for r in caplog.records)

    def test_empty_rejected(self, two_component_model):
        with pytest.raises(InvalidInputError):
            log_likelihood_per_shot(np.empty((0, 2)), np.array([0.5, 0.5]),
                                    two_component_model)

    def test_weight_length_checked(self, two_component_model):
        with pytest.raises(InvalidInputError):
            log_likelihood_per_shot(np.array([[0.0, 0.5]]), np.array([1.0]),
                                    two_component_model)


class TestPersistence:
    def test_round_trip(self, tmp_path, two_component_model):
        pts = player_points(two_component_model, [0.4, 0.6], 50, seed=8)
        out = fit_player_weights({"p1": pts, "p2": np.empty((0, 2))}, two_component_model)
        path = tmp_path / "players.json"
        save_player_weights(path, out, two_component_model, alpha=30.0)
        loaded, file_hash, alpha = load_player_weights(path)
        assert alpha == 30.0
        assert file_hash == model_hash(two_component_model)
        assert set(loaded) == {"p1", "p2"}
        assert np.array_equal(loaded["p1"].theta, out["p1"].theta)
        assert loaded["p1"].shot_count == 50
        assert loaded["p2"].shot_count == 0

    def test_hash_guard(self, two_component_model, three_component_model):
        good = model_hash(two_component_model)
        check_model_hash(good, two_component_model, "players file")  # no raise
        with pytest.raises(ModelHashMismatchError):
            check_model_hash(good, three_component_model, "players file")
