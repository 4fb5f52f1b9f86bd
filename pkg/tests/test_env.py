"""River dynamics against hand-computed transitions and closed-form odds."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wetchicken import env
from wetchicken.errors import ContractViolation
from wetchicken.seeding import STREAM_DATA, STREAM_EVAL, seed_rng


class TestTransition:
    def test_drift_only_from_still_water(self):
        # v = 0, b = 3.5: zero action and tau leaves only the -0.5 drift
        out = env.step([1.0, 0.0], [0.0, 0.0], 0.0)
        np.testing.assert_allclose(out, [0.5, 0.0])

    def test_fast_lane_sweeps_over_the_edge(self):
        # y = 5 gives v = 3: 4.9 - 0.5 + 3 = 7.4 > 5, full reset
        out = env.step([4.9, 5.0], [0.0, 0.0], 0.0)
        np.testing.assert_array_equal(out, [0.0, 0.0])

    def test_paddling_back_against_turbulence(self):
        # v = 1.8, b = 1.7: 2 + (-2) + 1.8 - 1.7 = 0.1, y: 3 + 1 = 4
        out = env.step([2.0, 3.0], [-1.0, 1.0], -1.0)
        np.testing.assert_allclose(out, [0.1, 4.0])

    def test_y_clamps_at_far_bank(self):
        out = env.step([2.0, 4.5], [0.0, 1.0], 0.0)
        # v = 2.7: x = 2 - 0.5 + 2.7 = 4.2, y = 5.5 -> 5
        np.testing.assert_allclose(out, [4.2, 5.0])

    def test_y_clamps_at_near_bank_without_x_reset(self):
        out = env.step([1.0, 0.5], [0.0, -1.0], 0.0)
        # v = 0.3: x = 1 - 0.5 + 0.3 = 0.8, y = -0.5 -> 0
        np.testing.assert_allclose(out, [0.8, 0.0])

    def test_edge_is_safe_exactly(self):
        # x_h = 0.5 + 1.0 + 3.5 = 5.0 exactly: strictly greater means fall
        out = env.step([0.5, 0.0], [1.0, 0.0], 1.0)
        np.testing.assert_array_equal(out, [5.0, 0.0])

    def test_backward_slip_clamps_x_only(self):
        # x_h = 1 - 0.5 - 3.5 = -3 < 0: x resets, y keeps its clamp result
        out = env.step([1.0, 0.0], [0.0, 1.0], -1.0)
        np.testing.assert_array_equal(out, [0.0, 1.0])

    def test_batch_matches_single(self):
        rng = np.random.default_rng(3)
        states = rng.uniform(0, 5, (50, 2))
        actions = rng.uniform(-1, 1, (50, 2))
        tau = rng.uniform(-1, 1, 50)
        batch = env.step(states, actions, tau)
        singles = np.array([env.step(s, a, t)
                            for s, a, t in zip(states, actions, tau)])
        np.testing.assert_array_equal(batch, singles)

    def test_rejects_out_of_range_inputs(self):
        with pytest.raises(ContractViolation):
            env.step([6.0, 0.0], [0.0, 0.0], 0.0)
        with pytest.raises(ContractViolation):
            env.step([1.0, 1.0], [1.5, 0.0], 0.0)
        with pytest.raises(ContractViolation):
            env.step([1.0, 1.0], [0.0, 0.0], 2.0)

    @settings(deadline=None, max_examples=300)
    @given(
        x=st.floats(0, 5), y=st.floats(0, 5),
        ax=st.floats(-1, 1), ay=st.floats(-1, 1),
        tau=st.floats(-1, 1),
    )
    def test_next_state_always_in_bounds(self, x, y, ax, ay, tau):
        nxt = env.step([x, y], [ax, ay], tau)
        assert 0.0 <= nxt[0] <= 5.0 and 0.0 <= nxt[1] <= 5.0
        # a waterfall reset zeroes both coordinates
        v = 3.0 * y / 5.0
        xh = x + (1.5 * ax - 0.5) + v + (3.5 - v) * tau
        if xh > 5.0:
            assert nxt[0] == 0.0 and nxt[1] == 0.0


class TestRewardAndFallProbability:
    def test_reward_is_downstream_position(self):
        states = np.array([[1.25, 4.0], [0.0, 0.0]])
        np.testing.assert_array_equal(env.reward(states), [1.25, 0.0])

    def test_known_value_near_edge(self):
        # c = 4 - 0.5 = 3.5, b = 3.5: P(over) = (1 - 1.5/3.5)/2 = 2/7
        p = env.fall_probability([4.0, 0.0], [0.0, 0.0])
        assert p == pytest.approx(2.0 / 7.0, abs=1e-12)

    def test_known_value_at_origin(self):
        # c = -0.5: only the pushback event has mass, (1 + 0.5/3.5)/2 = 4/7
        p = env.fall_probability([0.0, 0.0], [0.0, 0.0])
        assert p == pytest.approx(4.0 / 7.0, abs=1e-12)

    def test_safe_middle_has_zero_probability(self):
        # y = 5 gives b = 0.5, c = 3.5: the span [3.0, 4.0] stays in range
        p = env.fall_probability([1.0, 5.0], [0.0, 0.0])
        assert p == 0.0

    def test_monte_carlo_agrees_with_closed_form(self):
        rng = np.random.default_rng(5)
        cases = [([4.0, 0.0], [0.0, 0.0]),
                 ([0.0, 0.0], [0.0, 0.0]),
                 ([3.0, 4.0], [0.5, 0.0]),
                 ([4.5, 2.0], [-1.0, 0.0])]
        n = 40000
        for s, a in cases:
            p = env.fall_probability(s, a)
            states = np.tile(s, (n, 1))
            actions = np.tile(a, (n, 1))
            nxt = env.step_random(states, actions, rng)
            phat = float(np.mean(nxt[:, 0] == 0.0))
            sigma = np.sqrt(max(p * (1 - p), 1e-12) / n)
            assert abs(phat - p) <= max(3 * sigma, 1e-9), (s, a, p, phat)

    def test_probability_bounded(self):
        rng = np.random.default_rng(9)
        s = rng.uniform(0, 5, (200, 2))
        a = rng.uniform(-1, 1, (200, 2))
        p = env.fall_probability(s, a)
        assert np.all(p >= 0.0) and np.all(p <= 1.0)


class TestDataset:
    def test_sampling_is_deterministic(self):
        d1 = env.sample_dataset(64, seed_rng(123, STREAM_DATA))
        d2 = env.sample_dataset(64, seed_rng(123, STREAM_DATA))
        np.testing.assert_array_equal(d1.states, d2.states)
        np.testing.assert_array_equal(d1.actions, d2.actions)
        np.testing.assert_array_equal(d1.next_states, d2.next_states)
        d3 = env.sample_dataset(64, seed_rng(124, STREAM_DATA))
        assert not np.array_equal(d1.states, d3.states)

    def test_transitions_are_consistent(self):
        data = env.sample_dataset(500, seed_rng(7, STREAM_DATA))
        assert np.all(data.states >= 0) and np.all(data.states <= 5)
        assert np.all(np.abs(data.actions) <= 1)
        assert np.all(data.next_states >= 0) and np.all(data.next_states <= 5)

    def test_fall_fraction_matches_average_probability(self):
        data = env.sample_dataset(20000, seed_rng(11, STREAM_DATA))
        p = env.fall_probability(data.states, data.actions)
        observed = float(np.mean(data.next_states[:, 0] == 0.0))
        sigma = float(np.sqrt(np.sum(p * (1 - p))) / len(data))
        assert abs(observed - p.mean()) <= 3 * sigma

    def test_csv_round_trip_is_exact(self, tmp_path):
        data = env.sample_dataset(50, seed_rng(3, STREAM_DATA))
        path = tmp_path / "data.csv"
        data.save_csv(path)
        back = env.TransitionDataset.load_csv(path)
        np.testing.assert_array_equal(back.states, data.states)
        np.testing.assert_array_equal(back.actions, data.actions)
        np.testing.assert_array_equal(back.next_states, data.next_states)
        # re-saving reproduces the file byte for byte
        path2 = tmp_path / "again.csv"
        back.save_csv(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_load_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ContractViolation):
            env.TransitionDataset.load_csv(path)

    def test_load_reports_malformed_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y,ax,ay,xn,yn\n1,2,0,0,1,2\n1,2,x,0,1,2\n")
        with pytest.raises(ContractViolation, match="line 3"):
            env.TransitionDataset.load_csv(path)
        path.write_text("x,y,ax,ay,xn,yn\n1,2,0,0,1,2\n1,2,0\n")
        with pytest.raises(ContractViolation, match="line 3"):
            env.TransitionDataset.load_csv(path)


class TestEvaluatePolicy:
    def test_gamma_zero_collapses_to_start_reward(self):
        rng = seed_rng(0, STREAM_EVAL)
        res = env.evaluate_policy_true(lambda s: np.zeros_like(s), horizon=3,
                                       n_rollouts=400, gamma=0.0, rng=rng)
        # uniform starts: E r(s0) = 2.5
        assert res.discounted_return == pytest.approx(2.5, abs=0.3)

    def test_deterministic_given_stream(self):
        policy = lambda s: np.zeros_like(s)
        r1 = env.evaluate_policy_true(policy, horizon=20, n_rollouts=50,
                                      rng=seed_rng(4, STREAM_EVAL))
        r2 = env.evaluate_policy_true(policy, horizon=20, n_rollouts=50,
                                      rng=seed_rng(4, STREAM_EVAL))
        assert r1 == r2

    def test_stderr_shrinks_with_rollouts(self):
        policy = lambda s: np.zeros_like(s)
        small = env.evaluate_policy_true(policy, horizon=30, n_rollouts=50,
                                         rng=seed_rng(1, STREAM_EVAL))
        large = env.evaluate_policy_true(policy, horizon=30, n_rollouts=800,
                                         rng=seed_rng(1, STREAM_EVAL))
        assert large.avg_step_reward_stderr < small.avg_step_reward_stderr
