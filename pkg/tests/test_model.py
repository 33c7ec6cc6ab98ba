import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mtbai.errors import ConfigError, UsageError
from mtbai.model import (CountTensor, ModelTensor, load_instance, membership_check,
                         model_from_dict, sample_reward, two_task_example, update_counts)


class TestModelTensor:
    def test_shape_and_readonly(self, example_model):
        assert (example_model.X, example_model.G, example_model.H) == (2, 3, 2)
        assert example_model.n_arms == 12
        with pytest.raises(ValueError):
            example_model.means[0, 0, 0] = 0.3

    def test_rejects_bad_means(self):
        with pytest.raises(UsageError):
            ModelTensor(np.full((1, 2, 1), 1.5))
        with pytest.raises(UsageError):
            ModelTensor(np.zeros((2, 2)))

    def test_flat_and_reduced(self, example_model):
        flat = example_model.flat()
        assert flat.shape == (2, 6)
        assert flat[0, 4] == example_model.means[0, 2, 0]
        assert example_model.reduced(1).means.ravel().tolist() == flat[1].tolist()
        assert example_model.reduced(0, 0).means.shape == (1, 2, 1)


class TestMembership:
    def test_example_instance(self, example_model):
        v = membership_check(example_model)
        assert v.in_class and v.best_representation == 0 and v.best_predictors == (0, 0)

    def test_all_equal(self):
        assert not membership_check(ModelTensor(np.full((2, 3, 2), 0.5))).in_class

    def test_two_arms(self):
        v = membership_check(ModelTensor(np.array([[[0.9], [0.1]]])))
        assert v.in_class and v.best_representation == 0

    def test_disagreeing_tasks(self):
        mu = np.array([[[0.9], [0.1]], [[0.1], [0.9]]])
        assert not membership_check(ModelTensor(mu)).in_class

    @given(st.integers(0, 2 ** 31))
    def test_relabel_invariance(self, seed):
        rng = np.random.default_rng(seed)
        mu = rng.uniform(size=(3, 3, 2))
        base = membership_check(ModelTensor(mu))
        tp = rng.permutation(3)
        hp = rng.permutation(2)
        v = membership_check(ModelTensor(mu[tp][:, :, hp]))
        assert v.in_class == base.in_class
        if base.in_class:
            assert v.best_representation == base.best_representation


class TestSampling:
    def test_degenerate_means(self):
        m = ModelTensor(np.array([[[1.0], [0.0]]]))
        rng = np.random.default_rng(1)
        assert all(sample_reward(m, (0, 0, 0), rng) == 1 for _ in range(200))
        assert all(sample_reward(m, (0, 1, 0), rng) == 0 for _ in range(200))

    def test_frequency(self):
        m = ModelTensor(np.array([[[0.5], [0.1]]]))
        rng = np.random.default_rng(2)
        draws = [sample_reward(m, (0, 0, 0), rng) for _ in range(100_000)]
        assert abs(np.mean(draws) - 0.5) < 0.01

    def test_legacy_stream(self):
        m = ModelTensor(np.array([[[0.5], [0.1]]]))
        assert sample_reward(m, (0, 0, 0), np.random.RandomState(0)) in (0, 1)

    def test_out_of_range(self, example_model):
        with pytest.raises(UsageError):
            sample_reward(example_model, (2, 0, 0), np.random.default_rng())


class TestCounts:
    def test_single_update(self):
        c = update_counts(CountTensor.zeros(1, 2, 1), (0, 0, 0), 1)
        assert c.pulls[0, 0, 0] == 1 and c.reward_sums[0, 0, 0] == 1 and c.round == 1

    def test_mean(self):
        c = CountTensor.zeros(1, 2, 1)
        update_counts(c, (0, 0, 0), 1)
        update_counts(c, (0, 0, 0), 0)
        assert c.empirical_means()[0, 0, 0] == 0.5
        assert c.empirical_means()[0, 1, 0] == 0.0

    def test_bad_reward(self):
        with pytest.raises(UsageError):
            update_counts(CountTensor.zeros(1, 2, 1), (0, 0, 0), 2)

    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 2), st.integers(0, 1),
                              st.integers(0, 1)), max_size=60))
    def test_bookkeeping(self, steps):
        c = CountTensor.zeros(2, 3, 2)
        for x, g, h, r in steps:
            update_counts(c, (x, g, h), r)
        assert c.pulls.sum() == c.round == len(steps)
        m = c.empirical_means()
        assert np.all((m >= 0) & (m <= 1))
        assert np.all(c.reward_sums <= c.pulls)


class TestInstanceFiles:
    def test_roundtrip(self, tmp_path, example_model):
        p = tmp_path / "inst.json"
        p.write_text(json.dumps(example_model.to_dict()))
        assert np.array_equal(load_instance(p).means, example_model.means)

    @pytest.mark.parametrize("obj", [
        {"X": 1, "G": 2, "H": 1, "mu": [[[0.5], [0.2, 0.1]]]},
        {"X": 1, "G": 2, "H": 1, "mu": [[[0.5], [1.2]]]},
        {"X": 1, "G": 2, "H": 1},
        {"X": 1, "G": 2, "H": 1, "mu": [[[0.5], [0.2]]], "extra": 1},
        {"X": 1, "G": 1, "H": 1, "mu": [[[0.5]]]},
    ])
    def test_rejects(self, obj):
        with pytest.raises(ConfigError):
            model_from_dict(obj)

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_instance(p)

    def test_example_fixture(self):
        assert membership_check(two_task_example()).best_representation == 0
