import numpy as np
import pytest

from chaoskit import dynsys, models, neural
from chaoskit.errors import ConfigError
from chaoskit.models import TrainConfig


def zero_seq_model(hidden=4):
    model = models.SeqRegressor.create(hidden_size=hidden, seed=0)
    return models.SeqRegressor.from_param_dict(
        {k: np.zeros_like(v) for k, v in model.param_dict().items()})


class TestSeqForward:
    def test_length_one_zero_weights(self):
        lam, h = models.seq_forward(zero_seq_model(), np.array([3.7]))
        assert lam == 0.0
        assert np.array_equal(h, np.zeros(4))

    def test_affine_invariance(self):
        model = models.SeqRegressor.create(hidden_size=16, seed=1)
        rng = np.random.default_rng(2)
        x = rng.normal(size=120).cumsum()
        lam1, h1 = models.seq_forward(model, x)
        lam2, h2 = models.seq_forward(model, 3.5 * x + 40.0)
        assert abs(lam1 - lam2) < 1e-9
        assert np.abs(h1 - h2).max() < 1e-9

    def test_matches_stepwise_gru_cell(self):
        model = models.SeqRegressor.create(hidden_size=8, seed=3)
        x = np.random.default_rng(4).normal(size=30)
        lam, h_end = models.seq_forward(model, x)
        xn = models.normalize_values(x)
        h = np.zeros(8)
        for v in xn:
            h = neural.gru_cell(np.array([v]), h, model.gru)
        assert np.abs(h - h_end).max() < 1e-12
        assert abs(lam - neural.dense_forward(h, model.head)[0]) < 1e-12

    def test_batch_matches_single(self):
        model = models.SeqRegressor.create(hidden_size=8, seed=5)
        rng = np.random.default_rng(6)
        batch = rng.normal(size=(4, 40)).cumsum(axis=1)
        lams, hs = models.seq_forward_batch(model, batch)
        for i in range(4):
            lam, h = models.seq_forward(model, batch[i])
            assert abs(lam - lams[i]) < 1e-12
            assert np.abs(h - hs[i]).max() < 1e-12

    def test_training_mode_draws_one_mask_per_sequence(self):
        model = models.SeqRegressor.create(hidden_size=8, seed=7)
        x = np.random.default_rng(8).normal(size=50)
        a1, _ = models.seq_forward(model, x, training=True, seed=11, drop_p=0.3)
        a2, _ = models.seq_forward(model, x, training=True, seed=11, drop_p=0.3)
        b, _ = models.seq_forward(model, x, training=True, seed=12, drop_p=0.3)
        assert a1 == a2
        assert a1 != b


def path_tree(values, spec):
    """Degenerate tree: every node has a single (left) child."""
    depth = len(values)
    n_slots = 2 ** depth - 1
    vals = np.full(n_slots, np.nan)
    present = np.zeros(n_slots, dtype=bool)
    slot = 0
    for v in values:
        vals[slot] = v
        present[slot] = True
        slot = 2 * slot + 1
    return dynsys.TreeTrajectory(depth, vals, present, spec, 0)


class TestTreeForward:
    def test_depth_one_equals_seq_pipeline(self):
        model = models.TreeRegressor.create(hidden_size=6, embed_size=5, seed=9)
        spec = dynsys.zmap(1.5, 2.0)
        tree = dynsys.TreeTrajectory(1, np.array([2.0]), np.array([True]), spec, 0)
        lam = models.tree_forward(model, tree)
        h = neural.gru_cell(np.array([0.0]), np.zeros(6), model.gru)  # z-scored single value
        z = neural.dense_forward(neural.dense_forward(h, model.f1), model.f2)
        expected = neural.dense_forward(z, model.g)[0]
        assert abs(lam - expected) < 1e-12

    def test_path_tree_equals_sequence_unroll(self):
        # mathematically identical; bitwise equality is not guaranteed
        # because BLAS picks row-count-dependent kernels
        model = models.TreeRegressor.create(hidden_size=6, embed_size=5, seed=10)
        spec = dynsys.zmap(1.5, 2.0)
        values = np.random.default_rng(11).normal(size=5)
        tree = path_tree(values, spec)
        lam = models.tree_forward(model, tree)
        xn = models.normalize_values(values)
        h = np.zeros(6)
        for v in xn:
            h = neural.gru_cell(np.array([v]), h, model.gru)
        z = neural.dense_forward(neural.dense_forward(h, model.f1), model.f2)
        expected = neural.dense_forward(z, model.g)[0]
        assert lam == pytest.approx(expected, abs=1e-12)

    def test_complete_tree_leaf_count(self):
        spec = dynsys.kcc(-0.5, 5.0, 12.0, sigma=0.05)
        tree = dynsys.generate_tree(spec, np.array([1.0, 12.0]), depth=5, seed=1)
        assert tree.leaf_mask().sum() == 16
        layout = models._layout_trees([tree])
        assert len(layout.leaf_rows[0]) == 16

    def test_noiseless_tree_equals_single_path_value(self):
        # identical children => all leaves identical => pooling degenerate:
        # the prediction equals the tree model run on the single shared path
        # (inside the tree's own normalization, which weights levels by
        # node multiplicity)
        model = models.TreeRegressor.create(hidden_size=6, embed_size=5, seed=12)
        spec = dynsys.kcc(-0.5, 2.0, 10.37, sigma=0.0)  # quasi-periodic orbit
        tree = dynsys.generate_tree(spec, np.array([1.0, 10.37]), depth=4, seed=2)
        lam_tree, pooled = models.tree_forward_batch(model, [tree])
        slot, path = 0, []
        while slot < tree.values.size:
            path.append(tree.values[slot])
            slot = 2 * slot + 1
        norm = models.normalize_values(tree.values[tree.present])
        full = np.full(tree.values.shape, np.nan)
        full[tree.present] = norm
        h = np.zeros(6)
        slot = 0
        for _ in path:
            h = neural.gru_cell(np.array([full[slot]]), h, model.gru)
            slot = 2 * slot + 1
        z = neural.dense_forward(neural.dense_forward(h, model.f1), model.f2)
        assert np.abs(pooled[0] - z).max() < 1e-10
        assert abs(lam_tree[0] - neural.dense_forward(z, model.g)[0]) < 1e-10

    def test_batch_matches_single(self):
        model = models.TreeRegressor.create(hidden_size=6, embed_size=5, seed=13)
        spec = dynsys.kcc(-0.5, 6.0, 14.0, sigma=0.05)
        trees = [dynsys.generate_tree(spec, np.array([1.0, 14.0]), depth=4, seed=i)
                 for i in range(3)]
        lams, pooled = models.tree_forward_batch(model, trees)
        for i, tree in enumerate(trees):
            assert abs(models.tree_forward(model, tree) - lams[i]) < 1e-12


class TestProbeOps:
    def test_feature_shapes_and_zero_donor(self):
        seq_donor = zero_seq_model(hidden=64)
        x = np.random.default_rng(1).normal(size=100)
        feats = models.probe_extract(seq_donor, x)
        assert feats.shape == (64,)
        assert np.array_equal(feats, np.zeros(64))

        tree_donor = models.TreeRegressor.create(seed=0)
        spec = dynsys.kcc(-0.5, 5.0, 12.0, sigma=0.05)
        tree = dynsys.generate_tree(spec, np.array([1.0, 12.0]), depth=4, seed=3)
        feats = models.probe_extract(tree_donor, tree)
        assert feats.shape == (32,)

    def test_deterministic_features(self):
        donor = models.SeqRegressor.create(seed=2)
        traj = dynsys.generate_sequence(dynsys.zmap(1.7, 2.0), np.array([0.3]),
                                        n=80, seed=4)
        f1 = models.probe_extract(donor, traj)
        f2 = models.probe_extract(donor, traj)
        assert np.array_equal(f1, f2)

    def test_shuffled_labels_give_chance_accuracy(self):
        rng = np.random.default_rng(5)
        feats_train = rng.normal(size=(600, 16))
        feats_test = rng.normal(size=(600, 16))
        labels = (rng.random(600) > 0.5).astype(float)
        cfg = TrainConfig(lr=1e-3, epochs=30, l2=0.0, recurrent_dropout_p=0.0, seed=6)
        acc = models.probe_train_eval({0.0: (feats_train, labels)},
                                      {0.0: (feats_test, labels)}, cfg)
        assert abs(acc[0.0] - 0.5) < 0.05

    def test_separable_classes_learned(self):
        rng = np.random.default_rng(7)
        labels = (rng.random(400) > 0.5).astype(float)
        feats = rng.normal(size=(400, 8)) + 3.0 * labels[:, None]
        cfg = TrainConfig(lr=3e-3, epochs=60, l2=0.0, recurrent_dropout_p=0.0, seed=8)
        probe = models.train_probe(feats, labels, cfg)
        pred = models.probe_forward(probe, feats) > 0.5
        assert np.mean(pred == labels.astype(bool)) > 0.97

    def test_imbalanced_classes_rejected(self):
        feats = np.zeros((100, 4))
        labels = np.r_[np.ones(80), np.zeros(20)]
        cfg = TrainConfig(epochs=1, seed=0)
        with pytest.raises(ConfigError):
            models.train_probe(feats, labels, cfg)


def _toy_seq_dataset(n, length, seed):
    """Series with exponent-like labels: AR(1) decay rate as the target."""
    rng = np.random.default_rng(seed)
    items, labels = [], []
    spec = dynsys.zmap(1.0, 2.0)
    for i in range(n):
        a = rng.uniform(-0.9, 0.9)
        x = np.empty(length)
        x[0] = rng.normal()
        for t in range(1, length):
            x[t] = a * x[t - 1] + 0.3 * rng.normal()
        items.append(dynsys.SeqTrajectory(x, spec, i))
        labels.append(np.log(abs(a)) if a != 0 else -3.0)
    return items, np.clip(np.array(labels), -2.0, 2.0)


class TestTrainRegressor:
    def test_overfit_small_set(self):
        items, labels = _toy_seq_dataset(48, 30, seed=1)
        cfg = TrainConfig(batch_size=16, lr=5e-3, epochs=300, l2=0.0,
                          recurrent_dropout_p=0.0, seed=2, val_fraction=0.0)
        model, history = models.train_regressor("seq", items, labels, cfg)
        assert history["train_mse"][-1] < 0.01

    def test_loss_history_smoothed_non_increasing(self):
        items, labels = _toy_seq_dataset(48, 30, seed=3)
        cfg = TrainConfig(batch_size=16, lr=5e-3, epochs=120, l2=0.0,
                          recurrent_dropout_p=0.0, seed=4, val_fraction=0.0)
        _, history = models.train_regressor("seq", items, labels, cfg)
        mse = np.array(history["train_mse"])
        assert np.all(np.isfinite(mse))
        smooth = np.convolve(mse, np.ones(5) / 5, mode="valid")
        # non-increasing at the scale of the problem: minibatch wiggle at
        # the convergence floor is allowed up to 1% of the starting loss
        assert np.all(np.diff(smooth) <= 0.01 * smooth[0])
        assert smooth[-1] < smooth[0]

    def test_bit_identical_given_seed(self):
        items, labels = _toy_seq_dataset(40, 25, seed=5)
        cfg = TrainConfig(batch_size=8, lr=1e-3, epochs=5, seed=6)
        m1, h1 = models.train_regressor("seq", items, labels, cfg)
        m2, h2 = models.train_regressor("seq", items, labels, cfg)
        assert h1["train_mse"] == h2["train_mse"]
        for k, v in m1.param_dict().items():
            assert np.array_equal(v, m2.param_dict()[k]), k

    def test_tree_training_runs_and_descends(self):
        spec = dynsys.kcc(-0.5, 6.0, 13.0, sigma=0.05)
        rng = np.random.default_rng(7)
        items, labels = [], []
        for i in range(32):
            k = rng.uniform(1.0, 10.0)
            sp = dynsys.kcc(-0.5, k, rng.uniform(6.0, 20.0), sigma=0.05)
            items.append(dynsys.generate_tree(sp, np.array([1.0, sp.params.tau0]),
                                              depth=4, seed=i))
            labels.append(rng.uniform(-0.3, 0.8))
        cfg = TrainConfig(batch_size=8, lr=3e-3, epochs=40, l2=0.0,
                          recurrent_dropout_p=0.0, seed=8, val_fraction=0.0)
        model, history = models.train_regressor("tree", items, np.array(labels), cfg)
        assert history["train_mse"][-1] < history["train_mse"][0]

    def test_mixed_lengths_rejected(self):
        spec = dynsys.zmap(1.5, 2.0)
        items = [dynsys.SeqTrajectory(np.arange(10.0), spec, 0),
                 dynsys.SeqTrajectory(np.arange(12.0), spec, 1)]
        with pytest.raises(ConfigError):
            models.train_regressor("seq", items, np.zeros(2), TrainConfig(seed=0))
