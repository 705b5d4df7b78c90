import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from ovae.adequacy import FeatureKind, NetworkModel, label_states
from ovae.data_processor import Normalizer, SynthConfig, generate_synthetic, split_weekly
from ovae.errors import ConfigError, DimensionMismatchError, NonFiniteError, OvaeError, UntrainedModelError
from ovae.estimators import spearman
from ovae.ovae_model import (EmpiricalCdf, OvaeModel, TrainBatch, TrainConfig, history_frame, kl_loss,
                             orientation_loss, orientation_target, reconstruction_loss, reparameterize,
                             select_labeled, total_loss, train, transform_labels)
from ovae.parallel_runner import ParallelRunner


def zero_out(mlp):
    mlp.set_parameters({k: np.zeros_like(v) for k, v in mlp.parameters().items()})


class TestLosses:
    def test_reparameterize_examples(self):
        assert_array_equal(reparameterize([1.0, 1.0], [2.0, 3.0], [0.0, 0.0]), [1.0, 1.0])
        assert_array_equal(reparameterize([1.0, 1.0], [0.0, 0.0], [5.0, -5.0]), [1.0, 1.0])
        assert_array_equal(reparameterize([1.0, 1.0], [2.0, 3.0], [1.0, -1.0]), [3.0, -2.0])

    def test_reparameterize_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            reparameterize(np.zeros(2), np.ones(3), np.zeros(2))

    def test_kl_examples(self):
        assert kl_loss(np.zeros((3, 2)), np.ones((3, 2)))[0] == 0.0
        assert kl_loss([[1.0]], [[1.0]])[0] == pytest.approx(0.5)
        assert kl_loss([[0.0]], [[np.sqrt(np.e)]])[0] == pytest.approx((np.e - 2) / 2)

    def test_kl_per_latent_sums_to_total(self, rng):
        mu, sigma = rng.normal(size=(8, 3)), np.exp(rng.normal(size=(8, 3)))
        total, per_dim = kl_loss(mu, sigma)
        assert per_dim.shape == (3,)
        assert total == pytest.approx(per_dim.sum())

    def test_kl_rejects_nonpositive_sigma(self):
        with pytest.raises(OvaeError):
            kl_loss([[0.0]], [[0.0]])

    def test_reconstruction_examples(self):
        assert reconstruction_loss([[1.0, 2.0]], [[1.0, 2.0]], [[1.0, 1.0]]) == 0.0
        assert reconstruction_loss([[1.0]], [[0.0]], [[1.0]]) == pytest.approx(0.5)
        assert reconstruction_loss([[0.0]], [[0.0]], [[np.sqrt(np.e)]]) == pytest.approx(0.5)

    def test_reconstruction_rejects_nonpositive_sigma(self):
        with pytest.raises(OvaeError):
            reconstruction_loss([[0.0]], [[0.0]], [[-1.0]])

    def test_orientation_examples(self):
        cdf = EmpiricalCdf([1.0, 2.0, 3.0, 4.0])
        z1 = np.array([0.0])
        assert orientation_loss(np.array([2.5]), np.array([True]), z1, 0.0, cdf) == 0.0
        assert orientation_loss(np.array([4.5]), np.array([True]), z1, 0.0, cdf) == pytest.approx(4.0)
        assert orientation_loss(np.array([np.nan]), np.array([False]), z1, 0.0, cdf) == 0.0

    def test_total_loss_examples(self):
        assert total_loss(1.0, 2.0, 3.0, 1.0) == 6.0
        assert total_loss(0.2, 1.0, 0.0, 5.0) == pytest.approx(2.0)


class TestEmpiricalCdf:
    def test_median_by_midpoint_interpolation(self):
        assert orientation_target(EmpiricalCdf([4.0, 1.0, 3.0, 2.0]), 0.0) == pytest.approx(2.5)

    def test_tails_clamp_to_extremes(self):
        cdf = EmpiricalCdf([1.0, 2.0, 3.0, 4.0])
        assert orientation_target(cdf, 40.0) == 4.0
        assert orientation_target(cdf, -40.0) == 1.0

    def test_hundred_values_at_one_sigma(self):
        cdf = EmpiricalCdf(np.arange(100.0))
        assert orientation_target(cdf, 1.0) == pytest.approx(100 * stats.norm.cdf(1.0) - 0.5, abs=1e-9)
        assert orientation_target(cdf, 1.0) == pytest.approx(83.63, abs=0.01)

    def test_target_is_nondecreasing(self, rng):
        cdf = EmpiricalCdf(rng.normal(size=50))
        z = np.linspace(-4, 4, 200)
        assert np.all(np.diff(orientation_target(cdf, z)) >= 0)

    def test_slope_is_zero_on_clamped_tails(self):
        cdf = EmpiricalCdf([1.0, 2.0, 3.0, 4.0])
        assert_array_equal(cdf.quantile_slope([0.01, 0.99]), [0.0, 0.0])
        assert cdf.quantile_slope([0.5])[0] == pytest.approx(4.0)

    def test_rejects_empty_and_non_finite(self):
        with pytest.raises(OvaeError):
            EmpiricalCdf([])
        with pytest.raises(NonFiniteError):
            EmpiricalCdf([1.0, np.inf])


class TestModel:
    def test_zeroed_encoder_gives_standard_posterior(self, tiny_model, rng):
        zero_out(tiny_model.encoder)
        mu, sigma = tiny_model.encode(rng.random((5, 3)))
        assert_array_equal(mu, np.zeros((5, 2)))
        assert_array_equal(sigma, np.ones((5, 2)))

    def test_encode_is_deterministic(self, tiny_model, rng):
        x = rng.random((4, 3))
        first, second = tiny_model.encode(x), tiny_model.encode(x)
        assert_array_equal(first[0], second[0])
        assert_array_equal(first[1], second[1])

    def test_encode_rejects_non_finite_input(self, tiny_model):
        with pytest.raises(NonFiniteError):
            tiny_model.encode(np.array([0.1, np.nan, 0.3]))

    def test_zeroed_decoder_gives_unit_sigma(self, tiny_model):
        zero_out(tiny_model.decoder)
        mu_out, sigma_out = tiny_model.decode(np.zeros((2, 2)))
        assert_array_equal(mu_out, np.zeros((2, 3)))
        assert_array_equal(sigma_out, np.ones((2, 3)))

    def test_generate_needs_training(self, tiny_model):
        with pytest.raises(UntrainedModelError):
            tiny_model.generate(np.zeros((1, 2)))

    def test_zeroed_decoder_generates_training_minimum(self):
        normalizer = Normalizer(np.array([100.0, 200.0]), np.array([300.0, 900.0]))
        model = OvaeModel.build(normalizer, latent_dim=1, hidden_sizes=(3,), seed=0)
        zero_out(model.decoder)
        model.trained = True
        states = model.generate(np.zeros((3, 1)), noise=np.zeros((3, 2)))
        assert_allclose(states, np.tile([100.0, 200.0], (3, 1)))

    def test_identical_codes_generate_identical_states(self, tiny_model, rng):
        tiny_model.trained = True
        z, noise = rng.normal(size=(1, 2)), rng.normal(size=(1, 3))
        assert_array_equal(tiny_model.generate(z, noise), tiny_model.generate(z.copy(), noise.copy()))

    def test_generated_states_stay_in_training_range(self, tiny_model, rng):
        tiny_model.trained = True
        states = tiny_model.sample(200, rng, z=3 * rng.normal(size=(200, 2)))
        assert states.min() >= 0.0 and states.max() <= 1.0

    def test_bundle_round_trip(self, tiny_model, tmp_path, rng):
        tiny_model.trained = True
        tiny_model.feature_cdf = EmpiricalCdf(rng.random(10))
        tiny_model.log_var_f = -1.25
        path = tmp_path / 'model.json'
        tiny_model.save(path)
        restored = OvaeModel.load(path)
        z, noise = rng.normal(size=(4, 2)), rng.normal(size=(4, 3))
        assert_array_equal(restored.generate(z, noise), tiny_model.generate(z, noise))
        assert restored.log_var_f == -1.25
        assert_array_equal(restored.feature_cdf.sorted_values, tiny_model.feature_cdf.sorted_values)


class TestGradients:
    @pytest.mark.parametrize('orientation', [True, False])
    def test_total_loss_gradient_matches_finite_differences(self, tiny_model, rng, orientation):
        x = rng.random((6, 3))
        labels = np.array([0.1, np.nan, 0.7, 0.4, np.nan, 0.9])
        batch = TrainBatch(x, labels)
        tiny_model.feature_cdf = EmpiricalCdf(labels[np.isfinite(labels)])
        tiny_model.log_var_f = 0.3
        eps = rng.normal(size=(6, 2))
        beta = 2.0

        base = {k: np.array(v, dtype=float, copy=True) for k, v in tiny_model.parameters().items()}
        tiny_model.set_parameters(base)
        _, grads = tiny_model.loss_and_gradients(batch, eps, beta, orientation)

        def loss(params):
            tiny_model.set_parameters(params)
            return tiny_model.loss_and_gradients(batch, eps, beta, orientation)[0].total

        h = 1e-6
        for name, value in base.items():
            numeric = np.zeros_like(value)
            for idx in np.ndindex(value.shape):
                plus = {k: v.copy() for k, v in base.items()}
                minus = {k: v.copy() for k, v in base.items()}
                plus[name][idx] += h
                minus[name][idx] -= h
                numeric[idx] = (loss(plus) - loss(minus)) / (2 * h)
            assert_allclose(grads[name], numeric, rtol=1e-5, atol=1e-7, err_msg=name)

    def test_loss_report_matches_standalone_losses(self, tiny_model, rng):
        x = rng.random((5, 3))
        eps = rng.normal(size=(5, 2))
        report, _ = tiny_model.loss_and_gradients(TrainBatch(x), eps, 1.0, orientation=False)
        mu, sigma = tiny_model.encode(x)
        mu_out, sigma_out = tiny_model.decode(reparameterize(mu, sigma, eps))
        assert report.kl == pytest.approx(kl_loss(mu, sigma)[0])
        assert report.reconstruction == pytest.approx(reconstruction_loss(x, mu_out, sigma_out))
        assert report.orientation == 0.0


class TestBatchAndLabels:
    def test_mask_must_match_labels(self):
        with pytest.raises(OvaeError):
            TrainBatch(np.zeros((2, 3)), np.array([1.0, np.nan]), np.array([True, True]))

    def test_total_load_labels_min_max_scaled(self):
        out = transform_labels(np.array([10.0, np.nan, 30.0, 20.0]), FeatureKind.TOTAL_LOAD)
        assert_allclose(out, [0.0, np.nan, 1.0, 0.5])

    def test_eens_labels_become_normalized_ranks(self):
        out = transform_labels(np.array([-5e6, 300.0, np.nan, 10.0, 10.0]), FeatureKind.EENS)
        assert_allclose(out, [0.0, 1.0, np.nan, 0.5, 0.5])

    def test_select_labeled_keeps_requested_share(self, rng):
        labels = np.arange(100.0)
        kept = select_labeled(labels, 0.2, rng)
        assert np.isfinite(kept).sum() == 20
        assert_array_equal(kept[np.isfinite(kept)], labels[np.isfinite(kept)])


class TestTraining:
    def test_same_seed_gives_identical_history(self, unit_normalizer, rng):
        x = rng.random((40, 3))
        labels = x.sum(axis=1)
        histories = []
        for _ in range(2):
            model = OvaeModel.build(unit_normalizer, 2, (4,), seed=3)
            cfg = TrainConfig(beta=1.0, epochs=3, batch_size=16, learning_rate=1e-3, seed=5, show_progress=False)
            _, history = train(model, x, cfg, transform_labels(labels, FeatureKind.TOTAL_LOAD))
            histories.append(history_frame(history))
        assert histories[0].equals(histories[1])
        assert list(histories[0].columns) == ['epoch', 'kl', 're', 'ori', 'total', 'kl_z1', 'kl_z2',
                                              'validation_total']

    def test_validation_loss_is_recorded(self, unit_normalizer, rng):
        model = OvaeModel.build(unit_normalizer, 2, (4,), seed=0)
        cfg = TrainConfig(epochs=2, batch_size=8, seed=0, orientation=False, show_progress=False)
        model, history = train(model, rng.random((20, 3)), cfg, validation=TrainBatch(rng.random((5, 3))))
        assert model.trained
        assert all(np.isfinite(r.validation_total) for r in history)

    def test_zero_labeled_fraction_with_orientation_fails(self, unit_normalizer, rng):
        model = OvaeModel.build(unit_normalizer, 2, (4,), seed=0)
        cfg = TrainConfig(epochs=1, labeled_fraction=0.0, show_progress=False)
        with pytest.raises(ConfigError):
            train(model, rng.random((10, 3)), cfg, labels=rng.random(10))

    def test_empty_dataset_fails(self, unit_normalizer):
        model = OvaeModel.build(unit_normalizer, 2, (4,), seed=0)
        with pytest.raises(OvaeError):
            train(model, np.zeros((0, 3)), TrainConfig(epochs=1, show_progress=False))


@pytest.mark.slow
def test_oriented_latent_tracks_total_load():
    rng = np.random.default_rng(0)
    # Five correlated areas driven by a common factor
    factor = rng.random(4000)
    states = np.clip(0.5 * factor[:, None] + 0.25 + 0.1 * rng.normal(size=(4000, 5)), 0.0, 1.0)
    normalizer = Normalizer.fit(states[:3000])
    x_train, x_test = normalizer.normalize(states[:3000]), normalizer.normalize(states[3000:])
    labels = transform_labels(states[:3000].sum(axis=1), FeatureKind.TOTAL_LOAD)

    cfg = TrainConfig(beta=1.0, epochs=60, batch_size=64, learning_rate=1e-3, seed=1, show_progress=False)
    oriented, _ = train(OvaeModel.build(normalizer, 3, (32, 32), seed=1), x_train, cfg, labels)

    totals = states[3000:].sum(axis=1)
    assert spearman(oriented.encode_mean(x_test)[:, 0], totals) >= 0.8

    z = rng.standard_normal((2000, 3))
    generated = oriented.sample(2000, rng, z)
    assert spearman(z[:, 0], generated.sum(axis=1)) >= 0.8

    # Pushing z1 into the upper tail shifts generated total load upward
    biased = z.copy()
    biased[:, 0] = rng.normal(2.0, 0.5, size=2000)
    shift = np.median(oriented.sample(2000, rng, biased).sum(axis=1)) - np.median(generated.sum(axis=1))
    assert shift >= states[:3000].sum(axis=1).std()


@pytest.mark.slow
def test_training_loss_decreases():
    rng = np.random.default_rng(6)
    states = np.clip(rng.random(200)[:, None] * 0.6 + 0.2 + 0.05 * rng.normal(size=(200, 5)), 0.0, 1.0)
    normalizer = Normalizer.fit(states)
    labels = transform_labels(states.sum(axis=1), FeatureKind.TOTAL_LOAD)
    cfg = TrainConfig(epochs=650, batch_size=64, seed=6, show_progress=False)
    _, history = train(OvaeModel.build(normalizer, 4, (16, 16), seed=6), normalizer.normalize(states), cfg, labels)
    assert len(history) == 650
    assert history[-1].total <= history[0].total


@pytest.mark.slow
def test_few_labels_still_orient_labeled_rows():
    rng = np.random.default_rng(0)
    factor = rng.random(3000)
    states = np.clip(0.5 * factor[:, None] + 0.25 + 0.1 * rng.normal(size=(3000, 5)), 0.0, 1.0)
    normalizer = Normalizer.fit(states)
    totals = states.sum(axis=1)
    labels = transform_labels(totals, FeatureKind.TOTAL_LOAD)

    cfg = TrainConfig(beta=1.0, epochs=60, batch_size=64, learning_rate=1e-3, seed=1, labeled_fraction=0.05,
                      show_progress=False)
    model, _ = train(OvaeModel.build(normalizer, 3, (32, 32), seed=1), normalizer.normalize(states), cfg, labels)

    # train() draws the labeled rows first from default_rng(seed)
    labeled = np.isfinite(select_labeled(labels, 0.05, np.random.default_rng(1)))
    assert labeled.sum() == 150
    z1 = model.encode_mean(normalizer.normalize(states[labeled]))[:, 0]
    assert abs(spearman(z1, totals[labeled])) >= 0.8


@pytest.mark.slow
def test_plain_vae_aligns_worse_than_oriented():
    # Independent area noise: total load is not a dominant direction of the data
    data = generate_synthetic(SynthConfig(hours=20 * 168, seasonal_amplitude=0.0, diurnal_amplitude=0.0,
                                          correlation=0.0, noise_scale=0.1))
    dataset = split_weekly(data, seed=0)
    normalizer = Normalizer.fit(dataset.train_values)
    x_train, x_test = normalizer.normalize(dataset.train_values), normalizer.normalize(dataset.test_values)
    totals = dataset.test_values.sum(axis=1)
    labels = transform_labels(dataset.train_values.sum(axis=1), FeatureKind.TOTAL_LOAD)

    settings = dict(beta=1.0, epochs=60, batch_size=64, learning_rate=1e-3, seed=4, show_progress=False)
    oriented, _ = train(OvaeModel.build(normalizer, 2, (32, 32), seed=4), x_train, TrainConfig(**settings), labels)
    plain, _ = train(OvaeModel.build(normalizer, 2, (32, 32), seed=4), x_train,
                     TrainConfig(orientation=False, **settings))

    oriented_score = spearman(oriented.encode_mean(x_test)[:, 0], totals)
    plain_z = plain.encode_mean(x_test)
    plain_best = max(abs(spearman(plain_z[:, j], totals)) for j in range(plain_z.shape[1]))
    assert oriented_score >= 0.8
    assert plain_best < oriented_score


@pytest.fixture(scope='module')
def eens_labeled(config_dir):
    """Synthetic desk demand on the under-built network, f_EENS on every row"""
    dataset = split_weekly(generate_synthetic(SynthConfig(hours=9 * 168)), seed=1)
    network = NetworkModel.from_toml(config_dir / 'tight_network.toml')
    runner = ParallelRunner(4, show_progress=False)

    def labels(rows):
        # Same generation draws for every row
        return label_states(rows, network, FeatureKind.EENS, seed=5, runner=runner, k=10,
                            indices=np.zeros(rows.shape[0], dtype=int))

    return dataset.train_values, labels(dataset.train_values), dataset.test_values, labels(dataset.test_values)


@pytest.mark.slow
def test_eens_labels_mix_shortfall_and_margin(eens_labeled):
    _, train_f, _, test_f = eens_labeled
    values = np.concatenate([train_f, test_f])
    assert (values > 0).any() and (values < 0).any()


@pytest.mark.slow
@pytest.mark.parametrize('fraction', [0.05, 0.2, 0.3])
def test_partially_labeled_eens_ranks_orient(eens_labeled, fraction):
    train_rows, train_f, test_rows, test_f = eens_labeled
    normalizer = Normalizer.fit(train_rows)
    labels = transform_labels(train_f, FeatureKind.EENS)

    cfg = TrainConfig(beta=1.0, epochs=150, batch_size=64, learning_rate=1e-3, seed=3, labeled_fraction=fraction,
                      show_progress=False)
    model, _ = train(OvaeModel.build(normalizer, 3, (32, 32), seed=3), normalizer.normalize(train_rows), cfg, labels)

    z1 = model.encode_mean(normalizer.normalize(test_rows))[:, 0]
    assert spearman(z1, stats.rankdata(test_f)) >= 0.7
