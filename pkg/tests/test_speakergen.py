import numpy as np
import pytest

from diffcore import AdamOptimizer, Tensor, gradient_check
from errors import ConditioningError, DataError
from speakergen import (
    GmmSpec, SpeakerGenerator, embedding_records, load_embeddings_json, mixture_log_likelihood,
    sample_speaker, sample_speakers, save_embeddings_json, speakergen_forward, speakergen_train,
)

LOCALES = ["en-US", "en-GB"]


def _pool(rng, per_locale=6, dims=4):
    us = rng.normal(1.0, 0.3, (per_locale, dims))
    gb = rng.normal(-1.0, 0.3, (per_locale, dims))
    return np.vstack([us, gb]), ["en-US"] * per_locale + ["en-GB"] * per_locale


def _generator(dims=4, **kwargs):
    settings = dict(components=3, hidden=8, locale_dim=3, seed=0)
    settings.update(kwargs)
    return SpeakerGenerator(LOCALES, dims, **settings)


def test_weights_lie_on_simplex():
    generator = _generator()
    for locale in LOCALES:
        spec = speakergen_forward(generator, locale)
        np.testing.assert_allclose(spec.weights.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(spec.stddevs >= generator.stddev_floor)
        spec.validate(generator.stddev_floor)


def test_unknown_locale_rejected():
    generator = _generator()
    with pytest.raises(ConditioningError):
        generator.forward("fr-FR")
    with pytest.raises(ConditioningError):
        generator.forward(5)
    assert generator.locale_index(1) == 1 and generator.locale_index("en-GB") == 1


def test_training_raises_log_likelihood(rng):
    pool, locales = _pool(rng)
    generator = _generator()
    history = generator.train(pool, locales, epochs=60, learning_rate=1e-2)
    assert len(history) == 61
    assert history[-1] > history[0]


def test_locales_get_different_specs(rng):
    pool, locales = _pool(rng)
    generator = _generator()
    generator.train(pool, locales, epochs=150, learning_rate=1e-2)
    us, gb = generator.forward("en-US"), generator.forward("en-GB")
    assert not np.allclose(us.means, gb.means)
    us_mean, _ = us.moments()
    gb_mean, _ = gb.moments()
    assert us_mean.mean() > gb_mean.mean()
    for locale, spec in (("en-US", us), ("en-GB", gb)):
        members = pool[[label == locale for label in locales]]
        samples = sample_speakers(spec, 4000, seed=2)
        assert abs(samples.mean() - members.mean()) <= 0.2


def test_weights_stay_on_simplex_during_training(rng):
    pool, locales = _pool(rng)
    generator = _generator()
    groups = generator._check_pool(pool, locales)
    generator.initialize_from_pool(pool)
    optimizer = AdamOptimizer(learning_rate=5e-2)
    for _ in range(50):
        generator.train_step(groups, optimizer)
        for locale in LOCALES:
            generator.forward(locale).validate(generator.stddev_floor)
    assert optimizer.step_count == 50


def test_closed_form_moments_match_samples():
    spec = GmmSpec(
        weights=np.array([[0.3, 0.5, 0.2], [0.6, 0.1, 0.3]]),
        means=np.array([[-2.0, 0.5, 3.0], [1.0, -4.0, 0.0]]),
        stddevs=np.array([[0.5, 1.0, 0.7], [0.3, 0.8, 2.0]]),
    )
    mean, variance = spec.moments()
    samples = sample_speakers(spec, 10000, seed=13)
    n = samples.shape[0]
    centered = samples - samples.mean(axis=0)
    fourth = (centered ** 4).mean(axis=0)
    mean_error = np.sqrt(variance / n)
    variance_error = np.sqrt((fourth - samples.var(axis=0) ** 2) / n)
    assert np.all(np.abs(samples.mean(axis=0) - mean) <= 3 * mean_error)
    assert np.all(np.abs(samples.var(axis=0) - variance) <= 3 * variance_error)


def test_degenerate_pool_collapses_to_point(rng):
    target = np.array([0.3, -0.2, 0.5, 0.1])
    pool = np.tile(target, (8, 1))
    locales = ["en-US"] * 4 + ["en-GB"] * 4
    generator = _generator()
    generator.train(pool, locales, epochs=20, learning_rate=1e-2)
    samples = sample_speakers(generator.forward("en-US"), 2000, seed=1)
    floor = generator.stddev_floor
    assert np.all(np.abs(samples.mean(axis=0) - target) <= 3 * floor)
    assert np.all(np.sqrt(((samples - target) ** 2).mean(axis=0)) <= 3 * floor)


def test_zero_learning_rate_keeps_parameters(rng):
    pool, locales = _pool(rng)
    generator = _generator()
    before = {name: value.copy() for name, value in generator.state_tensors().items()}
    generator.train(pool, locales, epochs=3, learning_rate=0.0, data_init=False)
    for name, value in generator.state_tensors().items():
        np.testing.assert_array_equal(value, before[name])


def test_pool_validation(rng):
    generator = _generator()
    pool, locales = _pool(rng)
    with pytest.raises(DataError):
        generator.train(np.zeros((0, 4)), [], epochs=1)
    with pytest.raises(DataError):
        generator.train(pool[:7], locales[:7], epochs=1)
    with pytest.raises(ConditioningError):
        generator.train(pool, ["en-AU"] * len(pool), epochs=1)


def test_mixture_gradient_matches_finite_differences(rng):
    x = rng.standard_normal((5, 3))
    log_weights = Tensor(np.log(np.full((3, 2), 0.5)), requires_grad=True, name="log_weights")
    means = Tensor(rng.standard_normal((3, 2)), requires_grad=True, name="means")
    stddevs = Tensor(rng.uniform(0.5, 1.5, (3, 2)), requires_grad=True, name="stddevs")
    errors = gradient_check(lambda: mixture_log_likelihood(x, log_weights, means, stddevs), [log_weights, means, stddevs])
    assert max(errors.values()) <= 1e-3


def test_generator_gradient_matches_finite_differences(rng):
    pool, locales = _pool(rng, per_locale=3, dims=2)
    generator = _generator(dims=2, components=2, hidden=4)
    groups = generator._check_pool(pool, locales)
    errors = gradient_check(lambda: generator.pool_log_likelihood(groups), generator.parameters())
    assert max(errors.values()) <= 1e-3


def test_standard_normal_sample_moments():
    spec = GmmSpec(np.ones((1, 1)), np.zeros((1, 1)), np.ones((1, 1)))
    samples = sample_speakers(spec, 10000, seed=0)[:, 0]
    assert abs(samples.mean()) <= 0.05
    assert abs(samples.var() - 1.0) <= 0.1


def test_single_weighted_component_only_used():
    spec = GmmSpec(
        weights=np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
        means=np.array([[0.0, 10.0, 20.0], [5.0, -10.0, -20.0]]),
        stddevs=np.full((2, 3), 0.01),
    )
    samples = sample_speakers(spec, 500, seed=3)
    np.testing.assert_allclose(samples, np.tile([0.0, 5.0], (500, 1)), atol=0.1)


def test_dimensions_sampled_independently():
    spec = GmmSpec(np.ones((2, 1)), np.zeros((2, 1)), np.ones((2, 1)))
    samples = sample_speakers(spec, 10000, seed=7)
    covariance = np.cov(samples.T)[0, 1]
    assert abs(covariance) <= 3.0 / np.sqrt(10000)


def test_sampling_is_seeded():
    spec = GmmSpec(np.full((3, 2), 0.5), np.zeros((3, 2)), np.ones((3, 2)))
    np.testing.assert_array_equal(sample_speaker(spec, 4), sample_speaker(spec, 4))
    assert sample_speakers(spec, 0, seed=1).shape == (0, 3)
    with pytest.raises(DataError):
        sample_speakers(spec, -1, seed=1)


def test_state_round_trip(rng):
    pool, locales = _pool(rng)
    generator = _generator()
    generator.train(pool, locales, epochs=5, learning_rate=1e-2)
    restored = SpeakerGenerator.from_state(generator.hyperparameters(), generator.state_tensors())
    np.testing.assert_array_equal(restored.forward("en-GB").means, generator.forward("en-GB").means)


def test_train_from_config(rng):
    pool, locales = _pool(rng)
    history = speakergen_train(_generator(), pool, locales, {"speakergen_epochs": 2, "speakergen_learning_rate": 1e-2})
    assert len(history) == 3


def test_embedding_json_round_trip(tmp_path):
    embeddings = np.array([[0.25, -1.0], [2.0, 0.5]])
    records = embedding_records(embeddings, "en-US")
    assert [r["id"] for r in records] == ["newvoice_000", "newvoice_001"]
    path = save_embeddings_json(str(tmp_path / "voices.json"), records)
    loaded = load_embeddings_json(path)
    assert loaded == records
    assert embedding_records(np.zeros((0, 2)), "en-US") == []


def test_embedding_json_rejects_bad_files(tmp_path):
    with pytest.raises(DataError):
        load_embeddings_json(str(tmp_path / "missing.json"))
    path = tmp_path / "bad.json"
    path.write_text('{"embedding": [1]}', encoding="utf-8")
    with pytest.raises(DataError):
        load_embeddings_json(str(path))
