import numpy as np
import pytest

from conditioning import ConditionBuilder
from errors import ConditioningError, ConfigError
from flow import FlowModel
from modes import PROFILES, mode_variants, render_voices, sample_latent, tts_synthesize, vc_convert
from tests.helpers import make_model, make_utterance

SPEAKER_A = np.array([1.0, 0.0, 0.0, 0.0])
SPEAKER_B = np.array([0.0, 0.6, 0.8, 0.0])


@pytest.fixture
def world():
    builder = ConditionBuilder.create(n_phonemes=4, n_accents=2, phoneme_dim=3, accent_dim=2, speaker_dim=4, seed=1)
    builder.set_speaker_table({"spk000": SPEAKER_A, "spk001": SPEAKER_B})
    model = make_model(cond_channels=builder.width, seed=11, scale=0.2)
    return model, builder


def test_profiles_match_system_names():
    assert [p.display_name for p in PROFILES.values()] == [
        "Flow-TTS", "Flow-TTS with f0", "Flow-VC", "Flow-VC w/o f0"]
    assert mode_variants("Flow-VC w/o f0") is PROFILES["vc_without_f0"]


def test_profile_f0_usage(world):
    _, builder = world
    utt = make_utterance()
    tts = mode_variants("tts").apply(builder.build(utt))
    vc = mode_variants("vc").apply(builder.build(utt))
    vc_plain = mode_variants("vc_without_f0").apply(builder.build(utt))
    np.testing.assert_array_equal(tts.f0_norm, 0.0)
    np.testing.assert_array_equal(tts.vuv, 0.0)
    np.testing.assert_array_equal(vc.vuv, utt.vuv)
    assert mode_variants("vc_without_f0").mode == "vc"
    np.testing.assert_array_equal(vc_plain.vuv, 0.0)


def test_unknown_profile_rejected():
    with pytest.raises(ConfigError, match="Unknown profile"):
        mode_variants("flow-gan")


def test_temperature_zero_is_deterministic(world):
    model, builder = world
    theta = builder.build(make_utterance())
    first = tts_synthesize(model, theta, temperature=0.0)
    second = tts_synthesize(model, theta, temperature=0.0, seed=99)
    np.testing.assert_array_equal(first, second)
    np.testing.assert_array_equal(sample_latent(3, 4, 0.0), np.zeros((3, 4)))


def test_same_seed_same_output(world):
    model, builder = world
    theta = builder.build(make_utterance())
    np.testing.assert_array_equal(tts_synthesize(model, theta, 0.7, seed=5), tts_synthesize(model, theta, 0.7, seed=5))
    assert not np.array_equal(tts_synthesize(model, theta, 0.7, seed=5), tts_synthesize(model, theta, 0.7, seed=6))


def test_negative_temperature_rejected(world):
    model, builder = world
    with pytest.raises(ConfigError):
        tts_synthesize(model, builder.build(make_utterance()), temperature=-0.1)


def test_latent_scales_with_temperature():
    base = sample_latent(50, 4, 1.0, seed=3)
    np.testing.assert_allclose(sample_latent(50, 4, 0.5, seed=3), 0.5 * base)


def test_identity_conversion_returns_input(world):
    model, builder = world
    utt = make_utterance()
    theta = builder.build(utt)
    np.testing.assert_allclose(vc_convert(model, utt.mel, theta, SPEAKER_A), utt.mel, atol=1e-8)


def test_conversion_round_trip(world):
    model, builder = world
    utt = make_utterance()
    theta = builder.build(utt)
    converted = vc_convert(model, utt.mel, theta, SPEAKER_B)
    assert not np.allclose(converted, utt.mel)
    back = vc_convert(model, converted, theta.with_speaker(SPEAKER_B), SPEAKER_A)
    np.testing.assert_allclose(back, utt.mel, atol=2e-8)


def test_conversion_rejects_dimension_mismatch(world):
    model, builder = world
    utt = make_utterance()
    with pytest.raises(ConditioningError):
        vc_convert(model, utt.mel, builder.build(utt), np.ones(3))


def test_conversion_keeps_source_f0(world):
    model, builder = world
    utt = make_utterance()
    theta = builder.build(utt)
    out_a = vc_convert(model, utt.mel, theta, SPEAKER_B)
    out_b = vc_convert(model, utt.mel, theta.without_f0(), SPEAKER_B)
    assert not np.allclose(out_a, out_b)


def test_render_voices_cycles_sources(world):
    model, builder = world
    utterances = [make_utterance(utt_id="utt00000"), make_utterance(utt_id="utt00001", durations=(1, 1, 2), seed=1,
                                                                    f0=np.array([0.0, 100.0, 110.0, 0.0]))]
    embeddings = np.stack([SPEAKER_A, SPEAKER_B, SPEAKER_B])
    outputs = render_voices(model, builder, utterances, embeddings, mode_variants("vc"))
    assert [o.shape for o in outputs] == [(6, 4), (4, 4), (6, 4)]
    tts_outputs = render_voices(model, builder, utterances, embeddings, mode_variants("tts"), temperature=0.5, seed=2)
    assert len(tts_outputs) == 3
    with pytest.raises(ConditioningError):
        render_voices(model, builder, [], embeddings, mode_variants("vc"))


def test_conversion_reuses_source_latent(world, monkeypatch):
    import modes.inference_modes as inference_modes

    model, builder = world
    utt = make_utterance()
    theta = builder.build(utt)
    calls = []
    real_sample = inference_modes.sample_latent

    def recording_sample(*args, **kwargs):
        calls.append(args)
        return real_sample(*args, **kwargs)

    monkeypatch.setattr(inference_modes, "sample_latent", recording_sample)
    converted = vc_convert(model, utt.mel, theta, SPEAKER_B)
    assert calls == []
    sampled = tts_synthesize(model, theta.with_speaker(SPEAKER_B), temperature=1.0, seed=0)
    assert len(calls) == 1
    assert not np.allclose(converted, sampled)


def test_sample_variance_grows_with_temperature():
    builder = ConditionBuilder.create(n_phonemes=4, n_accents=2, phoneme_dim=3, accent_dim=2, speaker_dim=4, seed=1)
    model = FlowModel(mel_bins=4, cond_channels=builder.width, flow_steps=2, hidden_channels=8, kernel_size=3,
                      log_scale_clamp=5.0, seed=0)
    theta = builder.build(make_utterance(durations=(40, 40, 40)), SPEAKER_A)
    np.testing.assert_allclose(tts_synthesize(model, theta, 1.0, seed=4), sample_latent(120, 4, 1.0, seed=4), atol=1e-12)
    variances = [tts_synthesize(model, theta, t, seed=4).var() for t in (0.0, 0.3, 0.7, 1.0, 1.5)]
    assert variances == sorted(variances)
