import numpy as np

from conditioning import Utterance
from flow import FlowModel

SMALL_OVERRIDES = dict(
    n_speakers=4,
    n_utterances=24,
    mel_bins=4,
    n_phonemes=6,
    min_frames=6,
    max_frames=12,
    speaker_embedding_dim=8,
    phoneme_embedding_dim=4,
    accent_embedding_dim=2,
    flow_steps=2,
    hidden_channels=8,
    epochs=2,
    batch_size=4,
    gmm_components=3,
    speakergen_hidden=16,
    speakergen_epochs=5,
    new_voice_count=6,
)


def make_model(mel_bins=4, cond_channels=3, flow_steps=2, hidden_channels=8, kernel_size=3,
               seed=0, scale=0.3):
    """Small flow with every parameter perturbed away from the identity."""
    model = FlowModel(mel_bins, cond_channels, flow_steps, hidden_channels, kernel_size, seed=seed)
    return model.randomize(seed + 1, scale)


def make_utterance(phonemes=(0, 1, 2), durations=(2, 3, 1), f0=None, mel_bins=4, speaker="spk000",
                   accent=0, utt_id="utt00000", seed=0):
    frames = int(sum(durations))
    rng = np.random.default_rng(seed)
    if f0 is None:
        f0 = np.full(frames, 120.0)
        f0[0] = 0.0
    return Utterance(
        utt_id=utt_id,
        phonemes=list(phonemes),
        durations=list(durations),
        f0=np.asarray(f0, dtype=np.float64),
        accent=accent,
        speaker=speaker,
        mel=rng.standard_normal((frames, mel_bins)),
    )
