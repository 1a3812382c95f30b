import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from conditioning import ConditionBuilder, ConditionSet, Utterance
from config import TEMPERATURE
from diffcore import no_grad
from errors import ConditioningError, ConfigError
from flow import FlowModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConditioningProfile:
    key: str
    display_name: str
    mode: str
    use_f0: bool

    def apply(self, theta: ConditionSet) -> ConditionSet:
        return theta if self.use_f0 else theta.without_f0()


PROFILES: Dict[str, ConditioningProfile] = {
    "tts": ConditioningProfile("tts", "Flow-TTS", "tts", use_f0=False),
    "tts_with_f0": ConditioningProfile("tts_with_f0", "Flow-TTS with f0", "tts", use_f0=True),
    "vc": ConditioningProfile("vc", "Flow-VC", "vc", use_f0=True),
    "vc_without_f0": ConditioningProfile("vc_without_f0", "Flow-VC w/o f0", "vc", use_f0=False),
}


def mode_variants(profile: str) -> ConditioningProfile:
    """Resolve a profile key ("vc_without_f0") or system name ("Flow-VC w/o f0")."""
    if profile in PROFILES:
        return PROFILES[profile]
    for candidate in PROFILES.values():
        if candidate.display_name == profile:
            return candidate
    raise ConfigError(f"Unknown profile '{profile}', expected one of {sorted(PROFILES)}")


def sample_latent(frames: int, bins: int, temperature: float = TEMPERATURE, seed: Optional[int] = None) -> np.ndarray:
    if temperature < 0:
        raise ConfigError(f"Temperature must be >= 0, got {temperature}")
    if temperature == 0:
        return np.zeros((frames, bins))
    return temperature * np.random.default_rng(seed).standard_normal((frames, bins))


def encode_latent(model: FlowModel, m: np.ndarray, theta: ConditionSet) -> np.ndarray:
    with no_grad():
        z, _ = model.forward(m, theta)
    return z.numpy()


def tts_synthesize(model: FlowModel, theta: ConditionSet, temperature: float = TEMPERATURE,
                   seed: Optional[int] = None) -> np.ndarray:
    """Decode a prior sample z ~ N(0, temperature^2 I) under theta."""
    z = sample_latent(theta.frames, model.mel_bins, temperature, seed)
    return model.inverse(z, theta)


def vc_convert(model: FlowModel, m: np.ndarray, theta: ConditionSet, s_target: np.ndarray) -> np.ndarray:
    """Encode with the source speaker in theta, decode with s_target.

    Every other condition, including the source's normalized f0, is reused.
    """
    s_target = np.asarray(s_target, dtype=np.float64)
    if s_target.shape != theta.speaker.shape:
        raise ConditioningError(
            f"Target speaker embedding has dimension {s_target.shape}, source has {theta.speaker.shape}")
    z = encode_latent(model, m, theta)
    return model.inverse(z, theta.with_speaker(s_target))


def render_voices(model: FlowModel, builder: ConditionBuilder, utterances: Sequence[Utterance],
                  embeddings: np.ndarray, profile: ConditioningProfile,
                  temperature: float = TEMPERATURE, seed: int = 0) -> List[np.ndarray]:
    """Synthesize one utterance per embedding, cycling through `utterances`.

    VC profiles convert the source mel from its own lookup speaker; TTS
    profiles decode a fresh prior sample per voice.
    """
    if not utterances:
        raise ConditioningError("render_voices needs at least one source utterance")
    outputs = []
    for index, embedding in enumerate(np.asarray(embeddings)):
        utt = utterances[index % len(utterances)]
        if profile.mode == "vc":
            theta = builder.build(utt, "lookup", profile.use_f0)
            outputs.append(vc_convert(model, utt.mel, theta, embedding))
        else:
            theta = builder.build(utt, embedding, profile.use_f0)
            outputs.append(tts_synthesize(model, theta, temperature, seed + index))
    logger.info(f"Rendered {len(outputs)} voices with profile {profile.display_name}")
    return outputs
