"""Frame-level condition sets for the flow.

A condition set carries the speaker embedding, normalized log-f0, the
voiced/unvoiced flags, phoneme embeddings upsampled to frames and the accent
embedding. `frame_condition_matrix` lays them out per frame as
[phonemes | f0 | vuv | speaker | accent].

The phoneme and accent tables are fixed seeded lookups, not trained weights.
Each coupling layer learns its own projection of the condition matrix, which
is where the lookups become learned. The speaker table holds toy-encoder
centroids. All three travel in the checkpoint with the flow.
"""
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from config import (
    ACCENT_EMBEDDING_DIM, F0_MEAN_OVER, PHONEME_EMBEDDING_DIM, SEED,
    SPEAKER_EMBEDDING_DIM,
)
from errors import ConditioningError, ConfigError

logger = logging.getLogger(__name__)

SPEAKER_SOURCES = ("lookup", "encoder")
SPLITS = ("train", "test", "unseen")


@dataclass
class Utterance:
    utt_id: str
    phonemes: List[int]
    durations: List[int]
    f0: np.ndarray
    accent: int
    speaker: str
    mel: Optional[np.ndarray] = None
    split: str = "train"

    @property
    def frames(self) -> int:
        return int(np.sum(self.durations))

    @property
    def vuv(self) -> np.ndarray:
        return (np.asarray(self.f0) > 0).astype(np.float64)

    def validate(self) -> None:
        if len(self.phonemes) == 0:
            raise ConditioningError(f"{self.utt_id}: empty phoneme sequence")
        if len(self.phonemes) != len(self.durations):
            raise ConditioningError(
                f"{self.utt_id}: {len(self.phonemes)} phonemes but {len(self.durations)} durations")
        if any(int(d) < 1 for d in self.durations):
            raise ConditioningError(f"{self.utt_id}: durations must be >= 1 frame")
        f0 = np.asarray(self.f0)
        if f0.ndim != 1 or f0.shape[0] != self.frames:
            raise ConditioningError(
                f"{self.utt_id}: f0 has {f0.shape[0] if f0.ndim == 1 else f0.shape} frames, durations sum to {self.frames}")
        if np.any(f0 < 0) or not np.all(np.isfinite(f0)):
            raise ConditioningError(f"{self.utt_id}: f0 must be finite and >= 0")
        if self.mel is not None and np.asarray(self.mel).shape[0] != self.frames:
            raise ConditioningError(
                f"{self.utt_id}: mel has {np.asarray(self.mel).shape[0]} frames, durations sum to {self.frames}")
        if self.split not in SPLITS:
            raise ConditioningError(f"{self.utt_id}: unknown split '{self.split}'")


@dataclass
class ConditionSet:
    speaker: np.ndarray
    f0_norm: np.ndarray
    vuv: np.ndarray
    ph_frames: np.ndarray
    accent: np.ndarray

    @property
    def frames(self) -> int:
        return int(self.ph_frames.shape[0])

    @property
    def width(self) -> int:
        return self.ph_frames.shape[1] + 2 + self.speaker.shape[0] + self.accent.shape[0]

    def validate(self) -> None:
        t = self.frames
        if self.f0_norm.shape != (t,) or self.vuv.shape != (t,):
            raise ConditioningError(
                f"Condition fields disagree on frame count: ph {t}, f0 {self.f0_norm.shape}, vuv {self.vuv.shape}")
        if not np.all((self.vuv == 0) | (self.vuv == 1)):
            raise ConditioningError("vuv flags must be 0 or 1")
        if self.speaker.ndim != 1 or not np.all(np.isfinite(self.speaker)):
            raise ConditioningError("Speaker embedding must be a finite vector")

    def with_speaker(self, speaker: np.ndarray) -> "ConditionSet":
        speaker = np.asarray(speaker, dtype=np.float64)
        if speaker.shape != self.speaker.shape:
            raise ConditioningError(
                f"Speaker embedding has dimension {speaker.shape}, expected {self.speaker.shape}")
        return replace(self, speaker=speaker.copy())

    def without_f0(self) -> "ConditionSet":
        return replace(self, f0_norm=np.zeros_like(self.f0_norm), vuv=np.zeros_like(self.vuv))


def normalize_f0(f0_hz: np.ndarray, vuv: Optional[np.ndarray] = None, mean_over: str = F0_MEAN_OVER) -> np.ndarray:
    """Sentence-level mean-normalized, interpolated log-f0."""
    f0_hz = np.asarray(f0_hz, dtype=np.float64)
    vuv = (f0_hz > 0).astype(np.float64) if vuv is None else np.asarray(vuv, dtype=np.float64)
    if f0_hz.shape != vuv.shape or f0_hz.ndim != 1:
        raise ConditioningError(f"f0 and vuv must be equal-length vectors, got {f0_hz.shape} and {vuv.shape}")
    if mean_over not in ("all", "voiced"):
        raise ConfigError(f"f0_mean_over must be 'all' or 'voiced', got '{mean_over}'")
    voiced = vuv > 0
    if np.any(f0_hz[voiced] <= 0):
        raise ConditioningError("Voiced frames need a positive f0")
    if not np.any(voiced):
        logger.warning("All-unvoiced sentence, using zero f0 conditioning")
        return np.zeros_like(f0_hz)

    frames = np.arange(len(f0_hz))
    log_f0 = np.interp(frames, frames[voiced], np.log(f0_hz[voiced]))
    mean = log_f0[voiced].mean() if mean_over == "voiced" else log_f0.mean()
    return log_f0 - mean


def upsample_phonemes(ph_ids: Sequence[int], durations: Sequence[int], table: np.ndarray) -> np.ndarray:
    if len(ph_ids) == 0:
        raise ConditioningError("Empty phoneme sequence")
    if len(ph_ids) != len(durations):
        raise ConditioningError(f"{len(ph_ids)} phonemes but {len(durations)} durations")
    ids = np.asarray(ph_ids, dtype=np.int64)
    durations = np.asarray(durations, dtype=np.int64)
    if np.any(durations < 1):
        raise ConditioningError("Durations must be positive integers")
    if np.any(ids < 0) or np.any(ids >= table.shape[0]):
        bad = ids[(ids < 0) | (ids >= table.shape[0])][0]
        raise ConditioningError(f"Unknown phoneme id {bad} (inventory has {table.shape[0]})")
    return table[np.repeat(ids, durations)].copy()


def frame_condition_matrix(theta: ConditionSet) -> np.ndarray:
    theta.validate()
    t = theta.frames
    return np.concatenate([
        theta.ph_frames,
        theta.f0_norm[:, None],
        theta.vuv[:, None],
        np.broadcast_to(theta.speaker, (t, theta.speaker.shape[0])),
        np.broadcast_to(theta.accent, (t, theta.accent.shape[0])),
    ], axis=1)


def condition_width(phoneme_dim: int, speaker_dim: int, accent_dim: int) -> int:
    return phoneme_dim + 2 + speaker_dim + accent_dim


SpeakerSource = Union[str, np.ndarray]


class ConditionBuilder:
    """Assembles ConditionSets from utterances and embedding tables.

    The speaker vector comes from the per-speaker lookup table, from an
    encoder applied to the utterance's own mel, or is passed in directly.
    """

    def __init__(self, phoneme_table: np.ndarray, accent_table: np.ndarray,
                 speaker_table: Optional[Dict[str, np.ndarray]] = None, encoder=None,
                 speaker_dim: int = SPEAKER_EMBEDDING_DIM, f0_mean_over: str = F0_MEAN_OVER):
        self.phoneme_table = np.asarray(phoneme_table, dtype=np.float64)
        self.accent_table = np.asarray(accent_table, dtype=np.float64)
        self.speaker_table: Dict[str, np.ndarray] = dict(speaker_table or {})
        self.encoder = encoder
        self.speaker_dim = speaker_dim
        self.f0_mean_over = f0_mean_over
        for speaker_id, vector in self.speaker_table.items():
            if np.asarray(vector).shape != (speaker_dim,):
                raise ConditioningError(f"Speaker '{speaker_id}' embedding has shape {np.asarray(vector).shape}")

    @classmethod
    def create(cls, n_phonemes: int, n_accents: int, phoneme_dim: int = PHONEME_EMBEDDING_DIM,
               accent_dim: int = ACCENT_EMBEDDING_DIM, speaker_dim: int = SPEAKER_EMBEDDING_DIM,
               seed: int = SEED, f0_mean_over: str = F0_MEAN_OVER, encoder=None) -> "ConditionBuilder":
        rng = np.random.default_rng([seed, 7])
        return cls(
            phoneme_table=rng.standard_normal((n_phonemes, phoneme_dim)) / np.sqrt(phoneme_dim),
            accent_table=rng.standard_normal((n_accents, accent_dim)) / np.sqrt(accent_dim),
            encoder=encoder,
            speaker_dim=speaker_dim,
            f0_mean_over=f0_mean_over,
        )

    @property
    def width(self) -> int:
        return condition_width(self.phoneme_table.shape[1], self.speaker_dim, self.accent_table.shape[1])

    def set_speaker_table(self, table: Dict[str, np.ndarray]) -> None:
        for speaker_id, vector in table.items():
            if np.asarray(vector).shape != (self.speaker_dim,):
                raise ConditioningError(f"Speaker '{speaker_id}' embedding has shape {np.asarray(vector).shape}")
        self.speaker_table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}

    def speaker_embedding(self, utt: Utterance, speaker_source: SpeakerSource = "lookup") -> np.ndarray:
        if isinstance(speaker_source, str):
            if speaker_source == "lookup":
                if utt.speaker not in self.speaker_table:
                    raise ConditioningError(f"Unknown speaker '{utt.speaker}' in the lookup table")
                return self.speaker_table[utt.speaker].copy()
            if speaker_source == "encoder":
                if self.encoder is None or utt.mel is None:
                    raise ConditioningError(f"{utt.utt_id}: encoder speaker source needs an encoder and a mel")
                return self.encoder.encode(utt.mel)
            raise ConfigError(f"Unknown speaker source '{speaker_source}', expected one of {SPEAKER_SOURCES} or a vector")
        vector = np.asarray(speaker_source, dtype=np.float64)
        if vector.shape != (self.speaker_dim,) or not np.all(np.isfinite(vector)):
            raise ConditioningError(
                f"Provided speaker embedding has shape {vector.shape}, expected ({self.speaker_dim},)")
        return vector.copy()

    def build(self, utt: Utterance, speaker_source: SpeakerSource = "lookup", use_f0: bool = True) -> ConditionSet:
        utt.validate()
        if not 0 <= utt.accent < self.accent_table.shape[0]:
            raise ConditioningError(f"{utt.utt_id}: unknown accent id {utt.accent}")
        vuv = utt.vuv
        theta = ConditionSet(
            speaker=self.speaker_embedding(utt, speaker_source),
            f0_norm=normalize_f0(utt.f0, vuv, self.f0_mean_over),
            vuv=vuv,
            ph_frames=upsample_phonemes(utt.phonemes, utt.durations, self.phoneme_table),
            accent=self.accent_table[utt.accent].copy(),
        )
        return theta if use_f0 else theta.without_f0()

    def matrix(self, utt: Utterance, speaker_source: SpeakerSource = "lookup", use_f0: bool = True) -> np.ndarray:
        return frame_condition_matrix(self.build(utt, speaker_source, use_f0))

    def state_tensors(self, speaker_order: Sequence[str]) -> Dict[str, np.ndarray]:
        tensors = {"phoneme": self.phoneme_table, "accent": self.accent_table}
        if speaker_order:
            tensors["speaker"] = np.stack([self.speaker_table[s] for s in speaker_order])
        return tensors

    @classmethod
    def from_state(cls, tensors: Dict[str, np.ndarray], speaker_order: Sequence[str],
                   f0_mean_over: str = F0_MEAN_OVER, encoder=None) -> "ConditionBuilder":
        speakers = tensors.get("speaker")
        speaker_dim = speakers.shape[1] if speakers is not None else SPEAKER_EMBEDDING_DIM
        table = {} if speakers is None else {s: speakers[i].astype(np.float64) for i, s in enumerate(speaker_order)}
        return cls(tensors["phoneme"], tensors["accent"], table, encoder=encoder,
                   speaker_dim=speaker_dim, f0_mean_over=f0_mean_over)


def build_condition_set(utt: Utterance, builder: ConditionBuilder,
                        speaker_source: SpeakerSource = "lookup", use_f0: bool = True) -> ConditionSet:
    return builder.build(utt, speaker_source, use_f0)
