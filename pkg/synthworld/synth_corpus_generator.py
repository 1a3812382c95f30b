import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import DEFAULT_CONFIG, LOG_DIR
from conditioning import Corpus, DatasetStore, Utterance
from errors import ConfigError
from .toy_encoder import ToyEncoder

os.makedirs(LOG_DIR, exist_ok=True)
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(os.path.join(LOG_DIR, "synth_corpus_generation.log"), mode='a'),
    ]
)
logger = logging.getLogger(__name__)

PHONEME_SYMBOLS = ["sil", "aa", "b", "d", "eh", "f", "iy", "k", "m", "n", "ow", "s",
                   "t", "uw", "v", "z", "ae", "g", "l", "r", "sh", "th", "w", "y"]
LOCALE_NAMES = ["en-US", "en-GB", "en-AU", "en-IN", "en-IE", "en-CA"]
MAX_DURATION = 6
BIAS_ATTEMPTS = 1000


def phoneme_inventory(n_phonemes: int) -> List[str]:
    return [PHONEME_SYMBOLS[i] if i < len(PHONEME_SYMBOLS) else f"ph{i}" for i in range(n_phonemes)]


def locale_names(n_locales: int) -> List[str]:
    return [LOCALE_NAMES[i] if i < len(LOCALE_NAMES) else f"locale{i}" for i in range(n_locales)]


def is_voiced(phoneme_id: int) -> bool:
    return phoneme_id % 4 != 0


@dataclass
class SynthConfig:
    n_speakers: int = DEFAULT_CONFIG["n_speakers"]
    n_unseen_speakers: int = DEFAULT_CONFIG["n_unseen_speakers"]
    n_locales: int = DEFAULT_CONFIG["n_locales"]
    n_utterances: int = DEFAULT_CONFIG["n_utterances"]
    mel_bins: int = DEFAULT_CONFIG["mel_bins"]
    n_phonemes: int = DEFAULT_CONFIG["n_phonemes"]
    min_frames: int = DEFAULT_CONFIG["min_frames"]
    max_frames: int = DEFAULT_CONFIG["max_frames"]
    noise_std: float = DEFAULT_CONFIG["noise_std"]
    speaker_gap: float = DEFAULT_CONFIG["speaker_gap"]
    bias_scale: float = DEFAULT_CONFIG["bias_scale"]
    locale_offset: float = DEFAULT_CONFIG["locale_offset"]
    pattern_scale: float = DEFAULT_CONFIG["pattern_scale"]
    f0_weight: float = DEFAULT_CONFIG["f0_weight"]
    test_fraction: float = DEFAULT_CONFIG["test_fraction"]
    speaker_embedding_dim: int = DEFAULT_CONFIG["speaker_embedding_dim"]
    seed: int = DEFAULT_CONFIG["seed"]

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "SynthConfig":
        fields = cls.__dataclass_fields__
        return cls(**{key: config[key] for key in fields if key in config})

    def to_dict(self) -> Dict[str, Any]:
        return {key: getattr(self, key) for key in self.__dataclass_fields__}

    def validate(self) -> None:
        for key in ("n_speakers", "n_locales", "n_utterances", "mel_bins", "n_phonemes", "min_frames",
                    "speaker_embedding_dim"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)}")
        if self.n_unseen_speakers < 0:
            raise ConfigError(f"n_unseen_speakers must be >= 0, got {self.n_unseen_speakers}")
        if self.mel_bins % 2:
            raise ConfigError(f"mel_bins must be even, got {self.mel_bins}")
        if self.max_frames < self.min_frames:
            raise ConfigError(f"max_frames ({self.max_frames}) is below min_frames ({self.min_frames})")
        if self.speaker_gap <= 0 or self.bias_scale <= 0:
            raise ConfigError("speaker_gap and bias_scale must be positive")
        if self.noise_std < 0 or self.noise_std >= self.speaker_gap / 4:
            raise ConfigError(
                f"noise_std must be in [0, speaker_gap / 4) = [0, {self.speaker_gap / 4}), got {self.noise_std}")
        if not 0 <= self.test_fraction < 1:
            raise ConfigError(f"test_fraction must be in [0, 1), got {self.test_fraction}")


@dataclass
class SynthSpeaker:
    speaker_id: str
    bias: np.ndarray
    base_log_f0: float
    locale: int
    unseen: bool = False


class SynthCorpusGenerator:
    """Synthetic corpus with known speaker identities.

    frame = pattern[phoneme] + bias[speaker] + f0_weight * contour * direction + noise,
    where the f0 term is present on voiced frames only and the contour is the
    utterance's smooth log-f0 deviation from the speaker's base log-f0.
    """

    def __init__(self, config: SynthConfig):
        config.validate()
        self.config = config
        rng = np.random.default_rng([config.seed, 1])
        self.patterns = config.pattern_scale * rng.standard_normal((config.n_phonemes, config.mel_bins))
        direction = rng.standard_normal(config.mel_bins)
        self.f0_direction = direction / np.linalg.norm(direction)
        self.locale_offsets = config.locale_offset * rng.standard_normal((config.n_locales, config.mel_bins))
        self.voiced = np.array([is_voiced(p) for p in range(config.n_phonemes)])
        self.speakers = self._make_speakers(rng)

    def _make_speakers(self, rng: np.random.Generator) -> List[SynthSpeaker]:
        total = self.config.n_speakers + self.config.n_unseen_speakers
        speakers: List[SynthSpeaker] = []
        for index in range(total):
            locale = index % self.config.n_locales
            for _ in range(BIAS_ATTEMPTS):
                bias = self.locale_offsets[locale] + self.config.bias_scale * rng.standard_normal(self.config.mel_bins)
                if all(np.linalg.norm(bias - other.bias) >= self.config.speaker_gap for other in speakers):
                    break
            else:
                raise ConfigError(
                    f"Could not place {total} speakers with pairwise gap {self.config.speaker_gap}; "
                    f"raise bias_scale or lower speaker_gap")
            speakers.append(SynthSpeaker(
                speaker_id=f"spk{index:03d}",
                bias=bias,
                base_log_f0=float(np.log(rng.uniform(90.0, 250.0))),
                locale=locale,
                unseen=index >= self.config.n_speakers,
            ))
        return speakers

    def sample_text(self, rng: np.random.Generator) -> Tuple[List[int], List[int]]:
        target = int(rng.integers(self.config.min_frames, self.config.max_frames + 1))
        phonemes, durations = [], []
        while sum(durations) < target:
            phonemes.append(int(rng.integers(self.config.n_phonemes)))
            durations.append(int(rng.integers(1, MAX_DURATION + 1)))
        durations[-1] -= sum(durations) - target
        return phonemes, durations

    @staticmethod
    def sample_contour(frames: int, rng: np.random.Generator) -> np.ndarray:
        """Smooth sentence-level log-f0 deviation."""
        amplitude = rng.uniform(0.05, 0.2)
        cycles = rng.uniform(0.5, 2.0)
        phase = rng.uniform(0.0, 1.0)
        positions = np.arange(frames) / max(frames, 1)
        return amplitude * np.sin(2.0 * np.pi * (cycles * positions + phase))

    def render_utterance(self, speaker: SynthSpeaker, phonemes: Sequence[int], durations: Sequence[int],
                         contour: np.ndarray, noise_rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, np.ndarray]:
        ids = np.repeat(np.asarray(phonemes, dtype=np.int64), np.asarray(durations, dtype=np.int64))
        voiced = self.voiced[ids]
        f0 = np.where(voiced, np.exp(speaker.base_log_f0 + contour), 0.0)
        mel = self.patterns[ids] + speaker.bias
        mel = mel + self.config.f0_weight * np.where(voiced, contour, 0.0)[:, None] * self.f0_direction
        if self.config.noise_std > 0:
            noise_rng = noise_rng if noise_rng is not None else np.random.default_rng(self.config.seed)
            mel = mel + self.config.noise_std * noise_rng.standard_normal(mel.shape)
        # stored as float32
        return mel.astype(np.float32).astype(np.float64), f0.astype(np.float32).astype(np.float64)

    def _split_for(self, index: int) -> str:
        if self.config.test_fraction <= 0:
            return "train"
        period = max(2, int(round(1.0 / self.config.test_fraction)))
        return "test" if index % period == period - 1 else "train"

    def _utterance(self, index: int, speaker: SynthSpeaker, split: str) -> Utterance:
        rng = np.random.default_rng([self.config.seed, 2, index])
        phonemes, durations = self.sample_text(rng)
        contour = self.sample_contour(sum(durations), rng)
        mel, f0 = self.render_utterance(speaker, phonemes, durations, contour, rng)
        return Utterance(
            utt_id=f"utt{index:05d}",
            phonemes=phonemes,
            durations=durations,
            f0=f0,
            accent=speaker.locale,
            speaker=speaker.speaker_id,
            mel=mel,
            split=split,
        )

    def generate(self) -> Corpus:
        seen = [s for s in self.speakers if not s.unseen]
        unseen = [s for s in self.speakers if s.unseen]
        utterances = [
            self._utterance(index, seen[index % len(seen)], self._split_for(index))
            for index in range(self.config.n_utterances)
        ]
        per_unseen = max(1, self.config.n_utterances // self.config.n_speakers)
        index = self.config.n_utterances
        for speaker in unseen:
            for _ in range(per_unseen):
                utterances.append(self._utterance(index, speaker, "unseen"))
                index += 1

        train_frames = np.concatenate([u.mel for u in utterances if u.split == "train"], axis=0)
        encoder = ToyEncoder(train_frames.mean(axis=0), self.config.speaker_embedding_dim, self.config.seed)
        locales = locale_names(self.config.n_locales)
        corpus = Corpus(
            utterances=utterances,
            phoneme_inventory=phoneme_inventory(self.config.n_phonemes),
            locales=locales,
            speakers={
                s.speaker_id: {"locale": s.locale, "unseen": s.unseen, "base_f0": float(np.exp(s.base_log_f0))}
                for s in self.speakers
            },
            encoder_stats=encoder.stats(),
            config=self.config.to_dict(),
        )
        logger.info(f"Generated {len(utterances)} utterances for {len(seen)} training and "
                    f"{len(unseen)} unseen speakers over {len(locales)} locales")
        return corpus

    def run(self, dataset_dir: str) -> str:
        return DatasetStore(dataset_dir).save(self.generate())


def gen_corpus(config: Dict[str, Any]) -> Corpus:
    return SynthCorpusGenerator(SynthConfig.from_config(config)).generate()
