import logging
from typing import Dict, Sequence

import numpy as np

from errors import ConditioningError

logger = logging.getLogger(__name__)


class ToyEncoder:
    """Speaker encoder for synthetic corpora.

    embedding = normalize(Q @ (mean_t(mel) - global_mean)), with Q a fixed
    seeded (embedding_dim, mel_bins) matrix with orthonormal columns when
    embedding_dim >= mel_bins.
    """

    def __init__(self, global_mean: np.ndarray, embedding_dim: int, seed: int):
        self.global_mean = np.asarray(global_mean, dtype=np.float64)
        if self.global_mean.ndim != 1:
            raise ConditioningError(f"global_mean must be a vector, got shape {self.global_mean.shape}")
        self.mel_bins = self.global_mean.shape[0]
        self.embedding_dim = embedding_dim
        self.seed = seed
        rng = np.random.default_rng([seed, 13])
        gaussian = rng.standard_normal((embedding_dim, self.mel_bins))
        if embedding_dim >= self.mel_bins:
            q, r = np.linalg.qr(gaussian)
            self.projection = q * np.sign(np.diag(r))
        else:
            self.projection = gaussian / np.sqrt(embedding_dim)

    @classmethod
    def from_stats(cls, stats: Dict[str, object]) -> "ToyEncoder":
        try:
            return cls(np.asarray(stats["global_mean"]), int(stats["embedding_dim"]), int(stats["seed"]))
        except KeyError as e:
            raise ConditioningError(f"Encoder statistics are missing {e}") from e

    def stats(self) -> Dict[str, object]:
        return {
            "global_mean": [float(v) for v in self.global_mean],
            "embedding_dim": self.embedding_dim,
            "seed": self.seed,
        }

    def encode(self, mel: np.ndarray) -> np.ndarray:
        mel = np.asarray(mel, dtype=np.float64)
        if mel.ndim != 2 or mel.shape[0] == 0:
            raise ConditioningError(f"Cannot encode an empty utterance (shape {mel.shape})")
        if mel.shape[1] != self.mel_bins:
            raise ConditioningError(f"Encoder expects {self.mel_bins} mel bins, got {mel.shape[1]}")
        embedding = self.projection @ (mel.mean(axis=0) - self.global_mean)
        norm = np.linalg.norm(embedding)
        if norm == 0:
            logger.warning("Utterance mean equals the corpus mean, returning a zero embedding")
            return embedding
        return embedding / norm

    def encode_many(self, mels: Sequence[np.ndarray]) -> np.ndarray:
        return np.stack([self.encode(m) for m in mels])

    def centroid(self, mels: Sequence[np.ndarray]) -> np.ndarray:
        """L2-normalized mean embedding of several utterances."""
        if len(mels) == 0:
            raise ConditioningError("Centroid needs at least one utterance")
        mean = self.encode_many(mels).mean(axis=0)
        norm = np.linalg.norm(mean)
        return mean / norm if norm > 0 else mean


def toy_encode(mel: np.ndarray, stats: Dict[str, object]) -> np.ndarray:
    return ToyEncoder.from_stats(stats).encode(mel)
