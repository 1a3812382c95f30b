"""Objective speaker-embedding metrics: SECS, variance sum, nearest neighbours."""
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from errors import DataError, ShapeError


def _as_matrix(embeddings, label: str) -> np.ndarray:
    matrix = np.asarray(embeddings, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    if matrix.ndim != 2:
        raise ShapeError(f"{label} must be a list of vectors, got shape {matrix.shape}")
    return matrix


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"Cannot compare embeddings of shape {a.shape} and {b.shape}")
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise DataError("Cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 1.0 - cosine_similarity(a, b)


def secs_scores(generated, target: np.ndarray) -> np.ndarray:
    generated = _as_matrix(generated, "generated")
    if generated.shape[0] == 0:
        raise DataError("SECS needs at least one generated embedding")
    return np.array([cosine_similarity(e, target) for e in generated])


def secs(generated, target: np.ndarray) -> float:
    """Mean over utterances of cosine(e_i, target)."""
    return float(secs_scores(generated, target).mean())


def secs_summary(generated, target: np.ndarray) -> Tuple[float, float]:
    scores = secs_scores(generated, target)
    return float(scores.mean()), float(scores.std())


def variance_sum(embeddings) -> float:
    """Per-dimension population variance, summed over dimensions."""
    matrix = _as_matrix(embeddings, "embeddings")
    if matrix.shape[0] < 2:
        raise DataError(f"variance_sum needs at least 2 embeddings, got {matrix.shape[0]}")
    return float(matrix.var(axis=0).sum())


def _distances(query: np.ndarray, pool: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(pool, axis=1)
    query_norm = np.linalg.norm(query)
    if query_norm == 0 or np.any(norms == 0):
        raise DataError("Cosine distance is undefined for a zero vector")
    return 1.0 - np.clip(pool @ query / (norms * query_norm), -1.0, 1.0)


def nearest_neighbor(query: np.ndarray, pool_ids: Sequence[str], pool) -> Tuple[str, float]:
    """Closest pool member by cosine distance; ties go to the lowest id."""
    pool = _as_matrix(pool, "pool")
    if len(pool_ids) == 0 or pool.shape[0] == 0:
        raise DataError("Nearest neighbour search needs a nonempty pool")
    if len(pool_ids) != pool.shape[0]:
        raise ShapeError(f"{len(pool_ids)} ids for {pool.shape[0]} pool embeddings")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != pool.shape[1:]:
        raise ShapeError(f"Query of shape {query.shape} against pool of dimension {pool.shape[1]}")
    distances = _distances(query, pool)
    best = distances.min()
    winner = min(pool_ids[i] for i in np.flatnonzero(distances == best))
    return winner, float(best)


def nn2nn(nn_id: str, pool_ids: Sequence[str], pool) -> Tuple[str, float]:
    """Nearest neighbour of pool member `nn_id` within the rest of the pool."""
    pool = _as_matrix(pool, "pool")
    if nn_id not in pool_ids:
        raise DataError(f"'{nn_id}' is not in the pool")
    if len(pool_ids) < 2:
        raise DataError("NN2NN needs a pool of at least 2 speakers")
    position = list(pool_ids).index(nn_id)
    keep = [i for i in range(len(pool_ids)) if i != position]
    return nearest_neighbor(pool[position], [pool_ids[i] for i in keep], pool[keep])


@dataclass
class NewVoiceRow:
    voice_id: str
    nn_id: str
    nn_distance: float
    nn2nn_id: str
    nn2nn_distance: float

    @property
    def further(self) -> bool:
        return self.nn_distance > self.nn2nn_distance


@dataclass
class NewVoiceReport:
    rows: List[NewVoiceRow] = field(default_factory=list)

    @property
    def fraction(self) -> float:
        if not self.rows:
            return 0.0
        return sum(row.further for row in self.rows) / len(self.rows)

    def as_dicts(self) -> List[Dict[str, object]]:
        return [
            {
                "voice": row.voice_id,
                "nn": row.nn_id,
                "nn_distance": row.nn_distance,
                "nn2nn": row.nn2nn_id,
                "nn2nn_distance": row.nn2nn_distance,
                "further": int(row.further),
            }
            for row in self.rows
        ]


def new_voice_distance_report(new_ids: Sequence[str], new, pool_ids: Sequence[str], pool) -> NewVoiceReport:
    new = _as_matrix(new, "new voices")
    pool = _as_matrix(pool, "pool")
    if new.shape[0] == 0 or pool.shape[0] == 0:
        raise DataError("Distance report needs nonempty new and pool sets")
    if len(new_ids) != new.shape[0]:
        raise ShapeError(f"{len(new_ids)} ids for {new.shape[0]} new voices")
    report = NewVoiceReport()
    for voice_id, vector in zip(new_ids, new):
        nn_id, nn_distance = nearest_neighbor(vector, pool_ids, pool)
        second_id, second_distance = nn2nn(nn_id, pool_ids, pool)
        report.rows.append(NewVoiceRow(voice_id, nn_id, nn_distance, second_id, second_distance))
    return report
