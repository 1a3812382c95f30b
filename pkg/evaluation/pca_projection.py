import logging
from dataclasses import dataclass

import numpy as np

from config import PCA_VARIANCE_TARGET
from errors import ConfigError, DataError

logger = logging.getLogger(__name__)


@dataclass
class PcaResult:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    explained_ratio: np.ndarray
    k: int
    coordinates: np.ndarray

    def project(self, embeddings: np.ndarray, n_components: int = None) -> np.ndarray:
        basis = self.components if n_components is None else self.components[:, :n_components]
        return (np.asarray(embeddings, dtype=np.float64) - self.mean) @ basis

    def reconstruct(self, scores: np.ndarray) -> np.ndarray:
        scores = np.asarray(scores, dtype=np.float64)
        return scores @ self.components[:, :scores.shape[1]].T + self.mean


def pca_fit(embeddings, variance_target: float = PCA_VARIANCE_TARGET) -> PcaResult:
    """Eigendecomposition of the covariance of mean-centered embeddings.

    Components are columns sorted by decreasing variance, each signed so its
    largest-magnitude coordinate is positive. k is the smallest number of
    components whose cumulative explained ratio reaches `variance_target`.
    """
    data = np.asarray(embeddings, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise DataError(f"PCA needs at least 2 embeddings, got shape {data.shape}")
    if not 0 < variance_target <= 1:
        raise ConfigError(f"variance_target must be in (0, 1], got {variance_target}")

    mean = data.mean(axis=0)
    centered = data - mean
    covariance = centered.T @ centered / data.shape[0]
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]
    total = eigenvalues.sum()
    if total <= 1e-12 * max(1.0, float(np.abs(data).max())) ** 2:
        raise DataError("PCA input has zero variance (k = 0)")

    pivots = np.argmax(np.abs(eigenvectors), axis=0)
    signs = np.sign(eigenvectors[pivots, np.arange(eigenvectors.shape[1])])
    eigenvectors = eigenvectors * np.where(signs == 0, 1.0, signs)

    ratio = eigenvalues / total
    cumulative = np.cumsum(ratio)
    k = int(np.searchsorted(cumulative, variance_target - 1e-12) + 1)
    k = min(k, len(ratio))

    coordinates = centered @ eigenvectors[:, :2]
    if coordinates.shape[1] < 2:
        coordinates = np.hstack([coordinates, np.zeros((coordinates.shape[0], 2 - coordinates.shape[1]))])
    logger.info(f"PCA on {data.shape[0]} embeddings: {k} components explain {cumulative[k - 1]:.3f} of the variance")
    return PcaResult(mean, eigenvectors, eigenvalues, ratio, k, coordinates)
