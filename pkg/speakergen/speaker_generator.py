import json
import logging
import os
import time
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config import (
    GMM_COMPONENTS, LOCALE_EMBEDDING_DIM, LOG_DIR, SEED, SPEAKERGEN_EPOCHS,
    SPEAKERGEN_HIDDEN, SPEAKERGEN_LEARNING_RATE, STDDEV_FLOOR,
)
from diffcore import AdamOptimizer, Tensor, backward, no_grad, ops
from errors import ConditioningError, DataError, ShapeError

os.makedirs(LOG_DIR, exist_ok=True)
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(os.path.join(LOG_DIR, "speaker_generation.log"), mode='a'),
    ]
)
logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GmmSpec:
    """Per-dimension mixture parameters, each of shape (dims, components)."""
    weights: np.ndarray
    means: np.ndarray
    stddevs: np.ndarray

    @property
    def dims(self) -> int:
        return self.weights.shape[0]

    @property
    def components(self) -> int:
        return self.weights.shape[1]

    def validate(self, floor: float = 0.0) -> None:
        if not (self.weights.shape == self.means.shape == self.stddevs.shape) or self.weights.ndim != 2:
            raise ShapeError(f"GMM parameter shapes disagree: {self.weights.shape}, {self.means.shape}, {self.stddevs.shape}")
        if np.any(self.weights < 0) or not np.allclose(self.weights.sum(axis=1), 1.0, atol=1e-6):
            raise DataError("GMM weights must lie on the simplex in every dimension")
        if np.any(self.stddevs < floor) or np.any(self.stddevs <= 0):
            raise DataError(f"GMM standard deviations must be positive and >= {floor}")

    def moments(self):
        """Closed-form per-dimension mixture mean and variance."""
        mean = (self.weights * self.means).sum(axis=1)
        second = (self.weights * (self.stddevs ** 2 + self.means ** 2)).sum(axis=1)
        return mean, second - mean ** 2


def mixture_log_likelihood(x: np.ndarray, log_weights: Tensor, means: Tensor, stddevs: Tensor) -> Tensor:
    """Mean over samples and dimensions of log sum_k w_k N(x | mu_k, sigma_k).

    x is (n, dims); the mixture tensors are (dims, components).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != means.shape[0]:
        raise ShapeError(f"Pool shape {x.shape} does not match {means.shape[0]} mixture dimensions")
    mu, sigma = means.data[None], stddevs.data[None]
    diff = (x[:, :, None] - mu) / sigma
    component = log_weights.data[None] - 0.5 * diff ** 2 - np.log(sigma) - 0.5 * LOG_2PI
    peak = component.max(axis=2, keepdims=True)
    total = peak + np.log(np.exp(component - peak).sum(axis=2, keepdims=True))
    resp = np.exp(component - total)
    count = x.shape[0] * x.shape[1]

    def backward_fn(g):
        scale = float(g) / count
        return (
            scale * resp.sum(axis=0),
            scale * (resp * diff / sigma).sum(axis=0),
            scale * (resp * (diff ** 2 - 1.0) / sigma).sum(axis=0),
        )

    return Tensor.from_op(np.asarray(total.mean()), (log_weights, means, stddevs), backward_fn, "mixture_log_likelihood")


class SpeakerGenerator:
    """Locale-conditioned network emitting a GMM per embedding dimension.

    locale -> learned locale embedding -> two tanh layers -> per-dimension
    mixture logits, means and pre-softplus scales.
    """

    def __init__(self, locales: Sequence[str], embedding_dim: int, components: int = GMM_COMPONENTS,
                 hidden: int = SPEAKERGEN_HIDDEN, locale_dim: int = LOCALE_EMBEDDING_DIM,
                 stddev_floor: float = STDDEV_FLOOR, seed: int = SEED):
        if not locales:
            raise ConditioningError("Speaker generator needs at least one locale")
        self.locales = list(locales)
        self.embedding_dim = embedding_dim
        self.components = components
        self.hidden = hidden
        self.locale_dim = locale_dim
        self.stddev_floor = stddev_floor
        self.seed = seed

        rng = np.random.default_rng([seed, 11])
        outputs = embedding_dim * components

        def dense(name: str, fan_in: int, fan_out: int, zero: bool = False) -> Tensor:
            values = np.zeros((fan_in, fan_out)) if zero else rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, fan_out))
            return Tensor(values, requires_grad=True, name=f"speakergen.{name}")

        def bias(name: str, size: int) -> Tensor:
            return Tensor(np.zeros(size), requires_grad=True, name=f"speakergen.{name}")

        self.locale_table = Tensor(rng.standard_normal((len(self.locales), locale_dim)),
                                   requires_grad=True, name="speakergen.locale_table")
        self.hidden1_weight = dense("hidden1_weight", locale_dim, hidden)
        self.hidden1_bias = bias("hidden1_bias", hidden)
        self.hidden2_weight = dense("hidden2_weight", hidden, hidden)
        self.hidden2_bias = bias("hidden2_bias", hidden)
        self.logits_weight = dense("logits_weight", hidden, outputs, zero=True)
        self.logits_bias = bias("logits_bias", outputs)
        self.means_weight = dense("means_weight", hidden, outputs, zero=True)
        self.means_bias = Tensor(rng.standard_normal(outputs), requires_grad=True, name="speakergen.means_bias")
        self.scales_weight = dense("scales_weight", hidden, outputs, zero=True)
        self.scales_bias = bias("scales_bias", outputs)

    def parameters(self) -> List[Tensor]:
        return [
            self.locale_table, self.hidden1_weight, self.hidden1_bias, self.hidden2_weight, self.hidden2_bias,
            self.logits_weight, self.logits_bias, self.means_weight, self.means_bias,
            self.scales_weight, self.scales_bias,
        ]

    def hyperparameters(self) -> Dict[str, Any]:
        return {
            "locales": self.locales,
            "embedding_dim": self.embedding_dim,
            "components": self.components,
            "hidden": self.hidden,
            "locale_dim": self.locale_dim,
            "stddev_floor": self.stddev_floor,
            "seed": self.seed,
        }

    def locale_index(self, locale) -> int:
        if isinstance(locale, (int, np.integer)) and not isinstance(locale, bool):
            if 0 <= int(locale) < len(self.locales):
                return int(locale)
        elif locale in self.locales:
            return self.locales.index(locale)
        raise ConditioningError(f"Unknown locale '{locale}', known locales: {self.locales}")

    def _mixture_tensors(self, locale):
        onehot = np.zeros((1, len(self.locales)))
        onehot[0, self.locale_index(locale)] = 1.0
        shape = (self.embedding_dim, self.components)
        x = ops.matmul(Tensor(onehot), self.locale_table)
        h = ops.tanh(ops.add(ops.matmul(x, self.hidden1_weight), self.hidden1_bias))
        h = ops.tanh(ops.add(ops.matmul(h, self.hidden2_weight), self.hidden2_bias))
        logits = ops.reshape(ops.add(ops.matmul(h, self.logits_weight), self.logits_bias), shape)
        means = ops.reshape(ops.add(ops.matmul(h, self.means_weight), self.means_bias), shape)
        raw_scales = ops.reshape(ops.add(ops.matmul(h, self.scales_weight), self.scales_bias), shape)
        stddevs = ops.add_scalar(ops.softplus(raw_scales), self.stddev_floor)
        return ops.log_softmax(logits), means, stddevs

    def forward(self, locale) -> GmmSpec:
        with no_grad():
            log_weights, means, stddevs = self._mixture_tensors(locale)
        return GmmSpec(np.exp(log_weights.data), means.numpy(), stddevs.numpy())

    def initialize_from_pool(self, pool: np.ndarray) -> None:
        """Spread component means over the pool's per-dimension range."""
        pool = np.asarray(pool, dtype=np.float64)
        mean, std = pool.mean(axis=0), pool.std(axis=0)
        offsets = np.linspace(-1.5, 1.5, self.components) if self.components > 1 else np.zeros(1)
        self.means_bias.data = (mean[:, None] + std[:, None] * offsets[None, :]).reshape(-1)
        target = np.maximum(std, self.stddev_floor)[:, None] * np.ones((1, self.components))
        # inverse softplus of (target - floor)
        excess = np.maximum(target - self.stddev_floor, 1e-6)
        self.scales_bias.data = (excess + np.log(-np.expm1(-excess))).reshape(-1)
        self.means_weight.data = np.zeros_like(self.means_weight.data)
        self.scales_weight.data = np.zeros_like(self.scales_weight.data)

    def _check_pool(self, pool: np.ndarray, locales: Sequence) -> Dict[int, np.ndarray]:
        pool = np.asarray(pool, dtype=np.float64)
        if pool.ndim != 2 or pool.shape[0] == 0:
            raise DataError(f"Speaker pool is empty (shape {pool.shape})")
        if pool.shape[1] != self.embedding_dim:
            raise ShapeError(f"Pool embeddings have dimension {pool.shape[1]}, expected {self.embedding_dim}")
        if len(locales) != pool.shape[0]:
            raise ShapeError(f"{len(locales)} locale labels for {pool.shape[0]} pool embeddings")
        indices = np.array([self.locale_index(l) for l in locales])
        groups = {}
        for index in sorted(set(indices.tolist())):
            members = pool[indices == index]
            if members.shape[0] < 2:
                raise DataError(f"Locale '{self.locales[index]}' has {members.shape[0]} speakers, need at least 2")
            groups[index] = members
        return groups

    def pool_log_likelihood(self, groups: Dict[int, np.ndarray]) -> Tensor:
        total = None
        for index, members in groups.items():
            log_weights, means, stddevs = self._mixture_tensors(index)
            term = mixture_log_likelihood(members, log_weights, means, stddevs)
            total = term if total is None else ops.add(total, term)
        return ops.scale(total, 1.0 / len(groups))

    def log_likelihood(self, pool: np.ndarray, locales: Sequence) -> float:
        with no_grad():
            return self.pool_log_likelihood(self._check_pool(pool, locales)).item()

    def train_step(self, groups: Dict[int, np.ndarray], optimizer: AdamOptimizer) -> float:
        params = self.parameters()
        for p in params:
            p.zero_grad()
        objective = self.pool_log_likelihood(groups)
        loss = ops.neg(objective)
        backward(loss)
        optimizer.step(params)
        return objective.item()

    def train(self, pool: np.ndarray, locales: Sequence, epochs: int = SPEAKERGEN_EPOCHS,
              learning_rate: float = SPEAKERGEN_LEARNING_RATE, data_init: bool = True,
              optimizer: Optional[AdamOptimizer] = None) -> List[float]:
        """Maximize the mean per-dimension mixture log-likelihood of the pool.

        Returns the log-likelihood before training followed by one value per
        epoch (each epoch is one full-pool step).
        """
        groups = self._check_pool(pool, locales)
        if data_init:
            self.initialize_from_pool(np.asarray(pool, dtype=np.float64))
        optimizer = optimizer if optimizer is not None else AdamOptimizer(learning_rate=learning_rate)
        start_time = time.time()
        history = [self.log_likelihood(pool, locales)]
        for epoch in range(1, epochs + 1):
            self.train_step(groups, optimizer)
            history.append(self.log_likelihood(pool, locales))
            if epoch % 50 == 0 or epoch == epochs:
                logger.info(f"Speaker generator epoch {epoch}/{epochs}: log-likelihood {history[-1]:.4f}")
        logger.info(f"Speaker generator trained on {len(pool)} embeddings over {len(groups)} locales "
                    f"in {time.time() - start_time:.1f}s ({history[0]:.4f} -> {history[-1]:.4f})")
        return history

    def state_tensors(self) -> Dict[str, np.ndarray]:
        return {p.name.split(".", 1)[1]: p.data for p in self.parameters()}

    @classmethod
    def from_state(cls, hyperparameters: Dict[str, Any], tensors: Dict[str, np.ndarray]) -> "SpeakerGenerator":
        generator = cls(
            locales=hyperparameters["locales"],
            embedding_dim=int(hyperparameters["embedding_dim"]),
            components=int(hyperparameters["components"]),
            hidden=int(hyperparameters["hidden"]),
            locale_dim=int(hyperparameters["locale_dim"]),
            stddev_floor=float(hyperparameters["stddev_floor"]),
            seed=int(hyperparameters.get("seed", SEED)),
        )
        for param in generator.parameters():
            key = param.name.split(".", 1)[1]
            if key not in tensors:
                raise ShapeError(f"Checkpoint is missing speaker generator tensor '{key}'")
            value = np.asarray(tensors[key], dtype=np.float64)
            if value.shape != param.shape:
                raise ShapeError(f"Speaker generator tensor '{key}' has shape {value.shape}, expected {param.shape}")
            param.data = value.copy()
        return generator


def sample_speakers(spec: GmmSpec, count: int, seed: int) -> np.ndarray:
    """Draw `count` embeddings, each dimension from its own mixture."""
    if count < 0:
        raise DataError(f"count must be >= 0, got {count}")
    rng = np.random.default_rng(seed)
    if count == 0:
        return np.zeros((0, spec.dims))
    cumulative = np.cumsum(spec.weights, axis=1)
    cumulative[:, -1] = 1.0
    draws = rng.random((count, spec.dims))
    chosen = np.minimum((draws[:, :, None] >= cumulative[None]).sum(axis=2), spec.components - 1)
    dims = np.arange(spec.dims)[None, :]
    noise = rng.standard_normal((count, spec.dims))
    return spec.means[dims, chosen] + spec.stddevs[dims, chosen] * noise


def sample_speaker(spec: GmmSpec, seed: int) -> np.ndarray:
    return sample_speakers(spec, 1, seed)[0]


def speakergen_forward(generator: SpeakerGenerator, locale) -> GmmSpec:
    return generator.forward(locale)


def speakergen_train(generator: SpeakerGenerator, pool: np.ndarray, locales: Sequence,
                     config: Dict[str, Any]) -> List[float]:
    return generator.train(pool, locales, epochs=int(config["speakergen_epochs"]),
                           learning_rate=float(config["speakergen_learning_rate"]))


def embedding_records(embeddings: np.ndarray, locale: str, prefix: str = "newvoice") -> List[Dict[str, Any]]:
    return [
        {"id": f"{prefix}_{i:03d}", "locale": locale, "embedding": [float(v) for v in vector]}
        for i, vector in enumerate(np.asarray(embeddings))
    ]


def save_embeddings_json(path: str, records: List[Dict[str, Any]]) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(records, f, ensure_ascii=False, indent=2)
    logger.info(f"Saved {len(records)} speaker embeddings to {path}")
    return path


def load_embeddings_json(path: str) -> List[Dict[str, Any]]:
    if not os.path.exists(path):
        raise DataError(f"Embeddings file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            records = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(records, list) or any("embedding" not in r for r in records):
        raise DataError(f"{path}: expected a list of records with an 'embedding' field")
    return records
