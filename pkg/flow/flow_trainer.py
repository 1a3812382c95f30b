import logging
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from config import ACTNORM_DATA_INIT, BATCH_SIZE, EPOCHS, LOG_DIR, SEED
from diffcore import AdamOptimizer, Tensor, backward, no_grad, ops
from errors import NumericError, ShapeError, TrainingAborted
from .flow_model import FlowModel

os.makedirs(LOG_DIR, exist_ok=True)
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(os.path.join(LOG_DIR, "flow_training.log"), mode='a'),
    ]
)
logger = logging.getLogger(__name__)


@dataclass
class TrainingExample:
    utt_id: str
    mel: np.ndarray
    cond: np.ndarray

    @property
    def elements(self) -> int:
        return int(self.mel.size)


@dataclass
class EpochRecord:
    epoch: int
    train_nll: float
    eval_nll: Optional[float]
    steps: int
    skipped_steps: int


@dataclass
class TrainingReport:
    initial_nll: float
    initial_eval_nll: Optional[float] = None
    epochs: List[EpochRecord] = field(default_factory=list)
    step_count: int = 0

    @property
    def final_nll(self) -> float:
        return self.epochs[-1].train_nll if self.epochs else self.initial_nll

    def rows(self) -> List[Dict[str, object]]:
        return [
            {
                "epoch": record.epoch,
                "train_nll": record.train_nll,
                "eval_nll": "" if record.eval_nll is None else record.eval_nll,
                "steps": record.steps,
                "skipped_steps": record.skipped_steps,
            }
            for record in self.epochs
        ]

    def summary(self) -> Dict[str, object]:
        return {
            "initial_nll": self.initial_nll,
            "final_nll": self.final_nll,
            "epochs": len(self.epochs),
            "step_count": self.step_count,
        }


class FlowTrainer:
    """Maximum-likelihood training of a FlowModel with Adam.

    One graph per batch; the loss is the batch NLL in nats per mel element.
    Batch order is a seeded shuffle per epoch, so a run is a pure function
    of (model init, data, config).
    """

    def __init__(self, model: FlowModel, optimizer: Optional[AdamOptimizer] = None,
                 epochs: int = EPOCHS, batch_size: int = BATCH_SIZE, seed: int = SEED,
                 actnorm_data_init: bool = ACTNORM_DATA_INIT):
        if batch_size < 1:
            raise ShapeError(f"batch_size must be >= 1, got {batch_size}")
        self.model = model
        self.optimizer = optimizer if optimizer is not None else AdamOptimizer()
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.actnorm_data_init = actnorm_data_init
        self.params = model.parameters()
        AdamOptimizer.parameter_names(self.params)

    def _batches(self, examples: Sequence[TrainingExample], epoch: int) -> List[List[TrainingExample]]:
        order = np.random.default_rng([self.seed, epoch]).permutation(len(examples))
        return [
            [examples[i] for i in order[start:start + self.batch_size]]
            for start in range(0, len(order), self.batch_size)
        ]

    def _snapshot(self) -> Dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.params}

    def _restore(self, snapshot: Dict[str, np.ndarray]) -> None:
        for p in self.params:
            p.data = snapshot[p.name].copy()

    def batch_loss(self, batch: Sequence[TrainingExample]) -> Tensor:
        total = None
        elements = 0
        for example in batch:
            utt_nll = self.model.nll(example.mel, example.cond)
            total = utt_nll if total is None else ops.add(total, utt_nll)
            elements += example.elements
        return ops.scale(total, 1.0 / elements)

    def evaluate(self, examples: Sequence[TrainingExample]) -> float:
        """Mean NLL per element over `examples`, without recording a graph."""
        total, elements = 0.0, 0
        with no_grad():
            for example in examples:
                total += self.model.nll(example.mel, example.cond).item()
                elements += example.elements
        return total / elements

    def train(self, examples: Sequence[TrainingExample],
              eval_examples: Optional[Sequence[TrainingExample]] = None) -> TrainingReport:
        if not examples:
            raise ShapeError("Training set is empty")
        eval_examples = list(eval_examples or [])

        if self.actnorm_data_init and not self.model.actnorm_initialized:
            first_batch = self._batches(examples, 0)[0]
            self.model.initialize_actnorm([(ex.mel, ex.cond) for ex in first_batch])

        report = TrainingReport(
            initial_nll=self.evaluate(examples),
            initial_eval_nll=self.evaluate(eval_examples) if eval_examples else None,
        )
        logger.info(f"Initial NLL {report.initial_nll:.4f} nats/element over {len(examples)} utterances")

        last_good = self._snapshot()
        for epoch in range(1, self.epochs + 1):
            start_time = time.time()
            skipped_before = self.optimizer.skipped_steps
            weighted_loss, elements, steps = 0.0, 0, 0
            for batch in self._batches(examples, epoch):
                for p in self.params:
                    p.zero_grad()
                try:
                    loss = self.batch_loss(batch)
                    loss_value = loss.item()
                    if not np.isfinite(loss_value):
                        raise NumericError(f"non-finite loss {loss_value}")
                    backward(loss)
                except NumericError as e:
                    self._restore(last_good)
                    logger.error(f"Training aborted in epoch {epoch} after {steps} steps: {e}")
                    raise TrainingAborted(f"Training aborted in epoch {epoch}: {e}", report=report) from e
                if self.optimizer.step(self.params):
                    steps += 1
                batch_elements = sum(ex.elements for ex in batch)
                weighted_loss += loss_value * batch_elements
                elements += batch_elements

            record = EpochRecord(
                epoch=epoch,
                train_nll=weighted_loss / elements,
                eval_nll=self.evaluate(eval_examples) if eval_examples else None,
                steps=steps,
                skipped_steps=self.optimizer.skipped_steps - skipped_before,
            )
            report.epochs.append(record)
            last_good = self._snapshot()
            eval_text = "" if record.eval_nll is None else f", eval NLL {record.eval_nll:.4f}"
            logger.info(f"Epoch {epoch}/{self.epochs}: train NLL {record.train_nll:.4f}{eval_text} "
                        f"({steps} steps, {time.time() - start_time:.1f}s)")

        report.step_count = self.optimizer.step_count
        return report


def train(model: FlowModel, examples: Sequence[TrainingExample], config: Dict[str, object],
          eval_examples: Optional[Sequence[TrainingExample]] = None,
          optimizer: Optional[AdamOptimizer] = None) -> TrainingReport:
    if optimizer is None:
        optimizer = AdamOptimizer(
            learning_rate=float(config["learning_rate"]),
            beta1=float(config["adam_beta1"]),
            beta2=float(config["adam_beta2"]),
            eps=float(config["adam_eps"]),
        )
    trainer = FlowTrainer(
        model,
        optimizer=optimizer,
        epochs=int(config["epochs"]),
        batch_size=int(config["batch_size"]),
        seed=int(config["seed"]),
        actnorm_data_init=bool(config["actnorm_data_init"]),
    )
    return trainer.train(examples, eval_examples)
