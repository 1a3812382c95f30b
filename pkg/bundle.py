"""Everything a trained system needs, stored in one checkpoint file.

Tensor sections: flow/, optimizer/, tables/ (phoneme, accent, speaker) and
speakergen/. The JSON metadata carries hyperparameters, speaker and locale
order, phoneme inventory, toy encoder statistics and the config in force.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from conditioning import ConditionBuilder, Corpus, Utterance
from diffcore import AdamOptimizer
from errors import ConditioningError, FormatError
from flow import FlowModel, TrainingExample, load_checkpoint, save_checkpoint
from flow.checkpoint import split_section, with_prefix
from modes import ConditioningProfile
from speakergen import SpeakerGenerator
from synthworld import ToyEncoder

CHECKPOINT_KIND = "nfvc-model"


@dataclass
class ModelBundle:
    model: FlowModel
    builder: ConditionBuilder
    optimizer: AdamOptimizer
    speaker_ids: List[str]
    speaker_locales: Dict[str, int]
    locales: List[str]
    phoneme_inventory: List[str]
    encoder_stats: Dict[str, Any]
    config: Dict[str, Any]
    speaker_generator: Optional[SpeakerGenerator] = None
    training: Dict[str, Any] = field(default_factory=dict)

    @property
    def encoder(self) -> ToyEncoder:
        return ToyEncoder.from_stats(self.encoder_stats)

    def speaker_vector(self, speaker_id: str) -> np.ndarray:
        if speaker_id not in self.builder.speaker_table:
            raise ConditioningError(f"Unknown speaker '{speaker_id}', known speakers: {self.speaker_ids}")
        return self.builder.speaker_table[speaker_id].copy()

    def speaker_pool(self) -> np.ndarray:
        return np.stack([self.builder.speaker_table[s] for s in self.speaker_ids])

    def check_corpus(self, corpus: Corpus) -> None:
        if corpus.phoneme_inventory != self.phoneme_inventory or corpus.locales != self.locales:
            raise ConditioningError("Dataset phoneme inventory or locales do not match the checkpoint")
        if corpus.mel_bins != self.model.mel_bins:
            raise ConditioningError(f"Dataset has {corpus.mel_bins} mel bins, checkpoint expects {self.model.mel_bins}")


def speaker_table_from_corpus(corpus: Corpus, encoder: ToyEncoder) -> Dict[str, np.ndarray]:
    """Per-speaker normalized centroid of encoder embeddings of training utterances."""
    table = {}
    for speaker_id in corpus.speaker_ids():
        mels = [u.mel for u in corpus.utterances if u.speaker == speaker_id and u.split == "train"]
        if not mels:
            raise ConditioningError(f"Speaker '{speaker_id}' has no training utterances")
        table[speaker_id] = encoder.centroid(mels)
    return table


def training_examples(utterances: Sequence[Utterance], builder: ConditionBuilder, profile: ConditioningProfile,
                      speaker_source: str = "lookup") -> List[TrainingExample]:
    return [
        TrainingExample(utt.utt_id, utt.mel, builder.matrix(utt, speaker_source, profile.use_f0))
        for utt in utterances
    ]


def save_bundle(path: str, bundle: ModelBundle) -> str:
    metadata = {
        "kind": CHECKPOINT_KIND,
        "flow": bundle.model.hyperparameters(),
        "actnorm_initialized": bundle.model.actnorm_initialized,
        "optimizer": bundle.optimizer.state_metadata(),
        "speakers": bundle.speaker_ids,
        "speaker_locales": bundle.speaker_locales,
        "locales": bundle.locales,
        "phoneme_inventory": bundle.phoneme_inventory,
        "encoder": bundle.encoder_stats,
        "speakergen": None if bundle.speaker_generator is None else bundle.speaker_generator.hyperparameters(),
        "config": bundle.config,
        "training": bundle.training,
    }
    tensors = {}
    tensors.update(with_prefix(bundle.model.state_tensors(), "flow"))
    tensors.update(with_prefix(bundle.optimizer.state_tensors(), "optimizer"))
    tensors.update(with_prefix(bundle.builder.state_tensors(bundle.speaker_ids), "tables"))
    if bundle.speaker_generator is not None:
        tensors.update(with_prefix(bundle.speaker_generator.state_tensors(), "speakergen"))
    return save_checkpoint(path, metadata, tensors)


def load_bundle(path: str) -> ModelBundle:
    metadata, tensors = load_checkpoint(path)
    if metadata.get("kind") != CHECKPOINT_KIND:
        raise FormatError(f"{path}: not a model checkpoint (kind {metadata.get('kind')!r})")
    config = metadata["config"]
    model = FlowModel.from_state(metadata["flow"], split_section(tensors, "flow"),
                                 actnorm_initialized=bool(metadata.get("actnorm_initialized", True)))
    optimizer = AdamOptimizer(
        learning_rate=float(config["learning_rate"]),
        beta1=float(config["adam_beta1"]),
        beta2=float(config["adam_beta2"]),
        eps=float(config["adam_eps"]),
    )
    optimizer.load_state(metadata["optimizer"], split_section(tensors, "optimizer"))
    encoder_stats = metadata["encoder"]
    builder = ConditionBuilder.from_state(split_section(tensors, "tables"), metadata["speakers"],
                                          f0_mean_over=config["f0_mean_over"],
                                          encoder=ToyEncoder.from_stats(encoder_stats))
    generator = None
    if metadata.get("speakergen"):
        generator = SpeakerGenerator.from_state(metadata["speakergen"], split_section(tensors, "speakergen"))
    return ModelBundle(
        model=model,
        builder=builder,
        optimizer=optimizer,
        speaker_ids=list(metadata["speakers"]),
        speaker_locales={k: int(v) for k, v in metadata["speaker_locales"].items()},
        locales=list(metadata["locales"]),
        phoneme_inventory=list(metadata["phoneme_inventory"]),
        encoder_stats=encoder_stats,
        config=config,
        speaker_generator=generator,
        training=metadata.get("training", {}),
    )
