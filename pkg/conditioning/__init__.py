from .condition_builder import (
    Utterance, ConditionSet, ConditionBuilder, normalize_f0, upsample_phonemes,
    frame_condition_matrix, condition_width, build_condition_set,
)
from .dataset_store import Corpus, DatasetStore, load_corpus, save_corpus, read_tensor, write_tensor

__all__ = [
    'Utterance', 'ConditionSet', 'ConditionBuilder', 'normalize_f0', 'upsample_phonemes',
    'frame_condition_matrix', 'condition_width', 'build_condition_set',
    'Corpus', 'DatasetStore', 'load_corpus', 'save_corpus', 'read_tensor', 'write_tensor',
]
