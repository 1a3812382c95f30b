from .synth_corpus_generator import SynthConfig, SynthSpeaker, SynthCorpusGenerator, gen_corpus, phoneme_inventory, locale_names
from .toy_encoder import ToyEncoder, toy_encode

__all__ = [
    'SynthConfig', 'SynthSpeaker', 'SynthCorpusGenerator', 'gen_corpus', 'phoneme_inventory', 'locale_names',
    'ToyEncoder', 'toy_encode',
]
