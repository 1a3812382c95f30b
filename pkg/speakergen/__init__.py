from .speaker_generator import (
    GmmSpec, SpeakerGenerator, mixture_log_likelihood, sample_speakers, sample_speaker,
    speakergen_forward, speakergen_train, embedding_records, save_embeddings_json, load_embeddings_json,
)

__all__ = [
    'GmmSpec', 'SpeakerGenerator', 'mixture_log_likelihood', 'sample_speakers', 'sample_speaker',
    'speakergen_forward', 'speakergen_train', 'embedding_records', 'save_embeddings_json', 'load_embeddings_json',
]
