from .inference_modes import (
    ConditioningProfile, PROFILES, mode_variants, sample_latent, encode_latent,
    tts_synthesize, vc_convert, render_voices,
)

__all__ = [
    'ConditioningProfile', 'PROFILES', 'mode_variants', 'sample_latent', 'encode_latent',
    'tts_synthesize', 'vc_convert', 'render_voices',
]
