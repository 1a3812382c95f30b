import json
import os
from typing import Any, Dict, Optional

from errors import ConfigError

OUTPUT_DIR = "output"
LOG_DIR = "logs"
CONFIG_ECHO_NAME = "config_echo.txt"

SEED = 1234

# synthetic corpus
N_SPEAKERS = 8
N_UNSEEN_SPEAKERS = 0
N_LOCALES = 2
N_UTTERANCES = 200
MEL_BINS = 8
N_PHONEMES = 12
MIN_FRAMES = 20
MAX_FRAMES = 60
NOISE_STD = 0.1
SPEAKER_GAP = 2.0
BIAS_SCALE = 1.5
LOCALE_OFFSET = 0.75
PATTERN_SCALE = 1.0
F0_WEIGHT = 0.5
TEST_FRACTION = 0.1

# conditioning
PHONEME_EMBEDDING_DIM = 16
ACCENT_EMBEDDING_DIM = 8
SPEAKER_EMBEDDING_DIM = 256
F0_MEAN_OVER = "all"
SPEAKER_SOURCE = "lookup"

# flow
FLOW_STEPS = 8
HIDDEN_CHANNELS = 64
KERNEL_SIZE = 3
LOG_SCALE_CLAMP = 5.0
ACTNORM_DATA_INIT = True

# training
EPOCHS = 20
BATCH_SIZE = 8
LEARNING_RATE = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
TRAIN_PROFILE = "vc"

# inference
TEMPERATURE = 0.7

# speaker generator
GMM_COMPONENTS = 10
SPEAKERGEN_HIDDEN = 256
LOCALE_EMBEDDING_DIM = 8
STDDEV_FLOOR = 1e-3
SPEAKERGEN_EPOCHS = 300
SPEAKERGEN_LEARNING_RATE = 5e-3

# evaluation
PCA_VARIANCE_TARGET = 0.9
NEW_VOICE_COUNT = 120

DEFAULT_CONFIG: Dict[str, Any] = {
    "seed": SEED,
    "n_speakers": N_SPEAKERS,
    "n_unseen_speakers": N_UNSEEN_SPEAKERS,
    "n_locales": N_LOCALES,
    "n_utterances": N_UTTERANCES,
    "mel_bins": MEL_BINS,
    "n_phonemes": N_PHONEMES,
    "min_frames": MIN_FRAMES,
    "max_frames": MAX_FRAMES,
    "noise_std": NOISE_STD,
    "speaker_gap": SPEAKER_GAP,
    "bias_scale": BIAS_SCALE,
    "locale_offset": LOCALE_OFFSET,
    "pattern_scale": PATTERN_SCALE,
    "f0_weight": F0_WEIGHT,
    "test_fraction": TEST_FRACTION,
    "phoneme_embedding_dim": PHONEME_EMBEDDING_DIM,
    "accent_embedding_dim": ACCENT_EMBEDDING_DIM,
    "speaker_embedding_dim": SPEAKER_EMBEDDING_DIM,
    "f0_mean_over": F0_MEAN_OVER,
    "speaker_source": SPEAKER_SOURCE,
    "flow_steps": FLOW_STEPS,
    "hidden_channels": HIDDEN_CHANNELS,
    "kernel_size": KERNEL_SIZE,
    "log_scale_clamp": LOG_SCALE_CLAMP,
    "actnorm_data_init": ACTNORM_DATA_INIT,
    "epochs": EPOCHS,
    "batch_size": BATCH_SIZE,
    "learning_rate": LEARNING_RATE,
    "adam_beta1": ADAM_BETA1,
    "adam_beta2": ADAM_BETA2,
    "adam_eps": ADAM_EPS,
    "train_profile": TRAIN_PROFILE,
    "temperature": TEMPERATURE,
    "gmm_components": GMM_COMPONENTS,
    "speakergen_hidden": SPEAKERGEN_HIDDEN,
    "locale_embedding_dim": LOCALE_EMBEDDING_DIM,
    "stddev_floor": STDDEV_FLOOR,
    "speakergen_epochs": SPEAKERGEN_EPOCHS,
    "speakergen_learning_rate": SPEAKERGEN_LEARNING_RATE,
    "pca_variance_target": PCA_VARIANCE_TARGET,
    "new_voice_count": NEW_VOICE_COUNT,
}


def _coerce(key: str, value: Any) -> Any:
    default = DEFAULT_CONFIG[key]
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"Config key '{key}' expects true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"Config key '{key}' expects an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"Config key '{key}' expects a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"Config key '{key}' expects a string, got {value!r}")
    return value


def parse_config_text(text: str) -> Dict[str, Any]:
    overrides = {}
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"Line {line_no}: expected 'key = value', got {raw_line!r}")
        key, value_text = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULT_CONFIG:
            raise ConfigError(f"Unknown config key '{key}' (line {line_no})")
        try:
            value = json.loads(value_text)
        except json.JSONDecodeError:
            value = value_text
        overrides[key] = _coerce(key, value)
    return overrides


def load_config(path: Optional[str] = None, **overrides: Any) -> Dict[str, Any]:
    config = dict(DEFAULT_CONFIG)
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"Config file does not exist: {path}")
        with open(path, 'r', encoding='utf-8') as f:
            config.update(parse_config_text(f.read()))
    for key, value in overrides.items():
        if key not in DEFAULT_CONFIG:
            raise ConfigError(f"Unknown config key '{key}'")
        config[key] = _coerce(key, value)
    return config


def format_config(config: Dict[str, Any]) -> str:
    return "".join(f"{key} = {json.dumps(config[key])}\n" for key in sorted(config))


def write_config_echo(config: Dict[str, Any], output_dir: str) -> str:
    os.makedirs(output_dir, exist_ok=True)
    echo_path = os.path.join(output_dir, CONFIG_ECHO_NAME)
    with open(echo_path, 'w', encoding='utf-8') as f:
        f.write(format_config(config))
    return echo_path
