from types import SimpleNamespace

import numpy as np
import pytest

from bundle import speaker_table_from_corpus, training_examples
from conditioning import ConditionBuilder, DatasetStore
from config import load_config
from flow import FlowModel, train
from modes import mode_variants
from speakergen import SpeakerGenerator
from synthworld import ToyEncoder, gen_corpus
from tests.helpers import SMALL_OVERRIDES


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_config():
    return load_config(None, **SMALL_OVERRIDES)


@pytest.fixture
def small_corpus(small_config):
    return gen_corpus(small_config)


@pytest.fixture
def dataset_dir(tmp_path, small_corpus):
    path = tmp_path / "dataset"
    DatasetStore(str(path)).save(small_corpus)
    return path


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.conf"
    path.write_text("".join(f"{key} = {value}\n" for key, value in SMALL_OVERRIDES.items()))
    return path


@pytest.fixture(scope="session")
def trained_world():
    """Default synthetic corpus with a trained flow and speaker generator."""
    config = load_config(None, flow_steps=4, hidden_channels=32, epochs=10, learning_rate=3e-3)
    corpus = gen_corpus(config)
    encoder = ToyEncoder.from_stats(corpus.encoder_stats)
    builder = ConditionBuilder.create(
        n_phonemes=len(corpus.phoneme_inventory),
        n_accents=len(corpus.locales),
        phoneme_dim=config["phoneme_embedding_dim"],
        accent_dim=config["accent_embedding_dim"],
        speaker_dim=encoder.embedding_dim,
        seed=config["seed"],
        encoder=encoder,
    )
    builder.set_speaker_table(speaker_table_from_corpus(corpus, encoder))
    profile = mode_variants("vc")
    examples = training_examples(corpus.split("train"), builder, profile)
    model = FlowModel(corpus.mel_bins, builder.width, config["flow_steps"], config["hidden_channels"],
                      config["kernel_size"], config["log_scale_clamp"], seed=config["seed"])
    report = train(model, examples, config)

    speaker_ids = corpus.speaker_ids()
    pool = np.stack([builder.speaker_table[s] for s in speaker_ids])
    pool_locales = [corpus.speaker_locale(s) for s in speaker_ids]
    generator = SpeakerGenerator(corpus.locales, encoder.embedding_dim, seed=config["seed"])
    history = generator.train(pool, pool_locales, epochs=config["speakergen_epochs"],
                              learning_rate=config["speakergen_learning_rate"])
    return SimpleNamespace(
        config=config, corpus=corpus, encoder=encoder, builder=builder, profile=profile,
        model=model, report=report, speaker_ids=speaker_ids, pool=pool, pool_locales=pool_locales,
        generator=generator, speakergen_history=history,
    )
