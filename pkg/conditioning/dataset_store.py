"""Dataset container on disk.

    <dataset>/manifest.json     format, version, phoneme inventory, locales,
                                speakers, encoder statistics, generator
                                config and one entry per utterance
    <dataset>/<id>.mel.f32      mel frames, (frames, bins) row-major
    <dataset>/<id>.f0.f32       f0 in Hz per frame, 0 where unvoiced

Tensor files are headerless little-endian float32; their shapes live in the
manifest entry (`frames`, `bins`).
"""
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np

from config import LOG_DIR
from errors import ConditioningError, FormatError
from .condition_builder import Utterance

os.makedirs(LOG_DIR, exist_ok=True)
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(os.path.join(LOG_DIR, "dataset_store.log"), mode='a'),
    ]
)
logger = logging.getLogger(__name__)

DATASET_FORMAT = "nfvc-dataset"
DATASET_VERSION = 1
MANIFEST_NAME = "manifest.json"
TENSOR_DTYPE = np.dtype("<f4")


@dataclass
class Corpus:
    utterances: List[Utterance]
    phoneme_inventory: List[str]
    locales: List[str]
    speakers: Dict[str, Dict[str, Any]]
    encoder_stats: Dict[str, Any] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def mel_bins(self) -> int:
        for utt in self.utterances:
            if utt.mel is not None:
                return int(utt.mel.shape[1])
        raise ConditioningError("Corpus has no mel frames")

    def split(self, name: str) -> List[Utterance]:
        return [u for u in self.utterances if u.split == name]

    def speaker_ids(self, include_unseen: bool = False) -> List[str]:
        return sorted(s for s, info in self.speakers.items() if include_unseen or not info.get("unseen", False))

    def speaker_locale(self, speaker_id: str) -> int:
        if speaker_id not in self.speakers:
            raise ConditioningError(f"Unknown speaker '{speaker_id}'")
        return int(self.speakers[speaker_id]["locale"])

    def utterance(self, utt_id: str) -> Utterance:
        for utt in self.utterances:
            if utt.utt_id == utt_id:
                return utt
        raise ConditioningError(f"Unknown utterance '{utt_id}'")


def write_tensor(path: str, array: np.ndarray) -> None:
    np.ascontiguousarray(array, dtype=TENSOR_DTYPE).tofile(path)


def read_tensor(path: str, shape) -> np.ndarray:
    if not os.path.exists(path):
        raise FormatError(f"Tensor file not found: {path}")
    data = np.fromfile(path, dtype=TENSOR_DTYPE)
    expected = int(np.prod(shape))
    if data.size != expected:
        raise FormatError(f"{path}: expected {expected} float32 values, found {data.size}")
    return data.reshape(shape).astype(np.float64)


class DatasetStore:
    def __init__(self, dataset_dir: str):
        self.dataset_dir = dataset_dir
        self.manifest_path = os.path.join(dataset_dir, MANIFEST_NAME)

    def save(self, corpus: Corpus) -> str:
        os.makedirs(self.dataset_dir, exist_ok=True)
        entries = []
        for utt in corpus.utterances:
            utt.validate()
            if utt.mel is None:
                raise ConditioningError(f"{utt.utt_id}: cannot store an utterance without mel frames")
            mel_file = f"{utt.utt_id}.mel.f32"
            f0_file = f"{utt.utt_id}.f0.f32"
            write_tensor(os.path.join(self.dataset_dir, mel_file), utt.mel)
            write_tensor(os.path.join(self.dataset_dir, f0_file), utt.f0)
            entries.append({
                "id": utt.utt_id,
                "speaker": utt.speaker,
                "accent": corpus.locales[utt.accent],
                "phonemes": [corpus.phoneme_inventory[p] for p in utt.phonemes],
                "durations": [int(d) for d in utt.durations],
                "frames": utt.frames,
                "bins": int(utt.mel.shape[1]),
                "split": utt.split,
                "mel_file": mel_file,
                "f0_file": f0_file,
            })

        manifest = {
            "format": DATASET_FORMAT,
            "version": DATASET_VERSION,
            "phoneme_inventory": corpus.phoneme_inventory,
            "locales": corpus.locales,
            "speakers": corpus.speakers,
            "encoder": corpus.encoder_stats,
            "config": corpus.config,
            "utterances": entries,
        }
        with open(self.manifest_path, 'w', encoding='utf-8') as f:
            json.dump(manifest, f, ensure_ascii=False, indent=2, sort_keys=True)
        logger.info(f"Saved {len(entries)} utterances to {self.dataset_dir}")
        return self.manifest_path

    def load(self) -> Corpus:
        if not os.path.exists(self.manifest_path):
            raise FormatError(f"Dataset manifest not found: {self.manifest_path}")
        with open(self.manifest_path, 'r', encoding='utf-8') as f:
            try:
                manifest = json.load(f)
            except json.JSONDecodeError as e:
                raise FormatError(f"{self.manifest_path}: invalid JSON ({e})") from e
        if manifest.get("format") != DATASET_FORMAT:
            raise FormatError(f"{self.manifest_path}: not an {DATASET_FORMAT} manifest")
        if manifest.get("version") != DATASET_VERSION:
            raise FormatError(
                f"{self.manifest_path}: unsupported dataset version {manifest.get('version')} (expected {DATASET_VERSION})")

        inventory = manifest["phoneme_inventory"]
        locales = manifest["locales"]
        phoneme_index = {symbol: i for i, symbol in enumerate(inventory)}
        locale_index = {name: i for i, name in enumerate(locales)}
        utterances = []
        for entry in manifest["utterances"]:
            try:
                phonemes = [phoneme_index[symbol] for symbol in entry["phonemes"]]
                accent = locale_index[entry["accent"]]
            except KeyError as e:
                raise ConditioningError(f"{entry.get('id')}: unknown symbol {e}") from e
            frames, bins = int(entry["frames"]), int(entry["bins"])
            utt = Utterance(
                utt_id=entry["id"],
                phonemes=phonemes,
                durations=[int(d) for d in entry["durations"]],
                f0=read_tensor(os.path.join(self.dataset_dir, entry["f0_file"]), (frames,)),
                accent=accent,
                speaker=entry["speaker"],
                mel=read_tensor(os.path.join(self.dataset_dir, entry["mel_file"]), (frames, bins)),
                split=entry.get("split", "train"),
            )
            utt.validate()
            utterances.append(utt)
        logger.info(f"Loaded {len(utterances)} utterances from {self.dataset_dir}")
        return Corpus(
            utterances=utterances,
            phoneme_inventory=inventory,
            locales=locales,
            speakers=manifest["speakers"],
            encoder_stats=manifest.get("encoder", {}),
            config=manifest.get("config", {}),
        )


def load_corpus(dataset_dir: str) -> Corpus:
    return DatasetStore(dataset_dir).load()


def save_corpus(corpus: Corpus, dataset_dir: str) -> str:
    return DatasetStore(dataset_dir).save(corpus)
