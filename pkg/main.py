import os
import sys
import json
import time
import argparse
import logging
from datetime import datetime
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import LOG_DIR, OUTPUT_DIR, load_config, write_config_echo
from errors import ConditioningError, ConfigError, DataError, NfvcError, TrainingAborted

from bundle import ModelBundle, load_bundle, save_bundle, speaker_table_from_corpus, training_examples
from conditioning import ConditionBuilder, Corpus, DatasetStore, Utterance, write_tensor
from diffcore import AdamOptimizer
from evaluation import (
    new_voice_distance_report, pca_fit, secs_scores, variance_sum, write_csv, write_scatter_svg,
    cosine_similarity,
)
from flow import FlowModel, train
from modes import PROFILES, mode_variants, render_voices, tts_synthesize, vc_convert
from speakergen import (
    SpeakerGenerator, embedding_records, load_embeddings_json, sample_speakers, save_embeddings_json,
)
from synthworld import SynthConfig, SynthCorpusGenerator, ToyEncoder

METRICS = ("secs", "variance", "nn", "pca")
CHECKPOINT_NAME = "model.nfvc"
NLL_CSV_NAME = "training_nll.csv"


def setup_logging(log_dir=LOG_DIR):
    os.makedirs(log_dir, exist_ok=True)

    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_file = os.path.join(log_dir, f"nfvc_{timestamp}.log")

    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    root = logging.getLogger()
    root.setLevel(logging.INFO)
    # component modules already configured their own file handlers
    for handler in [h for h in root.handlers if getattr(h, "nfvc_cli", False)]:
        root.removeHandler(handler)
        handler.close()
    for handler in (logging.FileHandler(log_file), logging.StreamHandler()):
        handler.setFormatter(formatter)
        handler.nfvc_cli = True
        root.addHandler(handler)

    return logging.getLogger("nfvc")


def parse_arguments(argv=None):
    parser = argparse.ArgumentParser(description="Conditional normalizing-flow voice engine")
    parser.add_argument("--config", type=str, default=None, help="key = value config file (defaults from config.py)")
    parser.add_argument("--log-dir", type=str, default=LOG_DIR, help="Log directory")
    subparsers = parser.add_subparsers(dest="command", required=True)

    data_gen = subparsers.add_parser("data-gen", help="Generate a synthetic corpus")
    data_gen.add_argument("--output-dir", type=str, default=os.path.join(OUTPUT_DIR, "dataset"), help="Dataset directory")

    train_parser = subparsers.add_parser("train", help="Train the flow and the speaker generator")
    train_parser.add_argument("--dataset", type=str, required=True, help="Dataset directory")
    train_parser.add_argument("--output-dir", type=str, default=os.path.join(OUTPUT_DIR, "train"), help="Output directory")
    train_parser.add_argument("--resume", type=str, default=None, help="Checkpoint to continue training from")

    for name, help_text in (("tts", "Synthesize from a prior sample"), ("vc", "Convert an utterance to another voice")):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--checkpoint", type=str, required=True, help="Model checkpoint")
        sub.add_argument("--dataset", type=str, required=True, help="Dataset providing the utterance")
        sub.add_argument("--utterance", type=str, required=True, help="Utterance id (text, durations, f0)")
        sub.add_argument("--speaker", type=str, default=None, help="Target speaker id")
        sub.add_argument("--embeddings", type=str, default=None, help="Embeddings JSON from gen-speakers")
        sub.add_argument("--embedding-index", type=int, default=0, help="Record index in --embeddings")
        sub.add_argument("--profile", type=str, default=name if name == "tts" else "vc",
                         help=f"Conditioning profile: {', '.join(PROFILES)}")
        sub.add_argument("--temperature", type=float, default=None, help="Prior temperature (tts)")
        sub.add_argument("--seed", type=int, default=None, help="Sampling seed")
        sub.add_argument("--output", type=str, required=True, help="Output mel file (float32)")

    gen = subparsers.add_parser("gen-speakers", help="Sample new speaker embeddings")
    gen.add_argument("--checkpoint", type=str, required=True, help="Model checkpoint")
    gen.add_argument("--locale", type=str, required=True, help="Locale name")
    gen.add_argument("--count", type=int, default=None, help="Number of embeddings")
    gen.add_argument("--seed", type=int, default=None, help="Sampling seed")
    gen.add_argument("--output", type=str, required=True, help="Output JSON file")

    evaluate = subparsers.add_parser("eval", help="Objective evaluation reports")
    evaluate.add_argument("--checkpoint", type=str, required=True, help="Model checkpoint")
    evaluate.add_argument("--dataset", type=str, required=True, help="Dataset directory")
    evaluate.add_argument("--metric", type=str, required=True, help=f"One of {', '.join(METRICS)}")
    evaluate.add_argument("--output-dir", type=str, default=os.path.join(OUTPUT_DIR, "eval"), help="Report directory")
    evaluate.add_argument("--embeddings", type=str, default=None, help="Embeddings JSON (default: sample new voices)")
    evaluate.add_argument("--locale", type=str, default=None, help="Locale for sampled new voices")
    evaluate.add_argument("--render", type=str, default=None,
                          help="Synthesize new voices with this profile and re-encode them")
    evaluate.add_argument("--target-speaker", type=str, default=None, help="SECS target speaker id")
    evaluate.add_argument("--target-index", type=int, default=None, help="SECS target: record index in --embeddings")
    evaluate.add_argument("--seed", type=int, default=None, help="Sampling seed")

    return parser.parse_args(argv)


def run_data_gen(output_dir, config, logger):
    logger.info("=== Data Generation Started ===")

    start_time = time.time()

    generator = SynthCorpusGenerator(SynthConfig.from_config(config))
    manifest_path = generator.run(output_dir)
    write_config_echo(config, output_dir)

    elapsed_time = time.time() - start_time
    logger.info(f"Data generation completed, time taken: {elapsed_time:.2f} seconds")
    logger.info(f"Manifest: {manifest_path}")
    logger.info("=== Data Generation Ended ===")

    return manifest_path


def _fit_speaker_generator(bundle: ModelBundle, config: Dict, logger) -> Optional[SpeakerGenerator]:
    generator = SpeakerGenerator(
        locales=bundle.locales,
        embedding_dim=bundle.builder.speaker_dim,
        components=config["gmm_components"],
        hidden=config["speakergen_hidden"],
        locale_dim=config["locale_embedding_dim"],
        stddev_floor=config["stddev_floor"],
        seed=config["seed"],
    )
    locales = [bundle.speaker_locales[s] for s in bundle.speaker_ids]
    try:
        history = generator.train(bundle.speaker_pool(), locales, epochs=config["speakergen_epochs"],
                                  learning_rate=config["speakergen_learning_rate"])
    except DataError as e:
        logger.warning(f"Skipping speaker generator: {e}")
        return None
    logger.info(f"Speaker generator log-likelihood {history[0]:.4f} -> {history[-1]:.4f}")
    return generator


def run_train(dataset_dir, output_dir, config, logger, resume=None):
    logger.info("=== Flow Training Started ===")

    start_time = time.time()

    corpus = DatasetStore(dataset_dir).load()
    encoder = ToyEncoder.from_stats(corpus.encoder_stats)
    profile = mode_variants(config["train_profile"])

    if resume:
        bundle = load_bundle(resume)
        bundle.check_corpus(corpus)
        bundle.config = config
        logger.info(f"Resuming from {resume} at optimizer step {bundle.optimizer.step_count}")
    else:
        builder = ConditionBuilder.create(
            n_phonemes=len(corpus.phoneme_inventory),
            n_accents=len(corpus.locales),
            phoneme_dim=config["phoneme_embedding_dim"],
            accent_dim=config["accent_embedding_dim"],
            speaker_dim=encoder.embedding_dim,
            seed=config["seed"],
            f0_mean_over=config["f0_mean_over"],
            encoder=encoder,
        )
        builder.set_speaker_table(speaker_table_from_corpus(corpus, encoder))
        model = FlowModel(
            mel_bins=corpus.mel_bins,
            cond_channels=builder.width,
            flow_steps=config["flow_steps"],
            hidden_channels=config["hidden_channels"],
            kernel_size=config["kernel_size"],
            log_scale_clamp=config["log_scale_clamp"],
            seed=config["seed"],
        )
        bundle = ModelBundle(
            model=model,
            builder=builder,
            optimizer=AdamOptimizer(config["learning_rate"], config["adam_beta1"], config["adam_beta2"], config["adam_eps"]),
            speaker_ids=corpus.speaker_ids(),
            speaker_locales={s: corpus.speaker_locale(s) for s in corpus.speaker_ids()},
            locales=list(corpus.locales),
            phoneme_inventory=list(corpus.phoneme_inventory),
            encoder_stats=corpus.encoder_stats,
            config=config,
        )

    examples = training_examples(corpus.split("train"), bundle.builder, profile, config["speaker_source"])
    eval_examples = training_examples(corpus.split("test"), bundle.builder, profile, config["speaker_source"])
    logger.info(f"Training on {len(examples)} utterances ({len(eval_examples)} held out), profile {profile.display_name}")

    checkpoint_path = os.path.join(output_dir, CHECKPOINT_NAME)
    csv_path = os.path.join(output_dir, NLL_CSV_NAME)
    os.makedirs(output_dir, exist_ok=True)
    write_config_echo(config, output_dir)
    try:
        report = train(bundle.model, examples, config, eval_examples, optimizer=bundle.optimizer)
    except TrainingAborted as e:
        bundle.training = {"aborted": str(e)}
        save_bundle(checkpoint_path, bundle)
        if e.report is not None and e.report.epochs:
            write_csv(csv_path, e.report.rows())
        logger.error(f"Last good parameters saved to {checkpoint_path}")
        raise

    bundle.training = report.summary()
    bundle.speaker_generator = _fit_speaker_generator(bundle, config, logger)
    save_bundle(checkpoint_path, bundle)
    write_csv(csv_path, report.rows(), fieldnames=["epoch", "train_nll", "eval_nll", "steps", "skipped_steps"])

    elapsed_time = time.time() - start_time
    logger.info(f"Training completed: NLL {report.initial_nll:.4f} -> {report.final_nll:.4f} nats/element, "
                f"time taken: {elapsed_time:.2f} seconds")
    logger.info(f"Checkpoint: {checkpoint_path}")
    logger.info("=== Flow Training Ended ===")

    return checkpoint_path


def _load_bundle_and_corpus(checkpoint, dataset_dir) -> Tuple[ModelBundle, Corpus]:
    bundle = load_bundle(checkpoint)
    corpus = DatasetStore(dataset_dir).load()
    bundle.check_corpus(corpus)
    return bundle, corpus


def _speaker_for(bundle: ModelBundle, corpus: Corpus, speaker_id: str) -> np.ndarray:
    """Table vector for a training speaker, encoder centroid for any other corpus speaker."""
    if speaker_id in bundle.builder.speaker_table:
        return bundle.speaker_vector(speaker_id)
    mels = [u.mel for u in corpus.utterances if u.speaker == speaker_id]
    if not mels:
        raise ConditioningError(f"Unknown speaker '{speaker_id}'")
    return bundle.encoder.centroid(mels)


def _resolve_target(bundle: ModelBundle, corpus: Corpus, utt: Utterance, speaker_id: Optional[str],
                    embeddings_path: Optional[str], index: int) -> Tuple[str, np.ndarray]:
    if embeddings_path:
        records = load_embeddings_json(embeddings_path)
        if not 0 <= index < len(records):
            raise DataError(f"Embedding index {index} out of range for {len(records)} records")
        return records[index].get("id", f"embedding_{index}"), np.asarray(records[index]["embedding"], dtype=np.float64)
    target = speaker_id or utt.speaker
    return target, _speaker_for(bundle, corpus, target)


def _source_condition(bundle: ModelBundle, corpus: Corpus, utt: Utterance, use_f0: bool):
    return bundle.builder.build(utt, _speaker_for(bundle, corpus, utt.speaker), use_f0)


def _write_mel(path: str, mel: np.ndarray, info: Dict) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    write_tensor(path, mel)
    info = dict(info, frames=int(mel.shape[0]), bins=int(mel.shape[1]), dtype="<f4")
    with open(path + ".json", 'w', encoding='utf-8') as f:
        json.dump(info, f, ensure_ascii=False, indent=2)
    return path


def run_synthesis(args, config, logger):
    stage = "Voice Conversion" if args.command == "vc" else "TTS Synthesis"
    logger.info(f"=== {stage} Started ===")

    start_time = time.time()

    bundle, corpus = _load_bundle_and_corpus(args.checkpoint, args.dataset)
    utt = corpus.utterance(args.utterance)
    profile = mode_variants(args.profile)
    if profile.mode != args.command:
        logger.warning(f"Profile {profile.display_name} is a {profile.mode} profile, running {args.command} anyway")
    target_id, target = _resolve_target(bundle, corpus, utt, args.speaker, args.embeddings, args.embedding_index)
    seed = config["seed"] if args.seed is None else args.seed
    temperature = config["temperature"] if args.temperature is None else args.temperature

    if args.command == "vc":
        theta = _source_condition(bundle, corpus, utt, profile.use_f0)
        mel = vc_convert(bundle.model, utt.mel, theta, target)
    else:
        theta = bundle.builder.build(utt, target, profile.use_f0)
        mel = tts_synthesize(bundle.model, theta, temperature, seed)

    output_path = _write_mel(args.output, mel, {
        "utterance": utt.utt_id,
        "source_speaker": utt.speaker,
        "target": target_id,
        "profile": profile.display_name,
        "temperature": temperature if args.command == "tts" else None,
        "seed": seed if args.command == "tts" else None,
    })
    write_config_echo(config, os.path.dirname(os.path.abspath(output_path)))

    elapsed_time = time.time() - start_time
    logger.info(f"{profile.display_name}: {utt.utt_id} -> {target_id}, {mel.shape[0]} frames written to {output_path}, "
                f"time taken: {elapsed_time:.2f} seconds")
    logger.info(f"=== {stage} Ended ===")

    return output_path


def _sample_new_voices(bundle: ModelBundle, locale: Optional[str], count: int, seed: int) -> List[Dict]:
    if bundle.speaker_generator is None:
        raise DataError("Checkpoint has no trained speaker generator")
    locale = locale or bundle.locales[0]
    spec = bundle.speaker_generator.forward(locale)
    return embedding_records(sample_speakers(spec, count, seed), locale)


def run_gen_speakers(args, config, logger):
    logger.info("=== Speaker Generation Started ===")

    start_time = time.time()

    bundle = load_bundle(args.checkpoint)
    count = config["new_voice_count"] if args.count is None else args.count
    seed = config["seed"] if args.seed is None else args.seed
    records = _sample_new_voices(bundle, args.locale, count, seed)
    save_embeddings_json(args.output, records)
    write_config_echo(config, os.path.dirname(os.path.abspath(args.output)))

    elapsed_time = time.time() - start_time
    logger.info(f"Generated {len(records)} {args.locale} speaker embeddings, time taken: {elapsed_time:.2f} seconds")
    logger.info("=== Speaker Generation Ended ===")

    return args.output


def _new_voices(args, bundle: ModelBundle, corpus: Corpus, config, logger) -> Tuple[List[str], np.ndarray]:
    seed = config["seed"] if args.seed is None else args.seed
    if args.embeddings:
        records = load_embeddings_json(args.embeddings)
    else:
        records = _sample_new_voices(bundle, args.locale, config["new_voice_count"], seed)
    ids = [r.get("id", f"voice_{i}") for i, r in enumerate(records)]
    vectors = np.array([r["embedding"] for r in records], dtype=np.float64)
    if args.render and len(records):
        profile = mode_variants(args.render)
        sources = corpus.split("test") or corpus.split("train")
        mels = render_voices(bundle.model, bundle.builder, sources, vectors, profile, config["temperature"], seed)
        vectors = bundle.encoder.encode_many(mels)
        logger.info(f"Re-encoded {len(mels)} voices rendered with {profile.display_name}")
    return ids, vectors


def _eval_secs(args, bundle, corpus, config, logger) -> List[Dict]:
    if args.embeddings:
        ids, vectors = _new_voices(args, bundle, corpus, config, logger)
        if args.target_index is not None:
            if not 0 <= args.target_index < len(ids):
                raise DataError(f"Target index {args.target_index} out of range for {len(ids)} embeddings")
            target = vectors[args.target_index]
        elif args.target_speaker:
            target = _speaker_for(bundle, corpus, args.target_speaker)
        else:
            raise ConfigError("secs on --embeddings needs --target-index or --target-speaker")
        scores = secs_scores(vectors, target)
        rows = [{"id": i, "secs": s} for i, s in zip(ids, scores)]
    else:
        profile = mode_variants(args.render or "vc")
        utterances = corpus.split("test") + corpus.split("unseen")
        if not utterances:
            raise DataError("Dataset has no held-out utterances to convert")
        rows = []
        scores = []
        for utt in utterances:
            if args.target_speaker:
                target_id = args.target_speaker
            else:
                others = [s for s in bundle.speaker_ids if s != utt.speaker]
                if not others:
                    raise DataError(f"No conversion target for {utt.utt_id}: the checkpoint has no speaker "
                                    f"other than '{utt.speaker}', pass --target-speaker")
                target_id = others[len(rows) % len(others)]
            source = _speaker_for(bundle, corpus, utt.speaker)
            target = _speaker_for(bundle, corpus, target_id)
            theta = bundle.builder.build(utt, source, profile.use_f0)
            converted = vc_convert(bundle.model, utt.mel, theta, target)
            embedding = bundle.encoder.encode(converted)
            score = cosine_similarity(embedding, target)
            scores.append(score)
            rows.append({
                "id": utt.utt_id,
                "source": utt.speaker,
                "target": target_id,
                "secs": score,
                "secs_source": cosine_similarity(embedding, source),
            })
        scores = np.array(scores)
    rows.append({"id": "mean", "secs": float(np.mean(scores))})
    rows.append({"id": "std", "secs": float(np.std(scores))})
    logger.info(f"SECS {np.mean(scores):.4f} +- {np.std(scores):.4f} over {len(scores)} embeddings")
    return rows


def _eval_variance(args, bundle, corpus, config, logger) -> List[Dict]:
    ids, vectors = _new_voices(args, bundle, corpus, config, logger)
    pool = bundle.speaker_pool()
    rows = [{"set": "pool", "count": len(pool), "variance_sum": variance_sum(pool)}]
    for index, locale in enumerate(bundle.locales):
        members = [bundle.builder.speaker_table[s] for s in bundle.speaker_ids if bundle.speaker_locales[s] == index]
        if len(members) >= 2:
            rows.append({"set": f"pool:{locale}", "count": len(members), "variance_sum": variance_sum(members)})
    rows.append({"set": "new", "count": len(vectors), "variance_sum": variance_sum(vectors)})
    for row in rows:
        logger.info(f"variance_sum[{row['set']}] = {row['variance_sum']:.4f} ({row['count']} embeddings)")
    return rows


def _eval_nn(args, bundle, corpus, config, logger) -> List[Dict]:
    ids, vectors = _new_voices(args, bundle, corpus, config, logger)
    report = new_voice_distance_report(ids, vectors, bundle.speaker_ids, bundle.speaker_pool())
    rows = report.as_dicts()
    rows.append({"voice": "fraction_further", "further": report.fraction})
    logger.info(f"{report.fraction:.3f} of {len(ids)} new voices are further from their NN than NN is from NN2NN")
    return rows


def _eval_pca(args, bundle, corpus, config, logger) -> List[Dict]:
    ids, vectors = _new_voices(args, bundle, corpus, config, logger)
    pool = bundle.speaker_pool()
    embeddings = np.vstack([pool, vectors]) if len(vectors) else pool
    groups = ["train"] * len(pool) + ["new"] * len(vectors)
    result = pca_fit(embeddings, config["pca_variance_target"])
    svg_path = os.path.join(args.output_dir, "pca_scatter.svg")
    write_scatter_svg(svg_path, result.coordinates, groups,
                      title=f"{result.k} components explain {config['pca_variance_target']:.0%} of the variance")
    write_csv(os.path.join(args.output_dir, "pca_summary.csv"), [
        {"component": i + 1, "explained_ratio": r, "cumulative": c}
        for i, (r, c) in enumerate(zip(result.explained_ratio, np.cumsum(result.explained_ratio)))
        if i < max(result.k, 2)
    ])
    logger.info(f"PCA: k = {result.k}, scatter written to {svg_path}")
    return [
        {"id": i, "group": g, "pc1": c[0], "pc2": c[1]}
        for i, g, c in zip(list(bundle.speaker_ids) + ids, groups, result.coordinates)
    ]


EVALUATORS = {
    "secs": _eval_secs,
    "variance": _eval_variance,
    "nn": _eval_nn,
    "pca": _eval_pca,
}


def run_eval(args, config, logger):
    if args.metric not in EVALUATORS:
        raise ConfigError(f"Unknown metric '{args.metric}', expected one of {', '.join(METRICS)}")
    logger.info(f"=== Evaluation ({args.metric}) Started ===")

    start_time = time.time()

    bundle, corpus = _load_bundle_and_corpus(args.checkpoint, args.dataset)
    os.makedirs(args.output_dir, exist_ok=True)
    write_config_echo(config, args.output_dir)
    rows = EVALUATORS[args.metric](args, bundle, corpus, config, logger)
    report_path = write_csv(os.path.join(args.output_dir, f"{args.metric}_report.csv"), rows,
                            fieldnames=list(dict.fromkeys(key for row in rows for key in row)))

    elapsed_time = time.time() - start_time
    logger.info(f"Evaluation completed, time taken: {elapsed_time:.2f} seconds")
    logger.info("=== Evaluation Ended ===")

    return report_path


def main(argv=None):
    args = parse_arguments(argv)

    logger = setup_logging(args.log_dir)
    logger.info(f"Running command: {args.command}")

    try:
        config = load_config(args.config)
        if args.command == "data-gen":
            run_data_gen(args.output_dir, config, logger)
        elif args.command == "train":
            run_train(args.dataset, args.output_dir, config, logger, resume=args.resume)
        elif args.command in ("tts", "vc"):
            run_synthesis(args, config, logger)
        elif args.command == "gen-speakers":
            run_gen_speakers(args, config, logger)
        elif args.command == "eval":
            run_eval(args, config, logger)
    except NfvcError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code

    logger.info("All tasks completed!")
    return 0


if __name__ == "__main__":
    sys.exit(main())
