"""End-to-end wiring: training entry points, the staged pipeline, metrics.

A pipeline run executes distill, enrich, and generate over files, then
writes a manifest holding the resolved config plus content hashes of every
input and output. Reruns driven by the manifest reproduce the output files
byte for byte; nothing here reads the clock or unseeded randomness.
"""

from __future__ import annotations

import os

from .config import RunConfig
from .corpus import build_training_pairs, load_corpus
from .distill import DistillerConfig, DistillerModel, DistillerTrainConfig, load_feature_file, train_distiller
from .enrich import TermPath, build_candidates, select_best
from .generate import (
    BeamPenaltyConfig,
    GeneratorConfig,
    GeneratorModel,
    GeneratorTrainConfig,
    decode_story,
    train_generator,
)
from .ioutil import InputError, read_json, read_jsonl, sha256_file, write_json, write_jsonl
from .kg import RelationIndex, load_tuples
from .lm import LMTrainConfig, load_lm, load_term_sequences, train_lm
from .metrics import bleu_n, distinct_n

MANIFEST_VERSION = 1
STAGES = ("distill", "enrich", "generate")


def _require(path: str, stage: str, role: str) -> str:
    if not path:
        raise InputError(f"stage '{stage}' needs a {role}, but none is configured")
    if not os.path.exists(path):
        raise InputError(f"stage '{stage}' needs a {role}, missing file: {path}")
    return path


def _load_stories(config: RunConfig, include_text: bool = True):
    stories = load_corpus(_require(config.corpus_path, "train", "story corpus (corpus_path)"))
    if include_text and config.text_corpus_path:
        stories = stories + load_corpus(config.text_corpus_path)
    return stories


def train_distiller_command(config: RunConfig, log=None) -> str:
    """Train the image-to-term model and save it at config.distiller_model."""
    stories = load_corpus(_require(config.corpus_path, "train-distiller", "story corpus (corpus_path)"))
    features = load_feature_file(
        _require(config.features_path, "train-distiller", "object-feature file (features_path)"),
        top_k=config.top_k_objects,
    )
    examples = build_training_pairs(stories, mode="distiller", features=features)
    pairs = [(ex.image_sequence, ex.term_groups) for ex in examples]
    model, _ = train_distiller(
        pairs,
        DistillerConfig(
            hidden_size=config.hidden_size,
            heads=config.heads,
            layers=config.layers,
            ff_multiple=config.ff_multiple,
            num_slots=config.num_slots,
            max_terms_per_image=config.max_terms_per_image,
            seed=config.seed,
        ),
        DistillerTrainConfig(
            epochs=config.epochs,
            learning_rate=config.learning_rate,
            warmup_steps=config.warmup_steps,
            log=log,
        ),
    )
    out = config.distiller_model or os.path.join(config.out_dir, "distiller.json")
    model.save(out)
    return out


def train_lm_command(config: RunConfig, log=None) -> str:
    """Train the term LM (n-gram or recurrent) and save it at config.lm_model."""
    if config.lm_sequences_path:
        corpus = load_term_sequences(config.lm_sequences_path)
    else:
        corpus = build_training_pairs(_load_stories(config), mode="lm")
    model, _ = train_lm(
        corpus,
        LMTrainConfig(
            kind=config.lm_kind,
            order=config.ngram_order,
            smoothing_k=config.smoothing_k,
            hidden_size=config.lm_hidden_size,
            epochs=config.epochs,
            learning_rate=config.learning_rate,
            warmup_steps=config.warmup_steps,
            seed=config.seed,
            holdout_fraction=config.holdout_fraction,
            log=log,
        ),
    )
    out = config.lm_model or os.path.join(config.out_dir, "term_lm.json")
    model.save(out)
    return out


def train_generator_command(config: RunConfig, log=None, finetune_from: str = "") -> str:
    """Train (or fine-tune) the term-to-story model; save at config.generator_model."""
    pairs = build_training_pairs(_load_stories(config), mode="generator")
    base_model = GeneratorModel.load(finetune_from) if finetune_from else None
    model, _ = train_generator(
        pairs,
        GeneratorConfig(
            hidden_size=config.hidden_size,
            heads=config.heads,
            encoder_layers=config.layers,
            decoder_layers=config.decoder_layers,
            ff_multiple=config.ff_multiple,
            max_sentence_tokens=config.max_sentence_tokens,
            seed=config.seed,
        ),
        GeneratorTrainConfig(
            epochs=config.epochs,
            learning_rate=config.learning_rate,
            warmup_steps=config.warmup_steps,
            log=log,
        ),
        model=base_model,
    )
    out = config.generator_model or os.path.join(config.out_dir, "generator.json")
    model.save(out)
    return out


def load_kg_index(config: RunConfig, stage: str = "enrich") -> RelationIndex:
    if not config.kg:
        raise InputError(f"stage '{stage}' needs at least one knowledge-graph file (kg)")
    index = RelationIndex()
    for entry in config.kg:
        path = _require(entry.get("path", ""), stage, "knowledge-graph tuple file")
        source = entry.get("source") or os.path.splitext(os.path.basename(path))[0]
        load_tuples(path, source, two_hop_ok=bool(entry.get("two_hop", True)), into=index)
    return index


def stage_distill(config: RunConfig, out_path: str) -> list[dict]:
    features = load_feature_file(
        _require(config.features_path, "distill", "object-feature file (features_path)"),
        top_k=config.top_k_objects,
    )
    model = DistillerModel.load(_require(config.distiller_model, "distill", "distiller checkpoint (distiller_model)"))
    records = []
    for seq in features:
        groups = model.predict_terms(seq, beam_size=config.beam_size)
        records.append(TermPath.from_groups(groups, story_id=seq.story_id).to_record())
    write_jsonl(out_path, records)
    return records


def stage_enrich(config: RunConfig, terms_path: str, out_path: str) -> list[dict]:
    records = read_jsonl(_require(terms_path, "enrich", "term-path file"))
    index = load_kg_index(config)
    lm = load_lm(_require(config.lm_model, "enrich", "term LM checkpoint (lm_model)"))
    out = []
    for rec in records:
        base = TermPath.from_record(rec, where=terms_path)
        candidates = build_candidates(base, index, cap=config.candidate_cap, allow_two_hop=config.two_hop)
        choice = select_best(candidates, lm)
        selected = choice.path.to_record()
        selected["perplexity"] = choice.perplexity
        selected["candidate_count"] = len(candidates)
        selected["bridge_slot"] = choice.path.bridge_slot
        out.append(selected)
    write_jsonl(out_path, out)
    return out


def stage_generate(config: RunConfig, paths_path: str, out_path: str) -> list[dict]:
    records = read_jsonl(_require(paths_path, "generate", "term-path file"))
    model = GeneratorModel.load(
        _require(config.generator_model, "generate", "generator checkpoint (generator_model)")
    )
    penalties = BeamPenaltyConfig(
        alpha=config.alpha,
        gamma=config.gamma,
        beam_size=config.beam_size,
        length_unit=config.length_unit,
    )
    out = []
    for rec in records:
        path = TermPath.from_record(rec, where=paths_path)
        story = decode_story(
            path,
            model,
            penalties,
            target_len_per_sentence=config.sentence_budget or None,
        )
        out.append(
            {
                "story_id": path.story_id,
                "sentences": story.sentences,
                "tokens": story.tokens,
                "text": " ".join(" ".join(s) for s in story.sentences),
                "score": story.score,
                "sentence_spans": [list(span) for span in story.sentence_spans],
                "truncated": story.truncated,
                "bridge": story.bridge,
                "bridge_slot": rec.get("bridge_slot"),
                "origins": rec.get("origins"),
            }
        )
    write_jsonl(out_path, out)
    return out


def run_pipeline(config: RunConfig, out_dir: str | None = None) -> dict:
    """Execute the configured stages and write outputs plus a manifest."""
    out_dir = out_dir or config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    unknown = [s for s in config.stages if s not in STAGES]
    if unknown:
        raise InputError(f"unknown pipeline stages {unknown}; valid stages are {list(STAGES)}")
    if not config.stages:
        raise InputError("no pipeline stages enabled")

    inputs: dict[str, str] = {}
    outputs: list[str] = []
    terms_path = None
    paths_path = None

    if "distill" in config.stages:
        inputs[config.features_path] = ""
        inputs[config.distiller_model] = ""
        terms_path = os.path.join(out_dir, "terms.jsonl")
        stage_distill(config, terms_path)
        outputs.append(terms_path)
    else:
        terms_path = _require(config.terms_path, "enrich", "term-path file (terms_path)")
        inputs[terms_path] = ""

    if "enrich" in config.stages:
        for entry in config.kg:
            inputs[entry.get("path", "")] = ""
        inputs[config.lm_model] = ""
        paths_path = os.path.join(out_dir, "paths.jsonl")
        stage_enrich(config, terms_path, paths_path)
        outputs.append(paths_path)
    else:
        paths_path = terms_path

    if "generate" in config.stages:
        inputs[config.generator_model] = ""
        stories_path = os.path.join(out_dir, "stories.jsonl")
        stage_generate(config, paths_path, stories_path)
        outputs.append(stories_path)

    manifest = {
        "format_version": MANIFEST_VERSION,
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "inputs": {p: sha256_file(p) for p in inputs if p and os.path.exists(p)},
        "outputs": {os.path.basename(p): sha256_file(p) for p in outputs},
    }
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def rerun_from_manifest(manifest_path: str, out_dir: str | None = None) -> dict:
    """Re-execute a recorded run; input files must hash exactly as recorded."""
    manifest = read_json(manifest_path)
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise InputError(f"{manifest_path}: unsupported manifest version")
    config = RunConfig.from_dict(manifest["config"], where=manifest_path)
    for path, digest in manifest.get("inputs", {}).items():
        if not os.path.exists(path):
            raise InputError(f"manifest input missing: {path}")
        if sha256_file(path) != digest:
            raise InputError(f"manifest input changed since the recorded run: {path}")
    return run_pipeline(config, out_dir=out_dir)


def evaluate_stories(candidates_path: str, references_path: str) -> dict:
    """Corpus BLEU-1..4 and distinct-1/2 of generated stories against references."""
    cand_records = read_jsonl(candidates_path)
    ref_stories = load_corpus(references_path)
    refs_by_id = {s.story_id: [tok for sent in s.sentences for tok in sent.tokens] for s in ref_stories}
    cands, refs = [], []
    for rec in cand_records:
        sid = rec.get("story_id")
        if sid not in refs_by_id:
            raise InputError(f"{candidates_path}: no reference story for id {sid!r}")
        cands.append([tok for sent in rec["sentences"] for tok in sent])
        refs.append(refs_by_id[sid])
    scores = {f"bleu{n}": bleu_n(cands, refs, n) for n in range(1, 5)}
    scores.update({f"distinct{n}": distinct_n(cands, n) for n in (1, 2)})
    scores["stories"] = len(cands)
    return scores
