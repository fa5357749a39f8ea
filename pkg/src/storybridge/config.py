"""Declarative run configuration shared by every CLI subcommand.

One flat dataclass; a JSON config file sets fields, command-line flags
override them. Model hyperparameter defaults are the published ones
(hidden 512, 2 heads, 4 encoder layers, beam 3, learning rate 1e-3,
penalties 20 and 5, top 25 objects per image).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

from .ioutil import InputError, canonical_dumps, read_json, sha256_text


@dataclass
class RunConfig:
    # model hyperparameters
    hidden_size: int = 512
    heads: int = 2
    layers: int = 4
    decoder_layers: int = 4
    ff_multiple: int = 4
    beam_size: int = 3
    learning_rate: float = 1e-3
    alpha: float = 20.0
    gamma: float = 5.0
    top_k_objects: int = 25
    seed: int = 0
    num_slots: int = 5
    max_terms_per_image: int = 8
    max_sentence_tokens: int = 24
    sentence_budget: int = 0  # 0 means use the generator checkpoint's default
    length_unit: str = "tokens"  # unit of l in the inter-sentence penalty
    # enrichment
    candidate_cap: int = 500
    two_hop: bool = True
    # training
    epochs: int = 60
    warmup_steps: int = 100
    holdout_fraction: float = 0.1
    lm_kind: str = "gru"
    lm_hidden_size: int = 64
    ngram_order: int = 2
    smoothing_k: float = 1.0
    # stages and files
    stages: list[str] = field(default_factory=lambda: ["distill", "enrich", "generate"])
    corpus_path: str = ""
    text_corpus_path: str = ""
    lm_sequences_path: str = ""  # optional raw term-sequence JSONL for train-lm
    features_path: str = ""
    terms_path: str = ""
    kg: list[dict] = field(default_factory=list)  # {"path", "source", "two_hop"}
    distiller_model: str = ""
    lm_model: str = ""
    generator_model: str = ""
    out_dir: str = "runs/out"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict, where: str = "config") -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InputError(f"{where}: unknown config keys {unknown}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        return cls.from_dict(read_json(path), where=path)

    def hash(self) -> str:
        return sha256_text(canonical_dumps(self.to_dict()))


_BOOL_WORDS = {"true": True, "on": True, "1": True, "yes": True, "false": False, "off": False, "0": False, "no": False}


def parse_flag_bool(text: str, flag: str) -> bool:
    try:
        return _BOOL_WORDS[text.strip().lower()]
    except KeyError:
        raise InputError(f"{flag}: expected on/off, got {text!r}") from None


def apply_overrides(config: RunConfig, overrides) -> RunConfig:
    """Apply "field=value" strings, coercing values to the field's type."""
    by_name = {f.name: f for f in fields(RunConfig)}
    data = config.to_dict()
    for item in overrides or ():
        if "=" not in item:
            raise InputError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in by_name:
            raise InputError(f"unknown config key {key!r}")
        current = data[key]
        if isinstance(current, bool):
            data[key] = parse_flag_bool(raw, key)
        elif isinstance(current, int):
            data[key] = int(raw)
        elif isinstance(current, float):
            data[key] = float(raw)
        elif isinstance(current, list):
            data[key] = [part for part in raw.split(",") if part]
        else:
            data[key] = raw
    return RunConfig.from_dict(data)
