"""Stage 3: transformer encoder-decoder from term paths to stories.

The decoder's positional signal encodes the remaining length of the story
rather than the absolute position, so the end-of-story state looks the same
whatever the story length; the encoder keeps the standard sinusoidal table.
Decoding is a beam search scored as

    beam_score(x) = log p(x) - alpha * [x in S] - (gamma / l) * [x in R]

where S holds the words of the sentence being written, R the words of
finished sentences, and l is the number of tokens generated so far (at
least 1). A sentence-boundary marker closes each sentence; the decode
finishes when as many sentences exist as the path has term groups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import TransformerDecoder, TransformerEncoder, linear, sinusoidal_encoding
from .lm import BOS as PATH_BOS
from .lm import EOS as PATH_EOS
from .lm import SEP as GROUP_SEP
from .lm import UNK, linearize_groups
from .optim import AdamState, adam_step
from .params import ParameterStore

BOS_STORY = "<bos>"
EOS_STORY = "<eos>"
SENTENCE_BOUNDARY = "<sb>"


def ldpe(pos: int, length: int, d: int) -> np.ndarray:
    """Length-difference positional encoding of one position.

    Component 2i is sin((length - pos) / 10000^(2i/d)) and component 2i+1 is
    the matching cosine, so the vector depends on the remaining length only.
    """
    if d % 2 != 0:
        raise ValueError(f"ldpe: dimension {d} must be even")
    if pos < 0 or length < 1:
        raise ValueError(f"ldpe: need 0 <= pos and 1 <= len, got pos={pos}, len={length}")
    if pos > length:
        raise ValueError(f"ldpe: position {pos} exceeds the length budget {length}")
    return ldpe_from_remaining(length - pos, d)


def ldpe_from_remaining(remaining, d: int) -> np.ndarray:
    """LDPE rows for an array of remaining-length values."""
    rem = np.asarray(remaining, dtype=np.float64).reshape(-1, 1)
    i2 = np.arange(0, d, 2, dtype=np.float64)
    angles = rem / np.power(10000.0, i2 / d)
    out = np.empty((rem.shape[0], d))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out if np.ndim(remaining) else out[0]


@dataclass
class BeamPenaltyConfig:
    alpha: float = 20.0
    gamma: float = 5.0
    beam_size: int = 3
    # how the length l in gamma/l is measured: "tokens" (default) counts
    # generated tokens, "sentences" counts sentences begun so far
    length_unit: str = "tokens"

    def __post_init__(self):
        if self.alpha < 0 or self.gamma < 0:
            raise ValueError("penalty weights must be nonnegative")
        if self.beam_size < 1:
            raise ValueError("beam size must be >= 1")
        if self.length_unit not in ("tokens", "sentences"):
            raise ValueError(f"length_unit must be 'tokens' or 'sentences', got {self.length_unit!r}")


def beam_penalty_score(log_p: float, in_current: bool, in_previous: bool, alpha: float, gamma: float, story_len: int) -> float:
    """The decode score of one candidate token."""
    l = max(1, story_len)
    return log_p - (alpha if in_current else 0.0) - ((gamma / l) if in_previous else 0.0)


@dataclass
class Story:
    story_id: str
    sentences: list[list[str]]
    tokens: list[str]
    score: float
    truncated: bool = False
    bridge: dict | None = None

    @property
    def sentence_spans(self) -> list[tuple[int, int]]:
        spans, start = [], 0
        for i, tok in enumerate(self.tokens):
            if tok == SENTENCE_BOUNDARY:
                spans.append((start, i))
                start = i + 1
        return spans


@dataclass
class GeneratorConfig:
    hidden_size: int = 512
    heads: int = 2
    encoder_layers: int = 4
    decoder_layers: int = 4
    ff_multiple: int = 4
    max_sentence_tokens: int = 24
    seed: int = 0


@dataclass
class GeneratorTrainConfig:
    epochs: int = 60
    learning_rate: float = 1e-3
    warmup_steps: int = 100
    log: object = None


class GeneratorModel:
    """Encoder over linearized term paths, LDPE decoder over story tokens."""

    def __init__(self, vocab: list[str], config: GeneratorConfig, store: ParameterStore, sentence_budget: int = 10):
        self.vocab = list(vocab)
        self.token_to_id = {t: i for i, t in enumerate(self.vocab)}
        for marker in (BOS_STORY, EOS_STORY, SENTENCE_BOUNDARY, UNK):
            if marker not in self.token_to_id:
                raise ValueError(f"generator vocabulary must contain {marker!r}")
        self.config = config
        self.store = store
        self.sentence_budget = sentence_budget  # default decode length budget per sentence
        d = config.hidden_size
        v = len(self.vocab)
        self.enc_embedding = store.param("enc.embedding", (v, d))
        self.encoder = TransformerEncoder(store, "enc.stack", d, config.heads, config.encoder_layers, d * config.ff_multiple)
        self.dec_embedding = store.param("dec.embedding", (v, d))
        self.decoder = TransformerDecoder(store, "dec.stack", d, config.heads, config.decoder_layers, d * config.ff_multiple)
        self.w_out = store.param("dec.w_out", (d, v))
        self.b_out = store.param("dec.b_out", (v,), init="zeros")

    @classmethod
    def build(cls, vocab, config: GeneratorConfig | None = None, sentence_budget: int = 10) -> "GeneratorModel":
        config = config or GeneratorConfig()
        return cls(vocab, config, ParameterStore(config.seed), sentence_budget)

    def _ids(self, tokens, strict: bool = False) -> list[int]:
        ids = []
        for t in tokens:
            if t in self.token_to_id:
                ids.append(self.token_to_id[t])
            elif strict:
                raise ValueError(f"token {t!r} not in generator vocabulary")
            else:
                ids.append(self.token_to_id[UNK])
        return ids

    def encode_path(self, groups) -> Tensor:
        tokens = linearize_groups(groups)
        ids = self._ids(tokens)
        x = ad.embed(self.enc_embedding, ids)
        x = ad.add(x, Tensor(sinusoidal_encoding(range(len(ids)), self.config.hidden_size)))
        return self.encoder(x)

    def decoder_logits(self, memory: Tensor, input_ids: list[int], remaining: np.ndarray) -> Tensor:
        x = ad.embed(self.dec_embedding, input_ids)
        x = ad.add(x, Tensor(ldpe_from_remaining(remaining, self.config.hidden_size)))
        h = self.decoder(x, memory)
        return linear(h, self.w_out, self.b_out)

    def training_loss(self, groups, sentences) -> Tensor:
        targets = story_tokens(sentences)
        target_ids = self._ids(targets, strict=True)
        memory = self.encode_path(groups)
        input_ids = [self.token_to_id[BOS_STORY]] + target_ids[:-1]
        total = len(targets)
        remaining = total - np.arange(total)  # true remaining length, teacher forced
        logits = self.decoder_logits(memory, input_ids, remaining)
        return ad.softmax_cross_entropy(logits, target_ids)

    def step_log_probs_fn(self, groups, budget: int):
        """Closure giving next-token log-probs for a decoder prefix (no tape)."""
        memory = Tensor(self.encode_path(groups).data)
        bos = self.token_to_id[BOS_STORY]

        def step(prefix_ids: tuple[int, ...]) -> np.ndarray:
            input_ids = [bos] + list(prefix_ids)
            remaining = np.maximum(budget - np.arange(len(input_ids)), 0)
            logits = self.decoder_logits(memory, input_ids, remaining)
            return ad.log_softmax_values(logits.data)[-1]

        return step

    def save(self, path: str) -> None:
        self.store.save(
            path,
            schedule=getattr(self, "trained_schedule", None),
            extra={
                "kind": "generator",
                "vocab": self.vocab,
                "sentence_budget": self.sentence_budget,
                "config": {
                    "hidden_size": self.config.hidden_size,
                    "heads": self.config.heads,
                    "encoder_layers": self.config.encoder_layers,
                    "decoder_layers": self.config.decoder_layers,
                    "ff_multiple": self.config.ff_multiple,
                    "max_sentence_tokens": self.config.max_sentence_tokens,
                    "seed": self.config.seed,
                },
            },
        )

    @classmethod
    def load(cls, path: str) -> "GeneratorModel":
        store, meta = ParameterStore.load(path)
        extra = meta["extra"]
        if extra.get("kind") != "generator":
            raise ValueError(f"{path}: not a generator checkpoint")
        return cls(extra["vocab"], GeneratorConfig(**extra["config"]), store, extra["sentence_budget"])


def story_tokens(sentences) -> list[str]:
    """Flatten sentences into decoder targets: each sentence closed by a boundary."""
    tokens = []
    for sent in sentences:
        tokens.extend(sent)
        tokens.append(SENTENCE_BOUNDARY)
    tokens.append(EOS_STORY)
    return tokens


def beam_decode(
    step_log_probs,
    *,
    vocab_size: int,
    sb_id: int,
    group_count: int,
    penalties: BeamPenaltyConfig,
    max_sentence_tokens: int,
    excluded_ids=(),
):
    """Beam search over token ids with inter/intra-sentence repetition penalties.

    Structural rules: ids in excluded_ids are never emitted; a hypothesis
    finishes at its group_count-th sentence boundary; a sentence hitting
    max_sentence_tokens is closed by a forced boundary and flags the story
    as truncated. Marker tokens stay out of the repetition sets. Exact score
    ties resolve to the lower token id.
    """
    excluded = frozenset(excluded_ids) | {sb_id}
    # hypothesis: (score, tokens, S, R, boundaries, sentence_len, truncated)
    live = [(0.0, (), frozenset(), frozenset(), 0, 0, False)]
    done = []
    while live:
        candidates = []
        for hyp_idx, (score, tokens, s_set, r_set, bounds, sent_len, trunc) in enumerate(live):
            logp = step_log_probs(tokens)
            if penalties.length_unit == "sentences":
                story_len = bounds + 1
            else:
                story_len = max(1, len(tokens))
            if sent_len >= max_sentence_tokens:
                token_range = [sb_id]  # sentence budget exhausted, close it
            else:
                token_range = range(vocab_size)
            for tok in token_range:
                if tok != sb_id and tok in excluded:
                    continue
                step_score = beam_penalty_score(
                    float(logp[tok]), tok in s_set, tok in r_set,
                    penalties.alpha, penalties.gamma, story_len,
                )
                forced = sent_len >= max_sentence_tokens
                candidates.append((score + step_score, tok, hyp_idx, trunc or forced))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        next_live = []
        for cand_score, tok, hyp_idx, trunc in candidates[: penalties.beam_size]:
            _, tokens, s_set, r_set, bounds, sent_len, _ = live[hyp_idx]
            new_tokens = tokens + (tok,)
            if tok == sb_id:
                new_bounds = bounds + 1
                hyp = (cand_score, new_tokens, frozenset(), r_set | s_set, new_bounds, 0, trunc)
                if new_bounds == group_count:
                    done.append(hyp)
                else:
                    next_live.append(hyp)
            else:
                next_live.append((cand_score, new_tokens, s_set | {tok}, r_set, bounds, sent_len + 1, trunc))
        live = next_live
        if len(done) >= penalties.beam_size:
            break
    best = max(enumerate(done), key=lambda kv: (kv[1][0], -kv[0]))[1]
    return list(best[1]), best[0], best[6]


def decode_story(path, model: GeneratorModel, penalties: BeamPenaltyConfig | None = None, target_len_per_sentence: int | None = None, story_id: str = "") -> Story:
    """Generate one sentence per term group of the path."""
    penalties = penalties or BeamPenaltyConfig()
    groups = list(path.groups) if hasattr(path, "groups") else list(path)
    if not groups:
        raise ValueError("term path has no groups")
    per_sentence = target_len_per_sentence or model.sentence_budget
    budget = len(groups) * (per_sentence + 1) + 1  # boundaries and end marker included
    step = model.step_log_probs_fn(groups, budget)
    token_ids, score, truncated = beam_decode(
        step,
        vocab_size=len(model.vocab),
        sb_id=model.token_to_id[SENTENCE_BOUNDARY],
        group_count=len(groups),
        penalties=penalties,
        max_sentence_tokens=model.config.max_sentence_tokens,
        excluded_ids=(model.token_to_id[BOS_STORY], model.token_to_id[EOS_STORY], model.token_to_id[UNK]),
    )
    tokens = [model.vocab[t] for t in token_ids]
    sentences, current = [], []
    for tok in tokens:
        if tok == SENTENCE_BOUNDARY:
            sentences.append(current)
            current = []
        else:
            current.append(tok)
    bridge = getattr(path, "bridge", None)
    return Story(
        story_id=story_id or getattr(path, "story_id", ""),
        sentences=sentences,
        tokens=tokens,
        score=score,
        truncated=truncated,
        bridge=bridge.to_record() if bridge is not None else None,
    )


def build_generator_vocab(pairs) -> list[str]:
    tokens = set()
    for example in pairs:
        for group in example.term_groups:
            tokens.update(group)
        for sent in example.sentences:
            tokens.update(sent)
    markers = [BOS_STORY, EOS_STORY, SENTENCE_BOUNDARY, UNK, PATH_BOS, PATH_EOS, GROUP_SEP]
    seen = set()
    vocab = []
    for t in markers + sorted(tokens):
        if t not in seen:
            seen.add(t)
            vocab.append(t)
    return vocab


def mean_sentence_budget(pairs) -> int:
    lengths = [len(sent) for ex in pairs for sent in ex.sentences]
    return max(1, int(round(float(np.mean(lengths)))))


def train_generator(
    pairs,
    config: GeneratorConfig | None = None,
    train: GeneratorTrainConfig | None = None,
    model: GeneratorModel | None = None,
):
    """Teacher-forced training over (term path, story) pairs.

    Pass an existing model to fine-tune it in place. Returns (model,
    per-epoch mean cross-entropy).
    """
    config = config or GeneratorConfig()
    train = train or GeneratorTrainConfig()
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot train the generator on an empty pair set")
    for ex in pairs:
        if len(ex.term_groups) != len(ex.sentences):
            raise ValueError(
                f"story {ex.story_id!r}: {len(ex.term_groups)} term groups but {len(ex.sentences)} sentences"
            )
    if model is None:
        model = GeneratorModel.build(build_generator_vocab(pairs), config, sentence_budget=mean_sentence_budget(pairs))

    state = AdamState(base_lr=train.learning_rate, warmup_steps=train.warmup_steps)
    history = []
    for epoch in range(train.epochs):
        total = 0.0
        for ex in pairs:
            loss = model.training_loss(ex.term_groups, ex.sentences)
            ad.backward(loss)
            adam_step(model.store, model.store.collect_grads(), state)
            model.store.zero_grads()
            total += loss.item()
        history.append(total / len(pairs))
        if train.log:
            train.log(f"epoch {epoch + 1}: cross-entropy {history[-1]:.4f}")
    model.trained_schedule = state.schedule()
    return model, history
