"""Stage 1: map per-image object features to a term set per image.

A transformer encoder reads the projected object features of all images,
summed with trainable image-order embeddings (objects inside one image carry
no order of their own). A GRU decoder with additive attention then emits
terms for each image in turn, decoded with a beam search whose score

    beam_score(x) = log p(x) - 1e19 * [x already predicted for this image]

makes within-image repeats effectively impossible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .ioutil import InputError, read_jsonl, write_jsonl
from .layers import GRUParams, TransformerEncoder, linear
from .optim import AdamState, adam_step
from .params import ParameterStore

FEATURE_DIM = 2048
TOP_K_OBJECTS = 25
END_OF_SET = "</set>"
REPEAT_MASK = 1e19


@dataclass
class ObjectFeatureSet:
    """Detected-object features for one image slot, strongest first."""

    image_index: int
    features: np.ndarray  # (n, FEATURE_DIM)
    confidences: np.ndarray  # (n,)

    @classmethod
    def from_objects(cls, image_index: int, objects, top_k: int = TOP_K_OBJECTS) -> "ObjectFeatureSet":
        """objects is an iterable of (feature vector, confidence)."""
        feats, confs = [], []
        for feature, confidence in objects:
            vec = np.asarray(feature, dtype=np.float64)
            if vec.shape != (FEATURE_DIM,):
                raise ValueError(f"object feature must have dimension {FEATURE_DIM}, got {vec.shape}")
            feats.append(vec)
            confs.append(float(confidence))
        if not feats:
            raise ValueError(f"image slot {image_index} has no objects")
        order = np.argsort(-np.asarray(confs), kind="stable")[:top_k]
        return cls(
            image_index=image_index,
            features=np.stack([feats[i] for i in order]),
            confidences=np.asarray([confs[i] for i in order]),
        )


@dataclass
class ImageSequence:
    story_id: str
    slots: list[ObjectFeatureSet]

    def __post_init__(self):
        for expected, slot in enumerate(self.slots):
            if slot.image_index != expected:
                raise ValueError(
                    f"story {self.story_id!r}: image_index values must be consecutive from 0, "
                    f"found {slot.image_index} at position {expected}"
                )


def load_feature_file(path: str, top_k: int = TOP_K_OBJECTS) -> list[ImageSequence]:
    """Read object-feature JSONL: one record per image, grouped by story_id."""
    grouped: dict[str, list[dict]] = {}
    order: list[str] = []
    for rec in read_jsonl(path):
        for key in ("story_id", "image_index", "objects"):
            if key not in rec:
                raise InputError(f"{path}: feature record missing '{key}'")
        sid = str(rec["story_id"])
        if sid not in grouped:
            grouped[sid] = []
            order.append(sid)
        grouped[sid].append(rec)
    sequences = []
    for sid in order:
        recs = sorted(grouped[sid], key=lambda r: r["image_index"])
        slots = [
            ObjectFeatureSet.from_objects(
                rec["image_index"],
                [(obj["feature"], obj["confidence"]) for obj in rec["objects"]],
                top_k=top_k,
            )
            for rec in recs
        ]
        try:
            sequences.append(ImageSequence(sid, slots))
        except ValueError as exc:
            raise InputError(f"{path}: {exc}") from None
    return sequences


def save_feature_file(path: str, sequences) -> None:
    records = []
    for seq in sequences:
        for slot in seq.slots:
            records.append(
                {
                    "story_id": seq.story_id,
                    "image_index": slot.image_index,
                    "objects": [
                        {"confidence": float(c), "feature": f.tolist()}
                        for f, c in zip(slot.features, slot.confidences)
                    ],
                }
            )
    write_jsonl(path, records)


@dataclass
class DistillerConfig:
    hidden_size: int = 512
    heads: int = 2
    layers: int = 4
    ff_multiple: int = 4
    num_slots: int = 5
    max_terms_per_image: int = 8
    attention_size: int = 0  # 0 means hidden_size
    seed: int = 0


@dataclass
class DistillerTrainConfig:
    epochs: int = 60
    learning_rate: float = 1e-3
    warmup_steps: int = 100
    log: object = None


class DistillerModel:
    """Transformer encoder over order-embedded objects, GRU+attention decoder."""

    def __init__(self, vocab: list[str], config: DistillerConfig, store: ParameterStore):
        if not vocab or END_OF_SET not in vocab:
            raise ValueError("vocabulary must be nonempty and contain the end-of-set marker")
        self.vocab = list(vocab)
        self.token_to_id = {t: i for i, t in enumerate(self.vocab)}
        self.config = config
        self.store = store
        d = config.hidden_size
        a = config.attention_size or d
        self.w_proj = store.param("proj.w", (FEATURE_DIM, d))
        self.b_proj = store.param("proj.b", (d,), init="zeros")
        self.order_embedding = store.param("order_embedding", (config.num_slots, d))
        self.encoder = TransformerEncoder(store, "encoder", d, config.heads, config.layers, d * config.ff_multiple)
        self.term_embedding = store.param("decoder.term_embedding", (len(self.vocab), d))
        self.attn_mem = store.param("decoder.attn.mem", (d, a))
        self.attn_hidden = store.param("decoder.attn.hidden", (d, a))
        self.attn_bias = store.param("decoder.attn.bias", (a,), init="zeros")
        self.attn_v = store.param("decoder.attn.v", (a, 1))
        self.cell = GRUParams(store, "decoder.gru", d_in=2 * d, d=d)
        self.w_out = store.param("decoder.w_out", (2 * d, len(self.vocab)))
        self.b_out = store.param("decoder.b_out", (len(self.vocab),), init="zeros")

    @classmethod
    def build(cls, vocab, config: DistillerConfig | None = None) -> "DistillerModel":
        config = config or DistillerConfig()
        return cls(vocab, config, ParameterStore(config.seed))

    def input_embeddings(self, seq: ImageSequence) -> Tensor:
        """Projected object features plus the image-order embedding, pre-encoder."""
        if len(seq.slots) > self.config.num_slots:
            raise ValueError(
                f"sequence has {len(seq.slots)} slots but model was built for {self.config.num_slots}"
            )
        rows = []
        for slot in seq.slots:
            if slot.features.shape[1] != FEATURE_DIM:
                raise ValueError(f"object feature dimension {slot.features.shape[1]} != {FEATURE_DIM}")
            projected = linear(Tensor(slot.features), self.w_proj, self.b_proj)
            order = ad.embed(self.order_embedding, [slot.image_index])
            rows.append(ad.add(projected, order))
        return ad.concat(rows, axis=0)

    def encode_objects(self, seq: ImageSequence) -> Tensor:
        """One encoded vector per retained object, order-free within an image."""
        if any(slot.features.shape[0] == 0 for slot in seq.slots):
            raise ValueError("all slots must hold at least one object")
        return self.encoder(self.input_embeddings(seq))

    def _attend(self, memory: Tensor, h: Tensor) -> Tensor:
        scores = ad.tanh(linear(memory, self.attn_mem) + (linear(h, self.attn_hidden) + self.attn_bias))
        weights = ad.softmax(ad.reshape(ad.matmul(scores, self.attn_v), (1, memory.shape[0])), axis=-1)
        return ad.matmul(weights, memory)

    def _step(self, prev_embedding: Tensor, h: Tensor, memory: Tensor):
        context = self._attend(memory, h)
        u = ad.concat([prev_embedding, context], axis=1)
        h_next = self.cell(u, h)
        logits = linear(ad.concat([h_next, context], axis=1), self.w_out, self.b_out)
        return logits, h_next

    def _slot_start(self, image_index: int) -> Tensor:
        return ad.embed(self.order_embedding, [image_index])

    def slot_logits(self, memory: Tensor, image_index: int, target_ids: list[int]) -> Tensor:
        """Teacher-forced logit rows for one image's gold terms plus end-of-set."""
        h = Tensor(np.zeros((1, self.config.hidden_size)))
        prev = self._slot_start(image_index)
        rows = []
        for tid in target_ids:
            logits, h = self._step(prev, h, memory)
            rows.append(logits)
            prev = ad.embed(self.term_embedding, [tid])
        return ad.concat(rows, axis=0)

    def predict_terms(self, seq: ImageSequence, beam_size: int = 3) -> list[list[str]]:
        """Per-image term lists, repetition-masked beam search, vocab order ties to low id."""
        if len(self.vocab) <= 1:
            raise ValueError("term vocabulary holds only the end-of-set marker")
        if beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        memory = self.encode_objects(seq)
        memory = Tensor(memory.data)  # inference: drop the tape
        eos = self.token_to_id[END_OF_SET]
        out = []
        for slot in seq.slots:
            terms, _score = self._decode_slot(memory, slot.image_index, beam_size, eos)
            out.append(terms)
        return out

    def _decode_slot(self, memory: Tensor, image_index: int, beam_size: int, eos: int):
        # hypothesis: (score, tokens, hidden state, used token ids)
        start = self._slot_start(image_index)
        live = [(0.0, (), Tensor(np.zeros((1, self.config.hidden_size))), frozenset())]
        finished: list[tuple[float, tuple[int, ...]]] = []
        for step in range(self.config.max_terms_per_image + 1):
            candidates = []
            for hyp_idx, (score, tokens, h, used) in enumerate(live):
                prev = start if not tokens else ad.embed(self.term_embedding, [tokens[-1]])
                logits, h_next = self._step(prev, h, memory)
                h_next = Tensor(h_next.data)  # inference: keep hypotheses off the tape
                logp = ad.log_softmax_values(logits.data)[0]
                if step == self.config.max_terms_per_image:
                    token_range = [eos]  # length bound reached, force end-of-set
                else:
                    token_range = range(len(self.vocab))
                for tok in token_range:
                    penalty = REPEAT_MASK if (tok in used and tok != eos) else 0.0
                    candidates.append((score + logp[tok] - penalty, tok, hyp_idx, h_next))
            candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
            next_live = []
            for cand_score, tok, hyp_idx, h_next in candidates[: beam_size]:
                _, tokens, _, used = live[hyp_idx]
                if tok == eos:
                    finished.append((cand_score, tokens))
                else:
                    next_live.append((cand_score, tokens + (tok,), h_next, used | {tok}))
            live = next_live
            if not live:
                break
        best_score, best_tokens = max(enumerate(finished), key=lambda kv: (kv[1][0], -kv[0]))[1]
        return [self.vocab[t] for t in best_tokens], best_score

    def save(self, path: str) -> None:
        self.store.save(
            path,
            schedule=getattr(self, "trained_schedule", None),
            extra={
                "kind": "distiller",
                "vocab": self.vocab,
                "config": {
                    "hidden_size": self.config.hidden_size,
                    "heads": self.config.heads,
                    "layers": self.config.layers,
                    "ff_multiple": self.config.ff_multiple,
                    "num_slots": self.config.num_slots,
                    "max_terms_per_image": self.config.max_terms_per_image,
                    "attention_size": self.config.attention_size,
                    "seed": self.config.seed,
                },
            },
        )

    @classmethod
    def load(cls, path: str) -> "DistillerModel":
        store, meta = ParameterStore.load(path)
        extra = meta["extra"]
        if extra.get("kind") != "distiller":
            raise ValueError(f"{path}: not a distiller checkpoint")
        return cls(extra["vocab"], DistillerConfig(**extra["config"]), store)


def build_term_vocab(term_groups_per_story) -> list[str]:
    terms = sorted({t for groups in term_groups_per_story for group in groups for t in group})
    return [END_OF_SET] + terms


def train_distiller(
    pairs,
    config: DistillerConfig | None = None,
    train: DistillerTrainConfig | None = None,
    vocab: list[str] | None = None,
):
    """Train on (ImageSequence, per-image gold term lists) pairs.

    Returns (model, per-epoch mean token cross-entropy). The vocabulary
    defaults to the gold terms; with an explicit vocabulary, gold terms
    outside it abort before any training step.
    """
    config = config or DistillerConfig()
    train = train or DistillerTrainConfig()
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot train the distiller on an empty pair set")
    if vocab is None:
        vocab = build_term_vocab(groups for _, groups in pairs)
    model = DistillerModel.build(vocab, config)
    oov = sorted(
        {t for _, groups in pairs for group in groups for t in group if t not in model.token_to_id}
    )
    if oov:
        raise ValueError(f"gold terms missing from vocabulary: {oov}")

    eos = model.token_to_id[END_OF_SET]
    state = AdamState(base_lr=train.learning_rate, warmup_steps=train.warmup_steps)
    history = []
    for epoch in range(train.epochs):
        total, count = 0.0, 0
        for seq, groups in pairs:
            if len(groups) != len(seq.slots):
                raise ValueError(
                    f"story {seq.story_id!r}: {len(groups)} gold groups for {len(seq.slots)} image slots"
                )
            memory = model.encode_objects(seq)
            all_logits, all_targets = [], []
            for slot, gold in zip(seq.slots, groups):
                target_ids = [model.token_to_id[t] for t in gold] + [eos]
                all_logits.append(model.slot_logits(memory, slot.image_index, target_ids))
                all_targets.extend(target_ids)
            loss = ad.softmax_cross_entropy(ad.concat(all_logits, axis=0), all_targets)
            ad.backward(loss)
            adam_step(model.store, model.store.collect_grads(), state)
            model.store.zero_grads()
            total += loss.item() * len(all_targets)
            count += len(all_targets)
        history.append(total / count)
        if train.log:
            train.log(f"epoch {epoch + 1}: token cross-entropy {history[-1]:.4f}")
    model.trained_schedule = state.schedule()
    return model, history
