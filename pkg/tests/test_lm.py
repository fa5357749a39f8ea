import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from storybridge.lm import (
    BOS,
    EOS,
    SEP,
    UNK,
    GRULanguageModel,
    LMTrainConfig,
    NGramLM,
    linearize_groups,
    load_lm,
    log_prob,
    perplexity,
    train_lm,
)


def test_linearize_groups_markers():
    seq = linearize_groups([["a", "b"], ["c"]])
    assert seq == [BOS, "a", "b", SEP, "c", EOS]


def test_bigram_unsmoothed_hand_count():
    model = NGramLM.train([["a", "b", "a", "b"]], order=2, smoothing_k=0.0, vocab={"a", "b"})
    assert model.prob("b", ["a"]) == pytest.approx(1.0)


def test_bigram_add_one_hand_count():
    model = NGramLM.train([["a", "b", "a", "b"]], order=2, smoothing_k=1.0, vocab={"a", "b"})
    # count(a b)=2, count(a .)=2, V=2: (2+1)/(2+2)
    assert model.prob("b", ["a"]) == pytest.approx(0.75)


def test_uniform_unigram_log_prob():
    # scored positions cover each type once, so the unigram is uniform over V=4
    corpus = [["a", "b", "c", "d", "a"]]
    model = NGramLM.train(corpus, order=1, smoothing_k=0.0, vocab={"a", "b", "c", "d"})
    # three scored tokens under a uniform unigram over V=4
    assert log_prob(model, ["a", "b", "c", "d"]) == pytest.approx(3 * math.log(0.25))
    assert perplexity(model, ["a", "b", "c", "d"]) == pytest.approx(4.0)


def test_markers_only_sequence_scores_single_token():
    model = NGramLM.train([[BOS, "x", EOS], [BOS, EOS]], order=2, smoothing_k=0.0)
    lp = log_prob(model, [BOS, EOS])
    assert lp == pytest.approx(math.log(model.prob(EOS, [BOS])))


def test_log_prob_matches_per_token_accumulation():
    corpus = [[BOS, "a", "b", SEP, "c", EOS], [BOS, "b", "b", SEP, "a", EOS]]
    model = NGramLM.train(corpus, order=2, smoothing_k=0.5)
    seq = [BOS, "a", "b", SEP, "a", EOS]
    manual = sum(math.log(model.prob(seq[i], seq[:i])) for i in range(1, len(seq)))
    assert log_prob(model, seq) == pytest.approx(manual, rel=1e-12)


def test_memorized_sequence_perplexity_is_one():
    model = NGramLM.train([["a", "b", "c"]] * 3, order=2, smoothing_k=0.0, vocab={"a", "b", "c"})
    assert perplexity(model, ["a", "b", "c"]) == pytest.approx(1.0)


@given(st.integers(min_value=0, max_value=10**6))
@settings(max_examples=25, deadline=None)
def test_perplexity_consistent_with_log_prob(seed):
    rng = np.random.default_rng(seed)
    corpus = [[BOS] + [f"t{rng.integers(5)}" for _ in range(rng.integers(1, 6))] + [EOS] for _ in range(4)]
    model = NGramLM.train(corpus, order=2, smoothing_k=1.0)
    seq = corpus[0]
    assert perplexity(model, seq) == pytest.approx(math.exp(-log_prob(model, seq) / (len(seq) - 1)))
    assert perplexity(model, seq) >= 1.0


def test_ngram_normalization_sums_to_one():
    corpus = [[BOS, "a", "b", EOS], [BOS, "b", "a", EOS]]
    model = NGramLM.train(corpus, order=2, smoothing_k=1.0)
    for ctx in ([BOS], ["a"], ["b"], ["unseen_context"]):
        total = sum(model.next_token_distribution(ctx).values())
        assert abs(total - 1.0) < 1e-9


def test_gru_normalization_sums_to_one():
    corpus = [[BOS, "a", "b", EOS]]
    model, _ = train_lm(corpus, LMTrainConfig(kind="gru", hidden_size=8, epochs=2, seed=1))
    total = sum(model.next_token_distribution([BOS, "a"]).values())
    assert abs(total - 1.0) < 1e-9


def test_appending_tokens_never_increases_log_prob():
    corpus = [[BOS, "a", "b", "c", EOS]]
    model = NGramLM.train(corpus, order=2, smoothing_k=1.0)
    seq = [BOS, "a", "b", "c", EOS]
    prev = 0.0
    for end in range(2, len(seq) + 1):
        lp = log_prob(model, seq[:end])
        assert lp <= prev + 1e-12
        prev = lp


def test_unknown_tokens_map_to_unk_never_dropped():
    model = NGramLM.train([[BOS, "a", EOS]], order=2, smoothing_k=1.0)
    assert UNK in model.vocab
    lp = log_prob(model, [BOS, "never_seen", EOS])
    assert math.isfinite(lp) and lp < 0


def test_empty_corpus_rejected():
    with pytest.raises(ValueError, match="empty corpus"):
        train_lm([], LMTrainConfig(kind="ngram"))
    with pytest.raises(ValueError, match="empty corpus"):
        NGramLM.train([])


def test_gru_overfits_single_sequence_to_low_perplexity():
    seq = [BOS, "dog", "park", SEP, "ball", "dog", EOS]
    cfg = LMTrainConfig(kind="gru", hidden_size=24, epochs=150, learning_rate=3e-3, warmup_steps=20, seed=3)
    model, history = train_lm([seq] * 4, cfg)
    assert history[-1] < history[0]
    assert perplexity(model, seq) <= 1.05


def test_gru_ranking_agrees_with_ngram_oracle_after_convergence():
    liked = [BOS, "a", "b", SEP, "c", EOS]
    disliked = [BOS, "c", "a", SEP, "b", EOS]
    corpus = [liked] * 6
    gru, _ = train_lm(corpus, LMTrainConfig(kind="gru", hidden_size=16, epochs=120, learning_rate=3e-3, warmup_steps=20, seed=0))
    ngram = NGramLM.train(corpus, order=2, smoothing_k=0.1)
    assert perplexity(gru, liked) < perplexity(gru, disliked)
    assert perplexity(ngram, liked) < perplexity(ngram, disliked)


def test_term_sequence_file_roundtrip(tmp_path):
    from storybridge.ioutil import InputError
    from storybridge.lm import load_term_sequences, save_term_sequences

    path = str(tmp_path / "sequences.jsonl")
    seqs = [[BOS, "a", "b", EOS], [BOS, "c", EOS]]
    save_term_sequences(path, seqs)
    assert load_term_sequences(path) == seqs
    (tmp_path / "bad.jsonl").write_text('{"nope": 1}\n')
    with pytest.raises(InputError, match="tokens"):
        load_term_sequences(str(tmp_path / "bad.jsonl"))


def test_trained_gru_checkpoint_records_schedule(tmp_path):
    corpus = [[BOS, "a", "b", EOS]]
    model, _ = train_lm(corpus, LMTrainConfig(kind="gru", hidden_size=8, epochs=2, seed=1))
    path = str(tmp_path / "lm.json")
    model.save(path)
    import json

    payload = json.loads(open(path).read())
    assert payload["schedule"]["decay"] == "inverse_sqrt"
    assert payload["schedule"]["step_count"] == 2


def test_lm_checkpoints_roundtrip(tmp_path):
    corpus = [[BOS, "a", "b", EOS], [BOS, "b", "a", EOS]]
    ngram = NGramLM.train(corpus, order=2, smoothing_k=0.5)
    npath = str(tmp_path / "ngram.json")
    ngram.save(npath)
    loaded = load_lm(npath)
    assert isinstance(loaded, NGramLM)
    assert log_prob(loaded, corpus[0]) == pytest.approx(log_prob(ngram, corpus[0]))

    gru, _ = train_lm(corpus, LMTrainConfig(kind="gru", hidden_size=8, epochs=3, seed=2))
    gpath = str(tmp_path / "gru.json")
    gru.save(gpath)
    loaded_gru = load_lm(gpath)
    assert isinstance(loaded_gru, GRULanguageModel)
    assert log_prob(loaded_gru, corpus[0]) == pytest.approx(log_prob(gru, corpus[0]), rel=1e-12)
