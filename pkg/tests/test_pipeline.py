import json
import os

import pytest

from conftest import pipeline_config
from storybridge.config import RunConfig, apply_overrides
from storybridge.ioutil import InputError, sha256_file, write_jsonl
from storybridge.pipeline import (
    evaluate_stories,
    rerun_from_manifest,
    run_pipeline,
    stage_generate,
)


def test_run_config_defaults_match_published_values():
    config = RunConfig()
    assert config.hidden_size == 512
    assert config.heads == 2
    assert config.layers == 4
    assert config.beam_size == 3
    assert config.learning_rate == pytest.approx(1e-3)
    assert config.alpha == pytest.approx(20.0)
    assert config.gamma == pytest.approx(5.0)
    assert config.top_k_objects == 25


def test_config_overrides_and_validation():
    config = apply_overrides(RunConfig(), ["hidden_size=64", "two_hop=off", "stages=enrich,generate"])
    assert config.hidden_size == 64
    assert config.two_hop is False
    assert config.stages == ["enrich", "generate"]
    with pytest.raises(InputError, match="unknown config key"):
        apply_overrides(RunConfig(), ["nope=1"])
    with pytest.raises(InputError, match="key=value"):
        apply_overrides(RunConfig(), ["hidden_size"])
    with pytest.raises(InputError, match="unknown config keys"):
        RunConfig.from_dict({"hidden_size": 64, "mystery": True})


def test_pipeline_produces_bridged_six_sentence_story(pipeline_run):
    stories = pipeline_run["stories"]
    assert len(stories) == 20
    six = [s for s in stories if len(s["sentences"]) == 6]
    assert six, "expected at least one six-sentence story"
    for story in six:
        assert story["bridge"] is not None
        assert story["bridge"]["head"] == "Dog_Noun"
        assert story["bridge"]["tail"] == "Cake_Noun"
        assert story["bridge_slot"] == 2
        assert len(story["sentence_spans"]) == 6
    five = [s for s in stories if len(s["sentences"]) == 5]
    assert all(s["bridge"] is None for s in five)


def test_pipeline_rerun_from_manifest_is_byte_identical(pipeline_run, tmp_path):
    manifest_path = os.path.join(pipeline_run["out_dir"], "manifest.json")
    second = str(tmp_path / "rerun")
    rerun_from_manifest(manifest_path, out_dir=second)
    for name in ("terms.jsonl", "paths.jsonl", "stories.jsonl", "manifest.json"):
        a = os.path.join(pipeline_run["out_dir"], name)
        b = os.path.join(second, name)
        assert sha256_file(a) == sha256_file(b), name


def test_manifest_records_hashes_of_all_inputs(pipeline_run):
    manifest = pipeline_run["manifest"]
    config = pipeline_run["config"]
    for path in (
        config.features_path,
        config.distiller_model,
        config.lm_model,
        config.generator_model,
        config.kg[0]["path"],
        config.kg[1]["path"],
    ):
        assert manifest["inputs"][path] == sha256_file(path)
    assert set(manifest["outputs"]) == {"terms.jsonl", "paths.jsonl", "stories.jsonl"}


def test_manifest_rejects_tampered_inputs(pipeline_run, tmp_path):
    manifest_path = os.path.join(pipeline_run["out_dir"], "manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    kg_path = pipeline_run["config"].kg[0]["path"]
    manifest["inputs"][kg_path] = "0" * 64
    tampered = str(tmp_path / "manifest.json")
    with open(tampered, "w") as fh:
        json.dump(manifest, fh)
    with pytest.raises(InputError, match="changed since"):
        rerun_from_manifest(tampered, out_dir=str(tmp_path / "out"))


def test_generate_only_stage_runs_from_provided_paths(pipeline_run, tmp_path):
    config = pipeline_config(pipeline_run["world"], str(tmp_path / "gen_only"))
    config.stages = ["generate"]
    config.terms_path = os.path.join(pipeline_run["out_dir"], "paths.jsonl")
    manifest = run_pipeline(config)
    assert list(manifest["outputs"]) == ["stories.jsonl"]
    out = os.path.join(str(tmp_path / "gen_only"), "stories.jsonl")
    assert sha256_file(out) == sha256_file(os.path.join(pipeline_run["out_dir"], "stories.jsonl"))


def test_missing_stage_inputs_name_stage_and_file(pipeline_run, tmp_path):
    config = pipeline_config(pipeline_run["world"], str(tmp_path / "x"))
    config.features_path = str(tmp_path / "absent.jsonl")
    with pytest.raises(InputError, match=r"stage 'distill'.*absent.jsonl"):
        run_pipeline(config)

    config = pipeline_config(pipeline_run["world"], str(tmp_path / "y"))
    config.stages = ["enrich"]
    config.terms_path = ""
    with pytest.raises(InputError, match="stage 'enrich'"):
        run_pipeline(config)

    config = pipeline_config(pipeline_run["world"], str(tmp_path / "z"))
    config.kg = []
    with pytest.raises(InputError, match="knowledge-graph"):
        run_pipeline(config)


def test_unknown_stage_rejected(pipeline_run, tmp_path):
    config = pipeline_config(pipeline_run["world"], str(tmp_path / "s"))
    config.stages = ["distill", "polish"]
    with pytest.raises(InputError, match="polish"):
        run_pipeline(config)


def test_stage_generate_flags_missing_model(pipeline_run, tmp_path):
    config = pipeline_config(pipeline_run["world"], str(tmp_path))
    config.generator_model = str(tmp_path / "never.json")
    with pytest.raises(InputError, match=r"stage 'generate'.*never.json"):
        stage_generate(config, os.path.join(pipeline_run["out_dir"], "paths.jsonl"), str(tmp_path / "o.jsonl"))


def test_evaluate_stories_against_references(pipeline_run):
    scores = evaluate_stories(
        os.path.join(pipeline_run["out_dir"], "stories.jsonl"),
        pipeline_run["world"]["corpus"],
    )
    assert scores["stories"] == 20
    for n in range(1, 5):
        assert 0.0 <= scores[f"bleu{n}"] <= 1.0
    assert scores["bleu1"] > 0.5  # memorized world decodes close to gold
    assert 0.0 < scores["distinct2"] <= 1.0


def test_evaluate_stories_requires_matching_ids(pipeline_run, tmp_path):
    orphan = str(tmp_path / "cand.jsonl")
    write_jsonl(orphan, [{"story_id": "ghost", "sentences": [["hi"]]}])
    with pytest.raises(InputError, match="ghost"):
        evaluate_stories(orphan, pipeline_run["world"]["corpus"])
