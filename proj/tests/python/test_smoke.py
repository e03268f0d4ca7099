import json
import math
import os
import pathlib

import jsonschema
import pytest

import taskalign

ROOT = pathlib.Path(os.environ.get("TASKALIGN_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))
SCHEMA = json.loads((ROOT / "schema" / "triple.schema.json").read_text())


@pytest.fixture
def rab():
    return json.loads((ROOT / "tests" / "fixtures" / "rab_triple.json").read_text())


def test_fixture_matches_schema_and_round_trips(rab):
    jsonschema.validate(rab, SCHEMA)
    canonical = json.loads(taskalign.canonical_triple(rab))
    jsonschema.validate(canonical, SCHEMA)
    assert taskalign.canonical_triple(canonical) == taskalign.canonical_triple(rab)


def test_invalid_triple_raises_with_code(rab):
    rab["mapping"]["entries"][0]["task_node_ids"].append("g9")
    with pytest.raises(taskalign.TaskAlignError) as info:
        taskalign.canonical_triple(rab)
    assert info.value.code == "DanglingReference"
    assert isinstance(info.value, ValueError)


def test_simplify_collapses_unfocused_intent(rab):
    view = taskalign.simplify(rab, ["A"])
    assert {n["id"] for n in view["nodes"]} == {"g1", "g2", "u_B"}
    assert set(view["highlight"]) == {"g1", "g2"}
    assert taskalign.expand_supernode(view, "u_B") == ["g3", "g4", "g5"]
    with pytest.raises(taskalign.TaskAlignError) as info:
        taskalign.simplify(rab, ["nope"])
    assert info.value.code == "InvalidFocus"


def test_diff_and_updates(rab):
    after = json.loads(json.dumps(rab["graph"]))
    after["nodes"].append({"id": "g6", "label": "zip output"})
    delta = taskalign.diff_graphs(rab["graph"], after)
    assert [n["id"] for n in delta["added_nodes"]] == ["g6"]

    tree, focus = taskalign.apply_updates(
        rab["intent_tree"], [{"op": "ADD", "parent_id": "R", "new_node": {"text": "zip the output"}}]
    )
    assert len(tree["nodes"]) == 4
    assert len(focus) == 1
    tree, focus = taskalign.apply_updates(rab["intent_tree"], [{"op": "NOOP"}])
    assert focus == set()


def test_metrics():
    assert taskalign.tokenize("The cat, sat.") == ["the", "cat", ",", "sat", "."]
    assert abs(taskalign.rouge("the cat sat", "the cat ran") - 0.6667) < 1e-4
    assert taskalign.rouge("a b c d", "a c b d", "L") == pytest.approx(0.75)
    assert taskalign.bleu("the cat", "the cat sat") == pytest.approx(math.exp(-0.5))
    assert abs(taskalign.speedup(91.6, 4.0) - 22.9) < 1e-9
    scores = taskalign.score_corpus([("a b c", "a b c"), ("x y", "x y")])
    assert scores == {"rouge1": 1.0, "rouge2": 1.0, "rougeL": 1.0, "bleu": pytest.approx(1.0)}
    with pytest.raises(taskalign.TaskAlignError) as info:
        taskalign.score_corpus([])
    assert info.value.code == "EmptyCorpus"


def test_cli_simplify_and_exit_codes(tmp_path):
    code, out, _ = taskalign.run_cli(
        ["simplify", "--triple", str(ROOT / "tests" / "fixtures" / "rab_triple.json"), "--focus", "B"]
    )
    assert code == 0
    assert {n["id"] for n in json.loads(out)["nodes"]} == {"u_A", "g3", "g4", "g5"}
    assert taskalign.run_cli([])[0] == 1
    empty = tmp_path / "pairs.jsonl"
    empty.write_text("")
    assert taskalign.run_cli(["eval", "--pairs", str(empty)])[0] == 2


def test_mock_distill_triples_match_schema(tmp_path):
    prompts = tmp_path / "prompts.txt"
    prompts.write_text("scrape web articles, extract the text\nalso download the images\n")
    out = tmp_path / "pairs.jsonl"
    code, summary, err = taskalign.run_cli(["distill", "--mock", "--prompts", str(prompts), "--out", str(out)])
    assert code == 0, err
    assert json.loads(summary)["rounds"] == 2
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(lines) == 2
    for line in lines:
        jsonschema.validate(json.loads(line["target"]), SCHEMA)
