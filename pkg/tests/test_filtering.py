import pytest

from sceneground.errors import LlmTransportError
from sceneground.filtering import (
    FilterResult,
    default_lexicon,
    filter_lexical,
    filter_llm,
    load_lexicon,
)
from sceneground.llm import ScriptedClient
from sceneground.scene import ObjectRecord, SceneTranscript

CORNER_UTTERANCE = "chair in the corner of the room, between white and yellow desks"


class FailingClient:
    model_name = "failing"

    def complete(self, turns):
        raise LlmTransportError("connection refused")


class TestLexical:
    def test_corner_chair_keeps_anchors_and_seats(self, office_scene):
        result = filter_lexical(office_scene, CORNER_UTTERANCE)
        assert result.method == "lexical"
        # Chairs (the armchair counts: "chair" is its head noun), both desks,
        # and the room anchors stay.
        assert {8, 15, 19} <= result.kept_ids
        assert {18, 49, 20, 21} <= result.kept_ids
        # Clutter unrelated to the utterance goes.
        assert 0 not in result.kept_ids  # monitor
        assert 6 not in result.kept_ids  # copier
        assert 5 not in result.kept_ids  # box

    def test_no_match_keeps_everything(self, office_scene):
        result = filter_lexical(office_scene, "the fluffy unicorn sculpture")
        assert result.kept_ids == office_scene.ids
        assert result.rationale == "no lexical match"

    def test_synonym_lookup(self):
        scene = SceneTranscript(
            "s",
            (0, 0, 0),
            (
                ObjectRecord(1, "chair", (0, 0, 0), (1, 1, 1), (9, 9, 9)),
                ObjectRecord(2, "armchair", (1, 0, 0), (1, 1, 1), (9, 9, 9)),
                ObjectRecord(3, "copier", (2, 0, 0), (1, 1, 1), (9, 9, 9)),
            ),
        )
        lexicon = {"seat": ("chair", "armchair")}
        result = filter_lexical(scene, "the comfiest seat", lexicon)
        assert result.kept_ids == {1, 2}

    def test_plural_category_mention(self, office_scene):
        result = filter_lexical(office_scene, "the desks by the window")
        assert {20, 21} <= result.kept_ids
        assert 19 not in result.kept_ids

    def test_spatial_anchor_pulls_in_walls_and_floor(self, office_scene):
        result = filter_lexical(office_scene, "the desk in the corner")
        assert {8, 9, 7} <= result.kept_ids

    def test_kept_ids_subset_of_scene(self, office_scene):
        result = filter_lexical(office_scene, CORNER_UTTERANCE)
        assert result.kept_ids <= office_scene.ids

    def test_idempotent(self, office_scene):
        first = filter_lexical(office_scene, CORNER_UTTERANCE)
        again = filter_lexical(office_scene.subset(first.kept_ids), CORNER_UTTERANCE)
        assert again.kept_ids == first.kept_ids

    def test_target_preserved_when_category_mentioned(self, office_scene):
        for utterance, gt in [
            ("the chair near the wall", 18),
            ("the monitor on the white desk", 0),
            ("the copier by the south wall", 6),
            ("the seat between the desks", 18),  # synonym route
        ]:
            result = filter_lexical(office_scene, utterance)
            assert gt in result.kept_ids, utterance


class TestLlmFilter:
    def test_parses_id_list(self, office_scene):
        llm = ScriptedClient(["[8, 15, 19]"])
        result = filter_llm(office_scene, CORNER_UTTERANCE, llm)
        assert result.method == "llm"
        assert result.kept_ids == {8, 15, 19}

    def test_malformed_reply_falls_back_to_lexical(self, office_scene):
        llm = ScriptedClient(["I could not decide, sorry!"])
        result = filter_llm(office_scene, CORNER_UTTERANCE, llm)
        assert result.method == "lexical"
        assert result.kept_ids == filter_lexical(office_scene, CORNER_UTTERANCE).kept_ids

    def test_unknown_ids_dropped(self, office_scene):
        llm = ScriptedClient(["relevant: [8, 999, 19]"])
        result = filter_llm(office_scene, CORNER_UTTERANCE, llm)
        assert result.kept_ids == {8, 19}

    def test_transport_failure_falls_back(self, office_scene):
        result = filter_llm(office_scene, CORNER_UTTERANCE, FailingClient())
        assert result.method == "lexical"
        assert "transport failure" in result.rationale
        assert result.kept_ids  # never empty

    def test_result_is_frozen_dataclass(self):
        result = FilterResult(frozenset({1}), "lexical")
        with pytest.raises(AttributeError):
            result.method = "llm"


def test_default_lexicon_loads_and_is_lowercase():
    lexicon = default_lexicon()
    assert "chair" in lexicon
    assert all(key == key.lower() for key in lexicon)


def test_load_lexicon_file(tmp_path):
    path = tmp_path / "lex.json"
    path.write_text('{"Mug": ["Cup", "glass"]}')
    lexicon = load_lexicon(path)
    assert lexicon == {"mug": ("cup", "glass")}
