import json
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenethreads.errors import UnparsableDocument
from scenethreads.screenplay import (ActionLine, DialogueTurn, LineKind, RawDocument, classify_lines, emit_canonical,
                                     normalize_speaker, normalize_text, parse_screenplay, read_canonical,
                                     segment_sentences)


def parse(text, slug="t"):
    return parse_screenplay(RawDocument(slug, text))


def screenplay(blocks, header="INT. ROOM - DAY"):
    """Build screenplay text from (speaker, [lines]) and ("", action) blocks."""
    out = [header, ""]
    for speaker, body in blocks:
        if not speaker:
            out += [body, ""]
            continue
        out.append(" " * 20 + speaker)
        out += [" " * 10 + line for line in body]
        out.append("")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# the kitchen scene fixture


def test_fixture_structure(sheldon_text):
    scenes = parse(sheldon_text, "young-sheldon")
    assert len(scenes) == 1
    s = scenes[0]
    assert s.header == "INT. COOPER HOUSE - KITCHEN - MORNING"
    assert len(s.turn_ids()) == 13
    assert len(s.dialogue_lines()) == 13
    assert len(s.actions()) == 2
    utts = s.utterances()
    assert len(utts) == 17
    assert [u.position for u in utts] == list(range(17))
    assert [u.utt_id for u in utts if u.line_id == "D13"] == ["D13.1", "D13.2", "D13.3"]
    assert [u.text for u in utts if u.line_id == "D6"] == ["Really?", "I laid it out for him."]


def test_fixture_offscreen_speaker(sheldon_text):
    s = parse(sheldon_text)[0]
    turn = [el for el in s.elements if isinstance(el, DialogueTurn) and el.speaker == "SHELDON"][0]
    assert turn.off_screen
    assert turn.lines[0].sentences[0].text == "MOM, I CAN'T FIND MY BOWTIE!!!"


def test_title_page_not_a_scene(sheldon_text):
    kinds = dict(classify_lines(sheldon_text))
    assert kinds["YOUNG SHELDON"] is LineKind.ACTION


def test_action_lines_break_turns():
    scenes = parse(screenplay([("ANN", ["Hi."]), ("", "A door slams."), ("ANN", ["Hello again."])]))
    els = scenes[0].elements
    assert [type(e).__name__ for e in els] == ["DialogueTurn", "ActionLine", "DialogueTurn"]
    assert els[0].turn_id != els[2].turn_id
    assert isinstance(els[1], ActionLine) and els[1].text == "A door slams."


def test_contd_continues_turn():
    text = screenplay([("ANN", ["Wait."]), ("", "She turns."), ("ANN (CONT'D)", ["Never mind."]), ("BOB", ["Ok."])])
    s = parse(text)[0]
    turns = [e for e in s.elements if isinstance(e, DialogueTurn)]
    assert turns[0].turn_id == turns[1].turn_id
    assert turns[1].continued and not turns[0].continued
    assert turns[2].turn_id != turns[0].turn_id
    assert len(s.turn_ids()) == 2


def test_contd_different_speaker_is_new_turn():
    s = parse(screenplay([("ANN", ["Wait."]), ("BOB (CONT'D)", ["What."])]))[0]
    turns = [e for e in s.elements if isinstance(e, DialogueTurn)]
    assert turns[0].turn_id != turns[1].turn_id
    assert not turns[1].continued


def test_parenthetical_is_direction_not_dialogue():
    text = "INT. ROOM\n\n" + " " * 20 + "ANN\n" + " " * 15 + "(quietly)\n" + " " * 10 + "Go away.\n"
    s = parse(text)[0]
    turn = s.elements[0]
    assert turn.directions == ["(quietly)"]
    assert [u.text for u in s.utterances()] == ["Go away."]


def test_multiple_scenes_and_ids():
    text = screenplay([("ANN", ["One."])]) + "\n" + screenplay([("BOB", ["Two.", "Three"])], header="EXT. STREET - NIGHT")
    scenes = parse(text)
    assert [s.scene_id for s in scenes] == ["S1", "S2"]
    assert scenes[1].utterances()[0].position == 0
    assert scenes[1].utterances()[0].line_id == "D2"
    assert scenes[1].turn_ids() == ["L2"]


def test_no_header_is_unparsable():
    with pytest.raises(UnparsableDocument):
        parse("just some prose\nwith no structure\n")


def test_raw_document_validation():
    with pytest.raises(ValueError):
        RawDocument("Bad Slug", "x")
    with pytest.raises(ValueError):
        RawDocument("ok", "x", source_kind="novel")


# --------------------------------------------------------------------------
# speaker, text, sentences


@pytest.mark.parametrize("cue,expected", [
    ("SHELDON (O.S.)", ("SHELDON", True, False)),
    ("MARY (V.O.)", ("MARY", True, False)),
    ("GEORGIE (CONT'D)", ("GEORGIE", False, True)),
    ("GEORGIE CONT'D", ("GEORGIE", False, True)),
    ("DR. STURGIS (O.S.) (CONT'D)", ("DR. STURGIS", True, True)),
    ("  mary  ", ("MARY", False, False)),
])
def test_normalize_speaker(cue, expected):
    assert normalize_speaker(cue) == expected


@pytest.mark.parametrize("raw,expected", [
    ("wait. . . what", "wait… what"),
    ("wait... what", "wait… what"),
    ("so -- I left", "so — I left"),
    ("so - I left", "so — I left"),
    ("well-known  fact", "well-known fact"),
])
def test_normalize_text(raw, expected):
    assert normalize_text(raw) == expected


@pytest.mark.parametrize("line,expected", [
    ("Really? I laid it out for him.", ["Really?", "I laid it out for him."]),
    ("Mr. Smith is here. Dr. Jones too.", ["Mr. Smith is here.", "Dr. Jones too."]),
    ("Wait… What now?", ["Wait… What now?"]),
    ("Wait... What now?", ["Wait... What now?"]),
    ('He said "Go." Then left.', ['He said "Go."', "Then left."]),
    ("No! No! No!", ["No!", "No!", "No!"]),
    ("it was 3.5 miles away.", ["it was 3.5 miles away."]),
    ("", []),
])
def test_segment_sentences(line, expected):
    assert segment_sentences(line) == expected


@given(st.lists(st.sampled_from(["Go", "home", "now", "Mr.", "Dr.", "I", "said", "yes", "no"]), min_size=1, max_size=12),
       st.sampled_from([".", "?", "!"]))
def test_segmentation_preserves_text(words, punct):
    line = " ".join(words) + punct
    parts = segment_sentences(line)
    assert " ".join(parts) == line
    assert all(p == p.strip() and p for p in parts)


# --------------------------------------------------------------------------
# canonical JSONL


def test_canonical_fields(sheldon_text):
    text = emit_canonical(parse(sheldon_text, "ys"), "ys")
    recs = [json.loads(l) for l in text.splitlines()]
    assert not text.endswith("\n\n") and "\r" not in text
    dialogue = [r for r in recs if r["kind"] == "dialogue"]
    action = [r for r in recs if r["kind"] == "action"]
    assert set(dialogue[0]) == {"title", "scene_id", "kind", "turn_id", "line_id", "utt_id", "speaker", "position", "text"}
    assert set(action[0]) == {"title", "scene_id", "kind", "line_id", "text"}
    assert len(dialogue) == 17 and len(action) == 2


def test_canonical_round_trip(sheldon_text):
    scenes = parse(sheldon_text, "ys")
    text = emit_canonical(scenes, "ys")
    back = read_canonical(text)["ys"]
    assert [u for s in back for u in s.utterances()] == [u for s in scenes for u in s.utterances()]
    assert emit_canonical(back, "ys") == text


def test_canonical_round_trip_contd():
    scenes = parse(screenplay([("ANN", ["Wait."]), ("", "She turns."), ("ANN (CONT'D)", ["Never mind."])]))
    back = read_canonical(emit_canonical(scenes, "t"))["t"]
    assert [type(e).__name__ for e in back[0].elements] == ["DialogueTurn", "ActionLine", "DialogueTurn"]
    assert back[0].elements[2].continued
    assert back[0].turn_ids() == scenes[0].turn_ids()


names = st.sampled_from(["ANN", "BOB", "CARA", "DEV"])
sentences = st.lists(st.sampled_from(["Go home.", "Why?", "Fine.", "I said no!", "Not now, Mr. Lee."]), min_size=1, max_size=3)


@settings(max_examples=60)
@given(st.lists(st.one_of(st.tuples(names, st.lists(sentences.map(" ".join), min_size=1, max_size=1)),
                          st.tuples(st.just(""), st.sampled_from(["A car passes.", "Rain."]))), min_size=1, max_size=12))
def test_parse_emit_read_fixpoint(blocks):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scenes = parse(screenplay(blocks))
    text = emit_canonical(scenes, "t")
    assert emit_canonical(read_canonical(text).get("t", []), "t") == text
    utts = [u for s in scenes for u in s.utterances()]
    assert [u.position for u in utts] == list(range(len(utts)))
    assert len({u.utt_id for u in utts}) == len(utts)
