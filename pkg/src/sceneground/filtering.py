"""Pre-filter scene objects down to the ones an utterance could be about.

The lexical filter keeps an object when its category, or any synonym or
hypernym of it from the lexicon, occurs in the lowercased utterance. Plural
forms and compound heads count, so "desks" matches the category desk and
"chair" matches armchair. Walls and floors are kept whenever the utterance
uses a spatial anchor (corner/room/wall/floor) because those relations need
them as reference geometry. If nothing matches at all, every object is kept
rather than starving the reasoner.

The LLM filter asks a chat model for the relevant ids and falls back to the
lexical filter whenever the reply cannot be used.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Mapping

from .errors import LlmTransportError
from .scene import SceneTranscript

if TYPE_CHECKING:
    from .llm import LlmClient

logger = logging.getLogger(__name__)

Lexicon = Mapping[str, tuple[str, ...]]

SPATIAL_ANCHOR_WORDS = frozenset({"corner", "room", "wall", "floor"})
ANCHOR_CATEGORIES = frozenset({"wall", "floor"})

_MIN_SUFFIX_LEN = 4


@dataclass(frozen=True)
class FilterResult:
    """Outcome of a relevance filter pass."""

    kept_ids: frozenset[int]
    method: str  # "lexical" or "llm"
    rationale: str | None = None


@lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    with resources.files("sceneground.data").joinpath("lexicon.json").open("rb") as fh:
        return _freeze_lexicon(json.load(fh))


def load_lexicon(path: str | Path) -> Lexicon:
    """Load a category -> [synonyms] JSON map."""
    return _freeze_lexicon(json.loads(Path(path).read_text(encoding="utf-8")))


def _freeze_lexicon(raw: Mapping[str, list[str]]) -> Lexicon:
    return {
        str(key).strip().lower(): tuple(str(v).strip().lower() for v in values)
        for key, values in raw.items()
    }


def _synonym_terms(category: str, lexicon: Lexicon) -> set[str]:
    """All terms that may stand for `category`: itself, its listed synonyms,
    and every lexicon group that mentions it (hypernym direction)."""
    terms = {category}
    terms.update(lexicon.get(category, ()))
    for key, values in lexicon.items():
        if category == key or category in values:
            terms.add(key)
            terms.update(values)
    return terms


def _word_variants(word: str) -> set[str]:
    variants = {word, word + "s", word + "es"}
    if word.endswith("y") and len(word) > 2:
        variants.add(word[:-1] + "ies")
    return variants


def _phrase_pattern(term: str) -> re.Pattern[str]:
    # Multiword terms match as a phrase; the last word may be pluralized.
    words = term.split()
    head = words[-1]
    body = r"\s+".join(re.escape(w) for w in words[:-1])
    head_alt = "|".join(re.escape(v) for v in sorted(_word_variants(head)))
    pattern = rf"\b{body}\s+({head_alt})\b" if body else rf"\b({head_alt})\b"
    return re.compile(pattern)


def _term_matches(term: str, utterance: str, words: set[str]) -> bool:
    if " " in term:
        return bool(_phrase_pattern(term).search(utterance))
    if _word_variants(term) & words:
        return True
    # Compound heads: "chair" should hit "armchair", and "armchairs" in the
    # utterance should hit the category "chair".
    for word in words:
        if len(word) >= _MIN_SUFFIX_LEN and term.endswith(word) and term != word:
            return True
        if len(term) >= _MIN_SUFFIX_LEN and word.endswith(term) and term != word:
            return True
    return False


def filter_lexical(
    scene: SceneTranscript,
    utterance: str,
    lexicon: Lexicon | None = None,
) -> FilterResult:
    """Keep objects whose category (or a synonym/hypernym) the utterance mentions."""
    lexicon = default_lexicon() if lexicon is None else lexicon
    text = utterance.lower()
    words = set(re.findall(r"[a-z]+", text))

    kept: set[int] = set()
    matched_terms: set[str] = set()
    for obj in scene.objects:
        for term in _synonym_terms(obj.category, lexicon):
            if _term_matches(term, text, words):
                kept.add(obj.id)
                matched_terms.add(term)
                break

    anchored = bool(SPATIAL_ANCHOR_WORDS & words)
    if anchored:
        for obj in scene.objects:
            if obj.category in ANCHOR_CATEGORIES:
                kept.add(obj.id)

    if not kept:
        return FilterResult(
            kept_ids=frozenset(scene.ids),
            method="lexical",
            rationale="no lexical match",
        )
    rationale = "matched: " + ", ".join(sorted(matched_terms))
    if anchored:
        rationale += "; spatial anchor keeps walls/floor"
    return FilterResult(kept_ids=frozenset(kept), method="lexical", rationale=rationale)


_FILTER_PROMPT = """\
A 3D scene contains these detected objects (category, id):
{listing}

A person refers to one object in this scene as: "{utterance}"

Which objects could matter for resolving that reference? Include the possible
targets and any objects the description relates them to (anchors such as
walls or the floor when the description mentions corners or the room).
Reply with just a JSON list of object ids, e.g. [3, 7, 12].
"""


def filter_llm(
    scene: SceneTranscript,
    utterance: str,
    llm: "LlmClient",
    lexicon: Lexicon | None = None,
) -> FilterResult:
    """Ask a chat model which object ids are relevant; fall back to the
    lexical filter when the reply is unusable or transport fails."""
    from .engine import ChatTurn  # local import to avoid a cycle

    listing = "\n".join(f"- {obj.category}, id={obj.id}" for obj in scene.objects)
    prompt = _FILTER_PROMPT.format(listing=listing, utterance=utterance)
    try:
        reply, _usage = llm.complete([ChatTurn("user", prompt)])
    except LlmTransportError as exc:
        logger.warning("relevance filter LLM call failed, using lexical fallback: %s", exc)
        lexical = filter_lexical(scene, utterance, lexicon)
        return FilterResult(
            kept_ids=lexical.kept_ids,
            method="lexical",
            rationale=f"llm transport failure ({exc}); lexical fallback",
        )

    candidate_ids = {int(m) for m in re.findall(r"\d+", reply)}
    kept = frozenset(candidate_ids & scene.ids)
    if not kept:
        lexical = filter_lexical(scene, utterance, lexicon)
        return FilterResult(
            kept_ids=lexical.kept_ids,
            method="lexical",
            rationale="llm reply unusable; lexical fallback",
        )
    return FilterResult(kept_ids=kept, method="llm", rationale=reply.strip())
