"""Text-similarity judges scoring predicted verbs/objects against ground truth.

Two kinds, both returning an integer in {-1, 0, 1}:

* ``RuleBasedJudge`` - deterministic and offline. Texts are lowercased,
  tokenized, stripped of stopwords, and mapped through a synonym table; the
  score is 1 when the prediction's tokens are a subset of the ground truth's
  (up to synonyms), -1 when the token sets are disjoint, 0 otherwise.
* ``ExternalJudge`` - sends fixed prompt templates to a caller-supplied
  completion function (an LLM at temperature 0). A reply that is not a single
  integer in range is scored 0 and recorded in ``diagnostics``.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

from .errors import ValidationError

VERB_SYSTEM_PROMPT = "You are a highly intelligent assistant that can analyze actions in text."

VERB_PROMPT_TEMPLATE = (
    "Given a particular action description of '{gt}', is '{pred}' similar to the verbs in "
    "this action? Please rate from -1 to 1, where -1 means completely unrelated, 0 means "
    "ambiguous, and 1 means '{pred}' captures the meaning of '{gt}' or is directly in it. "
    "Brief/general descriptions should still be considered as +1. "
    "Please answer with a single integer."
)

OBJECT_SYSTEM_PROMPT = (
    "You are a highly intelligent assistant that can analyze actions and resulting objects in text."
)

OBJECT_PROMPT_TEMPLATE = (
    "Given the object description '{gt}', is '{pred}' similar to it? Please rate from -1 "
    "to 1, where -1 means completely unrelated, 0 means ambiguous, and 1 means '{pred}' is "
    "similar. Over- or under-specified descriptions should still be considered as +1. "
    "Please answer with a single integer."
)


def _load_default_table() -> dict:
    with resources.files("statetrack").joinpath("data/synonyms.json").open("rb") as fh:
        return json.load(fh)


class RuleBasedJudge:
    """Deterministic token/synonym judge; runs with no network access."""

    kind = "rule_based"

    def __init__(self, table: Mapping | str | Path | None = None):
        if table is None:
            data = _load_default_table()
        elif isinstance(table, (str, Path)):
            data = json.loads(Path(table).read_text(encoding="utf-8"))
        else:
            data = dict(table)
        groups = data.get("groups", [])
        self._stopwords = frozenset(data.get("stopwords", []))
        self._group_of: dict[str, int] = {}
        for gid, group in enumerate(groups):
            for token in group:
                self._group_of.setdefault(token, gid)
        self.diagnostics: list[str] = []

    def _canon_tokens(self, text: str) -> set:
        tokens = set()
        for raw in text.lower().split():
            token = "".join(ch for ch in raw if ch.isalnum())
            if not token or token in self._stopwords:
                continue
            gid = self._group_of.get(token)
            tokens.add(("g", gid) if gid is not None else ("t", token))
        return tokens

    def score(self, gt_text: str, pred_text: str) -> int:
        gt = self._canon_tokens(gt_text)
        pred = self._canon_tokens(pred_text)
        if not gt or not pred:
            return 0
        if pred <= gt:
            return 1
        if pred.isdisjoint(gt):
            return -1
        return 0

    def score_verb(self, gt_verb: str, pred_verb: str) -> int:
        return self.score(gt_verb, pred_verb)

    def score_object(self, gt_text: str, pred_text: str) -> int:
        return self.score(gt_text, pred_text)


class ExternalJudge:
    """LLM-backed judge; `complete(system_prompt, user_prompt) -> reply text`."""

    kind = "external"

    def __init__(self, complete: Callable[[str, str], str]):
        self._complete = complete
        self.diagnostics: list[str] = []

    def _ask(self, system: str, prompt: str) -> int:
        reply = self._complete(system, prompt)
        try:
            value = int(str(reply).strip())
        except (TypeError, ValueError):
            self.diagnostics.append(f"non-integer judge reply: {reply!r}")
            return 0
        if value not in (-1, 0, 1):
            self.diagnostics.append(f"out-of-range judge reply: {reply!r}")
            return 0
        return value

    def score_verb(self, gt_verb: str, pred_verb: str) -> int:
        return self._ask(VERB_SYSTEM_PROMPT, VERB_PROMPT_TEMPLATE.format(gt=gt_verb, pred=pred_verb))

    def score_object(self, gt_text: str, pred_text: str) -> int:
        return self._ask(
            OBJECT_SYSTEM_PROMPT, OBJECT_PROMPT_TEMPLATE.format(gt=gt_text, pred=pred_text)
        )


Judge = RuleBasedJudge | ExternalJudge


def _require_text(name: str, value: str) -> None:
    if not isinstance(value, str) or not value.strip():
        raise ValueError(f"{name} must be nonempty text")


def judge_verb(judge: Judge, gt_verb: str, pred_verb: str) -> int:
    _require_text("gt_verb", gt_verb)
    _require_text("pred_verb", pred_verb)
    return judge.score_verb(gt_verb, pred_verb)


def judge_object(judge: Judge, gt_text: str, pred_text: str) -> int:
    _require_text("gt_text", gt_text)
    _require_text("pred_text", pred_text)
    return judge.score_object(gt_text, pred_text)


def make_judge(spec: str) -> Judge:
    """Build a judge from a CLI spec: "rule_based" or "external" (env-configured)."""
    if spec == "rule_based":
        return RuleBasedJudge()
    if spec == "external":
        from . import llm

        return ExternalJudge(llm.completion_from_env())
    raise ValidationError(f"unknown judge kind {spec!r}")
