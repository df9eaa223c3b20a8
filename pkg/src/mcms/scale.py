"""Scale definitions and the raw response data model.

Item codes are the join key everywhere: response files, model specs and
reports refer to items by code only. Item wording is kept as metadata.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import yaml


@dataclass(frozen=True)
class FactorDef:
    name: str
    items: tuple[str, ...]
    marker: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if self.marker is None and self.items:
            object.__setattr__(self, "marker", self.items[0])


@dataclass(frozen=True)
class ScaleDefinition:
    """A multi-factor rating scale.

    Parameters
    ----------
    name : str
        Short scale name.
    stem : str
        Question stem shown before the items.
    response_min, response_max : int
        Inclusive bounds of the integer response range.
    factors : tuple of FactorDef
        Factors in presentation order. The flattened item order of the
        factors is the column order used by every response matrix.
    item_text : mapping, optional
        Item wording keyed by item code. Not used by any analysis.
    """

    name: str
    stem: str
    response_min: int
    response_max: int
    factors: tuple[FactorDef, ...]
    item_text: Mapping[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def items(self) -> tuple[str, ...]:
        return tuple(item for f in self.factors for item in f.items)

    @property
    def factor_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    def factor(self, name: str) -> FactorDef:
        for f in self.factors:
            if f.name == name:
                return f
        raise KeyError(name)

    def factor_of(self, item: str) -> str:
        for f in self.factors:
            if item in f.items:
                return f.name
        raise KeyError(item)


class Attention(enum.Enum):
    NO = "No"
    YES = "Yes"
    DONT_KNOW = "DontKnow"
    MISSING = "Missing"

    @classmethod
    def parse(cls, text: str) -> "Attention":
        key = text.strip().replace(" ", "").replace("'", "").lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        if key == "":
            return cls.MISSING
        raise ValueError(f"unknown attention answer {text!r}")


@dataclass(frozen=True)
class ResponseRecord:
    respondent_id: str
    group: str
    item_answers: Mapping[str, int]
    test_item_answers: Mapping[str, int] = field(default_factory=dict)
    attention_answer: Attention = Attention.MISSING


@dataclass(frozen=True)
class ResponseMatrix:
    """Complete-case numeric responses of one group.

    ``rows`` is an (n, p) integer or float array whose columns follow
    ``items``. The array is made read-only on construction.
    """

    items: tuple[str, ...]
    rows: np.ndarray
    group: str = "ALL"

    def __post_init__(self):
        rows = np.array(self.rows)
        if rows.dtype.kind not in "iuf":
            rows = rows.astype(float)
        if rows.ndim != 2 or rows.shape[1] != len(self.items):
            raise ValueError(
                f"rows must be (n, {len(self.items)}), got shape {rows.shape}"
            )
        if rows.shape[0] < 1:
            raise ValueError("a response matrix needs at least one row")
        rows.setflags(write=False)
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def columns(self, items) -> np.ndarray:
        idx = [self.items.index(i) for i in items]
        return self.rows[:, idx]


MCMS_ITEM_TEXT = {
    "Am1": "I don't know why, CrowdFlower tasks often seem like a waste of time.",
    "Am2": "I don't know why I'm doing CrowdFlower tasks, it's pointless work.",
    "Am3": "I don't know why, I often perceive CrowdFlower tasks as an annoying chore.",
    "ExMat1": "Because CrowdFlower tasks give me financial gains.",
    "ExMat2": "For the income CrowdFlower tasks provide me.",
    "ExMat3": "Because of the money I get from doing CrowdFlower tasks.",
    "ExSoc1": "Because other people want me to do CrowdFlower tasks (e.g. family, friends,...).",
    "ExSoc2": "Because other people say I should (e.g. family, friends,...).",
    "ExSoc3": "Because other people expect it of me (e.g. family, friends,...).",
    "Introj1": "Because otherwise I would have a bad conscience.",
    "Introj2": "Because otherwise I will feel ashamed of myself.",
    "Introj3": "Because otherwise I will feel bad about myself.",
    "Ident1": "Because this is the type of work I chose to do to attain a certain lifestyle.",
    "Ident2": "Because I chose this type of work to attain my career goals.",
    "Ident3": (
        "Because it is the type of work I have chosen to attain certain important objectives."
    ),
    "Intrin1": "Because I have fun doing CrowdFlower tasks.",
    "Intrin2": "Because I enjoy doing CrowdFlower tasks.",
    "Intrin3": "Because what I do in CrowdFlower tasks is interesting.",
}


def builtin_mcms() -> ScaleDefinition:
    """The built-in 18-item, 6-factor MCMS crowdworker motivation scale."""
    layout = [
        ("Amotivation", "Am"),
        ("Material External Regulation", "ExMat"),
        ("Social External Regulation", "ExSoc"),
        ("Introjected Regulation", "Introj"),
        ("Identified Regulation", "Ident"),
        ("Intrinsic Motivation", "Intrin"),
    ]
    factors = tuple(
        FactorDef(name, tuple(f"{prefix}{k}" for k in (1, 2, 3)))
        for name, prefix in layout
    )
    return ScaleDefinition(
        name="MCMS",
        stem="Why do you or would you put efforts into doing CrowdFlower tasks?",
        response_min=1,
        response_max=7,
        factors=factors,
        item_text=dict(MCMS_ITEM_TEXT),
    )


def validate_scale(scale: ScaleDefinition) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    if not scale.response_min < scale.response_max:
        problems.append(
            f"response range ({scale.response_min}, {scale.response_max}) is empty"
        )
    seen: dict[str, str] = {}
    for f in scale.factors:
        if len(f.items) == 0:
            problems.append(f"factor {f.name} has no items")
            continue
        if len(f.items) < 2:
            problems.append(f"factor {f.name} has fewer than 2 items")
        if len(set(f.items)) != len(f.items):
            problems.append(f"factor {f.name} lists an item more than once")
        if f.marker not in f.items:
            problems.append(f"factor {f.name} marker {f.marker} is not one of its items")
        for item in dict.fromkeys(f.items):
            if item in seen:
                problems.append(
                    f"item {item} appears in both {seen[item]} and {f.name}"
                )
            else:
                seen[item] = f.name
    names = [f.name for f in scale.factors]
    if len(set(names)) != len(names):
        problems.append("factor names are not unique")
    return problems


def scale_to_dict(scale: ScaleDefinition) -> dict:
    doc = {
        "name": scale.name,
        "stem": scale.stem,
        "response_min": int(scale.response_min),
        "response_max": int(scale.response_max),
        "factors": [
            {"name": f.name, "items": list(f.items), "marker": f.marker}
            for f in scale.factors
        ],
    }
    if scale.item_text:
        doc["item_text"] = {k: scale.item_text[k] for k in scale.items if k in scale.item_text}
    return doc


def scale_from_dict(doc: Mapping) -> ScaleDefinition:
    factors = tuple(
        FactorDef(f["name"], tuple(f["items"]), f.get("marker"))
        for f in doc["factors"]
    )
    return ScaleDefinition(
        name=doc["name"],
        stem=doc.get("stem", ""),
        response_min=int(doc["response_min"]),
        response_max=int(doc["response_max"]),
        factors=factors,
        item_text=dict(doc.get("item_text", {})),
    )


def dump_scale(scale: ScaleDefinition) -> str:
    return yaml.safe_dump(scale_to_dict(scale), sort_keys=False, allow_unicode=True)


def parse_scale(text: str) -> ScaleDefinition:
    return scale_from_dict(yaml.safe_load(text))


def load_scale(path) -> ScaleDefinition:
    with open(path, encoding="utf-8") as fh:
        return parse_scale(fh.read())


def save_scale(scale: ScaleDefinition, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_scale(scale))
