"""Attribute specifications, schema-compatible with cohort manifests.

An attrs.json is either a bare list of attribute entries or an object
with an "attributes" key (the exact subtree a cohort manifest carries).
Entries may contain analysis-side fields like ``smooth_sigma_px`` or
``map_pattern``; this package only consumes the name and the prompts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    positive_prompt: str | None = None
    negative_prompt: str | None = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("attribute name must be non-empty")
        for field_name in ("positive_prompt", "negative_prompt"):
            value = getattr(self, field_name)
            if value is not None and not value.strip():
                raise ValueError(f"attribute '{self.name}': {field_name} is empty")

    @property
    def differential(self) -> bool:
        return self.negative_prompt is not None

    def prompt_plan(self) -> list[tuple[str | None, str]]:
        """(role, prompt) pairs to generate.

        Plain attributes yield a single (None, prompt) pair; differential
        ones yield ("pos", ...) and ("neg", ...).  The attribute name
        doubles as the prompt when no positive prompt is spelled out.
        """
        positive = self.positive_prompt if self.positive_prompt is not None else self.name
        if not self.differential:
            return [(None, positive)]
        return [("pos", positive), ("neg", self.negative_prompt)]


def load_attributes(path) -> list[AttributeSpec]:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    entries = doc.get("attributes") if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise ValueError(
            f"{path}: expected a list of attributes or an object with an 'attributes' key"
        )
    specs = []
    for entry in entries:
        if not isinstance(entry, dict) or "name" not in entry:
            raise ValueError(f"{path}: every attribute entry needs at least a 'name'")
        specs.append(
            AttributeSpec(
                name=str(entry["name"]),
                positive_prompt=entry.get("positive_prompt"),
                negative_prompt=entry.get("negative_prompt"),
            )
        )
    names = [s.name for s in specs]
    if len(names) != len(set(names)):
        raise ValueError(f"{path}: attribute names must be unique")
    if not specs:
        raise ValueError(f"{path}: no attributes declared")
    return specs
