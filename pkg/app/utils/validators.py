"""
Validation utilities for scenario files and command-line overrides.

Scenario fields themselves are validated by the pydantic schemas; this module
holds the cross-field checks they call and the ``key=value`` override parser.
"""

import copy
import json
import math
from collections.abc import Iterable
from typing import Any


def validate_bijective_priorities(priorities: Iterable[int]) -> list[int]:
    """
    Check that priorities rank the agents one-to-one.

    Args:
        priorities: Priority of each agent, lower value means higher priority

    Returns:
        list[int]: The priorities, unchanged

    Raises:
        ValueError: If the priorities are not a permutation of 1..n
    """
    priorities = list(priorities)
    if sorted(priorities) != list(range(1, len(priorities) + 1)):
        raise ValueError(
            f"Priorities must be a permutation of 1..{len(priorities)}, got {priorities}"
        )
    return priorities


def validate_distinct_approaches(headings_deg: Iterable[float]) -> list[float]:
    """Reject two agents on the same approach (same lane heading)."""
    headings_deg = list(headings_deg)
    normalized = [round(math.fmod(h, 360.0) % 360.0, 6) for h in headings_deg]
    if len(normalized) != len(set(normalized)):
        raise ValueError(
            f"Only one agent per approach is supported, got headings {headings_deg}"
        )
    return headings_deg


def parse_override(text: str) -> tuple[list[str], Any]:
    """
    Split ``a.b.c=value`` into its key path and value.

    The value is parsed as JSON when possible (numbers, booleans, lists),
    otherwise it is kept as a string.

    Raises:
        ValueError: If the text has no ``=`` or an empty key
    """
    if "=" not in text:
        raise ValueError(f"Override must look like key=value, got '{text}'")
    key, raw = text.split("=", 1)
    path = [part for part in key.strip().split(".") if part]
    if not path:
        raise ValueError(f"Override has an empty key: '{text}'")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_overrides(raw: dict[str, Any], overrides: Iterable[str]) -> dict[str, Any]:
    """
    Apply dotted-path overrides to a raw scenario document.

    In ``agents.<id>.<field>`` the segment after ``agents`` is the agent id,
    not a list index.

    Args:
        raw: Parsed scenario JSON
        overrides: Strings of the form ``key=value``

    Returns:
        dict: A new document with the overrides applied

    Raises:
        ValueError: If a path does not resolve
    """
    doc = copy.deepcopy(raw)
    for text in overrides:
        path, value = parse_override(text)
        node: Any = doc
        for i, part in enumerate(path[:-1]):
            parent_key = path[i - 1] if i > 0 else None
            if isinstance(node, list):
                node = _select_list_item(node, part, parent_key, text)
            elif isinstance(node, dict):
                node = node.setdefault(part, {})
            else:
                raise ValueError(f"Override '{text}': '{part}' is not a container")

        last = path[-1]
        if isinstance(node, dict):
            node[last] = value
        elif isinstance(node, list):
            node[_list_index(node, last, path[-2] if len(path) > 1 else None, text)] = value
        else:
            raise ValueError(f"Override '{text}' does not resolve")
    return doc


def _list_index(items: list[Any], part: str, parent_key: str | None, text: str) -> int:
    try:
        key = int(part)
    except ValueError:
        raise ValueError(f"Override '{text}': '{part}' is not an integer") from None

    if parent_key == "agents":
        for idx, item in enumerate(items):
            if isinstance(item, dict) and item.get("id") == key:
                return idx
        raise ValueError(f"Override '{text}': no agent with id {key}")
    if not 0 <= key < len(items):
        raise ValueError(f"Override '{text}': index {key} out of range")
    return key


def _select_list_item(items: list[Any], part: str, parent_key: str | None, text: str) -> Any:
    return items[_list_index(items, part, parent_key, text)]


def format_error_location(loc: Iterable[Any]) -> str:
    """Turn a pydantic error location tuple into a dotted field path."""
    return ".".join(str(part) for part in loc)
