"""Schwartz basic values: the ten value types, their four higher-order
categories, and the circular structure that constrains personas.

The ten values sit on a fixed circle; adjacent values are motivationally
compatible, diametric ones are in tension. Multi-value personas may only
combine two values at circular distance 1.
"""

from __future__ import annotations

from enum import Enum


class ValueType(Enum):
    """The ten basic value types, in fixed circular order."""

    SELF_DIRECTION = "SelfDirection"
    STIMULATION = "Stimulation"
    HEDONISM = "Hedonism"
    ACHIEVEMENT = "Achievement"
    POWER = "Power"
    SECURITY = "Security"
    CONFORMITY = "Conformity"
    TRADITION = "Tradition"
    BENEVOLENCE = "Benevolence"
    UNIVERSALISM = "Universalism"

    def __str__(self) -> str:
        return self.value


class HigherOrderCategory(Enum):
    """The four quadrants the ten values group into."""

    OPENNESS_TO_CHANGE = "OpennessToChange"
    SELF_ENHANCEMENT = "SelfEnhancement"
    CONSERVATION = "Conservation"
    SELF_TRANSCENDENCE = "SelfTranscendence"

    def __str__(self) -> str:
        return self.value


# Circular order, index 0..9 with wraparound.
CYCLE: tuple[ValueType, ...] = (
    ValueType.SELF_DIRECTION,
    ValueType.STIMULATION,
    ValueType.HEDONISM,
    ValueType.ACHIEVEMENT,
    ValueType.POWER,
    ValueType.SECURITY,
    ValueType.CONFORMITY,
    ValueType.TRADITION,
    ValueType.BENEVOLENCE,
    ValueType.UNIVERSALISM,
)

_CYCLE_INDEX = {v: i for i, v in enumerate(CYCLE)}

_CATEGORY_OF = {
    ValueType.SELF_DIRECTION: HigherOrderCategory.OPENNESS_TO_CHANGE,
    ValueType.STIMULATION: HigherOrderCategory.OPENNESS_TO_CHANGE,
    ValueType.ACHIEVEMENT: HigherOrderCategory.SELF_ENHANCEMENT,
    ValueType.POWER: HigherOrderCategory.SELF_ENHANCEMENT,
    ValueType.HEDONISM: HigherOrderCategory.SELF_ENHANCEMENT,
    ValueType.SECURITY: HigherOrderCategory.CONSERVATION,
    ValueType.CONFORMITY: HigherOrderCategory.CONSERVATION,
    ValueType.TRADITION: HigherOrderCategory.CONSERVATION,
    ValueType.BENEVOLENCE: HigherOrderCategory.SELF_TRANSCENDENCE,
    ValueType.UNIVERSALISM: HigherOrderCategory.SELF_TRANSCENDENCE,
}

_OPPOSED = {
    HigherOrderCategory.OPENNESS_TO_CHANGE: HigherOrderCategory.CONSERVATION,
    HigherOrderCategory.CONSERVATION: HigherOrderCategory.OPENNESS_TO_CHANGE,
    HigherOrderCategory.SELF_ENHANCEMENT: HigherOrderCategory.SELF_TRANSCENDENCE,
    HigherOrderCategory.SELF_TRANSCENDENCE: HigherOrderCategory.SELF_ENHANCEMENT,
}

MEMBERS_OF: dict[HigherOrderCategory, tuple[ValueType, ...]] = {
    cat: tuple(v for v in CYCLE if _CATEGORY_OF[v] is cat)
    for cat in HigherOrderCategory
}


def category(v: ValueType) -> HigherOrderCategory:
    """Return the higher-order category containing value ``v``."""
    return _CATEGORY_OF[v]


def cycle_index(v: ValueType) -> int:
    """Position of ``v`` on the circle, 0..9."""
    return _CYCLE_INDEX[v]


def circular_distance(a: ValueType, b: ValueType) -> int:
    """Minimum number of steps between two values on the 10-value circle.

    Symmetric, in [0, 5]; 0 only for identical values.
    """
    d = abs(_CYCLE_INDEX[a] - _CYCLE_INDEX[b])
    return min(d, len(CYCLE) - d)


def is_compatible_pair(a: ValueType, b: ValueType) -> bool:
    """True iff ``a`` and ``b`` are circle neighbours (distance exactly 1).

    Raises ValueError for equal inputs: a multi-value persona needs two
    distinct values.
    """
    if a is b:
        raise ValueError(f"compatible pair requires two distinct values, got {a} twice")
    return circular_distance(a, b) == 1


def opposed_category(c: HigherOrderCategory) -> HigherOrderCategory:
    """The diametric quadrant. Involutive: applying twice is the identity."""
    return _OPPOSED[c]


def adjacent_pairs() -> list[tuple[ValueType, ValueType]]:
    """All ten distance-1 pairs of the circle, in cycle order."""
    n = len(CYCLE)
    return [(CYCLE[i], CYCLE[(i + 1) % n]) for i in range(n)]


def value_from_name(name: str) -> ValueType:
    """Parse the wire identifier (e.g. ``"SelfDirection"``) into a ValueType."""
    for v in ValueType:
        if v.value == name:
            return v
    raise KeyError(name)


def category_from_name(name: str) -> HigherOrderCategory:
    """Parse the wire identifier (e.g. ``"Conservation"``)."""
    for c in HigherOrderCategory:
        if c.value == name:
            return c
    raise KeyError(name)
