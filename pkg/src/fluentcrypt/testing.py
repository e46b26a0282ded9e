"""Deterministic randomness for tests. Never used by the library itself."""

from __future__ import annotations

import random
from typing import Optional

from fluentcrypt.engine import RuleSet, load_rules
from fluentcrypt.fluent import TaskBuilder


class DeterministicRandom:
    """Seeded byte source with the same call signature as ``random_bytes``."""

    def __init__(self, seed: int = 0):
        self._rng = random.Random(seed)

    def __call__(self, n: int) -> bytes:
        return self._rng.randbytes(n)


def seeded_builder(kind: str, seed: int = 0, rules: Optional[RuleSet] = None) -> TaskBuilder:
    return TaskBuilder(kind, rules or load_rules(), _random=DeterministicRandom(seed))
