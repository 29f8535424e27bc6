"""Registry of the 44 CWE weakness categories used as prediction labels."""

from __future__ import annotations

import re
from dataclasses import dataclass

# Fixed label space. The order is load-bearing: label indices, classifier
# output columns and confusion-matrix axes all follow it, so reordering
# would silently remap stored predictions.
CWE_IDS: tuple[str, ...] = (
    "CWE-36", "CWE-390", "CWE-391", "CWE-459", "CWE-789",
    "CWE-78", "CWE-363", "CWE-543", "CWE-839",
    "CWE-41", "CWE-89", "CWE-209", "CWE-252", "CWE-400",
    "CWE-584", "CWE-834", "CWE-835",
    "CWE-23", "CWE-190", "CWE-412", "CWE-832",
    "CWE-191", "CWE-195", "CWE-196", "CWE-197", "CWE-367",
    "CWE-674", "CWE-764", "CWE-765", "CWE-820", "CWE-821", "CWE-833",
    "CWE-88", "CWE-774", "CWE-194", "CWE-253", "CWE-369", "CWE-414",
    "CWE-460", "CWE-564", "CWE-567", "CWE-606", "CWE-609", "CWE-663",
)

NUM_CLASSES = len(CWE_IDS)

_CWE_ID_RE = re.compile(r"^CWE-\d+$")


@dataclass(frozen=True)
class CweLabel:
    """One weakness category: its CWE identifier and its registry index."""

    id: str
    index: int

    def __post_init__(self) -> None:
        if not _CWE_ID_RE.match(self.id):
            raise ValueError(f"malformed CWE id: {self.id!r}")
        if not 0 <= self.index < NUM_CLASSES:
            raise ValueError(f"label index {self.index} outside [0, {NUM_CLASSES})")


CWE_REGISTRY: dict[str, CweLabel] = {
    cwe_id: CweLabel(cwe_id, i) for i, cwe_id in enumerate(CWE_IDS)
}


def lookup_label(cwe_id: str) -> CweLabel:
    """Return the registry entry for ``cwe_id`` or raise KeyError."""
    try:
        return CWE_REGISTRY[cwe_id]
    except KeyError:
        raise KeyError(f"unknown CWE id: {cwe_id!r}") from None
