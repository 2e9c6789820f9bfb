"""Target sound-event class lists.

The default list covers the 18 task classes; evaluation-set extensions are
supplied via a plain text file (one label per line, ``#`` starts a comment).
"""

from __future__ import annotations

import re
from pathlib import Path

DEFAULT_CLASSES: tuple[str, ...] = (
    "AlarmClock",
    "Blender",
    "Buzzer",
    "Clapping",
    "Cough",
    "CupboardOpenClose",
    "Dishes",
    "Doorbell",
    "FootSteps",
    "HairDryer",
    "MechanicalFans",
    "MusicalKeyboard",
    "Percussion",
    "Pour",
    "Speech",
    "Typing",
    "VacuumCleaner",
    "BicycleBell",
)

# Labels double as file-name stems (<ClassLabel>_<ordinal>.wav), so keep them
# to a safe character set.
_LABEL_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_-]*$")


def validate_labels(labels) -> tuple[str, ...]:
    """Check label syntax and uniqueness; returns the labels as a tuple."""
    labels = tuple(labels)
    if not labels:
        raise ValueError("class list is empty")
    seen = set()
    for label in labels:
        if not _LABEL_RE.match(label):
            raise ValueError(f"invalid class label {label!r}")
        if label in seen:
            raise ValueError(f"duplicate class label {label!r}")
        seen.add(label)
    return labels


def load_class_list(path: str | Path) -> tuple[str, ...]:
    """Read a class list file: one label per line, blank lines and # comments ignored."""
    labels = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            labels.append(line)
    return validate_labels(labels)
