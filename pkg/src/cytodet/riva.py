"""Reference constants for the RIVA cervical-cytology dataset.

Per-class instance counts of the training split and the 1024x1024 image
size; used by the canned synthetic profile and as a realistic fixture
for the weighting schemes.
"""

from __future__ import annotations

from .datamodel import ClassCatalog

__all__ = ["RIVA_CLASS_COUNTS", "RIVA_IMAGE_SIZE", "riva_catalog"]

# Bethesda categories with instance counts; order fixes class indices.
RIVA_CLASS_COUNTS: dict[str, int] = {
    "NILM": 9457,
    "INFL": 8190,
    "ENDO": 1270,
    "ASCUS": 356,
    "LSIL": 3048,
    "ASCH": 416,
    "HSIL": 1835,
    "SCC": 1586,
}

RIVA_IMAGE_SIZE: tuple[int, int] = (1024, 1024)


def riva_catalog(with_counts: bool = True) -> ClassCatalog:
    """Eight-class catalog, optionally carrying the instance counts."""
    names = list(RIVA_CLASS_COUNTS)
    counts = list(RIVA_CLASS_COUNTS.values()) if with_counts else None
    return ClassCatalog.from_names(names, counts)
