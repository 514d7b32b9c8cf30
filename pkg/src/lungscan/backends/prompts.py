"""Curated descriptive sentences used to score candidate crops.

These are fixed, hand-written descriptions; they are not generated at run
time. Keys are ROI target names used by the segmentation pipeline.
"""

RIGHT_LUNG = (
    "a chest CT slice showing the right lung, a large dark air-filled region",
    "the right lung in an axial CT image, dark and spongy with thin vessels",
    "an axial computed tomography view of the right lung field",
)

LEFT_LUNG = (
    "a chest CT slice showing the left lung, a large dark air-filled region",
    "the left lung in an axial CT image, dark and spongy with thin vessels",
    "an axial computed tomography view of the left lung field",
)

BOTH_LUNGS = (
    "a chest CT slice showing both lungs, dark air-filled regions on either side",
    "the left and right lungs in an axial CT image",
)

PER_LUNG_TARGETS = {"right_lung": RIGHT_LUNG, "left_lung": LEFT_LUNG}
SINGLE_TARGETS = {"lungs": BOTH_LUNGS}


def default_prompts(roi_mode: str) -> dict[str, tuple[str, ...]]:
    if roi_mode == "per-lung":
        return dict(PER_LUNG_TARGETS)
    if roi_mode == "single":
        return dict(SINGLE_TARGETS)
    raise ValueError(f"unknown roi_mode {roi_mode!r}")
