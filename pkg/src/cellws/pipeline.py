"""End-to-end segmentation strategies over 3-class probability volumes.

Three routes from (centroid, membrane, background) probabilities to an
instance labeling:

  sws  seeds from the centroid map flood a membrane-distance landscape
  ws   the raw membrane map floods from its own sub-threshold basins
  sv   minima-seeded supervoxels merge across weak membrane boundaries

All three finish the same way: segments lying mostly inside the detected
background are discarded, and whatever spilled into the background mask
is cleared, so the result labels exactly the non-rejected foreground.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distance import build_landscape
from .morphology import (
    Connectivity,
    ball_element,
    closing,
    connected_components,
    mask_subtract,
    remove_small_objects,
)
from .supervoxel import apply_mapping, build_rag, merge_supervoxels
from .volume import BinaryVolume, LabelVolume, ScalarVolume, threshold
from .watershed import (
    local_minima_markers,
    marker_watershed,
    reject_background_segments,
    seeded_watershed,
)

__all__ = [
    "PipelineConfig",
    "NoSeedsError",
    "preprocess_maps",
    "segment_sws",
    "segment_ws",
    "segment_sv",
]


class NoSeedsError(RuntimeError):
    """The centroid map produced no usable seed after cleanup."""


@dataclass(frozen=True)
class PipelineConfig:
    """Tuning knobs shared by the segmentation strategies."""

    membrane_threshold: float = 0.5
    background_threshold: float = 0.5
    centroid_threshold: float = 0.8
    closing_diameter: int = 5
    min_background_object: int = 1000
    background_reject_frac: float = 0.5
    sv_merge_threshold: float = 0.5
    seed_connectivity: Connectivity = Connectivity.VERTEX26
    flood_connectivity: Connectivity = Connectivity.FACE6

    def __post_init__(self) -> None:
        for name in (
            "membrane_threshold",
            "background_threshold",
            "centroid_threshold",
            "background_reject_frac",
            "sv_merge_threshold",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.closing_diameter < 1 or self.closing_diameter % 2 == 0:
            raise ValueError(
                f"closing_diameter must be odd and positive, got {self.closing_diameter}"
            )
        if self.min_background_object < 0:
            raise ValueError(
                f"min_background_object must be >= 0, got {self.min_background_object}"
            )


def _validate_inputs(cfg: PipelineConfig, **maps: ScalarVolume) -> None:
    dims = None
    for name, vol in maps.items():
        vol.validate_probability_map(name)
        if dims is None:
            dims = vol.dims
        elif vol.dims != dims:
            raise ValueError(f"{name} dims {vol.dims!r} differ from {dims!r}")


def preprocess_maps(
    centroid: ScalarVolume,
    membrane: ScalarVolume,
    background: ScalarVolume,
    cfg: PipelineConfig = PipelineConfig(),
) -> tuple[BinaryVolume, BinaryVolume, BinaryVolume]:
    """Turn the three probability maps into (seed, membrane, background) masks.

    Membrane and background are thresholded at their configured levels;
    small background specks are dropped.  Seeds are the closed
    high-confidence centroid blobs with membrane voxels subtracted, so a
    seed never straddles a detected membrane.
    """
    _validate_inputs(cfg, centroid=centroid, membrane=membrane, background=background)
    membrane_bin = threshold(membrane, cfg.membrane_threshold)
    background_bin = remove_small_objects(
        threshold(background, cfg.background_threshold),
        cfg.min_background_object,
        cfg.seed_connectivity,
    )
    seed_bin = mask_subtract(
        closing(threshold(centroid, cfg.centroid_threshold), ball_element(cfg.closing_diameter)),
        membrane_bin,
    )
    return seed_bin, membrane_bin, background_bin


def _finalize(
    labels: LabelVolume, background_bin: BinaryVolume, cfg: PipelineConfig
) -> LabelVolume:
    """Discard mostly-background segments, then clear the background mask.

    The watershed labels every voxel, so segments of foreground objects
    also swallow nearby background.  Rejection is judged on those raw
    segments; afterwards the background voxels themselves are zeroed so
    the output covers exactly the non-rejected foreground.
    """
    kept = reject_background_segments(labels, background_bin, cfg.background_reject_frac)
    cleared = np.where(background_bin.data, np.uint32(0), kept.data)
    return LabelVolume(labels.dims, cleared)


def segment_sws(
    centroid: ScalarVolume,
    membrane: ScalarVolume,
    background: ScalarVolume,
    cfg: PipelineConfig = PipelineConfig(),
) -> LabelVolume:
    """Seed-driven watershed strategy.

    Seeds detected from the centroid map flood a landscape whose basins
    are carved by the distance to the nearest membrane voxel.  Raises
    NoSeedsError when the centroid map yields no seed.
    """
    seed_bin, membrane_bin, background_bin = preprocess_maps(
        centroid, membrane, background, cfg
    )
    markers = connected_components(seed_bin, cfg.seed_connectivity)
    if markers.instance_count() == 0:
        raise NoSeedsError("no seeds found above the centroid threshold")
    landscape = build_landscape(membrane, membrane_bin, background_bin)
    labels = seeded_watershed(landscape, markers, cfg.flood_connectivity)
    return _finalize(labels, background_bin, cfg)


def segment_ws(
    membrane: ScalarVolume,
    background: ScalarVolume,
    cfg: PipelineConfig = PipelineConfig(),
) -> LabelVolume:
    """Plain watershed baseline.

    Floods the raw membrane probability from the connected components of
    voxels strictly below the membrane threshold.  No centroid map is
    used, so touching cells whose shared membrane dips below the
    threshold merge into one basin.
    """
    _validate_inputs(cfg, membrane=membrane, background=background)
    background_bin = remove_small_objects(
        threshold(background, cfg.background_threshold),
        cfg.min_background_object,
        cfg.seed_connectivity,
    )
    labels = marker_watershed(membrane, cfg.membrane_threshold, cfg.flood_connectivity)
    return _finalize(labels, background_bin, cfg)


def segment_sv(
    membrane: ScalarVolume,
    background: ScalarVolume,
    cfg: PipelineConfig = PipelineConfig(),
) -> LabelVolume:
    """Supervoxel merging strategy.

    Over-segments the membrane map by flooding from every regional
    minimum, then merges adjacent supervoxels whose shared boundary has
    an average membrane probability below the merge threshold.  Strong
    interior structures survive as split cells, which makes this route
    prone to over-segmentation rather than merging errors.
    """
    _validate_inputs(cfg, membrane=membrane, background=background)
    background_bin = remove_small_objects(
        threshold(background, cfg.background_threshold),
        cfg.min_background_object,
        cfg.seed_connectivity,
    )
    minima = local_minima_markers(membrane, cfg.flood_connectivity)
    supervoxels = seeded_watershed(membrane, minima, cfg.flood_connectivity)
    rag = build_rag(supervoxels, membrane)
    mapping = merge_supervoxels(rag, cfg.sv_merge_threshold)
    labels = apply_mapping(supervoxels, mapping)
    return _finalize(labels, background_bin, cfg)
