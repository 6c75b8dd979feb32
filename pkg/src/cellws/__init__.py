"""Watershed-based 3D cell instance segmentation.

The package turns per-voxel class probability volumes (cell centroid,
cell membrane, background) into labeled instance segmentations and
scores them.  Three strategies are provided:

* ``segment_sws`` - seed-driven watershed flooding from detected
  centroid blobs,
* ``segment_ws`` - plain watershed from regional minima of the
  membrane map,
* ``segment_sv`` - watershed over-segmentation followed by supervoxel
  merging on a region adjacency graph.

All three flood a landscape built from the membrane probability minus
the distance transform of the binarized membrane, and are bit-exact
deterministic for fixed inputs.
"""
from .distance import build_landscape, edt, edt_squared
from .metrics import (
    BoundaryScores,
    CentroidStats,
    DegenerateClassError,
    EvaluationReport,
    LayerScore,
    aggregated_dice,
    aggregated_jaccard,
    boundary_scores,
    centroid_detection,
    depth_profiles,
    dice_from_jaccard,
    evaluate,
    extract_boundaries,
    mask_dice,
    mask_jaccard,
    weighted_bce_class_losses,
    weighted_bce_grad,
    weighted_bce_loss,
)
from .morphology import (
    Connectivity,
    StructuringElement,
    ball_element,
    closing,
    connected_components,
    connectivity_offsets,
    dilate,
    erode,
    mask_subtract,
    remove_small_objects,
)
from .nrrdio import NrrdFormatError, read_volume, write_volume
from .phantom import (
    PhantomConfig,
    PhantomError,
    PhantomResult,
    generate,
    inject_interior_ridge,
    interface_face_counts,
    sidecar_dict,
)
from .pipeline import (
    NoSeedsError,
    PipelineConfig,
    preprocess_maps,
    segment_sv,
    segment_sws,
    segment_ws,
)
from .supervoxel import (
    RegionAdjacencyGraph,
    apply_mapping,
    build_rag,
    merge_supervoxels,
)
from .volume import BinaryVolume, Dims, LabelVolume, ScalarVolume, threshold
from .watershed import (
    NoMarkersError,
    local_minima_markers,
    marker_watershed,
    reject_background_segments,
    seeded_watershed,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryVolume",
    "BoundaryScores",
    "CentroidStats",
    "Connectivity",
    "DegenerateClassError",
    "Dims",
    "EvaluationReport",
    "LabelVolume",
    "LayerScore",
    "NoMarkersError",
    "NoSeedsError",
    "NrrdFormatError",
    "PhantomConfig",
    "PhantomError",
    "PhantomResult",
    "PipelineConfig",
    "RegionAdjacencyGraph",
    "ScalarVolume",
    "StructuringElement",
    "aggregated_dice",
    "aggregated_jaccard",
    "apply_mapping",
    "ball_element",
    "boundary_scores",
    "build_landscape",
    "build_rag",
    "centroid_detection",
    "closing",
    "connected_components",
    "connectivity_offsets",
    "depth_profiles",
    "dice_from_jaccard",
    "dilate",
    "edt",
    "edt_squared",
    "erode",
    "evaluate",
    "extract_boundaries",
    "generate",
    "inject_interior_ridge",
    "interface_face_counts",
    "local_minima_markers",
    "marker_watershed",
    "mask_dice",
    "mask_jaccard",
    "mask_subtract",
    "merge_supervoxels",
    "preprocess_maps",
    "read_volume",
    "reject_background_segments",
    "remove_small_objects",
    "seeded_watershed",
    "segment_sv",
    "segment_sws",
    "segment_ws",
    "sidecar_dict",
    "threshold",
    "weighted_bce_class_losses",
    "weighted_bce_grad",
    "weighted_bce_loss",
    "write_volume",
    "__version__",
]
