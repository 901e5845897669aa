"""Projected connectivity loss and topology-aware evaluation for 3D delineation."""

from .composite import (
    CompositeConfig,
    LossReport,
    OptimizeDiverged,
    composite_loss,
    conn_loss,
    loss_2d,
    loss_3d,
    optimize,
)
from .distance import gen_distance_map, gen_distance_map_2d, point_segment_distance
from .graphs import (
    AXES,
    AnnotationGraph,
    GraphError,
    SWCError,
    load_graph,
    project_graph,
    rasterize_graph,
    save_graph,
)
from .metrics import (
    ExtractionConfig,
    MetricConfig,
    SpatialGraph,
    apls,
    ccq,
    extract_graph,
    metrics_csv,
    skeleton_voxels,
    spatial_from_annotation,
    spatial_to_annotation,
    tlts,
    voxel_graph,
)
from .skeleton import skeletonize
from .synth import Scene, SceneError, Tube, load_scene, scene_graph, synth_volume
from .topo import (
    MaximinEvent,
    RegionLabeling,
    TopoConfig,
    TopoLossResult,
    events_csv,
    label_regions,
    maximin_events,
    topo_loss,
)
from .volume import (
    DistanceVolume,
    GenConfig,
    ProjectedMap,
    load_raw_grid,
    load_volume,
    min_projection,
    save_raw_grid,
    save_volume,
    write_pgm,
)

__version__ = "0.1.0"
