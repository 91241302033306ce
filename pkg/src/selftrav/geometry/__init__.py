from .camera import (
    Z_NEAR,
    CameraRig,
    clip_polygon_near,
    forward_camera_mount,
    project_point,
)
from .footprint import FootprintSpec, footprint_corners, sweep_quads
from .labels import (
    LabelParams,
    generate_dataset_labels,
    generate_frame_labels,
)
from .raster import IGNORE, POSITIVE, UNLABELED, rasterize_polygons, rasterize_quads
from .transforms import (
    PoseInterpolator,
    RigidTransform,
    VehiclePose,
    interpolate_pose,
)

__all__ = [
    "Z_NEAR",
    "CameraRig",
    "clip_polygon_near",
    "forward_camera_mount",
    "project_point",
    "FootprintSpec",
    "footprint_corners",
    "sweep_quads",
    "LabelParams",
    "generate_dataset_labels",
    "generate_frame_labels",
    "rasterize_polygons",
    "rasterize_quads",
    "UNLABELED",
    "POSITIVE",
    "IGNORE",
    "PoseInterpolator",
    "RigidTransform",
    "VehiclePose",
    "interpolate_pose",
]
