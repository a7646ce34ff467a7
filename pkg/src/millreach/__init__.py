"""millreach: ball-end cutter accessibility and occlusion analysis.

Given a triangle mesh and a parameterized ball-end cutter, millreach samples
the surface into Voronoi sites, tests which sites the cutter can reach over a
hemisphere of approach directions, labels the unreachable ones, and ranks the
sites that block them. A batch pipeline turns mesh directories into labeled
dataset records.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateBBox,
    EmptyInput,
    EmptyInputDir,
    EmptyMesh,
    FormatError,
    InvalidCount,
    LengthMismatch,
    MillreachError,
    NotWatertight,
    ParseError,
)
from .cutter import (
    PRESETS,
    CollisionClass,
    Cutter,
    CutterPreset,
    collide_point,
    parse_cutter_spec,
    random_cutter,
)
from .mesh import (
    TriangleMesh,
    ValidationReport,
    export_colored_mesh,
    load_mesh,
    normalize_scale,
    save_ply,
    validate,
)
from .sampling import (
    DensityReport,
    DirectionSet,
    SurfaceSamples,
    VolumeSamples,
    check_sampling_density,
    points_inside_mesh,
    project_to_surface,
    sample_directions,
    sample_surface,
    sample_volume,
    save_sites,
)
from .accessibility import (
    AccessibilityOptions,
    AccessibilityReport,
    analyze,
    analyze_volume,
    brute_force_analyze,
    brute_force_analyze_volume,
    rotation_to_z,
    select_occlusion,
)
from .metrics import (
    Confusion,
    LabelVector,
    accuracy,
    confusion,
    f1,
    read_predictions,
    score_pair,
)
from .dataset import (
    DatasetRecord,
    PipelineConfig,
    PipelineSummary,
    load_pipeline_config,
    read_record,
    run_pipeline,
    write_record,
)
