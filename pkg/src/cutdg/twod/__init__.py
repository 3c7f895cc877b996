from .assembly import (
    Assembly2DError,
    Layout2D,
    Operators2D,
    Problem2D,
    TriBasis,
    assemble_2d,
    error_2d,
    load_2d,
    project_2d,
    segment_rule,
    time_step_2d,
)
from .mesh import (
    ActiveTopology2D,
    Classification2D,
    CutRegion2D,
    Geometry2DError,
    LineInterface,
    TriMesh,
    classify_2d,
    clip_polygon,
    clip_segment,
    polygon_area,
)
