"""powermesh: adaptive isosurface extraction from signed distance fields.

The pipeline builds a weighted (regular) Delaunay tetrahedralization over
field samples whose weights are squared surface distances, extracts a surface
from cross-category edges of the complex, and adaptively inserts new sites
where the extracted surface deviates most from the field's gradient.
"""

from .predicates import Sign, orient3d, in_conflict, orthocenter
from .fields import (
    FieldSample,
    ScalarField,
    GridField,
    ProjectionConfig,
    analytic_field,
    project_to_surface,
    read_sdfg,
    write_sdfg,
)
from .delaunay import (
    DuplicateSiteError,
    InsertionResult,
    Tetrahedralization,
    WeightedSite,
    init_domain,
)
from .extraction import (
    DualRule,
    DualVertex,
    SiteClass,
    SurfaceMesh,
    SurfacePatch,
    category,
    classify_site,
    edge_dual_vertex,
    extract_mesh,
)
from .refinement import (
    RefineConfig,
    RunStats,
    run,
    triangle_deviation,
    patch_deviation,
)
from .mesh import TriangleMesh, read_obj, write_obj, write_ply
from .metrics import (
    MeshSampleSet,
    MetricsReport,
    chamfer,
    f1,
    marching_cubes,
    normal_consistency,
    sample_mesh,
)

__version__ = "0.1.0"
