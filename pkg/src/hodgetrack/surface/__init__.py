from .cochain import (
    Cochain0,
    Cochain1,
    Cochain2,
    ResidualNorms,
    d0,
    d1,
    delta1,
    delta2,
    residual_norms,
)
from .complex import (
    CombinatorialSurface,
    SurfaceError,
    bfs_distances,
    build_surface,
    shortest_path,
)
from .cover import (
    AsymmetryWarning,
    DoubleCoverMap,
    asymmetry,
    double_cover,
    mirror,
    mirror_one_form,
    restrict,
)
from .meshio import (
    FormatError,
    atomic_write,
    format_cochain,
    format_mesh,
    parse_cochain,
    parse_mesh,
    read_cochain,
    read_mesh,
    write_cochain,
    write_mesh,
)

__all__ = [
    "AsymmetryWarning",
    "Cochain0",
    "Cochain1",
    "Cochain2",
    "CombinatorialSurface",
    "DoubleCoverMap",
    "FormatError",
    "ResidualNorms",
    "SurfaceError",
    "asymmetry",
    "atomic_write",
    "bfs_distances",
    "build_surface",
    "d0",
    "d1",
    "delta1",
    "delta2",
    "double_cover",
    "format_cochain",
    "format_mesh",
    "mirror",
    "mirror_one_form",
    "parse_cochain",
    "parse_mesh",
    "read_cochain",
    "read_mesh",
    "residual_norms",
    "restrict",
    "shortest_path",
    "write_cochain",
    "write_mesh",
]
