"""Element meshes: generation, splitting, connectivity and file IO."""
from .connectivity import build_side_connectivity
from .core import Box, Element, Mesh, Side, meshes_equal
from .elements import ElementType, affine_map
from .generate import PRESETS, generate_box_mesh, plan_split_layout, preset_mesh, split_to_mixed
from .io import read_mesh, write_mesh

__all__ = [
    "Box", "Element", "ElementType", "Mesh", "PRESETS", "Side", "affine_map",
    "build_side_connectivity", "generate_box_mesh", "meshes_equal", "plan_split_layout",
    "preset_mesh", "read_mesh", "split_to_mixed", "write_mesh",
]
