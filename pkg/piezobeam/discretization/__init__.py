# Grid and operator assembly
from .matrices import (
    Scheme,
    GridConfig,
    SystemOperator,
    assemble_blocks,
    stiffness_matrix,
    mass_matrix,
    boundary_selector
)

# Energy forms
from .energy import (
    energy_gram,
    midpoint_energy,
    midpoint_fields
)

# Energy coordinates
from .conditioning import conditioning_transform
