# Eigendecomposition
from .eigen import (
    Branch,
    SignHalf,
    Spectrum,
    compute_spectrum,
    closed_form_lambda,
    closed_form_spectrum
)

# Branch separation
from .branches import separate_branches

# Fourier filtering
from .filtering import (
    build_filter,
    full_filter,
    project_state
)

# Observability
from .observability import observability_ratio
