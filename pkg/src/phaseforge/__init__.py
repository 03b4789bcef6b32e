"""Phase retrieval from noisy Fourier magnitudes.

Reconstruction methods (HIO, alternating minimization, and alternating
phase Langevin sampling under pluggable denoiser priors), the measurement
operators and file formats they share, and a seeded benchmark harness.
"""

from .images import (
    PSNR_CAP_DB,
    PgmError,
    as_complex_grid,
    as_image,
    crop,
    embed,
    load_pgm,
    psnr,
    register,
    save_pgm,
)
from .operators import (
    FourierOperator,
    GaussianOperator,
    LinearOperator,
    MeasurementProblem,
    load_measurements,
    phase,
    residual_norm,
    save_measurements,
    synthesize,
)
from .denoisers import (
    BiasFreeCnn,
    Denoiser,
    GaussianMMSEDenoiser,
    IdentityDenoiser,
    load_weights,
    save_weights,
    smoothing_cnn,
)
from .rng import RngStream
from .solvers import (
    AplsConfig,
    HioConfig,
    LangevinConfig,
    RunReport,
    altmin,
    apls,
    hio,
    hio_init,
    langevin_sample,
    reconstruct,
    step_schedule,
)

__version__ = "0.1.0"
