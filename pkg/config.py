import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Run environment settings - these never change numerical results
LOG_LEVEL = os.getenv("DELAYNORM_LOG_LEVEL", "WARNING").upper()
# Threads used to correct predicted candidates (0 = one per physical core)
CORRECTION_WORKERS = int(os.getenv("DELAYNORM_WORKERS", "0"))

# Model settings
# Relative singular value threshold deciding the rank of E
RANK_TOL = 1e-10
# Relative tolerance under which two delays are the same delay
DELAY_MERGE_TOL = 1e-12
# U^T A_0 V is treated as singular below this reciprocal condition number
CAUSALITY_RCOND_TOL = 1e-12

# Transfer function settings
# Solves with a reciprocal condition below this are pole hits
POLE_RCOND_TOL = 1e-14

# Spectral discretization settings
# Default number of Chebyshev intervals
DEFAULT_N = 20
# Keep the history grid only for state components that are actually delayed
COMPACT_HISTORY = True
# Generalized eigenvalues above this modulus are treated as infinite
INFINITE_EIGENVALUE_CAP = 1e8
# |beta| must exceed this fraction of max(|alpha|, |beta|) for a finite eigenvalue
BETA_TOL = 1e-12
# Pole/zero pairs closer than this (relative) cancel
CANCELLATION_TOL = 1e-8
# Conjugate pairing tolerance for zeros and poles
CONJUGATE_PAIR_TOL = 1e-8
# Zero-pole-gain form must reproduce G_N to this relative accuracy
ZPK_VALIDATION_TOL = 1e-6
ZPK_VALIDATION_POINTS = 200

# Extremum computation settings
# Predictor eigenvalues with |Re| <= AXIS_TOL * (1 + |lambda|) lie on the axis
AXIS_TOL = 1e-6
# Zeros of G_N this close to the axis become direct minimum candidates
AXIS_ZERO_TOL = 1e-8
# Predicted frequencies closer than this (relative) are the same candidate
PREDICTION_DEDUP_TOL = 1e-8
# Gauss-Newton stops once the residual is below CORRECTOR_TOL * (1 + xi)
CORRECTOR_TOL = 1e-10
MAX_ITERATIONS = 50
MAX_STEP_HALVINGS = 20
# Extremum values below this are minima without correction
ZERO_MAGNITUDE_TOL = 1e-12
# Corrected frequencies closer than this (relative) are merged
EXTREMA_DEDUP_TOL = 1e-6
# Step used for the second difference that classifies an extremum
CLASSIFY_STEP = 1e-4
# Corrected xi must agree with |G(j omega)| to this relative accuracy
XI_CONSISTENCY_TOL = 1e-8

# Strong norm settings
# ||U^T A_i V|| > ACTIVE_DELAY_TOL * max(1, ||A_i||) makes delay i active
ACTIVE_DELAY_TOL = 1e-12
# Grid points per angle for a given number of active delays
GRID_DENSITY = {1: 128, 2: 128, 3: 32, 4: 16}
MAX_GRID_DIMENSION = 4
# Coordinate ascent on the delay angles stops below this change
ANGLE_REFINE_TOL = 1e-8
MAX_REFINE_SWEEPS = 50
# Grid points evaluated per batched solve
GRID_CHUNK_SIZE = 4096
# Poles of G_N with real part above -STABILITY_MARGIN trigger a warning
STABILITY_MARGIN = 1e-8
