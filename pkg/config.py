"""Configuration settings for the FitzHugh-Nagumo mean-field simulator."""
# Module-level defaults. Run files (see app/controller/run_config.py) override them per run.

# Integration
DEFAULT_DT = 1e-3
DEFAULT_HORIZON = 20.0
DEFAULT_SAMPLE_STRIDE = 100
BLOWUP_LIMIT = 1e8
X_MAX = 1e6  # only used when the opt-in clamp is enabled

# Particle systems
DEFAULT_N = 256
DEFAULT_PROXY_SIZE = 4096
PAIRWISE_CHUNK = 256  # rows per chunk in the pairwise sums; fixed so results do not depend on threads

# Ledger
L_X_MAX = 4.0
L_C_MAX = 0.2
DEFAULT_ETA = 5.0
DEFAULT_DELTA_TILDE = 0.1
DEFAULT_A_TILDE = 1.0
DEFAULT_C_INIT_EXP = 10.0
DEFAULT_XI_FRACTION = 1e-3
LEDGER_GRID_POINTS = 10_000

# Metrics
EXACT_OT_MAX = 256
MIN_REPLICAS_FOR_ERRORS = 2

# Runtime
THREADS_ENV = "FHN_THREADS"
LOG_LEVEL_ENV = "FHN_LOG_LEVEL"
COUPLING_MODES = ["none", "synchronous", "reflection_x", "reflection_c"]
KERNEL_KINDS = ["zero", "linear", "bounded_tanh"]
INIT_KINDS = ["gaussian", "laplace"]

# Output layout
MANIFEST_NAME = "manifest.json"
SERIES_PREFIX = "series_"
VERDICT_PREFIX = "verdict_"

# Verification
LEMMA_SAMPLES = 100_000
LEDGER_RANDOM_CONFIGS = 20
VERIFY_TIME_SAMPLES = 40  # default number of sampled times per verification run
VERIFY_TRANSIENT = 0.2  # fraction of the horizon skipped before time averages
OT_INSTANCES = 100
OT_SUBSAMPLE = 64
BRUTE_FORCE_INSTANCES = 50
BRUTE_FORCE_SIZE = 8
SCALING_SLOPE = (-0.65, -0.35)
SCALING_MIN_R2 = 0.9
XI_SWEEP = (1e-2, 1e-3, 1e-4)  # mollifier widths as fractions of R
DETERMINISM_THREADS = (1, 8)
CRITERIA = ["lemmas", "ledger", "lyapunov-bound", "scaling-law", "nonuniform", "appendix-b",
            "ot-oracle", "determinism"]
