# Shared protocol
# TATT tensor interchange: magic, version, dtype, pad, rows (u64 LE), cols (u64 LE), payload
TATT_MAGIC = b"TATT"
TATT_VERSION = 1
TATT_DTYPE_F64 = 1
TATT_HEADER_FMT = "<4sBB2xQQ"
TATT_HEADER_SIZE = 24
CHUNK_SIZE = 64 * 1024

# Numeric defaults
NORM_GUARD = 1e-12
DENOM_GUARD = 1e-6
RANK_TOL_SCALE = 1e-10
EXP_LIMIT = 700.0
ORTHO_DEGENERACY_TOL = 1e-8

# CLI exit codes
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

# CSV columns, one per report field
BENCH_FIELDS = ("variant", "n", "m", "d", "repeats", "median_seconds", "mad_seconds")
# report-level columns repeat on every row so a CSV rebuilds the whole report
APPROX_REPORT_FIELDS = ("d", "n_keys", "kind", "large_R_threshold")
APPROX_CELL_FIELDS = ("R", "m", "trials", "mean_l1", "std_l1")
APPROX_FIELDS = APPROX_REPORT_FIELDS + APPROX_CELL_FIELDS
TAIL_REPORT_FIELDS = ("n", "R", "epsilon", "delta", "m_bound")
TAIL_CELL_FIELDS = ("m", "trials", "failure_rate", "failure_rate_4eps")
TAIL_FIELDS = TAIL_REPORT_FIELDS + TAIL_CELL_FIELDS

VARIANT_SOFTMAX = "softmax"
VARIANT_KERNELIZED = "kernelized"
VARIANT_RPE_NKA = "rpe_nka"
VARIANT_RPE_NAIVE = "rpe_naive"
VARIANTS = (VARIANT_SOFTMAX, VARIANT_KERNELIZED, VARIANT_RPE_NKA, VARIANT_RPE_NAIVE)

EXPERIMENT_APPROX = "approx-error"
EXPERIMENT_VARIANCE = "variance"
EXPERIMENT_COMPLEXITY = "complexity"
EXPERIMENT_RANK = "rank"
