"""Application settings from environment variables."""
import os
from dotenv import load_dotenv

load_dotenv()

# Logging
LOG_LEVEL = os.getenv("CTC_LOG_LEVEL", "INFO").upper()

# Replica fan-out (1 = run in-process); defaults to one process per CPU
WORKERS = int(os.getenv("CTC_WORKERS", str(os.cpu_count() or 1)))

# Replica counts used when the command line does not give --reps
DEFAULT_BENCH_REPS = int(os.getenv("CTC_DEFAULT_REPS", "30"))
DEFAULT_VERIFY_REPS = int(os.getenv("CTC_VERIFY_REPS", "50"))

# Paths
OUTPUT_DIR = os.getenv("CTC_OUTPUT_DIR", "out")
CONFIG_FILE = os.getenv("CTC_CONFIG_FILE", "config/reference.conf")

# Numerical slack for closed-form identities and equal-mass block checks
TOLERANCE = float(os.getenv("CTC_TOLERANCE", "1e-9"))

TOOL_VERSION = "0.3.0"
