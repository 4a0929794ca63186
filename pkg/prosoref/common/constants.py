import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


BASE_DIR = Path(__file__).resolve().parent.parent.parent
LOG_CONFIG_PATH = Path(os.getenv("PROSOREF_LOG_CONFIG", str(BASE_DIR / "logging.json")))
IS_DEV = bool(os.getenv("PROSOREF_DEV", "").lower() == "true")


# Framing
WINDOW_MS = 25.0
HOP_MS = 10.0
MIN_SAMPLE_RATE = 8000

# Pitch
F0_MIN_HZ = 60.0
F0_MAX_HZ = 400.0
VOICING_THRESHOLD = 0.5
SILENCE_RMS = 1e-4
OCTAVE_GUARD = 0.9  # first peak within this fraction of the best one wins

# Cepstra
N_MELS = 40
N_CEPS = 13
LOG_FLOOR = 1e-10

# Aggregation
N_STATES = 3
PAUSE_PHONE = "pau"
BLANK_SYMBOL = "<blank>"
VARIANCE_FLOOR = 1e-8
PAUSE_THRESHOLD_MS = 200.0
BOUNDARY_DECIMALS = 9
LABEL_DECIMALS = 6

# Reference encoder
INPUT_DIM = 7
HIDDEN_DIM = 32
LATENT_DIM = 8
LOG_SIGMA_CLAMP = 10.0
KL_START_ITER = 25_000
KL_END_ITER = 150_000
KL_PERIOD = 200
LEARNING_RATE = 1e-3
GRAD_CHECK_FLOOR = 1e-5

# Evaluation
GROSS_ERROR_THRESHOLD = 0.20
WILCOXON_EXACT_MAX_N = 12
WILCOXON_MIN_N = 5
HOLM_ALPHAS = (0.05, 0.01)


# File suffixes
F0_SUFFIX = ".f0.json"
CEPS_SUFFIX = ".ceps.json"
WAV_SUFFIX = ".wav"

MANIFEST_COLUMNS = ("id", "audio", "alignment", "posteriorgram", "speaker")
SCORE_COLUMNS = ("listener", "utterance", "system", "score")
