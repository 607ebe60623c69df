# config.py
from dotenv import load_dotenv
import os

load_dotenv()


def _env_float(name: str, default: float) -> float:
    try:
        return float(os.getenv(name, str(default)))
    except (ValueError, TypeError):
        return default


def _env_int(name: str, default: int) -> int:
    try:
        return int(os.getenv(name, str(default)))
    except (ValueError, TypeError):
        return default


# ============================================================
# REGULARITY EXPONENTS
# ============================================================
# b = 1/2 + eps et b' = 1/2 - 2 eps sauf surcharge explicite
EPS = _env_float("LAB_EPS", 0.01)
DEFAULT_S = _env_float("LAB_S", 0.1)
B = 0.5 + EPS
B_PRIME = 0.5 - 2 * EPS

# Échelle de la coupure en temps eta_T
DEFAULT_T = _env_float("LAB_T", 0.5)

# ============================================================
# TIME GRIDS
# ============================================================
# Nyquist en tau >= NYQUIST_FACTOR * R^2 pour les grilles construites par le labo
NYQUIST_FACTOR = _env_float("NYQUIST_FACTOR", 10.0)

# Fenêtre de prolongement [-WINDOW_PAD * T, WINDOW_PAD * T]
WINDOW_PAD = _env_float("WINDOW_PAD", 4.0)

# Durée de zéro-padding ajoutée avant la FFT en temps
XSB_PAD_DURATION = _env_float("XSB_PAD_DURATION", 16.0)

# Pas de phase pour la quadrature de Strichartz (dt * phase max)
STRICHARTZ_PHASE_STEP = _env_float("STRICHARTZ_PHASE_STEP", 0.25)

# ============================================================
# INTEGRATOR
# ============================================================
# dt * (2N)^2 <= BEAT_BOUND pour le sous-pas interne
BEAT_BOUND = _env_float("BEAT_BOUND", 0.5)
INTEGRATOR_TOLERANCE = _env_float("INTEGRATOR_TOLERANCE", 1e-8)
MAX_STEP_REFINEMENTS = _env_int("MAX_STEP_REFINEMENTS", 10)

# ============================================================
# ENUMERATION AND TENSOR NORMS
# ============================================================
ENUMERATION_CAP = _env_int("ENUMERATION_CAP", 16)
BASE_TENSOR_CAP = _env_int("BASE_TENSOR_CAP", 8)
COUNT_EPS = _env_float("COUNT_EPS", 0.25)

DENSE_NORM_MAX_DIM = _env_int("DENSE_NORM_MAX_DIM", 2000)
POWER_ITER_TOL = _env_float("POWER_ITER_TOL", 1e-10)
POWER_ITER_MAX = _env_int("POWER_ITER_MAX", 10000)

# ============================================================
# STATISTICS
# ============================================================
BOOTSTRAP_RESAMPLES = _env_int("BOOTSTRAP_RESAMPLES", 1000)
ESS_FLOOR = _env_float("ESS_FLOOR", 0.1)
Z_THRESHOLD = _env_float("Z_THRESHOLD", 3.0)
TWO_SAMPLE_LEVEL = _env_float("TWO_SAMPLE_LEVEL", 0.01)

# Observable de mode pour le test d'invariance: Re u(n0)
MODE_OBSERVABLE = (
    _env_int("MODE_OBSERVABLE_X", 1),
    _env_int("MODE_OBSERVABLE_Y", 0),
)

# ============================================================
# ARTIFACTS AND WORKERS
# ============================================================
SCHEMA_VERSION = 1
OUTPUT_DIR = os.getenv("OUTPUT_DIR", "results")

# Nombre de workers par défaut (flag --workers prioritaire)
LAB_WORKERS = max(1, _env_int("LAB_WORKERS", min(os.cpu_count() or 1, 8)))

# ============================================================
# RANDOM TENSORS
# ============================================================
# Marge sur la pente log-log par rapport à l'exposant attendu
RT_SLOPE_SLACK = _env_float("RT_SLOPE_SLACK", 0.35)
# Croissance tolérée du rapport estimation / norme de partition maximale
RT_RATIO_GROWTH = _env_float("RT_RATIO_GROWTH", 0.25)
MOMENT_GROWTH_TOL = _env_float("MOMENT_GROWTH_TOL", 0.25)
SANDWICH_TOL = _env_float("SANDWICH_TOL", 0.05)
MIN_MC_SAMPLES = _env_int("MIN_MC_SAMPLES", 100)

# Quadrature en tau pour le moment d'ordre deux: pas 1/16, 2^17 points
QUAD_DSIGMA = _env_float("QUAD_DSIGMA", 1.0 / 16.0)
QUAD_POINTS = _env_int("QUAD_POINTS", 131072)

# ============================================================
# ACCEPTANCE THRESHOLDS
# ============================================================
# Écart L2 max entre les chemins jaugé / non jaugé
GAUGE_TOLERANCE = _env_float("GAUGE_TOLERANCE", 1e-6)
# Identité spectrale / physique de la non-linéarité renormalisée
IDENTITY_TOLERANCE = _env_float("IDENTITY_TOLERANCE", 1e-10)
# Croissance max du rapport de Strichartz (pente log-log)
STRICHARTZ_GROWTH = _env_float("STRICHARTZ_GROWTH", 0.2)
# Pente en T de la norme du terme stochastique
STOCHASTIC_SLOPE_MIN = _env_float("STOCHASTIC_SLOPE_MIN", 0.3)
STOCHASTIC_SLOPE_MAX = _env_float("STOCHASTIC_SLOPE_MAX", 0.7)
# Croissance tolérée des constantes ajustées entre deux N_max consécutifs
CONSTANT_GROWTH_TOL = _env_float("CONSTANT_GROWTH_TOL", 1.10)
# Plus petit N_max pris en compte pour la stabilité des constantes
GROWTH_FLOOR_LEVEL = _env_int("GROWTH_FLOOR_LEVEL", 4)
