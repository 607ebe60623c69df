# utils.py
"""
Utilitaires partagés par les modules du laboratoire.

Contient:
- Configuration du logging
- Dérivation de graines déterministes
- Helpers dyadiques et formatage des flottants
- Bootstrap et pentes log-log
- Stabilité des constantes ajustées entre niveaux
"""
import hashlib
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

# ============================================================================
# Configuration du Logging
# ============================================================================

_LOG_FORMAT = logging.Formatter("%(asctime)s [%(levelname)-8s] %(message)s", datefmt="%Y-%m-%d %H:%M:%S")


class _RunFileHandler(logging.FileHandler):
    """Fichier de log rattaché à une exécution de la CLI."""


def setup_logger(name: str = "wicklab", level: Optional[str] = None) -> logging.Logger:
    """
    Logger partagé, console seulement.

    Le fichier de log dépend du dossier de sortie de la commande: il est
    rattaché plus tard par attach_run_log.
    """
    if level is None:
        level = os.getenv("LOG_LEVEL", "INFO").upper()

    log = logging.getLogger(name)
    log.setLevel(getattr(logging, level, logging.INFO))
    if not any(isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)
               for h in log.handlers):
        console = logging.StreamHandler(sys.stdout)
        console.setFormatter(_LOG_FORMAT)
        log.addHandler(console)
    return log


def attach_run_log(output_dir, command: str, target: Optional[logging.Logger] = None) -> Optional[Path]:
    """
    Journalise la commande dans <output>/logs/<command>.log quand SAVE_LOGS=true.

    LOG_FILE remplace ce chemin. Le fichier d'une exécution précédente est
    détaché; les logs restent hors des artefacts comparés octet par octet.
    """
    log = target or logger
    for handler in [h for h in log.handlers if isinstance(h, _RunFileHandler)]:
        log.removeHandler(handler)
        handler.close()
    if os.getenv("SAVE_LOGS", "false").lower() != "true":
        return None

    path = Path(os.getenv("LOG_FILE") or Path(output_dir) / "logs" / f"{command}.log")
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = _RunFileHandler(path, encoding="utf-8")
    handler.setFormatter(_LOG_FORMAT)
    log.addHandler(handler)
    log.info(f"[CLI] logging {command} to {path}")
    return path

# Logger global
logger = setup_logger()

# ============================================================================
# Graines et formatage
# ============================================================================

def derive_seed(base_seed: int, *labels) -> int:
    """
    Dérive une graine 64 bits à partir d'une graine de base et d'étiquettes.

    Le résultat ne dépend que des arguments, jamais de l'ordre d'exécution,
    ce qui permet de distribuer les échantillons sur plusieurs workers.
    """
    key = ":".join([str(int(base_seed))] + [str(label) for label in labels])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def format_float(value: float) -> str:
    """Formate un flottant avec 17 chiffres significatifs (aller-retour exact)."""
    return f"{float(value):.17g}"

# ============================================================================
# Helpers dyadiques
# ============================================================================

def is_dyadic(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (int(n) & (int(n) - 1)) == 0


def dyadic_range(max_dyadic: int) -> List[int]:
    """Retourne [1, 2, 4, ..., max_dyadic]."""
    if not is_dyadic(max_dyadic):
        raise ValueError(f"max_dyadic must be a power of two, got {max_dyadic}")
    out = []
    n = 1
    while n <= max_dyadic:
        out.append(n)
        n *= 2
    return out


def parse_int_list(text: str) -> List[int]:
    """Parse "2,4,8" -> [2, 4, 8]."""
    return [int(part) for part in text.split(",") if part.strip()]

# ============================================================================
# Statistiques
# ============================================================================

def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Pente des moindres carrés de log(y) contre log(x)."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    if len(lx) < 2:
        return 0.0
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)


def bootstrap_indices(n: int, resamples: int, seed: int) -> np.ndarray:
    """Matrice (resamples, n) d'indices tirés avec remise."""
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.integers(0, n, size=(resamples, n))


def percentile_interval(values: Iterable[float], level: float = 0.95) -> Tuple[float, float]:
    arr = np.asarray(list(values), dtype=float)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(arr, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def growth_levels(max_dyadic: int, floor: int = 4) -> List[int]:
    """Niveaux N_max comparés: ceux ≥ floor, ou à défaut les deux derniers."""
    levels = [n for n in dyadic_range(max_dyadic) if n >= floor]
    if len(levels) < 2:
        levels = dyadic_range(max_dyadic)[-2:]
    return levels


def constant_growth(by_level: Mapping[int, Mapping[str, float]], tolerance: float) -> Dict[str, Any]:
    """
    Croissance des constantes ajustées entre niveaux N_max consécutifs.

    growth[k] liste C_k(N_{j+1}) / C_k(N_j); une constante nulle qui devient
    positive compte comme une croissance infinie.
    """
    levels = sorted(by_level)
    growth: Dict[str, List[float]] = {}
    for key in by_level[levels[0]]:
        steps = []
        for lo, hi in zip(levels, levels[1:]):
            prev, nxt = float(by_level[lo][key]), float(by_level[hi][key])
            if prev > 0.0:
                steps.append(nxt / prev)
            else:
                steps.append(1.0 if nxt == 0.0 else math.inf)
        growth[key] = steps
    worst = max((g for steps in growth.values() for g in steps), default=1.0)
    return {
        "levels": levels,
        "growth": growth,
        "worst": worst,
        "tolerance": tolerance,
        "stable": worst <= tolerance,
    }
