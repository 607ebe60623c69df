# artifacts.py
"""
Écriture des artefacts du laboratoire: CSV, JSON et snapshots binaires.

Chaque artefact embarque la version de schéma et la configuration résolue;
aucun horodatage ni nom d'hôte n'y entre, pour que deux exécutions avec la
même graine produisent des fichiers identiques octet par octet.
"""
import csv
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence

import numpy as np
import orjson

import config
from spectral_core import FourierField, SnapshotFormatError, field_from_bytes, field_to_bytes
from utils import format_float, logger

# ============================================================================
# CONFIGURATION RÉSOLUE
# ============================================================================

_CONFIG_KEYS = (
    "EPS", "DEFAULT_S", "B", "B_PRIME", "DEFAULT_T",
    "ENUMERATION_CAP", "COUNT_EPS", "BASE_TENSOR_CAP",
    "DENSE_NORM_MAX_DIM", "POWER_ITER_TOL", "POWER_ITER_MAX",
    "NYQUIST_FACTOR", "XSB_PAD_DURATION", "WINDOW_PAD",
    "BEAT_BOUND", "INTEGRATOR_TOLERANCE", "MAX_STEP_REFINEMENTS",
    "BOOTSTRAP_RESAMPLES", "ESS_FLOOR", "Z_THRESHOLD", "TWO_SAMPLE_LEVEL",
    "RT_SLOPE_SLACK", "RT_RATIO_GROWTH", "MOMENT_GROWTH_TOL", "MIN_MC_SAMPLES",
    "QUAD_DSIGMA", "QUAD_POINTS", "MODE_OBSERVABLE",
    "CONSTANT_GROWTH_TOL", "GROWTH_FLOOR_LEVEL",
)


def _plain(value: Any) -> Any:
    """Convertit numpy/tuples en types JSON natifs."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    return value


def resolved_config_dict(run_args: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    """
    Constantes de config.py plus les paramètres de la commande.

    Le nombre de workers est exclu: il ne change pas les résultats.
    """
    resolved = {key.lower(): _plain(getattr(config, key)) for key in _CONFIG_KEYS}
    for key, value in (run_args or {}).items():
        if key in ("workers", "output", "config") or callable(value):
            continue
        resolved[key] = _plain(value)
    return resolved


def _dumps(payload: Any, indent: bool = True) -> bytes:
    opts = orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY
    if indent:
        opts |= orjson.OPT_INDENT_2
    return orjson.dumps(_plain(payload), option=opts)

# ============================================================================
# CSV / JSON
# ============================================================================

def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]],
              resolved: Mapping[str, Any]) -> Path:
    """Ligne de commentaire (schéma + config compacte), en-tête figé, puis les lignes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", newline="", encoding="utf-8") as f:
        f.write(f"# schema_version={config.SCHEMA_VERSION} config={_dumps(resolved, indent=False).decode()}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row of {len(row)} cells for header of {len(header)} columns")
            w.writerow([_cell(v) for v in row])
            count += 1
    logger.debug(f"[CLI] wrote {count} rows to {path}")
    return path


def write_json(path: Path, payload: Mapping[str, Any], resolved: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = dict(payload)
    document["schema_version"] = config.SCHEMA_VERSION
    document["config"] = dict(resolved)
    path.write_bytes(_dumps(document) + b"\n")
    logger.debug(f"[CLI] wrote {path}")
    return path

# ============================================================================
# SNAPSHOTS
# ============================================================================

def write_snapshot(path: Path, field: FourierField, sidecar: Mapping[str, Any]) -> Path:
    """<name>.field plus <name>.json à côté."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(field_to_bytes(field))
    meta = dict(sidecar)
    meta["schema_version"] = config.SCHEMA_VERSION
    meta["radius"] = field.grid_radius
    path.with_suffix(".json").write_bytes(_dumps(meta) + b"\n")
    return path


def read_snapshot(path: Path) -> FourierField:
    path = Path(path)
    if not path.exists():
        raise SnapshotFormatError(f"snapshot {path} not found")
    return field_from_bytes(path.read_bytes())
