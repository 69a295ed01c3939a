"""Map definition files: loading, validation and the bundled catalog."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from pydantic import ValidationError

from app.core.config import get_settings
from app.core.exceptions import InvalidMapDefinition
from app.maps.models import MapDefinition, MapModel, MapSummary
from app.maps.service import MapService

logger = logging.getLogger(__name__)

BUNDLED_DIR = Path(__file__).resolve().parent / "definitions"


def definitions_dir() -> Path:
    configured = get_settings().MAP_DEFINITIONS_DIR
    return Path(configured) if configured else BUNDLED_DIR


def load_definition(path: Union[str, Path]) -> MapDefinition:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidMapDefinition(f"Map definition not found: {path}")
    except json.JSONDecodeError as e:
        raise InvalidMapDefinition(f"{path}: not valid JSON ({e.msg} at line {e.lineno})")
    try:
        return MapDefinition.model_validate(raw)
    except ValidationError as e:
        raise InvalidMapDefinition(f"{path}: {e.error_count()} schema error(s): {e.errors()[0]['msg']}")


def build_map(definition: MapDefinition, strict: bool = True) -> MapModel:
    """Construct a MapModel from a validated definition.

    strict=False skips the common-zero check so degenerate definitions can be
    inspected with check_degrees.
    """
    nvars = definition.dimension + 1
    try:
        components = [poly.to_polynomial(nvars) for poly in definition.components]
        exceptional = [poly.to_polynomial(nvars) for poly in definition.exceptional_polynomials]
    except ValueError as e:
        raise InvalidMapDefinition(f"{definition.id}: {e}")
    points = None
    if definition.exceptional_points:
        points = np.array(
            [[complex(re, im) for re, im in pt] for pt in definition.exceptional_points], dtype=complex
        )
    fmap = MapService.assemble(
        map_id=definition.id,
        kind=definition.kind,
        k=definition.dimension,
        degree=definition.degree,
        d_t=definition.topological_degree,
        dyn_degrees=definition.dynamical_degrees,
        components=components,
        exceptional_polynomials=exceptional,
        exceptional_points=points,
        description=definition.description,
        strict=strict,
    )
    logger.info(f"Loaded map {fmap.id} ({fmap.kind.value}, k={fmap.k}, d={fmap.degree}, d_t={fmap.d_t})")
    return fmap


def bundled_definitions() -> Dict[str, Path]:
    return {p.stem: p for p in sorted(definitions_dir().glob("*.json"))}


def resolve(map_ref: Union[str, Path]) -> Path:
    """A map reference is either a path to a JSON file or a bundled map id."""
    candidate = Path(map_ref)
    if candidate.suffix == ".json" or candidate.exists():
        return candidate
    bundled = bundled_definitions()
    if str(map_ref) in bundled:
        return bundled[str(map_ref)]
    raise InvalidMapDefinition(f"Unknown map '{map_ref}' (bundled: {', '.join(bundled)})")


def load_map(map_ref: Union[str, Path], strict: bool = True) -> MapModel:
    return build_map(load_definition(resolve(map_ref)), strict=strict)


def list_maps() -> List[MapSummary]:
    out = []
    for path in bundled_definitions().values():
        d = load_definition(path)
        out.append(
            MapSummary(
                id=d.id,
                kind=d.kind,
                dimension=d.dimension,
                degree=d.degree,
                topological_degree=d.topological_degree,
                dynamical_degrees=d.dynamical_degrees,
                description=d.description,
            )
        )
    return out
