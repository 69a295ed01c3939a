"""Maps module - explicit endomorphisms of P^1 and P^2."""

from app.maps.catalog import build_map, list_maps, load_definition, load_map
from app.maps.models import MapKind, MapModel, TangentMatrix
from app.maps.service import MapService

__all__ = [
    "MapService",
    "MapModel",
    "MapKind",
    "TangentMatrix",
    "build_map",
    "load_map",
    "load_definition",
    "list_maps",
]
