"""Grid data model, case-file readers and topology queries."""

from .model import Branch, Bus, Element, Generator, Network, NetworkError
from .native import CaseFormatError, parse_case, read_case, serialize_case
from .raw import RawImportWarning, export_raw_subset, import_raw_subset
from .topology import (
    IslandingResult,
    bus_hops,
    connected_components,
    element_distance,
    graph_distance,
    is_connected,
    islanding_check,
)

__all__ = [
    "Branch", "Bus", "CaseFormatError", "Element", "Generator", "IslandingResult",
    "Network", "NetworkError", "RawImportWarning", "bus_hops", "connected_components",
    "element_distance", "export_raw_subset", "graph_distance", "import_raw_subset",
    "is_connected", "islanding_check", "parse_case", "read_case", "serialize_case",
]
