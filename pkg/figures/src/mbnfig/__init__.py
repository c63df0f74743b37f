"""Figure rendering for mbnsim result CSVs."""

__version__ = "0.1.0"

from .render import CHECKSUM_KEY, SchemaError, render

__all__ = ["CHECKSUM_KEY", "SchemaError", "render", "__version__"]
