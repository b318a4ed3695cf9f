from .catalog import Catalog
from .decorrelate import UnsupportedFeatureError, decorrelate
from .parser import ParseError, parse
from .pretty import pretty_print
from .typecheck import TypeError_, typecheck

__all__ = [
    "Catalog", "ParseError", "TypeError_", "UnsupportedFeatureError",
    "decorrelate", "parse", "pretty_print", "typecheck",
]
