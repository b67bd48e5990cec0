"""Logic-independent proof-language kernel, incremental checker and IDE server."""

__version__ = "0.1.0"
