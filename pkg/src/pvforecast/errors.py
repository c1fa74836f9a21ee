"""Error type shared by every stage of the pipeline.

All failures raise :class:`PipelineError` carrying a machine-readable
``code``; the CLI maps the code's category onto its exit status.
"""

USAGE = "usage"
DATA = "data"
NUMERIC = "numeric"

_CATEGORIES = {
    # usage: the request itself is inconsistent
    "COUNT_EXCEEDS_DATA": USAGE,
    "INVALID_SPLIT": USAGE,
    "INVALID_CONFIG": USAGE,
    "MALFORMED_TOPOLOGY": USAGE,
    "TOPOLOGY_INPUT_MISMATCH": USAGE,
    "SHAPE_MISMATCH": USAGE,
    "LENGTH_MISMATCH": USAGE,
    "INVALID_DF": USAGE,
    "INVALID_SCHEMA": USAGE,
    "UNKNOWN_VARIABLE": USAGE,
    # data: the inputs cannot support the request
    "PARSE_ERROR": DATA,
    "DUPLICATE_TIMESTAMP": DATA,
    "EMPTY_FILE": DATA,
    "EMPTY_INPUT": DATA,
    "EMPTY": DATA,
    "NO_OVERLAP": DATA,
    "CONSTANT_COLUMN": DATA,
    "CONSTANT_SERIES": DATA,
    "INSUFFICIENT_DATA": DATA,
    "NOT_ON_GRID": DATA,
    "INSUFFICIENT_HISTORY": DATA,
    "NON_FINITE": DATA,
    "UNNORMALIZED_INPUT": DATA,
    # numeric: the computation itself broke down
    "RANK_DEFICIENT": NUMERIC,
    "UNDERDETERMINED": NUMERIC,
    "DEGENERATE": NUMERIC,
    "NOT_FITTED": NUMERIC,
    "NOT_TRAINED": NUMERIC,
}


class PipelineError(ValueError):
    """A failure with a stable error ``code`` such as ``"NO_OVERLAP"``."""

    def __init__(self, code, message=""):
        if code not in _CATEGORIES:
            raise KeyError(f"unknown error code {code!r}")
        self.code = code
        self.category = _CATEGORIES[code]
        super().__init__(f"{code}: {message}" if message else code)
