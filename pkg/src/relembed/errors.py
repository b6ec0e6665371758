"""Exception hierarchy shared across the package.

Every error carries a short machine-parsable ``category`` that the CLI
prints as ``error:<category>: <message>`` on stderr.
"""


class RelembedError(Exception):
    category = "data"


class ConfigError(RelembedError):
    """Bad or missing configuration keys/values."""

    category = "config"


class ParseError(RelembedError):
    """Malformed serialized input (dependency paths, TSV rows).

    ``offset`` is the byte offset of the offending token within the
    parsed text, when known.
    """

    category = "parse"

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DataError(RelembedError):
    """Inputs violate an operation's preconditions."""

    category = "data"


class InputError(RelembedError):
    """A configured input file is missing or unreadable."""

    category = "io"


class DimensionError(RelembedError):
    """Checkpoint/vocabulary/graph shape mismatch."""

    category = "dimension"
