"""Small shared helpers: seed derivation, checksums, stable float text."""

import hashlib
from pathlib import Path


def derive_seed(root_seed: int, label: str) -> int:
    """Derive a stage-specific seed from the root seed.

    All randomness in a run flows from one root seed; each stochastic
    stage uses a named derived seed so stages can be rerun in isolation
    and still reproduce.
    """
    digest = hashlib.sha256(f"{root_seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt_float(x: float) -> str:
    """Shortest decimal text that round-trips to the same float64."""
    return repr(float(x))
