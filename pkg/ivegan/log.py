"""stderr logging, level picked from the IVEGAN_LOG environment variable."""
import logging
import os
import sys
from typing import Optional

ENV_VAR = "IVEGAN_LOG"
LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "warn": logging.WARNING,
    "error": logging.ERROR,
}


def setup_logging(level: Optional[str] = None) -> int:
    """Configure the ``ivegan`` logger once; returns the level in effect."""
    name = (level if level is not None else os.environ.get(ENV_VAR, "info")).strip().lower()
    resolved = LEVELS.get(name)
    logger = logging.getLogger("ivegan")
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        logger.addHandler(handler)
        logger.propagate = False
    else:
        # follow sys.stderr if it was swapped since the first call
        logger.handlers[0].setStream(sys.stderr)
    logger.setLevel(resolved if resolved is not None else logging.INFO)
    if resolved is None:
        logger.warning("%s=%r is not a level (debug/info/warning/error); using info", ENV_VAR, name)
        resolved = logging.INFO
    return resolved
