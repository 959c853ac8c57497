"""Python bindings for the cbicl core."""

import json as _json

from ._cbicl import *  # noqa: F401,F403
from ._cbicl import CbiclError, verify_json


def verify(theorem, seed=0, sweeps=100, workers=1, samples=100000):
    """Run a verification sweep and return the report as a dict."""
    return _json.loads(verify_json(theorem, seed, sweeps, workers, samples))


__all__ = ["CbiclError", "verify"]
