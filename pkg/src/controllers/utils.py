# In src/controllers/utils.py
import hashlib
import json

import numpy as np


def deep_convert_to_dict(data):
    """
    Recursively convert any dict-like or list-like object (including numpy
    scalars/arrays and pydantic models) into plain JSON-ready values.
    """
    if isinstance(data, (str, int, float, bool, type(None))):
        return data
    if isinstance(data, np.generic):
        return data.item()
    if hasattr(data, "model_dump"):
        return deep_convert_to_dict(data.model_dump())

    # ✅ Handle dict-like objects first
    if hasattr(data, "items"):
        return {str(key): deep_convert_to_dict(value) for key, value in data.items()}

    # ✅ Handle list-like objects second
    if hasattr(data, "__iter__") and not isinstance(data, (str, bytes, dict)):
        return [deep_convert_to_dict(item) for item in data]

    return str(data)


def config_hash(data) -> str:
    """Stable short hash of a config (keys sorted, numpy/pydantic values flattened)."""
    canonical = json.dumps(deep_convert_to_dict(data), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
