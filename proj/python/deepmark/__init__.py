"""Clothing landmark decoding and post-processing.

Thin wrappers over the native core; JSON documents come back as Python objects.
"""

import json

from . import _core
from ._core import (
    DeepmarkError,
    Schema,
    gaussian_kernel,
    read_tensor,
    rescore,
    smooth,
    write_synth_dataset,
    write_tensor,
)

__all__ = [
    "DeepmarkError",
    "Schema",
    "bench",
    "decode_dir",
    "evaluate",
    "gaussian_kernel",
    "grid_search",
    "read_tensor",
    "rescore",
    "smooth",
    "write_synth_dataset",
    "write_tensor",
]


def _params_text(params):
    if params is None:
        return ""
    return params if isinstance(params, str) else json.dumps(params)


def decode_dir(path, params=None, workers=1, schema=None):
    """Predictions (COCO keypoint results) for every bundle under `path`."""
    return json.loads(_core.decode_dir(str(path), _params_text(params), workers, schema))


def evaluate(predictions, annotations, schema=None):
    """Returns {"map_pt": ..., "map_box": ...}. Accepts lists or JSON text."""
    p = predictions if isinstance(predictions, str) else json.dumps(predictions)
    a = annotations if isinstance(annotations, str) else json.dumps(annotations)
    map_pt, map_box = _core.evaluate(p, a, schema)
    return {"map_pt": map_pt, "map_box": map_box}


def grid_search(path, param, param2=None, metric="map_pt", params=None, workers=1, schema=None):
    """Rows of the sweep as dicts, keyed like the CSV header."""
    text = _core.grid_search(str(path), param, param2, metric, _params_text(params), workers, schema)
    lines = text.strip().splitlines()
    keys = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        row = {k: float(v) for k, v in zip(keys, line.split(","))}
        row["argmax"] = bool(row["argmax"])
        rows.append(row)
    return rows


def bench(height=64, width=64, iterations=100, seed=0, schema=None):
    return json.loads(_core.bench(height, width, iterations, seed, schema))
