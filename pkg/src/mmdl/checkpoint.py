"""Single-file checkpoints: one JSON header line, then raw little-endian float64s.

The header lists every matrix (name and shape) in payload order, so the
file can be validated in full before any state is constructed.
"""

from __future__ import annotations

import json

import numpy as np

from .decorr import DecorrLayer
from .encoder import NetworkParams
from .errors import MalformedCheckpointError, ShapeMismatchError
from .losses import HamlHead

FORMAT = "mmdl-checkpoint"
VERSION = 1
_DTYPE = np.dtype("<f8")


def save_checkpoint(params, layer, head, path):
    mats = []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        mats += [(f"weight{i}", w), (f"bias{i}", b)]
    mats += [
        ("projection", layer.projection),
        ("eigenvalues", np.asarray(layer.eigenvalues).reshape(1, -1)),
        ("class_weights", head.class_weights),
    ]
    header = {
        "format": FORMAT,
        "version": VERSION,
        "layer_sizes": list(params.layer_sizes),
        "n": int(layer.n),
        "q": int(layer.q),
        "classes": int(head.n_classes),
        "head": {
            "scale": head.scale,
            "margin_nir": head.margin_nir,
            "margin_vis": head.margin_vis,
            "weight_nir": head.weight_nir,
            "weight_vis": head.weight_vis,
        },
        "matrices": [{"name": name, "shape": list(m.shape)} for name, m in mats],
        "float_count": int(sum(m.size for _, m in mats)),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for _, m in mats:
            fh.write(np.ascontiguousarray(m, dtype=_DTYPE).tobytes())


def load_checkpoint(path, expected_n=None, expected_q=None):
    """Return ``(params, layer, head)``; all validation happens before construction."""
    with open(path, "rb") as fh:
        blob = fh.read()
    newline = blob.find(b"\n")
    if newline < 0:
        raise MalformedCheckpointError(f"{path}: missing header line")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
        if header.get("format") != FORMAT:
            raise MalformedCheckpointError(f"{path}: not an {FORMAT} file")
        specs = [(m["name"], tuple(int(s) for s in m["shape"])) for m in header["matrices"]]
        sizes = [int(s) for s in header["layer_sizes"]]
        n, q = int(header["n"]), int(header["q"])
        head_cfg = dict(header["head"])
        count = int(header["float_count"])
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise MalformedCheckpointError(f"{path}: bad header ({exc})") from None

    payload = blob[newline + 1 :]
    if count != sum(int(np.prod(s)) for _, s in specs) or len(payload) != count * _DTYPE.itemsize:
        raise MalformedCheckpointError(
            f"{path}: payload holds {len(payload)} bytes, header declares {count} floats"
        )
    if expected_n is not None and expected_n != n:
        raise ShapeMismatchError(f"checkpoint has n={n}, expected n={expected_n}")
    if expected_q is not None and expected_q != q:
        raise ShapeMismatchError(f"checkpoint has q={q}, expected q={expected_q}")

    flat = np.frombuffer(payload, dtype=_DTYPE).astype(np.float64)
    mats, offset = {}, 0
    for name, shape in specs:
        size = int(np.prod(shape))
        mats[name] = flat[offset : offset + size].reshape(shape).copy()
        offset += size
    try:
        n_layers = len(sizes) - 1
        params = NetworkParams(
            sizes,
            [mats[f"weight{i}"] for i in range(n_layers)],
            [mats[f"bias{i}"] for i in range(n_layers)],
        )
        layer = DecorrLayer(mats["projection"], mats["eigenvalues"].reshape(-1))
        head = HamlHead(mats["class_weights"], **head_cfg)
    except KeyError as exc:
        raise MalformedCheckpointError(f"{path}: missing matrix {exc}") from None
    except (ValueError, TypeError) as exc:
        raise MalformedCheckpointError(f"{path}: inconsistent contents ({exc})") from None
    if layer.projection.shape != (n, q) or params.output_dim != n:
        raise MalformedCheckpointError(f"{path}: matrix shapes disagree with n={n}, q={q}")
    return params, layer, head
