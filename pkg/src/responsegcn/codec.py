"""Base64 payloads of little-endian float32 arrays, used by every file format."""
import base64

import numpy as np


def encode_array(a) -> str:
    a = np.ascontiguousarray(np.asarray(a, dtype="<f4"))
    return base64.b64encode(a.tobytes(order="C")).decode("ascii")


def decode_array(payload: str, shape) -> np.ndarray:
    raw = base64.b64decode(payload.encode("ascii"), validate=True)
    flat = np.frombuffer(raw, dtype="<f4")
    n = int(np.prod(shape)) if len(shape) else 1
    if flat.size != n:
        raise ValueError(f"payload holds {flat.size} values, shape {tuple(shape)} needs {n}")
    return flat.astype(np.float64).reshape(tuple(shape))


def pack_matrix(a) -> dict:
    a = np.asarray(a)
    return {"shape": list(a.shape), "data": encode_array(a)}


def unpack_matrix(d: dict) -> np.ndarray:
    return decode_array(d["data"], d["shape"])
