"""Parameter/optimizer snapshots: a text manifest plus a float32 payload.

``manifest.txt`` holds one line per array::

    name=<key> shape=<d0>x<d1>... offset=<byte offset>

and ``payload.bin`` the little-endian float32 values, in manifest order.
Optimizer entries follow the parameters under the ``optimizer/`` prefix.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..errors import ParseError

MANIFEST = "manifest.txt"
PAYLOAD = "payload.bin"
_DTYPE = np.dtype("<f4")


def _fmt_shape(shape) -> str:
    return "x".join(str(d) for d in shape) if shape else "scalar"


def _parse_shape(text: str) -> tuple[int, ...]:
    return () if text == "scalar" else tuple(int(d) for d in text.split("x"))


def write_arrays(directory, arrays: dict[str, np.ndarray]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    offset = 0
    with open(directory / PAYLOAD, "wb") as payload:
        for name, arr in arrays.items():
            if any(c.isspace() for c in name) or "=" in name:
                raise ValueError(f"array name {name!r} may not contain whitespace or '='")
            # ascontiguousarray would promote 0-d arrays to shape (1,)
            data = np.require(np.asarray(arr, dtype=_DTYPE), requirements="C")
            payload.write(data.tobytes())
            lines.append(f"name={name} shape={_fmt_shape(data.shape)} offset={offset}")
            offset += data.nbytes
    with open(directory / MANIFEST, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_arrays(directory) -> dict[str, np.ndarray]:
    directory = Path(directory)
    manifest = directory / MANIFEST
    raw = np.fromfile(directory / PAYLOAD, dtype=_DTYPE)
    arrays: dict[str, np.ndarray] = {}
    with open(manifest, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                fields = dict(part.split("=", 1) for part in line.split())
                name = fields["name"]
                shape = _parse_shape(fields["shape"])
                start = int(fields["offset"]) // _DTYPE.itemsize
            except (KeyError, ValueError) as exc:
                raise ParseError(f"bad manifest entry ({exc})", os.fspath(manifest), lineno) from None
            count = int(np.prod(shape)) if shape else 1
            if start + count > raw.size:
                raise ParseError("payload shorter than manifest", os.fspath(manifest), lineno)
            arrays[name] = raw[start : start + count].reshape(shape).copy()
    return arrays


def save_checkpoint(directory, params: dict[str, np.ndarray], optimizer=None) -> None:
    arrays = dict(params)
    if optimizer is not None:
        arrays.update(optimizer_arrays(optimizer, list(params)))
    write_arrays(directory, arrays)


def optimizer_arrays(optimizer, names: list[str]) -> dict[str, np.ndarray]:
    s = optimizer.state
    out = {"optimizer/step": np.asarray(s.step)}
    for name, m, v in zip(names, s.first_moments, s.second_moments):
        out[f"optimizer/m/{name}"] = m
        out[f"optimizer/v/{name}"] = v
    return out


def load_checkpoint(directory) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Return (parameters, optimizer arrays) from a checkpoint directory."""
    arrays = read_arrays(directory)
    params = {k: v for k, v in arrays.items() if not k.startswith("optimizer/")}
    opt = {k: v for k, v in arrays.items() if k.startswith("optimizer/")}
    return params, opt


def restore_optimizer(optimizer, names: list[str], arrays: dict[str, np.ndarray]) -> None:
    s = optimizer.state
    s.step = int(arrays["optimizer/step"])
    for i, name in enumerate(names):
        s.first_moments[i][...] = arrays[f"optimizer/m/{name}"]
        s.second_moments[i][...] = arrays[f"optimizer/v/{name}"]
