"""Single-file binary checkpoints.

Layout: 4-byte magic, uint32 format version, uint64 header length, UTF-8 JSON
header, then the raw parameter payload. The header lists every array's name,
shape, and dtype in payload order and carries a sha256 of the payload plus the
model and input configs needed to rebuild the run. All integers and array
bytes are little-endian; arrays are stored as float64.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoding import InputConfig
from .errors import CheckpointError
from .model import ModelConfig, init_params

MAGIC = b"CVQA"
FORMAT_VERSION = 1
_DTYPE = "<f8"


def save_checkpoint(
    path: str | Path,
    params: dict[str, Tensor],
    model_cfg: ModelConfig,
    input_cfg: InputConfig,
    meta: dict[str, Any] | None = None,
) -> None:
    names = list(params.keys())
    blobs: list[bytes] = []
    arrays: list[dict[str, Any]] = []
    for name in names:
        data = np.ascontiguousarray(params[name].data, dtype=_DTYPE)
        arrays.append({"name": name, "shape": list(data.shape), "dtype": _DTYPE})
        blobs.append(data.tobytes())
    payload = b"".join(blobs)
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": model_cfg.to_dict(),
        "input_config": input_cfg.to_dict(),
        "meta": meta or {},
        "arrays": arrays,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def load_checkpoint(
    path: str | Path,
) -> tuple[dict[str, Tensor], ModelConfig, InputConfig, dict[str, Any]]:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )
    (header_len,) = struct.unpack_from("<Q", raw, 8)
    header_end = 16 + header_len
    if header_end > len(raw):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header: {e}") from e

    payload = raw[header_end:]
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header.get("payload_sha256"):
        raise CheckpointError(f"{path}: payload checksum mismatch")

    try:
        model_cfg = ModelConfig.from_dict(header["model_config"])
        input_cfg = InputConfig(**header["input_config"])
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: malformed config in header: {e}") from e

    params: dict[str, Tensor] = {}
    offset = 0
    for entry in header.get("arrays", []):
        shape = tuple(entry["shape"])
        dtype = np.dtype(entry["dtype"])
        n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if offset + n_bytes > len(payload):
            raise CheckpointError(f"{path}: truncated payload at array {entry['name']!r}")
        data = np.frombuffer(payload, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)), offset=offset)
        params[entry["name"]] = ad.parameter(data.reshape(shape).astype(np.float64), entry["name"])
        offset += n_bytes
    if offset != len(payload):
        raise CheckpointError(f"{path}: payload has {len(payload) - offset} trailing bytes")

    expected = {
        name: t.data.shape
        for name, t in init_params(model_cfg, np.random.default_rng(0)).items()
    }
    got = {name: t.data.shape for name, t in params.items()}
    if expected != got:
        missing = sorted(set(expected) - set(got))
        extra = sorted(set(got) - set(expected))
        wrong = sorted(
            f"{n}: {got[n]} != {expected[n]}"
            for n in set(got) & set(expected)
            if got[n] != expected[n]
        )
        detail = "; ".join(
            p
            for p in (
                f"missing {missing}" if missing else "",
                f"unexpected {extra}" if extra else "",
                f"shape mismatch {wrong}" if wrong else "",
            )
            if p
        )
        raise CheckpointError(f"{path}: arrays do not match model config: {detail}")

    return params, model_cfg, input_cfg, header.get("meta", {})
