"""
checkpoint - Versioned binary checkpoints for denoiser weights.

Layout (all integers little-endian):

    offset 0   8 bytes   magic ``PREFDIF1``
    offset 8   uint32    format version (currently 1)
    offset 12  uint32    header length N in bytes
    offset 16  N bytes   UTF-8 JSON header (CheckpointHeader)
    offset 16+N          float64 '<f8' weights, tensors concatenated in header order
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from ..diffcore import Tensor
from ..errors import CheckpointFormatError
from .network import ArchConfig, DenoiserParams, params_digest

logger = logging.getLogger(__name__)

MAGIC = b"PREFDIF1"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<8sII")


class TensorEntry(BaseModel):
    """Name and shape of one stored tensor."""

    name: str
    shape: list[int] = Field(description="Dimension sizes, row-major.")


class CheckpointHeader(BaseModel):
    """JSON header stored between the preamble and the weights."""

    arch: ArchConfig
    tensors: list[TensorEntry]
    frozen: bool = False
    digest: str = Field(default="", description="params_digest of the stored weights.")


def save_checkpoint(params: DenoiserParams, path: str | Path) -> Path:
    """
    Write ``params`` to ``path`` in the versioned checkpoint format.

    Returns:
        The path written.
    """
    path = Path(path)
    header = CheckpointHeader(
        arch=params.arch,
        tensors=[TensorEntry(name=n, shape=list(t.shape)) for n, t in params.tensors.items()],
        frozen=params.frozen,
        digest=params_digest(params),
    )
    header_bytes = header.model_dump_json().encode("utf-8")
    weights = np.concatenate([t.data.reshape(-1) for t in params.tensors.values()])
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        f.write(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        f.write(weights.astype("<f8").tobytes())
    logger.debug("Saved checkpoint %s (%d scalars)", path, weights.size)
    return path


def load_checkpoint(path: str | Path) -> DenoiserParams:
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        CheckpointFormatError: bad magic, unknown version, truncated file or a
            header that does not describe the payload.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _PREAMBLE.size:
        raise CheckpointFormatError(f"{path}: file too short for a checkpoint preamble")
    magic, version, header_len = _PREAMBLE.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"{path}: format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    start = _PREAMBLE.size
    try:
        header = CheckpointHeader.model_validate(
            json.loads(raw[start : start + header_len].decode("utf-8"))
        )
    except (ValueError, ValidationError) as e:
        raise CheckpointFormatError(f"{path}: unreadable header ({e})") from e

    payload = raw[start + header_len :]
    if len(payload) % 8:
        raise CheckpointFormatError(f"{path}: truncated weight payload")
    weights = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    expected = sum(int(np.prod(entry.shape)) for entry in header.tensors)
    if weights.size != expected:
        raise CheckpointFormatError(
            f"{path}: payload holds {weights.size} values, header describes {expected}"
        )

    tensors: dict[str, Tensor] = {}
    offset = 0
    for entry in header.tensors:
        count = int(np.prod(entry.shape))
        values = weights[offset : offset + count].reshape(entry.shape)
        tensors[entry.name] = Tensor(values, requires_grad=not header.frozen, name=entry.name)
        offset += count
    params = DenoiserParams(arch=header.arch, tensors=tensors, frozen=header.frozen)

    if header.digest and params_digest(params) != header.digest:
        raise CheckpointFormatError(f"{path}: weights do not match the stored digest")
    return params
