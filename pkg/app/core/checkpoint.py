"""
Checkpoint file codec

Layout: the magic bytes b"CDN1", a little-endian uint32 header length, a
UTF-8 JSON header (config, vocabulary, block directory, training metadata,
history) and then the raw little-endian float32 parameter blocks in
directory order.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import ValidationError

from app.models.cdn import CHECKPOINT_FORMAT_VERSION, Checkpoint, EpochRecord, ModelConfig, TrainingMetadata
from app.models.sequence import Vocabulary
from app.utils.exceptions import CheckpointFormatError

logger = logging.getLogger(__name__)

MAGIC = b"CDN1"
BLOCK_DTYPE = np.dtype("<f4")
_LENGTH = struct.Struct("<I")


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    blocks = []
    payload = []
    offset = 0
    for name, value in checkpoint.parameters.items():
        data = np.ascontiguousarray(value, dtype=BLOCK_DTYPE).tobytes()
        blocks.append({"name": name, "shape": list(np.shape(value)), "offset": offset, "nbytes": len(data)})
        payload.append(data)
        offset += len(data)

    header = {
        "format_version": checkpoint.format_version,
        "config": checkpoint.config.model_dump(),
        "vocabulary": checkpoint.vocabulary.to_dict(),
        "blocks": blocks,
        "metadata": checkpoint.metadata.to_dict(),
        "history": [vars(record) for record in checkpoint.history],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + _LENGTH.pack(len(header_bytes)) + header_bytes + b"".join(payload)


def decode_checkpoint(raw: bytes) -> Checkpoint:
    if raw[:4] != MAGIC:
        raise CheckpointFormatError("Not a checkpoint file (bad magic bytes)")
    if len(raw) < 8:
        raise CheckpointFormatError("Truncated checkpoint header")
    (header_length,) = _LENGTH.unpack(raw[4:8])
    body_start = 8 + header_length
    try:
        header = json.loads(raw[8:body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"Unreadable checkpoint header: {e}")

    version = header.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointFormatError(f"Unsupported checkpoint format version {version}")

    try:
        config = ModelConfig(**header["config"])
        vocabulary = Vocabulary.from_dict(header["vocabulary"])
        metadata = TrainingMetadata(**header.get("metadata", {}))
        history = [EpochRecord(**record) for record in header.get("history", [])]
        directory = header["blocks"]
    except (KeyError, TypeError, ValidationError) as e:
        raise CheckpointFormatError(f"Invalid checkpoint header: {e}")

    body = raw[body_start:]
    parameters = {}
    for block in directory:
        start, nbytes = block["offset"], block["nbytes"]
        shape = tuple(block["shape"])
        if start + nbytes > len(body) or nbytes != int(np.prod(shape, dtype=np.int64)) * BLOCK_DTYPE.itemsize:
            raise CheckpointFormatError(f"Block {block['name']!r} does not fit the file")
        values = np.frombuffer(body, dtype=BLOCK_DTYPE, count=nbytes // BLOCK_DTYPE.itemsize, offset=start)
        parameters[block["name"]] = values.reshape(shape).astype(np.float32)

    return Checkpoint(
        config=config,
        vocabulary=vocabulary,
        parameters=parameters,
        metadata=metadata,
        history=history,
        format_version=version,
    )


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(checkpoint))
    logger.info(f"💾 Checkpoint written to {path} ({len(checkpoint.parameters)} blocks)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    checkpoint = decode_checkpoint(path.read_bytes())
    logger.info(f"📂 Loaded checkpoint {path}")
    return checkpoint
