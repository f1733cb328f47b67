"""Writer for the engine's binary embedding file format.

Layout (little-endian): magic b"SLV1", u32 dimension, u64 record count, then
per record a u16 id byte-length, the UTF-8 id, and dimension float32 values.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"SLV1"


def write_embeddings(
    path: str | os.PathLike, dim: int, records: Sequence[tuple[str, np.ndarray]]
) -> None:
    """Write (id, vector) records atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", dim))
        fh.write(struct.pack("<Q", len(records)))
        for rec_id, vector in records:
            vector = np.asarray(vector, dtype=np.float32)
            if vector.shape != (dim,):
                raise ValueError(
                    f"vector for {rec_id!r} has shape {vector.shape}, expected ({dim},)"
                )
            id_bytes = rec_id.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise ValueError(f"id too long: {rec_id!r}")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(vector.tobytes())
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
