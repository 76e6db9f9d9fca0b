import hashlib
import logging
import os
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from sptree.core.config import settings

logger = logging.getLogger(__name__)

MAGIC = b"SPTC"
VERSION = 1
DTYPE_FLOAT64 = 1
HEADER = struct.Struct("<4sHH8s")


def payload_digest(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


class CacheService:
    """
    On-disk cache for resolvent sweep results

    Files are `<key>.bin`: a 16-byte header (magic, version, dtype code, blake2b
    digest of the payload) followed by little-endian float64 data.
    """

    def __init__(self, cache_dir: Optional[str] = None):
        self._cache_dir = cache_dir

    @property
    def cache_dir(self) -> Path:
        return Path(self._cache_dir or os.environ.get("SPTREE_CACHE_DIR") or settings.SPTREE_CACHE_DIR)

    def make_key(self, *parts) -> str:
        h = hashlib.blake2b(digest_size=16)
        for part in parts:
            if isinstance(part, np.ndarray):
                part = np.ascontiguousarray(part).tobytes()
            elif not isinstance(part, bytes):
                part = repr(part).encode()
            h.update(struct.pack("<Q", len(part)))
            h.update(part)
        return h.hexdigest()

    def path_for(self, key: str) -> Path:
        return self.cache_dir / f"{key}.bin"

    def store(self, key: str, values: np.ndarray) -> Path:
        payload = np.ascontiguousarray(values, dtype="<f8").tobytes()
        path = self.path_for(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, VERSION, DTYPE_FLOAT64, payload_digest(payload)))
            fh.write(payload)
        os.replace(tmp, path)
        logger.debug(f"Cached {values.size} values under {path.name}")
        return path

    def load(self, key: str) -> Optional[np.ndarray]:
        """Cached array, or None when the file is missing, corrupt or from another version"""
        path = self.path_for(key)
        try:
            raw = path.read_bytes()
        except FileNotFoundError:
            return None
        except OSError as e:
            logger.warning(f"Unreadable cache file {path}: {str(e)}")
            return None

        if len(raw) < HEADER.size:
            logger.warning(f"Ignoring truncated cache file {path.name}")
            return None
        magic, version, dtype_code, digest = HEADER.unpack(raw[:HEADER.size])
        payload = raw[HEADER.size:]
        if magic != MAGIC or version != VERSION or dtype_code != DTYPE_FLOAT64:
            logger.warning(f"Ignoring cache file {path.name} with foreign header")
            return None
        if len(payload) % 8 or payload_digest(payload) != digest:
            logger.warning(f"Ignoring cache file {path.name} with bad payload digest")
            return None
        return np.frombuffer(payload, dtype="<f8").astype(np.float64)

    def clear(self) -> int:
        removed = 0
        if self.cache_dir.is_dir():
            for path in self.cache_dir.glob("*.bin"):
                path.unlink()
                removed += 1
        return removed


cache_service = CacheService()
