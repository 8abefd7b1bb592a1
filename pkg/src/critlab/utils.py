from __future__ import annotations

import hashlib
import logging
import os
from pathlib import Path

logger = logging.getLogger("critlab.utils")


def md5_checksum(file_path: str | Path, block_size: int = 2**20) -> str | None:
    """ Calculate MD5 checksum of a file

        Parameters
        ----------
            file_path : str | Path
                Path to the file

            block_size : int, default=1 MB
                The size of chunks to read the file

        Returns
        -------
            hash : str
                32-character hexadecimal MD5 checksum, or None if unreadable
    """
    m = hashlib.md5()
    try:
        with open(file_path, "rb") as fn:
            while True:
                data = fn.read(block_size)
                if not data:
                    break
                m.update(data)
    except OSError:
        logger.warning("File %s could not be read for checksum.", file_path)
        return None
    return m.hexdigest()


def stable_hash(value: str) -> str:
    return hashlib.sha256(value.encode("utf-8")).hexdigest()


def default_workers() -> int:
    return os.cpu_count() or 1


def chunk_ranges(total: int, size: int) -> list[tuple[int, int]]:
    """ Split ``range(total)`` into consecutive ``(start, stop)`` chunks

        Parameters
        ----------
            total : int
                Number of items
            size : int
                Maximum chunk length

        Returns
        -------
            ranges : list[tuple[int, int]]
                Half-open ranges covering ``0..total`` in order
    """
    if size < 1:
        raise ValueError(f"Chunk size must be >= 1, got {size}.")
    return [(start, min(start + size, total)) for start in range(0, total, size)]
