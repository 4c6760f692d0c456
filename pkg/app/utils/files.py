"""
Filesystem helpers for command outputs.

Outputs are written under a temporary name in the destination directory and
renamed into place only once complete.
"""

import hashlib
import os
from contextlib import contextmanager
from typing import Iterator

from app.exceptions import OutputExists


def check_writable(path: str, force: bool = False) -> None:
    """
    Refuse to overwrite an existing output unless forced.

    Raises:
        OutputExists: If path exists and force is False
    """
    if os.path.exists(path) and not force:
        raise OutputExists(f"Output {path} already exists (use --force to overwrite)", path=path)


def _temp_name(path: str) -> str:
    directory, name = os.path.split(os.path.abspath(path))
    return os.path.join(directory, f".{name}.tmp-{os.getpid()}")


@contextmanager
def staged_path(path: str, force: bool = False) -> Iterator[str]:
    """
    Yield a temporary path next to ``path``; rename it onto ``path`` on success.

    The temporary file is removed when the body raises.

    Args:
        path: Final destination
        force: Allow replacing an existing file
    """
    check_writable(path, force)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    temp = _temp_name(path)
    try:
        yield temp
        os.replace(temp, path)
    finally:
        if os.path.exists(temp):
            os.remove(temp)


def atomic_write(path: str, data: bytes, force: bool = False) -> None:
    """Write bytes to path through a temporary name."""
    with staged_path(path, force) as temp:
        with open(temp, "wb") as handle:
            handle.write(data)


def atomic_write_text(path: str, text: str, force: bool = False) -> None:
    atomic_write(path, text.encode("utf-8"), force)


def file_digest(path: str) -> str:
    """SHA-256 hex digest of a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
