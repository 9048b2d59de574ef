"""Atomic file writes and the advisory lock guarding an output directory."""

import logging
import os
import tempfile
from pathlib import Path
from typing import Union

import psutil

from core.errors import LockError

logger = logging.getLogger(__name__)

LOCK_NAME = ".vibcrnn.lock"

PathLike = Union[str, Path]


def atomic_write_bytes(path: PathLike, data: bytes):
    """Write to a temp file in the target directory, then rename over the target"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, target)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def atomic_write_text(path: PathLike, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


class OutputLock:
    """
    Advisory lock file holding the owner's pid. A lock left behind by a
    process that no longer exists is reclaimed.
    """

    def __init__(self, directory: PathLike):
        self.directory = Path(directory)
        self.path = self.directory / LOCK_NAME
        self._held = False

    def _owner_alive(self) -> bool:
        try:
            pid = int(self.path.read_text(encoding="utf-8").strip() or "0")
        except (OSError, ValueError):
            return False
        return pid > 0 and pid != os.getpid() and psutil.pid_exists(pid)

    def acquire(self):
        self.directory.mkdir(parents=True, exist_ok=True)
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                if self._owner_alive():
                    raise LockError(f"output directory {self.directory} is in use by another run "
                                    f"(lock file {self.path})")
                logger.warning("removing stale lock %s", self.path)
                self.path.unlink(missing_ok=True)
                continue
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.write(str(os.getpid()))
            self._held = True
            return
        raise LockError(f"could not acquire lock {self.path}")

    def release(self):
        if self._held:
            self.path.unlink(missing_ok=True)
            self._held = False

    def __enter__(self) -> "OutputLock":
        self.acquire()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.release()
