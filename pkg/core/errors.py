"""
Exception hierarchy shared by the library and the command line front end.
Every error the CLI reports as a user/config problem derives from VibCrnnError.
"""

from typing import Optional

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USER_ERROR = 2
EXIT_IO_ERROR = 3


class VibCrnnError(Exception):
    """Base class for all library errors"""


class ShapeError(VibCrnnError, ValueError):
    """Tensor shapes or dimensions do not fit the operation"""


class ConfigError(VibCrnnError, ValueError):
    """Invalid configuration value, key or reference"""


class DivisibilityError(ConfigError):
    """Partition or stateful batch sizes are not divisible by the batch size"""


class StateError(VibCrnnError, RuntimeError):
    """Operation called out of order, e.g. backward without a cached forward"""


class LockError(VibCrnnError):
    """Output directory is held by another live process"""


class FormatError(VibCrnnError, ValueError):
    """Malformed signal file, archive or checkpoint"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the stable CLI exit code contract"""
    if isinstance(error, VibCrnnError):
        return EXIT_USER_ERROR
    if isinstance(error, OSError):
        return EXIT_IO_ERROR
    return EXIT_FAILURE
