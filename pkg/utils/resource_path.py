import sys
from pathlib import Path


def resource_root() -> Path:
    """Directory holding the bundled resources/ folder"""
    bundle = getattr(sys, "_MEIPASS", None)
    if bundle:
        return Path(bundle)
    if getattr(sys, "frozen", False):
        # cx_Freeze copies include_files next to the executable
        return Path(sys.executable).resolve().parent
    return Path(__file__).resolve().parent.parent


def resource_path(relative_path: str) -> Path:
    return resource_root() / "resources" / relative_path
