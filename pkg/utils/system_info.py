import os
import platform

import psutil


def host_summary() -> str:
    """One-line description of the machine a run executes on"""
    memory_gb = psutil.virtual_memory().total / 2 ** 30
    physical = psutil.cpu_count(logical=False) or 0
    logical = psutil.cpu_count(logical=True) or os.cpu_count() or 0
    processor = platform.processor() or platform.machine()
    return (f"{processor}, {physical} core(s), {logical} logical processor(s), "
            f"{memory_gb:.1f} GB RAM, python {platform.python_version()}")


def resident_memory_mb() -> float:
    return psutil.Process().memory_info().rss / 2 ** 20
