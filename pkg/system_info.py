"""Description of the machine a timed evaluation ran on."""

import json
import platform
from typing import TextIO

import numpy as np
import psutil
from pydantic import BaseModel

from version import VERSION


class HostInfo(BaseModel):
    """Where a timing measurement was taken; written next to timed reports."""

    os_name: str
    kernel_version: str
    python_version: str
    numpy_version: str
    windward_version: str

    cpu_count_logical: int
    cpu_count_physical: int | None
    cpu_model: str
    cpu_freq_mhz: float | None
    memory_total_mb: int

    def nice(self) -> str:
        freq = f" @ {self.cpu_freq_mhz:.0f} MHz" if self.cpu_freq_mhz else ""
        return (
            f"{self.os_name} (Kernel: {self.kernel_version}) | "
            f"CPU: {self.cpu_model}{freq} "
            f"C: {self.cpu_count_physical} p / "
            f"{self.cpu_count_logical} l | "
            f"RAM: {self.memory_total_mb} MB | "
            f"Python {self.python_version}"
        )


def get_host_info() -> HostInfo:
    # CPU model (platform-dependent)
    cpu_model = platform.processor()

    # Fallback if processor() returns empty (common on Linux)
    if not cpu_model:
        cpu_model = platform.uname().processor

    try:
        freq = psutil.cpu_freq()
    except (NotImplementedError, OSError):
        freq = None

    return HostInfo(
        os_name=platform.system(),
        kernel_version=platform.release(),
        python_version=platform.python_version(),
        numpy_version=np.__version__,
        windward_version=VERSION,
        cpu_count_logical=psutil.cpu_count(logical=True) or 1,
        cpu_count_physical=psutil.cpu_count(logical=False),
        cpu_model=cpu_model or "Unknown",
        cpu_freq_mhz=freq.current if freq else None,
        memory_total_mb=psutil.virtual_memory().total // (1024 * 1024),
    )


def write_host_json(info: HostInfo, sink: TextIO) -> None:
    sink.write(json.dumps(info.model_dump(), indent=2) + "\n")
