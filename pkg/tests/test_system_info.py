import io
import json

from system_info import HostInfo, get_host_info, write_host_json
from version import VERSION


def test_host_info():
    info = get_host_info()
    assert info.cpu_count_logical >= 1
    assert info.memory_total_mb > 0
    assert info.windward_version == VERSION
    assert info.cpu_model


def test_host_json_round_trip():
    info = get_host_info()
    sink = io.StringIO()
    write_host_json(info, sink)
    assert HostInfo(**json.loads(sink.getvalue())) == info


def test_nice():
    info = HostInfo(
        os_name="Linux",
        kernel_version="6.1",
        python_version="3.13.0",
        numpy_version="2.1.0",
        windward_version=VERSION,
        cpu_count_logical=8,
        cpu_count_physical=4,
        cpu_model="x86_64",
        cpu_freq_mhz=None,
        memory_total_mb=16000,
    )
    assert info.nice() == (
        "Linux (Kernel: 6.1) | CPU: x86_64 C: 4 p / 8 l | RAM: 16000 MB | Python 3.13.0"
    )


def test_missing_cpu_freq(monkeypatch):
    def unavailable():
        raise NotImplementedError

    monkeypatch.setattr("system_info.psutil.cpu_freq", unavailable)
    assert get_host_info().cpu_freq_mhz is None
