import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bss_expand.config import build_config  # noqa: E402
from bss_expand.pipeline import run_pipeline  # noqa: E402

# small but complete synthetic run shared by several test modules
SMALL = dict(synth=True, seed=7, synth_n_trips=4000, synth_n_fixed=24, synth_n_hotspots=40, synth_dirty_rate=0.01)


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("small_run")
    cfg = build_config(None, dict(SMALL, out_dir=str(out)))
    res = run_pipeline(cfg)
    res["cfg"] = cfg
    res["out"] = out
    return res


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}".rstrip()
        print(line)
        request.config.stash.setdefault(_VERDICTS, []).append(line)
        return ok

    return record


_VERDICTS = pytest.StashKey()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
