import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


ACCEPTANCE_TITLES = {
    1: "loss oracle suite",
    2: "finite-difference gradient checks",
    3: "pose normalization properties",
    4: "window semantics",
    5: "landmark-stage overfit",
    6: "video-stage overfit",
    7: "end-to-end transfer",
    8: "determinism",
    9: "rasterizer golden images",
}


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in ACCEPTANCE_TITLES.items():
        status, _, msg = mod.RESULTS.get(n, ("NOT RUN", title, ""))
        terminalreporter.write_line(f"criterion {n} [{status}] {title}: {msg}".rstrip(": "))
