import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_registry  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not acceptance_registry.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance_registry.RESULTS):
        terminalreporter.write_line(acceptance_registry.format_line(n))
