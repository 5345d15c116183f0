import pytest

from ldwalks.sampling import RngStream

# criterion -> list of (check name, passed, detail); filled by test_acceptance
ACCEPTANCE: dict[str, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def stream():
    return RngStream(seed=12345, stream_id=0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        checks = ACCEPTANCE[key]
        verdict = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        terminalreporter.write_line(f"{key} {verdict}")
        for name, ok, detail in checks:
            terminalreporter.write_line(f"    [{'ok' if ok else 'FAIL'}] {name}: {detail}")
