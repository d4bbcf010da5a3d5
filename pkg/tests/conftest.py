import pytest


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("NESTCOAL_OUT_DIR", str(tmp_path))
    return tmp_path


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
