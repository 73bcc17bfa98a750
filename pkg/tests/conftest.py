import warnings

import pytest

from gkpstab.fock import TruncationWarning


@pytest.fixture(autouse=True)
def _quiet_truncation():
    # small test dimensions sit below the recommended truncation on purpose
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        yield


# acceptance results: criterion name -> list of (item, passed, detail)
_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_report():
    def record(criterion, item, passed, detail=""):
        _ACCEPTANCE.setdefault(criterion, []).append((item, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, items in _ACCEPTANCE.items():
        status = "PASS" if all(ok for _, ok, _ in items) else "FAIL"
        parts = "; ".join(f"{item}={'ok' if ok else 'FAIL'} [{detail}]" for item, ok, detail in items)
        terminalreporter.write_line(f"{status}  {criterion}: {parts}")
