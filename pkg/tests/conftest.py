import shutil
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
CREPO = FIXTURES / "crepo"


class ScriptedLLM:
    """In-test backend: pops canned responses, records request order."""

    def __init__(self, turns):
        self.turns = list(turns)
        self.requests = []

    def chat(self, request):
        self.requests.append(request)
        if not self.turns:
            raise AssertionError(
                f"scripted backend exhausted at stage {request.tag!r}")
        turn = self.turns.pop(0)
        if callable(turn):
            return turn(request)
        return turn

    @property
    def tags(self):
        return [r.tag for r in self.requests]


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    # expose per-phase outcomes so teardown fixtures can report status
    report = yield
    setattr(item, "rep_" + report.when, report)
    return report


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture(autouse=True, scope="session")
def _crepo_stays_pristine():
    # crepo is shared read-only; tests that mutate must copy it first
    before = sorted(p.name for p in CREPO.iterdir())
    yield
    assert sorted(p.name for p in CREPO.iterdir()) == before


@pytest.fixture
def crepo():
    return CREPO


@pytest.fixture
def scratch_crepo(tmp_path):
    dst = tmp_path / "crepo"
    shutil.copytree(CREPO, dst)
    return dst


@pytest.fixture
def issue_text():
    return (FIXTURES / "crepo_issue.md").read_text()


@pytest.fixture
def sanitizer_log():
    return (FIXTURES / "crepo_sanitizer.log").read_text()
