import numpy as np
import pytest

from compensctrl.kinematics import chain_from_dict, load_chain
from compensctrl.scenario import data_path

CHAIN_FILES = sorted(data_path("chains").glob("*.json"))


@pytest.fixture(scope="session")
def prosthesis():
    return load_chain(data_path("chains", "prosthesis7.json"))


@pytest.fixture(scope="session")
def avatar():
    return load_chain(data_path("chains", "avatar.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def lever(length=1.0, axis=(0, 0, 1)):
    """One revolute joint at the origin with both named frames at the tip."""
    return chain_from_dict({
        "joints": [{"kind": "revolute-axis", "axis": list(axis), "owner": "robot"}],
        "frames": {"end_effector": {"joint": 0, "xyz": [length, 0, 0]},
                   "compensation": {"joint": -1}},
    })


def planar_two_link(l1=1.0, l2=0.7):
    return chain_from_dict({
        "joints": [
            {"kind": "revolute-axis", "axis": [0, 0, 1], "owner": "human"},
            {"kind": "revolute-axis", "axis": [0, 0, 1], "origin_xyz": [l1, 0, 0], "owner": "robot"},
        ],
        "frames": {"end_effector": {"joint": 1, "xyz": [l2, 0, 0]},
                   "compensation": {"joint": 0, "xyz": [0.5 * l1, 0, 0]}},
    })


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of an acceptance criterion under ``name``."""
    name = request.node.get_closest_marker("criterion").args[0]
    callspec = getattr(request.node, "callspec", None)
    if callspec is not None:
        name += f" [{callspec.id}]"
    state = {"detail": ""}

    def note(text: str):
        state["detail"] = text

    yield note
    rep = getattr(request.node, "rep_call", None)
    ACCEPTANCE[name] = (rep is not None and rep.passed, state["detail"])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion label")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}" + (f" | {detail}" if detail else ""))
