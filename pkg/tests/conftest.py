import pytest

from ebsm.cli import fixture_path
from ebsm.codegen import instrument, translate_taskbody
from ebsm.parser import load_guidance, load_model, parse_model


def bundled(name):
    return str(fixture_path(name))


def model_from(src):
    result = parse_model(src)
    assert not isinstance(result, list), "\n".join(map(str, result))
    return result


@pytest.fixture(scope="session")
def stop_start():
    return load_model(bundled("stop_start.ebsm"))


@pytest.fixture(scope="session")
def program(stop_start):
    return translate_taskbody(stop_start)


@pytest.fixture(scope="session")
def run1_guidance(stop_start):
    return load_guidance(bundled("run1.guidance.json"), stop_start)


@pytest.fixture(scope="session")
def run2_guidance(stop_start):
    return load_guidance(bundled("run2.guidance.json"), stop_start)


@pytest.fixture(scope="session")
def run1_program(program, run1_guidance):
    return instrument(program, run1_guidance)


@pytest.fixture(scope="session")
def run2_program(program, run2_guidance):
    return instrument(program, run2_guidance)


# criterion number -> (verdict, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        verdict, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {verdict}  {detail}")
