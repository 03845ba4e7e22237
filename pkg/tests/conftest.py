import numpy as np
import pytest

from jacket_shm.modal import model_modes
from jacket_shm.osp_criteria import CriterionContext
from jacket_shm.structural_model import assemble_global, build_default_jacket


@pytest.fixture(scope="session")
def jacket():
    return build_default_jacket()


@pytest.fixture(scope="session")
def matrices(jacket):
    return assemble_global(jacket)


@pytest.fixture(scope="session")
def modes(jacket, matrices):
    return model_modes(jacket, matrices, 6)


@pytest.fixture(scope="session")
def ctx(jacket):
    return CriterionContext.from_model(jacket, 6)


@pytest.fixture(scope="session")
def evp8():
    # candidate nodes 5..12 (1-based), the exhaustive 8-sensor EVP optimum
    sel = np.zeros(12, dtype=bool)
    sel[:8] = True
    return sel


def pytest_terminal_summary(terminalreporter):
    import scenarios

    if scenarios.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(scenarios.VERDICTS):
            ok, detail = scenarios.VERDICTS[key]
            terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
