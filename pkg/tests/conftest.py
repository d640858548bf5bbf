import numpy as np
import pytest

from reactms import KernelSpec, PowerFactor, ReactionSpec, SpeciesParams
from reactms.coefficients import AngularPower

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"acceptance {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_reaction(masses=(1.0, 3.0, 2.0, 2.0), binding=(0.0, 0.0, 0.0, 0.0), alphas=(0, 0, 0, 0), **kw):
    return ReactionSpec(tuple(SpeciesParams(m, e, a) for m, e, a in zip(masses, binding, alphas)), **kw)


@pytest.fixture
def reaction():
    return make_reaction(binding=(0.0, 0.0, 0.6, 0.0), alphas=(1, 0, 0, 1))


@pytest.fixture
def kernel():
    return KernelSpec(
        gamma=2.0,
        default_phi=PowerFactor(1.0, p_R=1.0),
        default_b=AngularPower(1.0, 1.0),
        phi_react=PowerFactor(1.0, 0.5, 0.5),
        b_react=AngularPower(1.0, 0.5),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)
