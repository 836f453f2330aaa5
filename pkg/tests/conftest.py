import numpy as np
import pytest

from ldpkit.model import JumpChannelPair, RateLaw, birth_death_spec, hybrid_spec, make_spec, ou_spec


@pytest.fixture
def ou():
    return ou_spec(1.0, 1.0)


@pytest.fixture
def bd():
    return birth_death_spec(2.0, 1.0)


@pytest.fixture
def hybrid():
    return hybrid_spec(1.0, 1.0, 2.0, 1.0)


def two_species_network():
    """0 <-> A (k=1, 1*a),  A <-> B (1*a, 2*b); detailed balanced at (1, 0.5)."""
    return make_spec(
        2,
        [
            JumpChannelPair([1, 0], RateLaw.constant(1.0), RateLaw.mass_action(1.0, [1, 0])),
            JumpChannelPair([-1, 1], RateLaw.mass_action(1.0, [1, 0]), RateLaw.mass_action(2.0, [0, 1])),
        ],
        label="0<->A<->B",
    )


def cycle_network():
    """A -> B -> C -> A, unit rates, no reverse reactions: complex but not detailed balanced."""
    zero = RateLaw.mass_action(0.0, [0, 0, 0])
    return make_spec(
        3,
        [
            JumpChannelPair([-1, 1, 0], RateLaw.mass_action(1.0, [1, 0, 0]), zero),
            JumpChannelPair([0, -1, 1], RateLaw.mass_action(1.0, [0, 1, 0]), zero),
            JumpChannelPair([1, 0, -1], RateLaw.mass_action(1.0, [0, 0, 1]), zero),
        ],
        label="A->B->C->A",
    )


def ou_2d():
    A1 = np.array([[-1.0, 0.5], [-0.3, -2.0]])
    D = np.array([[1.0, 0.2], [0.2, 0.5]])
    return make_spec(2, A0=np.array([0.4, -0.2]), A1=A1, D=D, label="2-D linear")


@pytest.fixture
def net2():
    return two_species_network()


@pytest.fixture
def cycle3():
    return cycle_network()


@pytest.fixture
def lin2():
    return ou_2d()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
