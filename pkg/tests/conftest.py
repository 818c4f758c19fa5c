import numpy as np
import pytest

from chainhist import (
    InitialSpec,
    ModelSpec,
    Network,
    OdeProblem,
    build_sis_generator,
    euler_step_history,
    make_initial_distribution,
)
from chainhist.cli import parse_network
from importlib import resources as importlib_resources


def bundled_path(relative: str):
    return importlib_resources.files("chainhist").joinpath("data", relative)


@pytest.fixture(scope="session")
def pair_network():
    return Network(2, 2, ((0, 1, 1.0),))


@pytest.fixture(scope="session")
def pair_generator(pair_network):
    return build_sis_generator(pair_network, ModelSpec("sis", 0.5))


@pytest.fixture(scope="session")
def path3_network():
    return Network(3, 2, ((0, 1, 1.0), (1, 2, 0.7)))


@pytest.fixture(scope="session")
def seven_node():
    """Bundled 7-node epidemic scenario: generator, initial vector, spec."""
    with importlib_resources.as_file(bundled_path("networks/seven_node_sis.json")) as path:
        network, spec, initial, _ = parse_network(path)
    generator = build_sis_generator(network, spec)
    x0 = make_initial_distribution(initial, network.n, network.q)
    return network, generator, x0


@pytest.fixture(scope="session")
def seven_node_window(seven_node):
    """Warm-up day 0 -> 1, then the day 1 -> 2 analysis window (T = 1027)."""
    _, generator, x0 = seven_node
    warm = euler_step_history(OdeProblem(generator, x0, t_max=1.0, steps=1027))
    window = euler_step_history(
        OdeProblem(generator, warm.data[:, -1], t_max=1.0, steps=1027, t_offset=1.0)
    )
    return warm, window


def two_state_chain(a=1.0, b=0.5):
    """Flip-flop generator [[-a, b], [a, -b]] with its closed-form flow."""
    matrix = np.array([[-a, b], [a, -b]])
    stationary = np.array([b, a]) / (a + b)

    def exact(x0, t):
        return stationary + np.exp(-(a + b) * t) * (np.asarray(x0) - stationary)

    return matrix, exact
