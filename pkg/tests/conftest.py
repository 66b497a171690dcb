import math

import numpy as np
import pytest

from gompertz_msig import CurveParams, InitialLaw, ProcessParams, simulate, subsample

EX1_BETA = (0.1225, -0.0075, 0.00017)
EX2_BETA = (0.0626, -0.009, 0.0002)
EX2_SIGMA = 0.025
ALPHA_STATED = math.exp(-1.0)
# value consistent with the tabulated inflection instants and fitted alphas
ALPHA_TABLE = math.exp(-0.1)

# inflection instants on [0, 50], from 40-digit differentiation of the curve itself
INFL = {
    ("ex1", "stated"): (14.8259768524, 29.8984831892),
    ("ex1", "table"): (14.7877342606, 30.5890616313),
    ("ex2", "stated"): (16.5839833765, 36.3755913705),
    ("ex2", "table"): (13.8889143535, 38.4031332869),
}


def process(alpha, beta, sigma):
    return ProcessParams(CurveParams.from_beta(alpha, beta), sigma ** 2)


def protocol_paths(alpha, beta, sigma, seed, n_paths=25):
    """25 paths, 501 points, dt=0.1, x0=5, reduced to 51 points."""
    pp = process(alpha, beta, sigma)
    sps = simulate(pp, InitialLaw.degenerate(5.0), 0.0, 0.1, 501, n_paths, seed)
    return subsample(sps, 10)


@pytest.fixture(scope="session")
def ex1_data():
    return protocol_paths(ALPHA_TABLE, EX1_BETA, 0.01, seed=0)


@pytest.fixture(scope="session")
def ex2_data():
    return protocol_paths(ALPHA_TABLE, EX2_BETA, EX2_SIGMA, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
