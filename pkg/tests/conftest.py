"""Shared, expensive fixtures.

Branch traces and k-layer solves take seconds each; they are computed once
per session and reused by the module tests and the acceptance suite.
"""

import pytest

from kellerpath.continuation import MINUS, PLUS, trace_branch
from kellerpath.radial_ode import Params
from kellerpath.spectrum import radial_neumann_eigs


@pytest.fixture(scope="session")
def eigs3():
    return radial_neumann_eigs(Params(N=3), 4)


@pytest.fixture(scope="session")
def eigs2():
    return radial_neumann_eigs(Params(N=2), 4)


@pytest.fixture(scope="session")
def branch3_minus2():
    return trace_branch(Params(N=3), 2, MINUS, mu_max=100.0)


@pytest.fixture(scope="session")
def branch3_minus3(eigs3):
    return trace_branch(Params(N=3), 3, MINUS, mu_max=2.0 * eigs3[2].lam)


@pytest.fixture(scope="session")
def branch3_plus2():
    return trace_branch(Params(N=3), 2, PLUS, mu_max=60.0, max_steps=150)


@pytest.fixture(scope="session")
def branch2_minus2():
    return trace_branch(Params(N=2), 2, MINUS, mu_max=60.0)


@pytest.fixture(scope="session")
def branch2_minus3(eigs2):
    return trace_branch(Params(N=2), 3, MINUS, mu_max=2.0 * eigs2[2].lam)


@pytest.fixture(scope="session")
def layer_boundary_300():
    from kellerpath.gluing import k_layer

    return k_layer(Params(N=3, mu=300.0), 2, boundary_layer=True)


@pytest.fixture(scope="session")
def layers_interior():
    """Interior 2-layer solutions at mu = 500 and 700 (N=3 ball)."""
    from kellerpath.gluing import k_layer

    return {mu: k_layer(Params(N=3, mu=mu), 2) for mu in (500.0, 700.0)}
