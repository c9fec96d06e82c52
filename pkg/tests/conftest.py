from __future__ import annotations

import pytest

from killing_probe.components.endpoint_obstruction import sample_configuration
from killing_probe.utils.metric_model import catalog
from killing_probe.utils.sym_poly import SymPolySpace


@pytest.fixture(scope="session")
def flat():
    return catalog("flat", n=2)


@pytest.fixture(scope="session")
def sphere():
    return catalog("sphere_cap")


@pytest.fixture(scope="session")
def lorentz():
    return catalog("lorentz_flat")


@pytest.fixture(scope="session")
def flat_cfg_d1(flat):
    return sample_configuration(flat, SymPolySpace(2, 1), kappa=3, seed=1)


@pytest.fixture(scope="session")
def flat_cfg_d2(flat):
    return sample_configuration(flat, SymPolySpace(2, 2), kappa=3, seed=1)
