import numpy as np
import pytest

from integrator_silt import GridContext, OperatorSpec, build_operator


@pytest.fixture(scope="session")
def wiener_64():
    return build_operator(OperatorSpec.identity(), GridContext(64))


@pytest.fixture(scope="session")
def bridge_64():
    """Classical bridge: project out the constant."""
    return build_operator(OperatorSpec.bridge(), GridContext(64))


@pytest.fixture(scope="session")
def gen_bridge_64():
    """Generalized bridge whose kernel contains the step 1_[0,1/2]."""
    return build_operator(OperatorSpec.generalized_bridge(), GridContext(64))


@pytest.fixture(scope="session")
def catalog_ops_64():
    """One operator per catalog family on a shared grid."""
    ctx = GridContext(64)
    return {
        "identity": build_operator(OperatorSpec.identity(), ctx),
        "bridge": build_operator(OperatorSpec.bridge(), ctx),
        "generalized_bridge": build_operator(OperatorSpec.generalized_bridge(), ctx),
        "compact": build_operator(OperatorSpec.compact_perturbation(kernel="sine", scale=0.5), ctx),
        "fbm": build_operator(OperatorSpec.fbm_volterra(0.75), ctx),
    }


def rng(seed=0):
    return np.random.default_rng(seed)
