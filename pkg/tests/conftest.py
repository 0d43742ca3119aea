import numpy as np
import pytest

from more_dwr.cli_io import build_fom, config_from_dict


def heat_1d_dict(cells=32, M=16, K=4, tol=0.01, eps=1.0 - 1e-8, T=4.0, r=1,
                 family="gauss_legendre"):
    return {
        "name": "heat_1d_small",
        "equation": "heat",
        "mesh": {"dim": 1, "extents": [[0.0, 1.0]], "cells": [cells]},
        "time": {"T_end": T, "M": M, "r": r, "family": family},
        "source": "moving_1d",
        "goal": {"kind": "mean_value_subdomain", "lo": [0.0], "hi": [0.5]},
        "rom": {"tol": tol, "eps_primal": eps, "eps_dual": eps, "K": K, "L": M // K},
    }


def heat_2d_dict(cells=8, M=16, K=4, tol=0.01):
    return {
        "name": "heat_2d_small",
        "equation": "heat",
        "mesh": {"dim": 2, "extents": [[0.0, 1.0], [0.0, 1.0]], "cells": [cells, cells]},
        "time": {"T_end": 1.0, "M": M, "r": 1},
        "source": "rotating_2d",
        "goal": {"kind": "squared_l2"},
        "rom": {"tol": tol, "eps_primal": 1 - 1e-8, "eps_dual": 1 - 1e-8, "K": K, "L": M // K},
    }


def elasto_dict(M=20, K=4, tol=0.01, mu=1000.0, lam=1000.0, T=8.0):
    return {
        "name": "beam_small",
        "equation": "elastodynamics",
        "mesh": {"dim": 3, "extents": [[0.0, 6.0], [0.0, 1.0], [0.0, 1.0]], "cells": [6, 1, 1]},
        "time": {"T_end": T, "M": M, "r": 2, "family": "gauss_lobatto"},
        "source": "beam_traction_3d",
        "goal": {"kind": "boundary_stress", "component": 2, "face": [0, 0]},
        "material": {"mu": mu, "lam": lam},
        "rom": {"tol": tol, "eps_primal": 1 - 1e-10, "eps_dual": 1 - 1e-10, "K": K, "L": M // K},
    }


@pytest.fixture
def small_heat_fom():
    return build_fom(config_from_dict(heat_1d_dict()))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[number])
