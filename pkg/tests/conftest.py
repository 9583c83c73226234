import math

import pytest

from sqznet import scenario

WORKED = dict(gamma_ic=0.15, gamma_oc=0.80, gamma_l=0.05, upsilon=-0.5)


def opa_overrides(name, gamma_ic, gamma_oc, gamma_l, upsilon):
    return {
        f"{name}.gamma_ic_rate": gamma_ic,
        f"{name}.gamma_oc_rate": gamma_oc,
        f"{name}.gamma_l_rate": gamma_l,
        f"{name}.upsilon_rate": upsilon,
    }


def dual_opa(p1=WORKED, p2=None, **extra):
    p2 = p1 if p2 is None else p2
    ov = {**opa_overrides("OPA1", **p1), **opa_overrides("OPA2", **p2), **extra}
    return scenario("dual_opa_mz", ov)


@pytest.fixture
def worked_net():
    return dual_opa()


TWO_PI = 2 * math.pi
