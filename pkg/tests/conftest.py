import random

import pytest

from kpsca.curve import Scalar, get_curve, kp_multiply, kp_point
from kpsca.leaksim import LeakModel, build_schedule, synthesize_trace

from helpers import make_test16_curve


@pytest.fixture(scope="session")
def b163():
    return get_curve("b163")


@pytest.fixture(scope="session")
def b233():
    return get_curve("b233")


@pytest.fixture(scope="session")
def test8():
    return get_curve("test8")


@pytest.fixture(scope="session")
def test16():
    params = make_test16_curve()
    # re-verify the frozen subgroup order: n is prime, so [n]G = infinity
    # together with G != infinity pins ord(G) = n exactly
    n = params.order_hint
    assert all(n % d for d in range(2, int(n**0.5) + 1))
    assert kp_point(Scalar(n), params.g, params).infinity
    return params


@pytest.fixture(scope="session")
def b233_run():
    """One recorded B-233 execution shared by schedule/attack tests."""
    rng = random.Random(20240917)
    params = get_curve("b233")
    k = Scalar.random(rng, 232)
    result, transcript = kp_multiply(k, params.g, params)
    schedule = build_schedule(transcript)
    return params, k, result, transcript, schedule


@pytest.fixture(scope="session")
def b233_leaky_trace(b233_run):
    """Noiseless, address-leaking trace of the shared execution."""
    _, _, _, _, schedule = b233_run
    model = LeakModel(addr_weight=1.0, data_weight=0.0, noise_sigma=0.0,
                      samples_per_cycle=10, rng_seed=1)
    return synthesize_trace(schedule, model)
