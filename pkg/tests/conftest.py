import pytest

from admmattack import RngStream
from admmattack.victim import SoftmaxModel, digits8x8, train


@pytest.fixture(scope="session")
def digits():
    return digits8x8()


@pytest.fixture(scope="session")
def softmax_victim(digits):
    rng = RngStream(7)
    model = SoftmaxModel.init(64, 10, rng.child(0))
    return train(model, digits, epochs=100, lr=0.5, rng=rng.child(1))
