import numpy as np
import pytest
from hypothesis import given, strategies as st

from golfopt.optim import AdamState, adam_step, lr_at
from golfopt.tensor import Tensor


def _param(value):
    return {"w": Tensor(np.array(value, dtype=np.float64), requires_grad=True)}


def test_first_step_moves_by_lr():
    params = _param([0.0])
    adam_step(AdamState(lr=1e-3), params, {"w": np.array([1.0])})
    assert params["w"].data[0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)


def test_zero_grad_only_decays_moments():
    params = _param([0.5, -0.5])
    state = AdamState()
    adam_step(state, params, {"w": np.array([1.0, -2.0])})
    before = params["w"].data.copy()
    m = state.m["w"].copy()
    state2 = AdamState(step=0)
    p2 = _param([0.5, -0.5])
    adam_step(state2, p2, {"w": np.zeros(2)})
    np.testing.assert_array_equal(p2["w"].data, [0.5, -0.5])
    adam_step(state, params, {"w": np.zeros(2)})
    np.testing.assert_allclose(state.m["w"], 0.9 * m)
    assert np.all(np.abs(params["w"].data - before) > 0)  # momentum still carries


@given(st.floats(-1e3, 1e3).filter(lambda g: abs(g) > 1e-6))
def test_first_step_opposes_gradient(g):
    params = _param([0.0])
    adam_step(AdamState(), params, {"w": np.array([g])})
    assert np.sign(params["w"].data[0]) == -np.sign(g)


def test_identical_streams_give_identical_params(rng):
    grads = [rng.normal(size=3) for _ in range(20)]
    a, b = _param([1.0, 2.0, 3.0]), _param([1.0, 2.0, 3.0])
    sa, sb = AdamState(), AdamState()
    for g in grads:
        adam_step(sa, a, {"w": g})
        adam_step(sb, b, {"w": g.copy()})
    assert a["w"].data.tobytes() == b["w"].data.tobytes()


def test_uses_accumulated_grads_and_names_missing():
    params = _param([1.0])
    params["w"].grad = np.array([3.0])
    adam_step(AdamState(), params)
    assert params["w"].data[0] < 1.0
    params["w"].grad = None
    with pytest.raises(ValueError, match="'w'"):
        adam_step(AdamState(), params)


def test_state_roundtrip(rng):
    params = _param(rng.normal(size=4))
    state = AdamState(lr=3e-4)
    adam_step(state, params, {"w": rng.normal(size=4)})
    back = AdamState.restore(state.meta(), state.arrays())
    assert back.step == 1 and back.lr == 3e-4
    assert back.m["w"].tobytes() == state.m["w"].tobytes()


def test_schedule_endpoints():
    assert lr_at(0, 5000) == 1e-3
    assert lr_at(5000, 5000) == pytest.approx(1e-3 * 0.3**11, rel=1e-12)
    assert lr_at(5000, 5000) == pytest.approx(1.771e-9, rel=1e-3)
    with pytest.raises(ValueError):
        lr_at(6, 5)


@given(st.integers(1, 10_000), st.data())
def test_schedule_monotone(total, data):
    a = data.draw(st.integers(0, total))
    b = data.draw(st.integers(a, total))
    assert lr_at(b, total) <= lr_at(a, total)
