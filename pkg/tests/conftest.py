import numpy as np
import pytest

import winsorcam as wc


@pytest.fixture(scope="session")
def fixture_triple():
    """Canonical deterministic (model, image, mask) triple."""
    return wc.make_synthetic_fixture(0)


@pytest.fixture(scope="session")
def fixture_run(fixture_triple):
    model, image, _ = fixture_triple
    return wc.run(model, image)


@pytest.fixture(scope="session")
def fixture_cams(fixture_run):
    return wc.all_layer_gradcams(fixture_run, 0)


@pytest.fixture(scope="session")
def fd_model():
    """Random seeded model for gradient probing: pooled middle layer, 8x8 input."""
    specs = (wc.ConvSpec(1, 3, pool=False), wc.ConvSpec(3, 4, pool=True), wc.ConvSpec(4, 4, pool=False))
    return wc.MicroCnn.initialize(specs, num_classes=3, seed=42)


def pool_window_margin(activation: np.ndarray, pos) -> float:
    """How far this position is from flipping its 2x2 pool window's argmax.

    Returns the margin between the window max and this value (or between the
    unique max and the runner-up when this value is the max).  Zero means the
    pooling decision is ambiguous and finite differences sit on a kink.
    """
    k, u, v = pos
    wu, wv = (u // 2) * 2, (v // 2) * 2
    window = activation[k, wu : wu + 2, wv : wv + 2]
    top = window.max()
    value = activation[k, u, v]
    if value == top:
        flat = window.ravel()
        if (flat == top).sum() > 1:
            return 0.0
        return float(top - np.partition(flat, -2)[-2])
    return float(top - value)


def sample_fd_positions(rng, model, trace, layer_index, count, margin=1e-3):
    """Random activation positions safe for central finite differences.

    For layers feeding a maxpool, positions whose pool window is within
    `margin` of changing its argmax are rejected (the logit is non-smooth
    there, so a difference quotient does not estimate the gradient).
    """
    act = trace.activations[layer_index]
    pooled = model.conv_specs[layer_index].pool
    positions = []
    attempts = 0
    while len(positions) < count:
        attempts += 1
        if attempts > count * 200:
            raise RuntimeError("could not sample enough smooth positions")
        pos = tuple(int(rng.integers(0, s)) for s in act.shape)
        if pooled and pool_window_margin(act, pos) <= margin:
            continue
        positions.append(pos)
    return positions


def central_difference(model, layer_index, activation, pos, class_index, h=1e-5):
    """Two-sided difference quotient of one logit w.r.t. one activation value."""
    bumped = activation.copy()
    bumped[pos] += h
    hi = wc.forward_from(model, layer_index, bumped)[class_index]
    bumped[pos] -= 2 * h
    lo = wc.forward_from(model, layer_index, bumped)[class_index]
    return (hi - lo) / (2 * h)
