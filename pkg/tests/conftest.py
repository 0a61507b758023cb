"""Shared helpers for gradient-oracle tests.

Central finite differences are only a valid oracle away from relu kinks.
With relu cells and a zero initial state, any unit whose first candidate
is negative parks its cell state exactly at the kink, so the oracle-facing
tests evaluate at a generic point instead: uniform weights plus a positive
candidate-bias block, which keeps every cell strictly positive for all
time. ``kink_gap`` measures the distance of the nearest pre-activation to
a kink so tests can assert the oracle's validity before trusting it.
"""

import numpy as np

from signflow import nn


def gradient_check_spec(frames=5, dim=8, classes=3):
    return nn.ModelSpec(frames=frames, dim=dim, layers=(
        nn.LstmSpec(4, return_sequences=True, activation="relu"),
        nn.LstmSpec(6, return_sequences=True, activation="relu"),
        nn.LstmSpec(4, return_sequences=False, activation="relu"),
        nn.DenseSpec(4, "relu"),
        nn.DenseSpec(3, "relu"),
        nn.DenseSpec(classes, "softmax"),
    ))


def kink_safe_params(spec, seed):
    """Generic-position parameters whose relu cells never touch zero."""
    rng = np.random.default_rng(seed)
    base = nn.init_params(spec, seed=seed)
    layers = []
    for layer in base.layers:
        if isinstance(layer, nn.LstmLayer):
            u = layer.units
            b = rng.uniform(-0.2, 0.2, 4 * u)
            b[2 * u:3 * u] += 1.5  # positive first candidates -> cells stay > 0
            layers.append(nn.LstmLayer(
                Wx=rng.uniform(-0.2, 0.2, layer.Wx.shape),
                Wh=rng.uniform(-0.2, 0.2, layer.Wh.shape),
                b=b,
            ))
        else:
            layers.append(nn.DenseLayer(
                W=rng.uniform(-0.5, 0.5, layer.W.shape),
                b=rng.uniform(-0.2, 0.2, layer.b.shape),
            ))
    return nn.ModelParams(spec=spec, layers=layers)


def kink_gap(params, batch) -> float:
    """Distance of the nearest relu pre-activation to zero over a forward pass."""
    gap = np.inf
    _, cache = nn.model_forward(params, batch)
    for layer_spec, lcache in zip(params.spec.layers, cache.layer_caches):
        if isinstance(layer_spec, nn.LstmSpec):
            gap = min(gap, float(np.abs(lcache.zg).min()), float(np.abs(lcache.c).min()))
        elif layer_spec.activation == "relu":
            gap = min(gap, float(np.abs(lcache.z).min()))
    return gap


def max_relative_error(analytic, numeric, floor=1e-8) -> float:
    """max |a - n| / max(|a|, |n|, floor) over every tensor coordinate."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum.reduce([np.abs(a), np.abs(n), np.full_like(a, floor)])
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst
