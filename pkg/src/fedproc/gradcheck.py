"""Central finite-difference checks of the analytic gradients.

Relative error of one component is ``|a - n| / max(|a|, |n|, floor)``.
The floor keeps components whose true value is below what a step of
1e-5 can resolve in float64 from being judged on rounding noise alone.

ReLU and max pooling are only piecewise smooth, and a difference quotient
straddling a kink measures nothing.  Random points are therefore redrawn
until every ReLU input and every max-pool top-two gap clears
:data:`KINK_MARGIN`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .losses import blended_loss, cross_entropy, gpc_loss
from .models import NetworkSpec, architecture, build_network, forward_tensors
from .nn.layers import MaxPool2d, ReLU, layer_forward
from .nn.params import ModelParameters
from .nn.tensor import Tensor, gradients

STEP = 1e-5
TOLERANCE = 1e-4
FLOOR = 1e-6
KINK_MARGIN = 1e-4
MAX_REDRAWS = 50

# (name, alpha); alpha None means the plain loss
LOSS_KINDS = (("ce", None), ("gpc", None), ("blend0", 0.0), ("blend0.5", 0.5), ("blend1", 1.0))

GRADCHECK_NETWORKS = {
    "mlp": NetworkSpec("mlp", (6,), num_classes=4, hidden_dims=(7,), projection_dim=5),
    "small_cnn": NetworkSpec("small_cnn", (16, 16, 2), num_classes=4, hidden_dims=(2, 3, 8, 6), projection_dim=5),
}


@dataclass(frozen=True)
class GradCheckResult:
    network: str
    loss: str
    point: int
    max_rel_error: float
    num_components: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= TOLERANCE


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = STEP) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + h
        fp = f(x)
        x[i] = orig - h
        fm = f(x)
        x[i] = orig
        grad[i] = (fp - fm) / (2 * h)
    return grad


def _loss(spec, leaves, x, y, prototypes, alpha, kind):
    _, z, s = forward_tensors(spec, leaves, Tensor(x))
    if kind == "ce":
        return cross_entropy(s, y)
    if kind == "gpc":
        return gpc_loss(z, y, prototypes)
    return blended_loss(z, s, y, prototypes, alpha)


def kink_margin(params: ModelParameters, x: np.ndarray) -> float:
    """Distance of the forward pass from the nearest ReLU or max-pool switch."""
    margin = np.inf
    h = Tensor(x)
    for name, layer in architecture(params.spec).layers:
        if isinstance(layer, ReLU):
            margin = min(margin, float(np.abs(h.data).min()))
        elif isinstance(layer, MaxPool2d):
            n, hh, ww, c = h.shape
            s = layer.size
            win = h.data[:, : hh // s * s, : ww // s * s, :]
            win = win.reshape(n, hh // s, s, ww // s, s, c).transpose(0, 1, 3, 5, 2, 4).reshape(-1, s * s)
            top2 = np.sort(win, axis=1)[:, -2:]
            live = top2[:, 1] > 0
            if live.any():
                margin = min(margin, float((top2[live, 1] - top2[live, 0]).min()))
        leaves = [Tensor(params[f"{name}.{suffix}"]) for suffix, _ in layer.param_shapes()]
        h = layer_forward(layer, leaves, h, name)
    return margin


def _draw_point(spec: NetworkSpec, rng: np.random.Generator, batch: int):
    for _ in range(MAX_REDRAWS):
        params = build_network(spec, int(rng.integers(2**31)))
        x = rng.standard_normal((batch,) + spec.input_shape)
        if kink_margin(params, x) >= KINK_MARGIN:
            return params, x
    raise RuntimeError(f"no kink-free point for {spec} in {MAX_REDRAWS} draws")


def check_point(spec: NetworkSpec, kind: str, alpha: float | None, seed: int, batch: int = 5) -> tuple[float, int]:
    """Max relative error over every parameter component at one random point."""
    rng = np.random.default_rng(seed)
    params, x = _draw_point(spec, rng, batch)
    y = rng.integers(0, spec.num_classes, size=batch)
    prototypes = rng.standard_normal((spec.num_classes, spec.projection_dim))

    leaves = params.leaves()
    analytic = gradients(_loss(spec, leaves, x, y, prototypes, alpha, kind), leaves)
    flat_analytic = np.concatenate([analytic[n].ravel() for n in params.names])

    def f(flat):
        p = params.unflatten(flat)
        consts = {n: Tensor(a) for n, a in p.items()}
        return _loss(spec, consts, x, y, prototypes, alpha, kind).item()

    numeric = numeric_gradient(f, params.flatten())
    return float(relative_error(flat_analytic, numeric).max()), flat_analytic.size


def run_suite(points: int = 10, networks=None, seed: int = 0) -> list[GradCheckResult]:
    results = []
    for net_name, spec in (networks or GRADCHECK_NETWORKS).items():
        for kind_name, alpha in LOSS_KINDS:
            kind = kind_name if alpha is None else "blend"
            for p in range(points):
                point_seed = hash_point(seed, net_name, kind_name, p)
                err, n = check_point(spec, kind, alpha, point_seed)
                results.append(GradCheckResult(net_name, kind_name, p, err, n))
    return results


def hash_point(seed: int, net: str, loss: str, point: int) -> int:
    keys = [seed, point, *net.encode(), *loss.encode()]
    return int(np.random.SeedSequence(keys).generate_state(1)[0])


def params_gradient_check(params: ModelParameters, loss_fn: Callable[[dict], Tensor]) -> float:
    """Max relative error for an arbitrary scalar loss of named parameter tensors."""
    leaves = params.leaves()
    analytic = gradients(loss_fn(leaves), leaves)
    flat_analytic = np.concatenate([analytic[n].ravel() for n in params.names])

    def f(flat):
        p = params.unflatten(flat)
        return loss_fn({n: Tensor(a) for n, a in p.items()}).item()

    return float(relative_error(flat_analytic, numeric_gradient(f, params.flatten())).max())
