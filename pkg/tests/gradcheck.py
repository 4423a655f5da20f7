"""Central-difference gradient checking shared by the test modules."""
import numpy as np

EPS = 1e-4
TOL = 1e-5


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)


def numeric(fn, arr, eps=EPS):
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + eps
        fp = fn()
        arr[i] = old - eps
        fm = fn()
        arr[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def check_layer(layer, x, train=True, rng=None):
    rng = rng or np.random.default_rng(0)
    out = layer.forward(x, train)
    probe = rng.normal(size=out.shape)
    objective = lambda: float(np.sum(layer.forward(x, train) * probe))
    layer.zero_grad()
    layer.forward(x, train)
    gx = layer.backward(probe)
    analytic = {k: v.copy() for k, v in layer.grads.items()}
    assert rel_err(gx, numeric(objective, x)) < TOL
    for name, p in layer.params.items():
        assert rel_err(analytic[name], numeric(objective, p)) < TOL, name
