"""Shared oracles and fixtures: finite differences and a small poisoned world."""

import sys

import numpy as np

from graphpurify import autodiff as ad
from graphpurify.attacks import PoisonSpec, poison_dataset
from graphpurify.graphs import erdos_renyi_subgraph, split_dataset, synthesize_dataset
from graphpurify.models import GnnModel, train

FD_STEP = 1e-6


def small_backdoored_world(seed=0, num_graphs=400, epochs=100, holdout_frac=0.05,
                           injection_ratio=0.05, kind="gcn"):
    """A compact end-to-end poisoned setup shared by the integration tests."""
    ds = split_dataset(synthesize_dataset(num_graphs, 16, seed, min_nodes=14,
                                          max_nodes=26, edge_p=(0.08, 0.08),
                                          noise=0.2), 0.8, holdout_frac, seed)
    spec = PoisonSpec(target_label=1, injection_ratio=injection_ratio,
                      trigger_frac=0.20)
    n = spec.trigger_size(ds)
    pool = np.vstack([g.x for g in ds.train_graphs])
    trigger = erdos_renyi_subgraph(n, 0.8, ds.feature_dim, seed,
                                   feature_pool=pool)
    poisoned, manifest = poison_dataset(ds, spec, trigger, seed=seed)
    model = GnnModel.init(kind, ds.feature_dim, (32, 32, 32), 2, seed=seed)
    train(model, poisoned, epochs=epochs, lr=0.05, batch_size=16, seed=seed)
    return {"clean_ds": ds, "poisoned_ds": poisoned, "spec": spec,
            "trigger": trigger, "manifest": manifest, "model": model}


def fd_grad(forward, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of scalar-valued forward() w.r.t. x, in place."""
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + step
        up = forward()
        flat_x[i] = orig - step
        down = forward()
        flat_x[i] = orig
        flat_g[i] = (up - down) / (2.0 * step)
    return grad


def check_grads(build_loss, tensors, rtol=1e-4, atol=1e-7):
    """Assert analytic gradients of build_loss() match finite differences."""
    loss = build_loss()
    grads = ad.backward(loss, accumulate=False)
    for t in tensors:
        numeric = fd_grad(lambda: float(build_loss().data), t.data)
        analytic = grads.get(t)
        assert analytic is not None, "tensor missing from gradient map"
        np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)


def away_from(x: np.ndarray, point: float, margin: float = 1e-3) -> np.ndarray:
    """Push entries of x out of a margin around a kink so FD stays valid."""
    near = np.abs(x - point) < margin
    return x + np.where(near, 2.0 * margin, 0.0)


def pytest_terminal_summary(terminalreporter):
    """Echo the release-gate verdicts collected by the acceptance module."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "GATE_LINES", None) if mod else None
    if lines:
        terminalreporter.section("acceptance gates")
        for line in lines:
            terminalreporter.line(line)
