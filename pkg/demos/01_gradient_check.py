"""Check the hand-written backward passes against central differences.

Builds each layer type on a small random input, perturbs every scalar
parameter by +-h and compares the numerical slope with the analytic one.

    python3 demos/01_gradient_check.py
"""
import numpy as np

from ddos_ensemble.nn import gradcheck
from ddos_ensemble.nn.layers import LSTM, BatchNorm, Conv1d, Dense, SelfAttention, Sequential

rng = np.random.default_rng(0)
bn = BatchNorm(3, name="bn")
bn.params.buffers["running_var"] = rng.uniform(0.5, 2.0, 3)

graphs = {
    "dense": (Sequential([Dense(5, 1, "sigmoid", rng, name="fc")]), rng.normal(size=(4, 5))),
    "conv1d": (Sequential([Conv1d(2, 3, 3, rng, padding="same", name="conv")]), rng.normal(size=(3, 2, 6))),
    "batchnorm": (Sequential([bn]), rng.normal(size=(5, 3, 4))),
    "attention": (Sequential([SelfAttention(4, 3, rng, name="attn")]), rng.normal(size=(2, 5, 4))),
    "lstm": (Sequential([LSTM(3, 4, rng, True, name="lstm")]), rng.normal(size=(2, 4, 3))),
}

for name, (graph, x) in graphs.items():
    report = gradcheck.finite_diff_check(graph, x, h=1e-6, tol=1e-5)
    print(f"{name:10s} {'ok' if report.passed else 'FAILED'}")
    print("   " + report.summary().replace("\n", "\n   "))

# a corrupted gradient is caught
graph, x = graphs["dense"]
loss = gradcheck.projection_loss()
out = graph.forward(x, train=False)
_, g = loss(out)
grads = {k: v.copy() for k, v in graph.backward(g).items()}
grads["fc.weight"].flat[0] *= 1.1
print("corrupted dense weight flagged:", gradcheck.finite_diff_check(graph, x, loss=loss, analytic=grads).failed)
