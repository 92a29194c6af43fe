"""Feed-forward network with hand-rolled automatic differentiation.

Three differentiation modes, all exact to machine precision:

* reverse mode over the plain forward pass -> parameter gradients of a
  sample-summed loss (grad_params);
* second-order forward mode along one input coordinate at a time -> first
  and second derivatives of the output w.r.t. selected inputs (input_derivs);
* reverse mode over that second-order propagation -> parameter gradients of
  any scalar built from (output, first, second input derivatives)
  (penalty_grad), which is what soft no-arbitrage constraints need.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import Activation, parse_activation

FORMAT_HEADER = "optcal-model 1"

# Row-chunk size for whole-dataset derivative sweeps; bounds peak memory.
_CHUNK = 16384


class ModelLoadError(ValueError):
    """Model file is missing, truncated, or structurally invalid."""


@dataclass
class Network:
    weights: list[np.ndarray]        # per layer, shape (fan_in, fan_out)
    biases: list[np.ndarray]         # per layer, shape (fan_out,)
    activations: list[Activation]    # one per layer
    meta: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "Network":
        return Network(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
            dict(self.meta),
            self.seed,
        )


@dataclass
class EvalWithDerivs:
    y: np.ndarray
    first: dict[int, np.ndarray]
    second: dict[int, np.ndarray]


def param_count(widths: list[int]) -> int:
    return sum((widths[i] + 1) * widths[i + 1] for i in range(len(widths) - 1))


def default_activations(n_layers: int) -> list[Activation]:
    if n_layers < 2:
        raise ValueError("need at least two layers")
    return (
        [Activation("leaky_relu", 1.0)]
        + [Activation("melu", 0.49)] * (n_layers - 2)
        + [Activation("softplus_shift")]
    )


def init_network(
    widths: list[int],
    activations: list[Activation] | None = None,
    seed: int = 0,
    meta: dict | None = None,
) -> Network:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    if len(widths) < 2:
        raise ValueError("widths must list input, hidden and output sizes")
    if activations is None:
        activations = default_activations(len(widths) - 1)
    if len(activations) != len(widths) - 1:
        raise ValueError("need one activation per weight layer")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(weights, biases, list(activations), dict(meta or {}), seed)


def _as_batch(net: Network, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.weights[0].shape[0]:
        raise ValueError(
            f"expected input of width {net.weights[0].shape[0]}, got shape {x.shape}"
        )
    return x, single


def forward(net: Network, x):
    """Network output for a single feature vector or an (n, d) batch."""
    X, single = _as_batch(net, x)
    A = X
    for W, b, act in zip(net.weights, net.biases, net.activations):
        A = act.value(A @ W + b)
    out = A[:, 0]
    return float(out[0]) if single else out


def _forward_cache(net: Network, X: np.ndarray):
    acts = [X]
    zs = []
    A = X
    for W, b, act in zip(net.weights, net.biases, net.activations):
        Z = A @ W + b
        A = act.value(Z)
        zs.append(Z)
        acts.append(A)
    return acts, zs


def grad_params(net: Network, X, y_true, loss_grad=None):
    """Gradient of a sample-summed loss w.r.t. every weight and bias.

    loss_grad(pred, y_true) must return dL/dpred per sample; the default is
    the summed squared error, so duplicated samples contribute additively.
    Returns (grads_W, grads_b) shaped like net.weights / net.biases.
    """
    pred, gW, gb = _value_and_grad(net, X, y_true, loss_grad)
    return gW, gb


def _value_and_grad(net: Network, X, y_true, loss_grad=None):
    X, _ = _as_batch(net, X)
    y_true = np.asarray(y_true, dtype=float)
    acts, zs = _forward_cache(net, X)
    pred = acts[-1][:, 0]
    if loss_grad is None:
        bar_y = 2.0 * (pred - y_true)
    else:
        bar_y = np.asarray(loss_grad(pred, y_true), dtype=float)
    gW = [None] * len(net.weights)
    gb = [None] * len(net.biases)
    G = bar_y[:, None]
    for l in range(len(net.weights) - 1, -1, -1):
        Gz = G * net.activations[l].d1(zs[l])
        gW[l] = acts[l].T @ Gz
        gb[l] = Gz.sum(axis=0)
        if l > 0:
            G = Gz @ net.weights[l].T
    return pred, gW, gb


def _taylor_forward(net: Network, X: np.ndarray, dims, keep_cache: bool):
    """Propagate value plus per-dim first/second Taylor coefficients."""
    n = X.shape[0]
    A = X
    A1 = {}
    A2 = {}
    for k in dims:
        e = np.zeros_like(X)
        e[:, k] = 1.0
        A1[k] = e
        A2[k] = np.zeros_like(X)
    cache = {"A": [A], "Z": [], "A1": {k: [A1[k]] for k in dims},
             "A2": {k: [A2[k]] for k in dims}, "Z1": {k: [] for k in dims},
             "Z2": {k: [] for k in dims}} if keep_cache else None

    for W, b, act in zip(net.weights, net.biases, net.activations):
        Z = A @ W + b
        s1 = act.d1(Z)
        s2 = act.d2(Z)
        newA1, newA2 = {}, {}
        for k in dims:
            Z1 = A1[k] @ W
            Z2 = A2[k] @ W
            newA1[k] = s1 * Z1
            newA2[k] = s2 * Z1 * Z1 + s1 * Z2
            if keep_cache:
                cache["Z1"][k].append(Z1)
                cache["Z2"][k].append(Z2)
        A = act.value(Z)
        A1, A2 = newA1, newA2
        if keep_cache:
            cache["Z"].append(Z)
            cache["A"].append(A)
            for k in dims:
                cache["A1"][k].append(A1[k])
                cache["A2"][k].append(A2[k])

    y = A[:, 0]
    y1 = {k: A1[k][:, 0] for k in dims}
    y2 = {k: A2[k][:, 0] for k in dims}
    return y, y1, y2, cache


def input_derivs(net: Network, x, dims) -> EvalWithDerivs:
    """Output with first and second derivatives w.r.t. the selected inputs.

    Second derivatives are the diagonal d2y/dx_k2 terms (one propagation per
    coordinate direction). Large batches are processed in row chunks.
    """
    X, single = _as_batch(net, x)
    dims = list(dims)
    d0 = net.weights[0].shape[0]
    if any(k < 0 or k >= d0 for k in dims):
        raise ValueError(f"dims must be within 0..{d0 - 1}")
    parts = []
    for start in range(0, X.shape[0], _CHUNK):
        parts.append(_taylor_forward(net, X[start:start + _CHUNK], dims, False)[:3])
    y = np.concatenate([p[0] for p in parts])
    first = {k: np.concatenate([p[1][k] for p in parts]) for k in dims}
    second = {k: np.concatenate([p[2][k] for p in parts]) for k in dims}
    if single:
        return EvalWithDerivs(
            float(y[0]),
            {k: float(first[k][0]) for k in dims},
            {k: float(second[k][0]) for k in dims},
        )
    return EvalWithDerivs(y, first, second)


def _taylor_backward(net: Network, dims, cache, bar_y, bar_y1, bar_y2):
    """Reverse pass over _taylor_forward: parameter adjoints of a scalar
    whose per-sample partials w.r.t. (y, y1[k], y2[k]) are given."""
    n_layers = len(net.weights)
    bar_A = np.asarray(bar_y, dtype=float)[:, None]
    bar_A1 = {k: np.asarray(bar_y1.get(k, 0.0) * np.ones_like(bar_y))[:, None] for k in dims}
    bar_A2 = {k: np.asarray(bar_y2.get(k, 0.0) * np.ones_like(bar_y))[:, None] for k in dims}
    gW = [None] * n_layers
    gb = [None] * n_layers

    for l in range(n_layers - 1, -1, -1):
        act = net.activations[l]
        Z = cache["Z"][l]
        s1 = act.d1(Z)
        s2 = act.d2(Z)
        s3 = act.d3(Z)
        bar_Z = bar_A * s1
        bar_Z1 = {}
        bar_Z2 = {}
        for k in dims:
            Z1 = cache["Z1"][k][l]
            Z2 = cache["Z2"][k][l]
            bar_Z += bar_A1[k] * s2 * Z1 + bar_A2[k] * (s3 * Z1 * Z1 + s2 * Z2)
            bar_Z1[k] = bar_A1[k] * s1 + 2.0 * bar_A2[k] * s2 * Z1
            bar_Z2[k] = bar_A2[k] * s1
        A_prev = cache["A"][l]
        g = A_prev.T @ bar_Z
        for k in dims:
            g += cache["A1"][k][l].T @ bar_Z1[k]
            g += cache["A2"][k][l].T @ bar_Z2[k]
        gW[l] = g
        gb[l] = bar_Z.sum(axis=0)
        if l > 0:
            Wt = net.weights[l].T
            bar_A = bar_Z @ Wt
            bar_A1 = {k: bar_Z1[k] @ Wt for k in dims}
            bar_A2 = {k: bar_Z2[k] @ Wt for k in dims}
    return gW, gb


def penalty_grad(net: Network, X, dims, kernel):
    """Value and parameter gradient of a scalar built from input derivatives.

    kernel(y, first, second) -> (per_sample_values, bar_y, bar_first, bar_second)
    where bar_* are the kernel's partial derivatives. The scalar is the sum of
    per_sample_values over the batch. Returns (value, grads_W, grads_b).
    """
    X, _ = _as_batch(net, X)
    dims = list(dims)
    y, y1, y2, cache = _taylor_forward(net, X, dims, True)
    values, bar_y, bar_y1, bar_y2 = kernel(y, y1, y2)
    gW, gb = _taylor_backward(net, dims, cache, bar_y, bar_y1, bar_y2)
    return float(np.sum(values)), gW, gb


def zeros_like_params(net: Network):
    return [np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases]


def param_l2_norm(gW, gb) -> float:
    total = 0.0
    for g in gW:
        total += float(np.sum(g * g))
    for g in gb:
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def _fmt_floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_model(net: Network, path) -> None:
    """Versioned, self-describing text format; weights round-trip bit-exactly."""
    lines = [FORMAT_HEADER]
    lines.append(f"kind {net.meta.get('kind', 'generic')}")
    lines.append("widths " + " ".join(str(w) for w in net.widths))
    lines.append("activations " + " ".join(a.label() for a in net.activations))
    lines.append(f"seed {net.seed if net.seed is not None else 'none'}")
    if net.meta.get("shift") is not None:
        lines.append(f"meta shift {net.meta['shift']!r}")
    if net.meta.get("eps_atm") is not None:
        lines.append(f"meta eps_atm {net.meta['eps_atm']!r}")
    for name, (lo, hi) in (net.meta.get("ranges") or {}).items():
        lines.append(f"meta range {name} {float(lo)!r} {float(hi)!r}")
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        lines.append(f"W {i} {W.shape[0]} {W.shape[1]}")
        for row in W:
            lines.append(_fmt_floats(row))
        lines.append(f"b {i} {b.shape[0]}")
        lines.append(_fmt_floats(b))
    lines.append("end")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> Network:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != FORMAT_HEADER:
        raise ModelLoadError(
            f"unsupported model format: expected {FORMAT_HEADER!r} header"
        )
    if "end" not in lines:
        raise ModelLoadError("truncated model file: missing 'end' marker")

    pos = 1
    kind = "generic"
    widths: list[int] | None = None
    activations: list[Activation] | None = None
    seed: int | None = None
    meta: dict = {}
    ranges: dict = {}

    def fail(msg):
        raise ModelLoadError(f"{msg} (line {pos + 1})")

    while pos < len(lines):
        parts = lines[pos].split()
        if not parts:
            fail("blank line in header")
        key = parts[0]
        if key == "kind":
            kind = parts[1]
        elif key == "widths":
            widths = [int(v) for v in parts[1:]]
        elif key == "activations":
            try:
                activations = [parse_activation(lbl) for lbl in parts[1:]]
            except ValueError as exc:
                fail(str(exc))
        elif key == "seed":
            seed = None if parts[1] == "none" else int(parts[1])
        elif key == "meta":
            if parts[1] == "range":
                ranges[parts[2]] = (float(parts[3]), float(parts[4]))
            else:
                meta[parts[1]] = float(parts[2])
        elif key == "W":
            break
        else:
            fail(f"unexpected header line {lines[pos]!r}")
        pos += 1

    if widths is None or activations is None:
        raise ModelLoadError("model file missing widths or activations")
    if len(activations) != len(widths) - 1:
        raise ModelLoadError("activation count does not match layer count")

    weights, biases = [], []
    for i in range(len(widths) - 1):
        fan_in, fan_out = widths[i], widths[i + 1]
        parts = lines[pos].split() if pos < len(lines) else []
        if parts[:2] != ["W", str(i)] or [int(parts[2]), int(parts[3])] != [fan_in, fan_out]:
            fail(f"expected weight block 'W {i} {fan_in} {fan_out}'")
        pos += 1
        rows = []
        for _ in range(fan_in):
            if pos >= len(lines):
                raise ModelLoadError("truncated model file inside weight block")
            row = [float(v) for v in lines[pos].split()]
            if len(row) != fan_out:
                fail(f"expected {fan_out} values in weight row")
            rows.append(row)
            pos += 1
        weights.append(np.array(rows))
        parts = lines[pos].split() if pos < len(lines) else []
        if parts[:2] != ["b", str(i)] or int(parts[2]) != fan_out:
            fail(f"expected bias block 'b {i} {fan_out}'")
        pos += 1
        bias = [float(v) for v in lines[pos].split()]
        if len(bias) != fan_out:
            fail(f"expected {fan_out} bias values")
        biases.append(np.array(bias))
        pos += 1

    if pos >= len(lines) or lines[pos] != "end":
        raise ModelLoadError("truncated model file: weights not followed by 'end'")

    meta_out = {"kind": kind}
    meta_out.update(meta)
    if ranges:
        meta_out["ranges"] = ranges
    return Network(weights, biases, activations, meta_out, seed)
