"""Small feed-forward nets with hand-written backprop, Adam and soft target updates.

All parameters of a net live in one flat float64 vector; per-layer weight
matrices and bias vectors are views into it.  That keeps Adam, soft updates,
parameter counting and hashing single vectorised operations, and lets a
multi-head critic expose its trunk and heads as ordinary ``LayeredNet``
objects backed by slices of a common buffer.

Inputs may be a single vector ``(in,)`` or a batch ``(B, in)``.  For a batch,
``backward`` returns the parameter gradient of ``sum(upstream * forward(x))``,
i.e. the per-row gradients summed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidSpecError, NumericError, ShapeError

ACTIVATIONS = ("relu", "tanh", "identity")


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(name: str, out: np.ndarray, grad: np.ndarray) -> np.ndarray:
    # derivative expressed through the activation output
    if name == "relu":
        return grad * (out > 0.0)
    if name == "tanh":
        return grad * (1.0 - out * out)
    return grad


def _layer_param_count(sizes: Sequence[int]) -> int:
    return sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))


def _layer_views(flat: np.ndarray, sizes: Sequence[int]):
    weights, biases = [], []
    pos = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[pos:pos + n_out * n_in].reshape(n_out, n_in))
        pos += n_out * n_in
        biases.append(flat[pos:pos + n_out])
        pos += n_out
    return weights, biases


def _check_layout(sizes: Sequence[int], activations: Sequence[str]) -> None:
    if len(sizes) < 2:
        raise InvalidSpecError("a net needs at least an input and an output size")
    if any(int(s) != s or s <= 0 for s in sizes):
        raise InvalidSpecError(f"layer sizes must be positive integers, got {list(sizes)}")
    if len(activations) != len(sizes) - 1:
        raise InvalidSpecError(
            f"{len(sizes) - 1} layers need {len(sizes) - 1} activations, got {len(activations)}"
        )
    for a in activations:
        if a not in ACTIVATIONS:
            raise InvalidSpecError(f"unknown activation {a!r}")


class LayeredNet:
    """A multilayer perceptron ``x -> act_k(W_k ... act_1(W_1 x + b_1) ... + b_k)``."""

    def __init__(self, sizes: Sequence[int], activations: Sequence[str],
                 params: np.ndarray | None = None) -> None:
        _check_layout(sizes, activations)
        self.sizes = tuple(int(s) for s in sizes)
        self.activations = tuple(activations)
        n = _layer_param_count(self.sizes)
        if params is None:
            params = np.zeros(n)
        elif params.shape != (n,) or params.dtype != np.float64:
            raise ShapeError(f"expected float64 parameter vector of length {n}, got {params.shape}")
        self._params = params
        self.weights, self.biases = _layer_views(params, self.sizes)

    @property
    def params(self) -> np.ndarray:
        return self._params

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]

    @property
    def layers(self):
        return list(zip(self.weights, self.biases, self.activations))

    def copy(self) -> "LayeredNet":
        return LayeredNet(self.sizes, self.activations, self._params.copy())

    def same_shape(self, other) -> bool:
        return (isinstance(other, LayeredNet) and self.sizes == other.sizes
                and self.activations == other.activations)

    def forward_cached(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1:] != (self.input_dim,) or x.ndim > 2:
            raise ShapeError(f"net expects input of width {self.input_dim}, got shape {x.shape}")
        outs = [x]
        h = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = _activate(act, h @ w.T + b)
            outs.append(h)
        return h, outs

    def backward_cached(self, cache, upstream: np.ndarray, *, want_params: bool = True,
                        want_input: bool = True):
        outs = cache
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != outs[-1].shape:
            raise ShapeError(f"upstream shape {upstream.shape} != output shape {outs[-1].shape}")
        grads = GradientSet.zeros_like(self) if want_params else None
        g = upstream
        n_layers = len(self.weights)
        for k in range(n_layers - 1, -1, -1):
            g = _activation_grad(self.activations[k], outs[k + 1], g)
            h_in = outs[k]
            if grads is not None:
                if g.ndim == 1:
                    grads.weights[k][...] = np.outer(g, h_in)
                    grads.biases[k][...] = g
                else:
                    grads.weights[k][...] = g.T @ h_in
                    grads.biases[k][...] = g.sum(axis=0)
            if k > 0 or want_input:
                g = g @ self.weights[k]
        return grads, (g if want_input else None)


class MultiHeadNet:
    """Shared trunk feeding ``n_heads`` independent heads; output column ``i`` is head ``i``.

    Every head must have output width 1.  ``trunk`` and ``heads`` are views on
    the single parameter buffer, so optimiser and soft updates treat the whole
    thing as one net.
    """

    def __init__(self, trunk_sizes: Sequence[int], trunk_activations: Sequence[str],
                 head_sizes: Sequence[int], head_activations: Sequence[str], n_heads: int,
                 params: np.ndarray | None = None) -> None:
        _check_layout(trunk_sizes, trunk_activations)
        _check_layout(head_sizes, head_activations)
        if head_sizes[0] != trunk_sizes[-1]:
            raise InvalidSpecError("head input width must equal trunk output width")
        if head_sizes[-1] != 1:
            raise InvalidSpecError("each head must produce a single value")
        if n_heads < 1:
            raise InvalidSpecError("need at least one head")
        n_trunk = _layer_param_count(trunk_sizes)
        n_head = _layer_param_count(head_sizes)
        n = n_trunk + n_heads * n_head
        if params is None:
            params = np.zeros(n)
        elif params.shape != (n,) or params.dtype != np.float64:
            raise ShapeError(f"expected float64 parameter vector of length {n}, got {params.shape}")
        self._params = params
        self.n_heads = int(n_heads)
        self.trunk = LayeredNet(trunk_sizes, trunk_activations, params[:n_trunk])
        self.heads = [
            LayeredNet(head_sizes, head_activations,
                       params[n_trunk + h * n_head:n_trunk + (h + 1) * n_head])
            for h in range(n_heads)
        ]

    @property
    def params(self) -> np.ndarray:
        return self._params

    @property
    def input_dim(self) -> int:
        return self.trunk.input_dim

    @property
    def output_dim(self) -> int:
        return self.n_heads

    def _layout(self):
        return (self.trunk.sizes, self.trunk.activations, self.heads[0].sizes,
                self.heads[0].activations, self.n_heads)

    def copy(self) -> "MultiHeadNet":
        return MultiHeadNet(*self._layout(), params=self._params.copy())

    def same_shape(self, other) -> bool:
        return isinstance(other, MultiHeadNet) and self._layout() == other._layout()

    def forward_cached(self, x: np.ndarray):
        t_out, t_cache = self.trunk.forward_cached(x)
        head_caches = []
        cols = []
        for head in self.heads:
            out, c = head.forward_cached(t_out)
            head_caches.append(c)
            cols.append(out)
        return np.concatenate(cols, axis=-1), (t_cache, head_caches)

    def backward_cached(self, cache, upstream: np.ndarray, *, want_params: bool = True,
                        want_input: bool = True):
        t_cache, head_caches = cache
        upstream = np.asarray(upstream, dtype=np.float64)
        expected = t_cache[-1].shape[:-1] + (self.n_heads,)
        if upstream.shape != expected:
            raise ShapeError(f"upstream shape {upstream.shape} != output shape {expected}")
        grads = GradientSet.zeros_like(self) if want_params else None
        g_trunk = np.zeros_like(t_cache[-1])
        n_trunk = self.trunk.params.size
        n_head = self.heads[0].params.size
        for h, (head, hc) in enumerate(zip(self.heads, head_caches)):
            hg, g_in = head.backward_cached(hc, upstream[..., h:h + 1], want_params=want_params)
            if grads is not None:
                grads.flat[n_trunk + h * n_head:n_trunk + (h + 1) * n_head] = hg.flat
            g_trunk += g_in
        tg, g_x = self.trunk.backward_cached(t_cache, g_trunk, want_params=want_params,
                                             want_input=want_input)
        if grads is not None:
            grads.flat[:n_trunk] = tg.flat
        return grads, g_x


class GradientSet:
    """Gradients laid out exactly like the parameters of ``net``."""

    def __init__(self, net, flat: np.ndarray) -> None:
        if flat.shape != net.params.shape:
            raise ShapeError("gradient vector does not match the net's parameter count")
        self.flat = flat
        self.net_layout = _layout_key(net)
        if isinstance(net, LayeredNet):
            self.weights, self.biases = _layer_views(flat, net.sizes)
        else:
            self.weights, self.biases = [], []

    @classmethod
    def zeros_like(cls, net) -> "GradientSet":
        return cls(net, np.zeros_like(net.params))

    def __iadd__(self, other: "GradientSet") -> "GradientSet":
        self.flat += other.flat
        return self

    def scaled(self, factor: float) -> "GradientSet":
        out = GradientSet.__new__(GradientSet)
        out.flat = self.flat * factor
        out.net_layout = self.net_layout
        out.weights, out.biases = [], []
        return out


def _layout_key(net):
    if isinstance(net, LayeredNet):
        return ("mlp", net.sizes, net.activations)
    return ("multihead",) + net._layout()


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net, **kwargs) -> "AdamState":
        return cls(np.zeros_like(net.params), np.zeros_like(net.params), **kwargs)


# ---------------------------------------------------------------------------
# operations


def init_net(layer_sizes: Sequence[int], activations: Sequence[str], seed: int) -> LayeredNet:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` weights, zero biases."""
    net = LayeredNet(layer_sizes, activations)
    rng = np.random.default_rng(seed)
    for w in net.weights:
        limit = 1.0 / np.sqrt(w.shape[1])
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return net


def init_multihead(trunk_sizes: Sequence[int], head_hidden: Sequence[int], n_heads: int,
                   seed: int) -> MultiHeadNet:
    """Relu trunk, relu hidden head layers and a linear scalar output per head."""
    head_sizes = [trunk_sizes[-1], *head_hidden, 1]
    net = MultiHeadNet(trunk_sizes, ["relu"] * (len(trunk_sizes) - 1), head_sizes,
                       ["relu"] * len(head_hidden) + ["identity"], n_heads)
    rng = np.random.default_rng(seed)
    for part in [net.trunk, *net.heads]:
        for w in part.weights:
            limit = 1.0 / np.sqrt(w.shape[1])
            w[...] = rng.uniform(-limit, limit, size=w.shape)
    return net


def forward(net, x: np.ndarray) -> np.ndarray:
    return net.forward_cached(x)[0]


def backward(net, x: np.ndarray, upstream: np.ndarray):
    """Return ``(param_grads, input_grad)`` of ``sum(upstream * forward(net, x))``."""
    _, cache = net.forward_cached(x)
    return net.backward_cached(cache, upstream)


def adam_step(net, grads: GradientSet, state: AdamState, lr: float,
              direction: str = "descend"):
    """One bias-corrected Adam update, in place.  ``ascend`` maximises."""
    if grads.flat.shape != net.params.shape or state.m.shape != net.params.shape:
        raise ShapeError("gradients / optimiser state do not match the net")
    if not lr > 0:
        raise InvalidSpecError(f"learning rate must be positive, got {lr}")
    if direction not in ("ascend", "descend"):
        raise InvalidSpecError(f"direction must be 'ascend' or 'descend', got {direction!r}")
    g = grads.flat
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite gradient; update aborted")
    if direction == "ascend":
        g = -g
    state.step += 1
    t = state.step
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * g
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (g * g)
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    net.params[...] -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return net, state


def soft_update(target, online, tau: float):
    """``target <- tau * online + (1 - tau) * target``, in place."""
    if not 0.0 <= tau <= 1.0:
        raise InvalidSpecError(f"tau must lie in [0, 1], got {tau}")
    if not target.same_shape(online):
        raise ShapeError("target and online nets differ in shape")
    target.params[...] = tau * online.params + (1.0 - tau) * target.params
    return target


def hard_update(target, online):
    if not target.same_shape(online):
        raise ShapeError("target and online nets differ in shape")
    target.params[...] = online.params
    return target


def param_count(net) -> int:
    return int(net.params.size)


# ---------------------------------------------------------------------------
# text serialisation


def _fmt(values: np.ndarray) -> str:
    return " ".join(format(float(v), ".17g") for v in values)


def dumps(net) -> str:
    if isinstance(net, MultiHeadNet):
        parts = [f"heads {net.n_heads}\n", dumps(net.trunk)]
        parts += [dumps(h) for h in net.heads]
        return "".join(parts)
    lines = [f"layers {len(net.weights)}"]
    for w, b, act in net.layers:
        lines.append(f"{w.shape[0]} {w.shape[1]} {act}")
        lines.extend(_fmt(row) for row in w)
        lines.append(_fmt(b))
    return "\n".join(lines) + "\n"


def loads(text: str):
    tokens = text.split()
    net, pos = _parse(tokens, 0)
    if pos != len(tokens):
        raise InvalidSpecError(f"trailing tokens after net definition at token {pos}")
    return net


def _parse(tokens: list[str], pos: int):
    try:
        kind = tokens[pos]
        if kind == "heads":
            n_heads = int(tokens[pos + 1])
            trunk, pos = _parse(tokens, pos + 2)
            heads = []
            for _ in range(n_heads):
                h, pos = _parse(tokens, pos)
                heads.append(h)
            net = MultiHeadNet(trunk.sizes, trunk.activations, heads[0].sizes,
                               heads[0].activations, n_heads)
            net.trunk.params[...] = trunk.params
            for dst, src in zip(net.heads, heads):
                if not dst.same_shape(src):
                    raise InvalidSpecError("heads of a multi-head net must share one shape")
                dst.params[...] = src.params
            return net, pos
        if kind != "layers":
            raise InvalidSpecError(f"expected 'layers' or 'heads', got {kind!r}")
        k = int(tokens[pos + 1])
        pos += 2
        sizes, acts, chunks = [], [], []
        for _ in range(k):
            n_out, n_in, act = int(tokens[pos]), int(tokens[pos + 1]), tokens[pos + 2]
            pos += 3
            if sizes and sizes[-1] != n_in:
                raise InvalidSpecError("consecutive layer shapes do not chain")
            if not sizes:
                sizes.append(n_in)
            sizes.append(n_out)
            acts.append(act)
            n = n_out * n_in + n_out
            chunks.append(np.array([float(t) for t in tokens[pos:pos + n]], dtype=np.float64))
            if chunks[-1].size != n:
                raise InvalidSpecError("truncated net definition")
            pos += n
    except (IndexError, ValueError) as exc:
        if isinstance(exc, InvalidSpecError):
            raise
        raise InvalidSpecError(f"malformed net text near token {pos}: {exc}") from None
    params = np.concatenate(chunks)
    if not np.all(np.isfinite(params)):
        raise NumericError("net text contains non-finite parameters")
    return LayeredNet(sizes, acts, params), pos
