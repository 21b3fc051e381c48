"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Everything is float64 numpy underneath. A Tensor wraps either a leaf array
(inputs, parameters) or the result of an op; calling ``backward()`` on a
scalar result walks the graph in reverse topological order and accumulates
gradients into every reachable tensor with ``requires_grad``. Graphs are
built fresh each forward pass and discarded with the result.

The op set is exactly what the docking policy needs: elementwise arithmetic,
(batched) matmul, 2-D convolution with stride/padding, layer normalization,
masked softmax / scaled dot-product attention, GELU/ReLU/tanh activations and
the reductions used by the L1 and KL losses.
"""

from __future__ import annotations

import json
import struct
from typing import Iterable

import numpy as np


class ShapeError(ValueError):
    """Operand shapes incompatible for an op."""


class GraphError(RuntimeError):
    """Autodiff misuse, e.g. backward on a non-scalar or before any forward."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        # One cheap full-array reduction; a NaN or inf anywhere poisons it.
        if not np.isfinite(self.data.sum()):
            raise ValueError("tensor holds non-finite values")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={'yes' if self.requires_grad else 'no'})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def backward(self) -> None:
        """Backpropagate from a scalar result."""
        if self.data.size != 1:
            raise GraphError(f"backward requires a scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("backward called on a tensor with no differentiable history")
        order = _topo_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.broadcast_to(g, t.data.shape).astype(np.float64, copy=True)
        else:
            t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce gradient g back down to `shape` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# --- elementwise / broadcast arithmetic ---


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from None
    out_data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"sub: cannot broadcast {a.shape} with {b.shape}") from None
    out_data = a.data - b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from None
    out_data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


def scale(a, s: float) -> Tensor:
    a = _coerce(a)
    s = float(s)

    def backward(g):
        _accumulate(a, g * s)

    return _make(a.data * s, (a,), backward)


def shift(a, c: float) -> Tensor:
    """Add a python scalar constant."""
    a = _coerce(a)

    def backward(g):
        _accumulate(a, g)

    return _make(a.data + float(c), (a,), backward)


# --- shape ops ---


def reshape(a, shape) -> Tensor:
    a = _coerce(a)
    shape = tuple(shape)

    def backward(g):
        _accumulate(a, g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def transpose(a, axes) -> Tensor:
    a = _coerce(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        _accumulate(a, g.transpose(inv))

    return _make(a.data.transpose(axes), (a,), backward)


def concat(tensors: Iterable[Tensor], axis: int) -> Tensor:
    ts = [_coerce(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: need at least one tensor")
    out_data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(idx)])

    return _make(out_data, tuple(ts), backward)


def take(a, idx) -> Tensor:
    """Integer/slice indexing; duplicate fancy indices accumulate gradient."""
    a = _coerce(a)
    out_data = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _accumulate(a, full)

    return _make(np.array(out_data, copy=True), (a,), backward)


# --- matmul ---


def matmul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be >= 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} x {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dims differ, {a.shape} x {b.shape}") from None
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        _accumulate(a, _unbroadcast(ga, a.shape))
        _accumulate(b, _unbroadcast(gb, b.shape))

    return _make(out_data, (a, b), backward)


def linear(x, w, b=None) -> Tensor:
    """x @ w (+ b) on the last axis."""
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


# --- reductions ---


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.shape).copy())
            return
        axes = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, axes)
        _accumulate(a, np.broadcast_to(g, a.shape).copy())

    return _make(out_data, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# --- elementwise nonlinearities ---


def tabs(a) -> Tensor:
    a = _coerce(a)

    def backward(g):
        _accumulate(a, g * np.sign(a.data))

    return _make(np.abs(a.data), (a,), backward)


def exp(a) -> Tensor:
    a = _coerce(a)
    out_data = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * out_data)

    return _make(out_data, (a,), backward)


def log(a) -> Tensor:
    a = _coerce(a)

    def backward(g):
        _accumulate(a, g / a.data)

    return _make(np.log(a.data), (a,), backward)


def tanh(a) -> Tensor:
    a = _coerce(a)
    out_data = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), backward)


def relu(a) -> Tensor:
    a = _coerce(a)

    def backward(g):
        _accumulate(a, g * (a.data > 0.0))

    return _make(np.maximum(a.data, 0.0), (a,), backward)


_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def gelu(a) -> Tensor:
    """Smooth GELU (tanh form)."""
    a = _coerce(a)
    x = a.data
    u = x * x
    u *= x
    u *= _GELU_A
    u += x
    u *= _GELU_C
    t = np.tanh(u)

    def backward(g):
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
        _accumulate(a, g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du))

    return _make(0.5 * x * (1.0 + t), (a,), backward)


# --- normalization, softmax, attention ---


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply elementwise gain and bias."""
    x, gain, bias = _coerce(x), _coerce(gain), _coerce(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain/bias must have shape ({d},), got {gain.shape}/{bias.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = gain.data * xhat + bias.data

    def backward(g):
        _accumulate(gain, (g * xhat).reshape(-1, d).sum(axis=0))
        _accumulate(bias, g.reshape(-1, d).sum(axis=0))
        gy = g * gain.data
        gx = inv * (
            gy
            - gy.mean(axis=-1, keepdims=True)
            - xhat * (gy * xhat).mean(axis=-1, keepdims=True)
        )
        _accumulate(x, gx)

    return _make(out_data, (x, gain, bias), backward)


def softmax(x, mask=None) -> Tensor:
    """Softmax over the last axis. `mask` is a boolean array broadcastable to
    x.shape; False entries get zero weight. Rows with every entry masked fall
    back to uniform weights (and pass no gradient)."""
    x = _coerce(x)
    data = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), data.shape)
        neg = np.where(mask, data, -np.inf)
        rowmax = neg.max(axis=-1, keepdims=True)
        all_masked = ~np.isfinite(rowmax)
        rowmax = np.where(all_masked, 0.0, rowmax)
        e = np.exp(np.where(mask, data - rowmax, -np.inf))
        e = np.where(mask, e, 0.0)
        z = e.sum(axis=-1, keepdims=True)
        uniform = np.ones_like(data) / data.shape[-1]
        s = np.where(all_masked, uniform, e / np.where(z == 0.0, 1.0, z))
    else:
        rowmax = data.max(axis=-1, keepdims=True)
        e = np.exp(data - rowmax)
        s = e / e.sum(axis=-1, keepdims=True)

    all_masked_rows = None if mask is None else ~mask.any(axis=-1, keepdims=True)

    def backward(g):
        t = g * s
        gx = t - s * t.sum(axis=-1, keepdims=True)
        if mask is not None:
            # Masked entries have zero weight; fully-masked rows emit a
            # constant uniform row. Neither passes gradient.
            gx = np.where(mask, gx, 0.0)
            gx = np.where(all_masked_rows, 0.0, gx)
        _accumulate(x, gx)

    return _make(s, (x,), backward)


def attention(q, k, v, mask=None) -> Tensor:
    """Scaled dot-product attention softmax(q k^T / sqrt(d)) v.

    q: (..., T, d), k/v: (..., S, d); mask broadcastable to (..., T, S)."""
    q, k, v = _coerce(q), _coerce(k), _coerce(v)
    d = q.shape[-1]
    kt = transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))
    scores = scale(matmul(q, kt), 1.0 / np.sqrt(d))
    weights = softmax(scores, mask=mask)
    return matmul(weights, v)


# --- 2-D convolution ---

_COL_INDEX_CACHE: dict = {}


def _col_indices(h: int, w: int, kh: int, kw: int, stride: int, pad: int):
    key = (h, w, kh, kw, stride, pad)
    cached = _COL_INDEX_CACHE.get(key)
    if cached is not None:
        return cached
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    i0 = np.repeat(np.arange(kh), kw)
    j0 = np.tile(np.arange(kw), kh)
    i1 = stride * np.repeat(np.arange(ho), wo)
    j1 = stride * np.tile(np.arange(wo), ho)
    ii = i0[:, None] + i1[None, :]  # (kh*kw, ho*wo)
    jj = j0[:, None] + j1[None, :]
    _COL_INDEX_CACHE[key] = (ii, jj, ho, wo)
    return ii, jj, ho, wo


def conv2d(x, w, b=None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of x (B, Cin, H, W) with kernels w (Cout, Cin, kh, kw)."""
    x, w = _coerce(x), _coerce(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: need 4-D input and kernel, got {x.shape} and {w.shape}")
    bsz, cin, h, hw = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d: input channels {cin} != kernel channels {cin_w}")
    if h + 2 * pad < kh or hw + 2 * pad < kw:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input")
    if b is not None:
        b = _coerce(b)
        if b.shape != (cout,):
            raise ShapeError(f"conv2d: bias must have shape ({cout},), got {b.shape}")
    ii, jj, ho, wo = _col_indices(h, hw, kh, kw, stride, pad)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    # cols: (B, Cin, kh*kw, ho*wo) -> (B, Cin*kh*kw, ho*wo)
    cols = xp[:, :, ii, jj].reshape(bsz, cin * kh * kw, ho * wo)
    wmat = w.data.reshape(cout, cin * kh * kw)
    out_data = np.matmul(wmat, cols).reshape(bsz, cout, ho, wo)
    if b is not None:
        out_data = out_data + b.data[None, :, None, None]

    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        gmat = g.reshape(bsz, cout, ho * wo)
        _accumulate(w, np.einsum("bon,bkn->ok", gmat, cols).reshape(w.shape))
        if b is not None:
            _accumulate(b, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gcols = np.matmul(wmat.T, gmat)  # (B, Cin*kh*kw, ho*wo)
            gcols = gcols.reshape(bsz, cin, kh * kw, ho * wo)
            gxp = np.zeros_like(xp)
            np.add.at(gxp, (slice(None), slice(None), ii, jj), gcols)
            gx = gxp[:, :, pad : pad + h, pad : pad + hw] if pad else gxp
            _accumulate(x, gx)

    return _make(out_data, parents, backward)


# --- parameters, optimizer, checkpoints ---

CHECKPOINT_FORMAT_VERSION = 1


class ParameterSet:
    """Named float64 parameter tensors plus their Adam state."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, values) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(values, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def n_scalars(self) -> int:
        return sum(t.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def adam_step(self, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8) -> None:
        """One bias-corrected Adam update; missing gradients count as zero.
        Gradients are cleared afterwards."""
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - beta1**t
        c2 = 1.0 - beta2**t
        for name, p in self._params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self._m[name]
            v = self._v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
            p.grad = None

    def clone(self) -> "ParameterSet":
        other = ParameterSet()
        for name, p in self._params.items():
            other.add(name, p.data.copy())
            other._m[name] = self._m[name].copy()
            other._v[name] = self._v[name].copy()
        other.step_count = self.step_count
        return other

    # checkpoint format: 8-byte little-endian header length, JSON header, then
    # each tensor's float64 little-endian bytes at its recorded byte offset.
    def save(self, path, meta: dict | None = None) -> None:
        entries = []
        payload = bytearray()
        for kind, table in (("param", self._params), ("adam_m", self._m), ("adam_v", self._v)):
            for name, val in table.items():
                arr = val.data if isinstance(val, Tensor) else val
                entries.append(
                    {
                        "name": name,
                        "kind": kind,
                        "shape": list(arr.shape),
                        "offset": len(payload),
                    }
                )
                payload.extend(arr.astype("<f8").tobytes(order="C"))
        header = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "adam_step": self.step_count,
            "meta": meta if meta is not None else {},
            "tensors": entries,
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        with open(path, "wb") as f:
            f.write(struct.pack("<Q", len(blob)))
            f.write(blob)
            f.write(bytes(payload))

    @classmethod
    def load(cls, path) -> tuple["ParameterSet", dict]:
        with open(path, "rb") as f:
            raw = f.read()
        if len(raw) < 8:
            raise ValueError(f"checkpoint {path} is truncated")
        (hlen,) = struct.unpack("<Q", raw[:8])
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(
                f"unsupported checkpoint format_version {header.get('format_version')!r}"
            )
        payload = raw[8 + hlen :]
        ps = cls()
        for e in header["tensors"]:
            shape = tuple(e["shape"])
            count = int(np.prod(shape)) if shape else 1
            start = e["offset"]
            arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
            arr = arr.reshape(shape).astype(np.float64)
            if e["kind"] == "param":
                ps.add(e["name"], arr)
            elif e["kind"] == "adam_m":
                ps._m[e["name"]] = arr.copy()
            elif e["kind"] == "adam_v":
                ps._v[e["name"]] = arr.copy()
            else:
                raise ValueError(f"unknown tensor kind {e['kind']!r} in checkpoint")
        ps.step_count = int(header.get("adam_step", 0))
        return ps, header.get("meta", {})
