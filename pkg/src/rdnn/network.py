"""Fully connected ReLU networks

    f(x) = W_L s(W_{L-1} ... s(W_0 x + u_0) ... + u_{L-1}) + u_L

with exact backpropagation, per-layer dropout masks, sparse-class
diagnostics and a versioned binary parameter format.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from rdnn import _rng
from rdnn import loss as _loss

MAGIC = b"RDNN"
FORMAT_VERSION = 1


@dataclass
class NetworkParams:
    """``weights[l]`` has shape ``(p[l+1], p[l])``; ``shifts[l]`` has length
    ``p[l+1]``; the last shift is the scalar output offset stored as a
    length-1 array."""

    weights: list
    shifts: list

    def __post_init__(self):
        if len(self.weights) != len(self.shifts) or len(self.weights) < 1:
            raise ValueError("need one shift vector per weight matrix")
        for l, (W, u) in enumerate(zip(self.weights, self.shifts)):
            if W.ndim != 2 or u.shape != (W.shape[0],):
                raise ValueError(f"layer {l}: W {W.shape} and u {u.shape} disagree")
            if l > 0 and W.shape[1] != self.weights[l - 1].shape[0]:
                raise ValueError(f"layer {l}: expected {self.weights[l - 1].shape[0]} input columns, got {W.shape[1]}")
        if self.weights[-1].shape[0] != 1:
            raise ValueError("output layer must have a single unit")

    @property
    def dims(self):
        return tuple([self.weights[0].shape[1]] + [W.shape[0] for W in self.weights])

    @property
    def L(self):
        """Number of hidden layers."""
        return len(self.weights) - 1

    def arrays(self):
        return list(self.weights) + list(self.shifts)

    def copy(self):
        return NetworkParams([W.copy() for W in self.weights], [u.copy() for u in self.shifts])

    def zeros_like(self):
        return NetworkParams([np.zeros_like(W) for W in self.weights], [np.zeros_like(u) for u in self.shifts])

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, dims, buf):
        """Parameters whose arrays are views into the 1-D buffer ``buf``."""
        weights, shifts, pos = [], [], 0
        for a, b in zip(dims[:-1], dims[1:]):
            weights.append(buf[pos : pos + a * b].reshape(b, a))
            pos += a * b
        for b in dims[1:]:
            shifts.append(buf[pos : pos + b])
            pos += b
        if pos != buf.size:
            raise ValueError(f"buffer has {buf.size} entries, dims {tuple(dims)} need {pos}")
        return cls(weights, shifts)

    def n_parameters(self):
        return sum(a.size for a in self.arrays())

    def equals(self, other):
        return self.dims == other.dims and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


def _check_dims(dims):
    dims = tuple(int(p) for p in dims)
    if len(dims) < 2:
        raise ValueError("dims needs at least an input and an output size")
    if any(p < 1 for p in dims):
        raise ValueError(f"degenerate layer size in {dims}")
    if dims[-1] != 1:
        raise ValueError("output size must be 1")
    return dims


def init(dims, seed, keep=1.0):
    """He-normal weights (variance 2 / fan_in), zero shifts.

    Layers fed by dropped-out units use variance ``2 keep / fan_in`` so that
    inverted-dropout activations keep their scale across depth during
    training; the first layer always sees the raw input.
    """
    dims = _check_dims(dims)
    if not 0.0 < keep <= 1.0:
        raise ValueError(f"keep rate must be in (0, 1], got {keep}")
    rng = _rng.stream(seed, _rng.INIT)
    weights, shifts = [], []
    for l, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        var = 2.0 / fan_in * (keep if l > 0 else 1.0)
        weights.append(rng.standard_normal((fan_out, fan_in)) * np.sqrt(var))
        shifts.append(np.zeros(fan_out))
    return NetworkParams(weights, shifts)


def constant(dims, c):
    """All-zero network with output offset ``c``."""
    dims = _check_dims(dims)
    p = NetworkParams([np.zeros((b, a)) for a, b in zip(dims[:-1], dims[1:])], [np.zeros(b) for b in dims[1:]])
    p.shifts[-1][0] = c
    return p


@dataclass
class DropoutMask:
    """Keep flags for each hidden layer plus the keep rate used for inverted
    scaling of survivors.

    A flag array of shape ``(p_l,)`` is shared by every row of a batch; shape
    ``(B, p_l)`` gives each row its own mask.
    """

    keep: list
    rate: float = 1.0

    @property
    def per_row(self):
        return self.keep[0].ndim == 2 if self.keep else False

    def indices(self):
        return [np.flatnonzero(k) for k in self.keep]


def full_mask(dims, rate=1.0):
    return DropoutMask([np.ones(p, dtype=bool) for p in dims[1:-1]], rate)


def draw_mask(dims, rate, rng, rows=None):
    """Bernoulli(rate) keep flags; ``rows`` draws one mask per batch row."""
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"keep rate must be in (0, 1], got {rate}")
    shape = (lambda p: (p,)) if rows is None else (lambda p: (rows, p))
    return DropoutMask([rng.uniform(size=shape(p)) < rate for p in dims[1:-1]], rate)


def _active(params, mask):
    """Weights restricted to surviving units of a shared mask."""
    if mask is None:
        return params.weights, params.shifts, None, None, 1.0
    if len(mask.keep) != params.L:
        raise ValueError(f"mask has {len(mask.keep)} layers, network has {params.L} hidden layers")
    scale = 1.0 / mask.rate
    if mask.per_row:
        return params.weights, params.shifts, None, [k * scale for k in mask.keep], 1.0
    idx = mask.indices()
    W, u = params.weights, params.shifts
    Ws = [W[0][idx[0]]]
    us = [u[0][idx[0]]]
    for l in range(1, params.L):
        Ws.append(W[l][np.ix_(idx[l], idx[l - 1])])
        us.append(u[l][idx[l]])
    Ws.append(W[-1][:, idx[-1]])
    us.append(u[-1])
    return Ws, us, idx, None, scale


def _as_batch(params, x):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.dims[0]:
        raise ValueError(f"input has {X.shape[1]} coordinates, network expects {params.dims[0]}")
    return X, single


def _forward(Ws, us, X, scale, rowmask=None):
    # cache keeps each layer's input and its activation pattern (z > 0)
    acts, active = [X], []
    a = X
    for l, (W, u) in enumerate(zip(Ws[:-1], us[:-1])):
        z = a @ W.T
        z += u
        active.append(z > 0)
        a = np.maximum(z, 0.0, out=z)
        if rowmask is not None:
            a *= rowmask[l]
        elif scale != 1.0:
            a *= scale
        acts.append(a)
    out = (a @ Ws[-1].T)[:, 0] + us[-1]
    return out, (acts, active)


def _backprop(Ws, cache, dout, scale, rowmask=None):
    acts, active = cache
    delta = np.asarray(dout, dtype=float)[:, None]
    gW = [None] * len(Ws)
    gu = [None] * len(Ws)
    gW[-1] = delta.T @ acts[-1]
    gu[-1] = delta.sum(axis=0)
    g = delta * Ws[-1]
    for l in range(len(Ws) - 2, -1, -1):
        g *= active[l]
        if rowmask is not None:
            g *= rowmask[l]
        elif scale != 1.0:
            g *= scale
        gW[l] = g.T @ acts[l]
        gu[l] = g.sum(axis=0)
        if l > 0:
            g = g @ Ws[l]
    return gW, gu


def _scatter_add(out, gW, gu, idx, weight=1.0):
    """``out += weight * grad`` where grad lives on the sliced subnetwork."""
    L = len(gW) - 1
    if idx is None:
        for a, g in zip(out.arrays(), gW + gu):
            a += weight * g if weight != 1.0 else g
        return out
    w = weight
    out.weights[0][idx[0]] += w * gW[0]
    out.shifts[0][idx[0]] += w * gu[0]
    for l in range(1, L):
        out.weights[l][np.ix_(idx[l], idx[l - 1])] += w * gW[l]
        out.shifts[l][idx[l]] += w * gu[l]
    out.weights[-1][:, idx[-1]] += w * gW[-1]
    out.shifts[-1] += w * gu[-1]
    return out


def forward(params, x, mask=None):
    """Network output at one point (returns a float) or a batch of rows."""
    X, single = _as_batch(params, x)
    Ws, us, _, rowmask, scale = _active(params, mask)
    out, _ = _forward(Ws, us, X, scale, rowmask)
    return float(out[0]) if single else out


def output_gradient(params, x, dout, mask=None):
    """Gradient of ``sum_b dout[b] * f(x_b)`` with respect to all parameters."""
    X, _ = _as_batch(params, x)
    Ws, us, idx, rowmask, scale = _active(params, mask)
    _, cache = _forward(Ws, us, X, scale, rowmask)
    gW, gu = _backprop(Ws, cache, np.broadcast_to(np.asarray(dout, float), (X.shape[0],)), scale, rowmask)
    return _scatter_add(params.zeros_like(), gW, gu, idx)


def objective(params, x, y, loss, mask=None):
    """Mean loss of residuals ``y - f(x)`` over the batch."""
    f = forward(params, np.atleast_2d(x), mask)
    return float(np.mean(_loss.value(loss, np.asarray(y, float) - f)))


def backward(params, x, y, loss, mask=None):
    """Exact (sub)gradient of ``mean_b loss(y_b - f(x_b))``."""
    X, _ = _as_batch(params, x)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if len(y) != X.shape[0]:
        raise ValueError("batch inputs and targets differ in length")
    if len(y) == 0:
        raise ValueError("empty batch")
    Ws, us, idx, rowmask, scale = _active(params, mask)
    f, cache = _forward(Ws, us, X, scale, rowmask)
    dout = -_loss.score(loss, y - f) / len(y)
    gW, gu = _backprop(Ws, cache, dout, scale, rowmask)
    return _scatter_add(params.zeros_like(), gW, gu, idx)


def accumulate_grouped_gradient(out, params, points, point_idx, y, loss, mask=None, weight=1.0):
    """Add ``weight`` times the gradient of ``mean_b loss(y_b - f(points[point_idx[b]]))``
    into ``out``.

    The network is evaluated once per distinct input and per-example scores
    are pooled before backpropagation, which matches ``backward`` on the
    expanded batch up to summation order. A per-row ``mask`` must have one
    row per distinct input, in sorted input order; examples sharing an input
    then share its mask.
    """
    uniq, inv = np.unique(point_idx, return_inverse=True)
    Ws, us, idx, rowmask, scale = _active(params, mask)
    if rowmask is not None and rowmask[0].shape[0] != len(uniq):
        raise ValueError(f"per-row mask has {rowmask[0].shape[0]} rows for {len(uniq)} distinct inputs")
    f, cache = _forward(Ws, us, points[uniq], scale, rowmask)
    dout = np.bincount(inv, weights=-_loss.score(loss, y - f[inv]), minlength=len(uniq)) / len(y)
    gW, gu = _backprop(Ws, cache, dout, scale, rowmask)
    return _scatter_add(out, gW, gu, idx, weight)


def grouped_step_gradient(params, points, point_idx, y, loss, mask=None):
    return accumulate_grouped_gradient(params.zeros_like(), params, points, point_idx, y, loss, mask)


def prune(params, threshold):
    """Zero every weight and shift with magnitude below ``threshold``."""
    out = params.copy()
    for a in out.arrays():
        a[np.abs(a) < threshold] = 0.0
    return out


def prune_to_budget(params, s):
    """Keep only the ``s`` largest-magnitude entries (ties broken by order)."""
    out = params.copy()
    arrays = out.arrays()
    flat = np.concatenate([np.abs(a).ravel() for a in arrays])
    if s >= np.count_nonzero(flat):
        return out
    keep = np.zeros(flat.size, dtype=bool)
    keep[np.argsort(-flat, kind="stable")[: max(int(s), 0)]] = True
    pos = 0
    for a in arrays:
        k = keep[pos : pos + a.size].reshape(a.shape)
        a[~k] = 0.0
        pos += a.size
    return out


@dataclass
class ClassReport:
    nonzero_count: int
    max_entry: float
    sup_norm_estimate: float
    s: int
    conditions: dict = field(default_factory=dict)

    @property
    def satisfies_class(self):
        return all(self.conditions.values())


def class_report(params, s, probe):
    """Check the sparse ReLU class conditions: at most ``s`` nonzero entries,
    max-entry norm per layer at most 1, and sup-norm of ``f`` at most 1 on the
    probe grid."""
    nonzero = sum(int(np.count_nonzero(W)) + int(np.count_nonzero(u)) for W, u in zip(params.weights, params.shifts))
    max_entry = max(
        (np.max(np.abs(W)) if W.size else 0.0) + (np.max(np.abs(u)) if u.size else 0.0)
        for W, u in zip(params.weights, params.shifts)
    )
    sup = float(np.max(np.abs(forward(params, probe.points))))
    conditions = {
        "sparsity": nonzero <= s,
        "max_entry": max_entry <= 1.0,
        "sup_norm": sup <= 1.0,
    }
    return ClassReport(nonzero, float(max_entry), sup, int(s), conditions)


# Serialization -------------------------------------------------------------


def to_bytes(params):
    dims = params.dims
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(dims)), struct.pack(f"<{len(dims)}I", *dims)]
    for W, u in zip(params.weights, params.shifts):
        parts.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(u, dtype="<f8").tobytes())
    return b"".join(parts)


def from_bytes(buf):
    if buf[:4] != MAGIC:
        raise ValueError("not an RDNN parameter file (bad magic)")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported RDNN format version {version}")
    dims = struct.unpack_from(f"<{count}I", buf, 12)
    pos = 12 + 4 * count
    weights, shifts = [], []
    for a, b in zip(dims[:-1], dims[1:]):
        W = np.frombuffer(buf, dtype="<f8", count=a * b, offset=pos).reshape(b, a).astype(float)
        pos += 8 * a * b
        u = np.frombuffer(buf, dtype="<f8", count=b, offset=pos).astype(float)
        pos += 8 * b
        weights.append(W)
        shifts.append(u)
    if pos != len(buf):
        raise ValueError(f"trailing or missing bytes: expected {pos}, got {len(buf)}")
    return NetworkParams(weights, shifts)


def to_text(params):
    """JSON with shortest round-trip float reprs (lossless)."""
    doc = {
        "format": "RDNN-text",
        "version": FORMAT_VERSION,
        "dims": list(params.dims),
        "weights": [W.tolist() for W in params.weights],
        "shifts": [u.tolist() for u in params.shifts],
    }
    return json.dumps(doc)


def from_text(text):
    doc = json.loads(text)
    if doc.get("format") != "RDNN-text":
        raise ValueError("not an RDNN text parameter document")
    weights = [np.array(W, dtype=float).reshape(b, a) for W, a, b in zip(doc["weights"], doc["dims"][:-1], doc["dims"][1:])]
    shifts = [np.array(u, dtype=float) for u in doc["shifts"]]
    return NetworkParams(weights, shifts)
