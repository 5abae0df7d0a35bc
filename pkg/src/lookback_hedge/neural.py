"""Stacked-LSTM policy network with hand-written backpropagation through time.

The policy maps a sequence of feature vectors to a sequence of decision
vectors through H LSTM cells followed by an affine read-out.  Gradients are
exact reverse-mode derivatives accumulated across time steps (the cells
share parameters over time), validated against finite differences in the
test suite.  Everything is plain NumPy in float64.

Cell j at step n, with u = [h_prev_j, input_from_below] (recurrent state
first in the concatenation):

    i = sigm(W_i u + b_i)        input gate
    f = sigm(W_f u + b_f)        forget gate
    o = sigm(W_o u + b_o)        output gate
    c = f * c_prev + i * tanh(W_c u + b_c)
    h = o * tanh(c)

The four gate matrices are stored stacked row-wise in a single (4d, d+dl)
array in the order [input, forget, output, candidate]; per-gate views are
exposed for inspection and serialization.  Initial h and c are zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "sigmoid",
    "DivergedNetworkError",
    "LstmConfig",
    "CellParams",
    "PolicyParams",
    "PolicyGrads",
    "AdamState",
    "glorot_init",
    "zeros_like_params",
    "lstm_forward",
    "lstm_backward",
    "adam_step",
    "save_params",
    "load_params",
]

INIT_STREAM = 100  # Philox substream for parameter initialization

PARAMS_FORMAT_VERSION = 1


class DivergedNetworkError(RuntimeError):
    """Raised when a forward pass produces non-finite activations."""


def sigmoid(x, out=None):
    """Logistic function via the identity sigm(x) = (tanh(x/2) + 1) / 2.

    Overflow-free for any finite input and within one ulp of the direct
    1/(1+exp(-x)) evaluation; tanh is also measurably faster here.
    """
    out = np.multiply(x, 0.5, out=out)
    np.tanh(out, out=out)
    np.add(out, 1.0, out=out)
    np.multiply(out, 0.5, out=out)
    return out


@dataclass(frozen=True)
class LstmConfig:
    """Network shape: input/decision widths and the per-cell neuron counts."""

    d_in: int
    d_out: int
    widths: tuple[int, ...] = (24, 24)

    def __post_init__(self):
        if self.d_in < 1 or self.d_out < 1 or len(self.widths) < 1:
            raise ValueError("d_in, d_out and the cell list must be non-empty")
        if any(w < 1 for w in self.widths):
            raise ValueError("cell widths must be >= 1")

    @property
    def n_cells(self) -> int:
        return len(self.widths)

    def lower_width(self, j: int) -> int:
        """Width of the input feeding cell j (features for the first cell)."""
        return self.d_in if j == 0 else self.widths[j - 1]

    def param_count(self) -> int:
        total = 0
        for j, d in enumerate(self.widths):
            total += 4 * (d * (d + self.lower_width(j)) + d)
        total += self.d_out * self.widths[-1] + self.d_out
        return total


@dataclass
class CellParams:
    """One LSTM cell: stacked gate weights (4d, d+dl) and biases (4d,)."""

    w: np.ndarray
    b: np.ndarray

    @property
    def width(self) -> int:
        return self.w.shape[0] // 4

    def _gate_w(self, k: int) -> np.ndarray:
        d = self.width
        return self.w[k * d : (k + 1) * d]

    def _gate_b(self, k: int) -> np.ndarray:
        d = self.width
        return self.b[k * d : (k + 1) * d]

    # per-gate views, in the documented stacking order
    @property
    def w_i(self):
        return self._gate_w(0)

    @property
    def w_f(self):
        return self._gate_w(1)

    @property
    def w_o(self):
        return self._gate_w(2)

    @property
    def w_c(self):
        return self._gate_w(3)

    @property
    def b_i(self):
        return self._gate_b(0)

    @property
    def b_f(self):
        return self._gate_b(1)

    @property
    def b_o(self):
        return self._gate_b(2)

    @property
    def b_c(self):
        return self._gate_b(3)


@dataclass
class PolicyParams:
    """All trainable parameters: H cells plus the affine read-out."""

    config: LstmConfig
    cells: list[CellParams]
    w_y: np.ndarray
    b_y: np.ndarray

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        """Named parameter arrays in a fixed order (cells first, then read-out)."""
        out = []
        for j, cell in enumerate(self.cells):
            out.append((f"cell{j}_w", cell.w))
            out.append((f"cell{j}_b", cell.b))
        out.append(("w_y", self.w_y))
        out.append(("b_y", self.b_y))
        return out

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            config=self.config,
            cells=[CellParams(c.w.copy(), c.b.copy()) for c in self.cells],
            w_y=self.w_y.copy(),
            b_y=self.b_y.copy(),
        )

    def param_count(self) -> int:
        return sum(a.size for _, a in self.arrays())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for _, a in self.arrays())


def zeros_like_params(config: LstmConfig) -> PolicyParams:
    cells = []
    for j, d in enumerate(config.widths):
        dl = config.lower_width(j)
        cells.append(CellParams(np.zeros((4 * d, d + dl)), np.zeros(4 * d)))
    return PolicyParams(
        config=config,
        cells=cells,
        w_y=np.zeros((config.d_out, config.widths[-1])),
        b_y=np.zeros(config.d_out),
    )


PolicyGrads = PolicyParams  # gradients share the parameter layout


def glorot_init(config: LstmConfig, seed: int) -> PolicyParams:
    """Glorot-uniform weights, zero biases.

    Every gate matrix of cell j has fan_in = d_j + d_{j-1} (columns) and
    fan_out = d_j (rows), so one uniform draw over +/- sqrt(6/(fan_in+fan_out))
    covers the whole stacked block.  Initialization randomness uses its own
    Philox substream keyed by (seed, INIT_STREAM).
    """
    gen = np.random.Generator(
        np.random.Philox(key=np.array([np.uint64(seed), np.uint64(INIT_STREAM)], dtype=np.uint64))
    )
    params = zeros_like_params(config)
    for j, cell in enumerate(params.cells):
        d = config.widths[j]
        dl = config.lower_width(j)
        limit = np.sqrt(6.0 / ((d + dl) + d))
        cell.w[:] = gen.uniform(-limit, limit, size=cell.w.shape)
    limit = np.sqrt(6.0 / (config.widths[-1] + config.d_out))
    params.w_y[:] = gen.uniform(-limit, limit, size=params.w_y.shape)
    return params


# ---------------------------------------------------------------------------
# Forward / backward primitives.
#
# Hot-path arrays are feature-major, shape (width, B): every gate block is
# then a contiguous row slice, which keeps the element-wise kernels on the
# SIMD fast path.  The public lstm_forward / lstm_backward wrappers expose
# the conventional batch-first (B, N, d) layout.
# ---------------------------------------------------------------------------

@dataclass
class CellCache:
    """Activations one cell needs for its backward pass at one step."""

    u: np.ndarray        # (d+dl, B) stacked [h_prev; x]
    gates: np.ndarray    # (4d, B) post-activation [i; f; o; tanh-candidate]
    c_prev: np.ndarray   # (d, B)
    tanh_c: np.ndarray   # (d, B)


@dataclass
class CellSlot:
    """Preallocated output buffers for one cell at one step."""

    u: np.ndarray
    gates: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray
    z: np.ndarray  # matmul scratch, shared across steps of the same cell


class StackWorkspace:
    """Reusable tape buffers for repeated forwards of one (batch, N) shape.

    A taped forward pass keeps every step's activations alive, which with
    fresh allocations means faulting in (and later releasing) hundreds of
    megabytes per mini-batch.  Training reuses one of these across batches
    instead; the buffers stay mapped and warm.
    """

    def __init__(self, config: LstmConfig, batch: int, n_steps: int):
        self.batch = batch
        self.n_steps = n_steps
        self._u = []
        self._gates = []
        self._c = []
        self._tanh_c = []
        self._h = []
        self._z = []
        self.h0 = []
        self.c0 = []
        for j, d in enumerate(config.widths):
            dl = config.lower_width(j)
            self._u.append(np.empty((n_steps, d + dl, batch)))
            self._gates.append(np.empty((n_steps, 4 * d, batch)))
            self._c.append(np.empty((n_steps, d, batch)))
            self._tanh_c.append(np.empty((n_steps, d, batch)))
            self._h.append(np.empty((n_steps, d, batch)))
            self._z.append(np.empty((4 * d, batch)))
            self.h0.append(np.zeros((d, batch)))
            self.c0.append(np.zeros((d, batch)))

    def slots(self, n: int) -> list:
        return [
            CellSlot(
                u=self._u[j][n],
                gates=self._gates[j][n],
                c=self._c[j][n],
                tanh_c=self._tanh_c[j][n],
                h=self._h[j][n],
                z=self._z[j],
            )
            for j in range(len(self._u))
        ]


def cell_step(cell: CellParams, x, h_prev, c_prev, slot: CellSlot | None = None):
    """One time-step of one cell; feature-major inputs.  Returns (h, c, cache).

    With a slot, results are written into the preallocated buffers; the
    returned cache aliases them.
    """
    d = cell.width
    if slot is None:
        u = np.empty((cell.w.shape[1], np.shape(x)[1]))
        z = np.empty((4 * d, np.shape(x)[1]))
        gates = np.empty_like(z)
        c = np.empty((d, np.shape(x)[1]))
        tanh_c = np.empty_like(c)
        h = np.empty_like(c)
    else:
        u, z, gates, c, tanh_c, h = slot.u, slot.z, slot.gates, slot.c, slot.tanh_c, slot.h
    u[:d] = h_prev
    u[d:] = x
    np.matmul(cell.w, u, out=z)
    z += cell.b[:, None]
    sigmoid(z[: 3 * d], out=gates[: 3 * d])
    np.tanh(z[3 * d :], out=gates[3 * d :])
    i = gates[:d]
    f = gates[d : 2 * d]
    o = gates[2 * d : 3 * d]
    cand = gates[3 * d :]
    np.multiply(f, c_prev, out=c)
    c += i * cand
    np.tanh(c, out=tanh_c)
    np.multiply(o, tanh_c, out=h)
    return h, c, CellCache(u=u, gates=gates, c_prev=c_prev, tanh_c=tanh_c)


def cell_backward(
    cell: CellParams,
    cache: CellCache,
    gh: np.ndarray,
    gc: np.ndarray,
    grads_cell: CellParams,
):
    """Reverse one cell-step; accumulates into grads_cell.

    gh/gc are the loss gradients w.r.t. this step's h and c (the latter from
    the next step's forget path), feature-major.  Returns (gx, gh_prev,
    gc_prev).
    """
    d = cell.width
    gates = cache.gates
    i = gates[:d]
    f = gates[d : 2 * d]
    o = gates[2 * d : 3 * d]
    cand = gates[3 * d :]
    tanh_c = cache.tanh_c

    gc_total = gc + gh * o * (1.0 - tanh_c * tanh_c)
    gz = np.empty_like(gates)
    np.multiply(gc_total, cand, out=gz[:d])
    gz[:d] *= i
    gz[:d] *= 1.0 - i
    np.multiply(gc_total, cache.c_prev, out=gz[d : 2 * d])
    gz[d : 2 * d] *= f
    gz[d : 2 * d] *= 1.0 - f
    np.multiply(gh, tanh_c, out=gz[2 * d : 3 * d])
    gz[2 * d : 3 * d] *= o
    gz[2 * d : 3 * d] *= 1.0 - o
    np.multiply(gc_total, i, out=gz[3 * d :])
    gz[3 * d :] *= 1.0 - cand * cand

    grads_cell.w += gz @ cache.u.T
    grads_cell.b += gz.sum(axis=1)
    gu = cell.w.T @ gz
    gh_prev = gu[:d]
    gc_prev = gc_total * f
    return gu[d:], gh_prev, gc_prev


@dataclass
class Tape:
    """Per-step activations retained by a forward pass for BPTT."""

    steps: list = field(default_factory=list)  # per step: (list[CellCache], h_top)
    batch: int = 0


def stack_step(params: PolicyParams, x, hs, cs, tape: Tape | None, slots=None):
    """Run every cell plus the read-out for one step, updating hs/cs in place.

    x is feature-major (d_in, B); the returned decisions are (d_out, B).
    slots, when given, supplies per-cell workspace buffers for this step.
    """
    caches = [] if tape is not None else None
    inp = x
    for j, cell in enumerate(params.cells):
        h, c, cache = cell_step(cell, inp, hs[j], cs[j], None if slots is None else slots[j])
        hs[j] = h
        cs[j] = c
        if caches is not None:
            caches.append(cache)
        inp = h
    y = params.w_y @ inp
    y += params.b_y[:, None]
    if tape is not None:
        tape.steps.append((caches, inp))
    return y


def lstm_forward(params: PolicyParams, features: np.ndarray):
    """Map a feature sequence to decision vectors, retaining the BPTT tape.

    features: (N, d_in) for a single sequence or (B, N, d_in) for a batch.
    Returns (outputs, tape) with outputs matching the input rank.
    """
    features = np.asarray(features, dtype=float)
    single = features.ndim == 2
    if single:
        features = features[None]
    if features.ndim != 3 or features.shape[2] != params.config.d_in:
        raise ValueError("features must be (B, N, d_in) with the configured d_in")
    batch, n_steps, _ = features.shape
    hs = [np.zeros((d, batch)) for d in params.config.widths]
    cs = [np.zeros((d, batch)) for d in params.config.widths]
    tape = Tape(batch=batch)
    outputs = np.empty((batch, n_steps, params.config.d_out))
    for n in range(n_steps):
        outputs[:, n] = stack_step(params, features[:, n].T, hs, cs, tape).T
    if not np.all(np.isfinite(outputs)):
        raise DivergedNetworkError("non-finite network output")
    return (outputs[0], tape) if single else (outputs, tape)


def backward_through_tape(
    params: PolicyParams,
    tape: Tape,
    output_grads: np.ndarray,
    grads: PolicyGrads,
    input_grads: np.ndarray | None = None,
):
    """Core reverse sweep behind lstm_backward.

    output_grads: (B, N, d_out).  If input_grads is given (B, N, d_in) it is
    filled with gradients w.r.t. the features.
    """
    n_steps = len(tape.steps)
    widths = params.config.widths
    gh = [np.zeros((d, tape.batch)) for d in widths]
    gc = [np.zeros((d, tape.batch)) for d in widths]
    for n in reversed(range(n_steps)):
        caches, h_top = tape.steps[n]
        gy = np.ascontiguousarray(output_grads[:, n].T)
        grads.w_y += gy @ h_top.T
        grads.b_y += gy.sum(axis=1)
        g_into = params.w_y.T @ gy
        for j in reversed(range(len(params.cells))):
            gx, gh_prev, gc_prev = cell_backward(
                params.cells[j], caches[j], gh[j] + g_into, gc[j], grads.cells[j]
            )
            gh[j] = gh_prev
            gc[j] = gc_prev
            g_into = gx
        if input_grads is not None:
            input_grads[:, n] = g_into.T


def lstm_backward(params: PolicyParams, tape: Tape, output_grads: np.ndarray):
    """Exact gradients of a scalar loss given its gradients w.r.t. outputs.

    output_grads must match the forward outputs' shape.  Returns
    (PolicyGrads, input_grads).
    """
    output_grads = np.asarray(output_grads, dtype=float)
    single = output_grads.ndim == 2
    if single:
        output_grads = output_grads[None]
    if output_grads.shape[0] != tape.batch or output_grads.shape[1] != len(tape.steps):
        raise ValueError("output_grads shape does not match the forward tape")
    grads = zeros_like_params(params.config)
    input_grads = np.zeros((tape.batch, len(tape.steps), params.config.d_in))
    backward_through_tape(params, tape, output_grads, grads, input_grads)
    return grads, (input_grads[0] if single else input_grads)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: PolicyParams, lr: float, **kw) -> "AdamState":
        state = cls(lr=lr, **kw)
        for name, a in params.arrays():
            state.m[name] = np.zeros_like(a)
            state.v[name] = np.zeros_like(a)
        return state


def adam_step(params: PolicyParams, grads: PolicyGrads, state: AdamState):
    """One Adam update with bias correction; arrays are updated in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    scale1 = 1.0 - b1 ** state.t
    scale2 = 1.0 - b2 ** state.t
    for (name, p), (_, g) in zip(params.arrays(), grads.arrays()):
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / scale1) / (np.sqrt(v / scale2) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_params(params: PolicyParams, path) -> None:
    """Persist parameters as an .npz archive.

    Layout (format version 1): key ``meta`` holds a JSON string with the
    format version and the network shape; each parameter array is stored
    row-major under its ``arrays()`` name, gate rows stacked in the order
    input, forget, output, candidate.
    """
    meta = json.dumps(
        {
            "format_version": PARAMS_FORMAT_VERSION,
            "d_in": params.config.d_in,
            "d_out": params.config.d_out,
            "widths": list(params.config.widths),
        }
    )
    np.savez(path, meta=np.array(meta), **dict(params.arrays()))


def load_params(path) -> PolicyParams:
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["meta"]))
        if meta.get("format_version") != PARAMS_FORMAT_VERSION:
            raise ValueError(f"unsupported parameter file version: {meta.get('format_version')}")
        config = LstmConfig(
            d_in=int(meta["d_in"]), d_out=int(meta["d_out"]), widths=tuple(meta["widths"])
        )
        params = zeros_like_params(config)
        for name, array in params.arrays():
            array[:] = archive[name]
    return params
