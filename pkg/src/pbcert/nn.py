"""Deterministic from-scratch MLP training with prefix/ghost coupling.

ReLU hidden layers, softmax output, cross-entropy surrogate scaled by
ln(#classes). Training runs in 32-bit floats; gradient checks and bound
arithmetic use 64-bit. Every run is a pure function of (weights, data, seed,
spec): repeated runs are bitwise identical on the same platform.

Run kinds (all sharing the seed-derived data order):

- coupling: exactly m/b minibatch steps over the first m = floor(alpha n)
  positions of the epoch-1 permutation;
- base: the full run over S, continuing epoch 1 past the coupling and then
  reshuffling all of S each epoch, stopping once the 0-1 training error
  (checked at epoch boundaries) falls below the stopping threshold;
- prefix: continues from the coupling state on the prefix data alone,
  starting its second epoch immediately;
- ghost: continues from the coupling state on the dataset whose non-prefix
  positions have been replaced by ghost points, mirroring the base run's
  order exactly.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    "TrainingDivergedError",
    "MLP",
    "DataOrder",
    "RunSpec",
    "RunTrace",
    "CouplingState",
    "derive_rng",
    "param_count",
    "init_weights",
    "momentum_step",
    "forward_backward",
    "zero_one_error",
    "zero_one_losses_batch",
    "surrogate_losses_batch",
    "sgd_run",
    "coupling_run",
    "prefix_run",
    "ghost_run",
    "save_checkpoint",
    "load_checkpoint",
]

# Reshuffle stream ids: base and ghost runs share stream 0 so a ghost run
# mirrors the base run's order; prefix runs default to stream 1.
STREAM_FULL = 0
STREAM_PREFIX = 1
_INIT_KEY = 1 << 20

CHECKPOINT_MAGIC = b"PBCK"
CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """SGD produced a non-finite loss or weights."""


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic RNG stream for (seed, key); independent across keys."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def param_count(layer_sizes: Sequence[int]) -> int:
    return int(sum((layer_sizes[i] + 1) * layer_sizes[i + 1] for i in range(len(layer_sizes) - 1)))


@dataclass(frozen=True)
class MLP:
    """Feedforward net as a flat weight vector (per layer: weights then biases, row-major)."""

    layer_sizes: tuple[int, ...]
    weights: np.ndarray

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"bad layer sizes {sizes}")
        w = np.asarray(self.weights)
        expected = param_count(sizes)
        if w.shape != (expected,):
            raise ValueError(f"flat weights have shape {w.shape}, expected ({expected},)")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights contain non-finite entries")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", w)


def _unpack(w: np.ndarray, sizes: Sequence[int]):
    # views into the flat vector, no copies
    out = []
    off = 0
    for i in range(len(sizes) - 1):
        fi, fo = sizes[i], sizes[i + 1]
        W = w[off : off + fi * fo].reshape(fi, fo)
        off += fi * fo
        b = w[off : off + fo]
        off += fo
        out.append((W, b))
    return out


def init_weights(layer_sizes: Sequence[int], seed: int, dtype=np.float32) -> np.ndarray:
    """Per-layer uniform fan-in init: W ~ U(+-1/sqrt(fan_in)), biases zero."""
    rng = derive_rng(seed, _INIT_KEY)
    w = np.zeros(param_count(layer_sizes), dtype=dtype)
    for i, (W, b) in enumerate(_unpack(w, layer_sizes)):
        bound = 1.0 / math.sqrt(layer_sizes[i])
        W[...] = rng.uniform(-bound, bound, size=W.shape).astype(dtype)
    return w


def forward_backward(mlp: MLP, X: np.ndarray, y: np.ndarray):
    """Surrogate loss (cross-entropy / ln C) and its exact gradient.

    The surrogate equals 1 at a uniform softmax output and tends to 0 on a
    confidently correct prediction. Computation runs in the dtype of the
    weight vector. Non-finite activations abort.
    """
    return _forward_backward_flat(mlp.weights, mlp.layer_sizes, X, y)


def _forward_backward_flat(w: np.ndarray, sizes: Sequence[int], X: np.ndarray, y: np.ndarray):
    dtype = w.dtype
    layers = _unpack(w, sizes)
    n_classes = sizes[-1]
    X = np.asarray(X, dtype=dtype)
    y = np.asarray(y)
    batch = X.shape[0]

    acts = [X]
    pre = []
    h = X
    for li, (W, b) in enumerate(layers):
        a = h @ W + b
        pre.append(a)
        h = np.maximum(a, 0) if li < len(layers) - 1 else a
        acts.append(h)
    logits = acts[-1]
    if not np.all(np.isfinite(logits)):
        raise TrainingDivergedError("non-finite activations in forward pass")

    shifted = logits - logits.max(axis=1, keepdims=True)
    expo = np.exp(shifted)
    norm = expo.sum(axis=1)
    logp = shifted - np.log(norm)[:, None]
    scale = 1.0 / math.log(n_classes)
    loss = float(-logp[np.arange(batch), y].mean() * scale)

    delta = expo / norm[:, None]
    delta[np.arange(batch), y] -= 1
    delta *= dtype.type(scale / batch) if hasattr(dtype, "type") else scale / batch

    grad = np.zeros_like(w)
    grads = _unpack(grad, sizes)
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        gW, gb = grads[li]
        gW[...] = acts[li].T @ delta
        # float64 accumulation keeps mathematically-cancelling bias gradients
        # at exactly zero regardless of minibatch order
        gb[...] = delta.sum(axis=0, dtype=np.float64).astype(dtype)
        if li > 0:
            delta = (delta @ W.T) * (pre[li - 1] > 0)
    return loss, grad


def _forward_logits(w: np.ndarray, sizes: Sequence[int], X: np.ndarray) -> np.ndarray:
    h = np.asarray(X, dtype=w.dtype)
    layers = _unpack(w, sizes)
    for li, (W, b) in enumerate(layers):
        h = h @ W + b
        if li < len(layers) - 1:
            h = np.maximum(h, 0)
    return h


def zero_one_error(w: np.ndarray, sizes: Sequence[int], X: np.ndarray, y: np.ndarray) -> float:
    logits = _forward_logits(w, sizes, X)
    return float((logits.argmax(axis=1) != np.asarray(y)).mean())


def zero_one_losses_batch(
    W: np.ndarray, sizes: Sequence[int], X: np.ndarray, y: np.ndarray, chunk: int = 64
) -> np.ndarray:
    """0-1 error rate for each weight-vector row of W (k, p); chunked over draws."""
    W = np.asarray(W)
    k = W.shape[0]
    y = np.asarray(y)
    out = np.empty(k, dtype=np.float64)
    for s in range(0, k, chunk):
        block = W[s : s + chunk]
        logits = _forward_logits_batch(block, sizes, X)
        out[s : s + chunk] = (logits.argmax(axis=2) != y[None, :]).mean(axis=1)
    return out


def surrogate_losses_batch(
    W: np.ndarray, sizes: Sequence[int], X: np.ndarray, y: np.ndarray, chunk: int = 64
) -> np.ndarray:
    """Mean surrogate loss (clipped to [0, 1]) per weight-vector row of W."""
    W = np.asarray(W)
    k = W.shape[0]
    y = np.asarray(y)
    scale = 1.0 / math.log(sizes[-1])
    out = np.empty(k, dtype=np.float64)
    for s in range(0, k, chunk):
        block = W[s : s + chunk]
        logits = _forward_logits_batch(block, sizes, X).astype(np.float64)
        shifted = logits - logits.max(axis=2, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=2))
        logp_y = np.take_along_axis(shifted, y[None, :, None], axis=2)[:, :, 0] - lse
        out[s : s + chunk] = np.clip(-logp_y * scale, 0.0, 1.0).mean(axis=1)
    return out


def _forward_logits_batch(W: np.ndarray, sizes: Sequence[int], X: np.ndarray) -> np.ndarray:
    # (k, n_examples, n_classes) logits for k flat weight rows
    k = W.shape[0]
    X = np.asarray(X, dtype=W.dtype)
    off = 0
    h = None  # (k, B, units)
    for i in range(len(sizes) - 1):
        fi, fo = sizes[i], sizes[i + 1]
        Wl = W[:, off : off + fi * fo].reshape(k, fi, fo)
        off += fi * fo
        bl = W[:, off : off + fo]
        off += fo
        if h is None:
            a = np.tensordot(X, Wl, axes=([1], [1])).transpose(1, 0, 2)  # (k, B, fo)
        else:
            a = np.matmul(h, Wl)
        a += bl[:, None, :]
        h = np.maximum(a, 0) if i < len(sizes) - 2 else a
    return h


@dataclass(frozen=True)
class DataOrder:
    """Seed-derived minibatch order shared by coupled runs.

    Epoch 1 is one permutation of all n positions regardless of alpha, so any
    two runs sharing a seed process the same first m positions (the coupling).
    Later epochs draw per-(stream, epoch) permutations of a run's active set.
    """

    seed: int
    n: int

    def first_epoch(self) -> np.ndarray:
        return derive_rng(self.seed, STREAM_FULL, 1).permutation(self.n)

    def reshuffle(self, stream: int, epoch: int, active: np.ndarray) -> np.ndarray:
        if epoch < 2:
            raise ValueError("epoch 1 order is fixed by first_epoch()")
        perm = derive_rng(self.seed, stream, epoch).permutation(len(active))
        return np.asarray(active)[perm]


@dataclass(frozen=True)
class RunSpec:
    """Hyperparameters of one SGD run."""

    alpha: float
    batch: int
    learning_rate: float
    momentum: float = 0.95
    stop_epsilon: Optional[float] = None
    max_epochs: int = 200

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha={self.alpha} outside [0, 1)")
        if self.batch < 1:
            raise ValueError("batch must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum={self.momentum} outside [0, 1)")
        if self.stop_epsilon is not None and not 0.0 <= self.stop_epsilon < 1.0:
            raise ValueError("stop_epsilon outside [0, 1)")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")

    def prefix_size(self, n: int) -> int:
        """m = floor(alpha n); requires batch | m and batch | n (no padding)."""
        if n % self.batch != 0:
            raise ValueError(f"batch {self.batch} does not divide n={n}; truncate the dataset")
        m = int(math.floor(self.alpha * n))
        if m % self.batch != 0:
            raise ValueError(f"batch {self.batch} does not divide prefix size m={m}")
        return m


@dataclass
class RunTrace:
    """Named weight snapshots plus run statistics."""

    checkpoints: dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0
    final_error: float = math.nan


@dataclass
class CouplingState:
    """Weights and momentum velocity at the end of the coupled segment."""

    weights: np.ndarray
    velocity: np.ndarray
    steps: int


def momentum_step(
    w: np.ndarray, grad: np.ndarray, velocity: np.ndarray, lr: float, momentum: float
) -> tuple[np.ndarray, np.ndarray]:
    """One heavy-ball step: v' = momentum v + g, w' = w - lr v'."""
    v = momentum * velocity + grad
    return w - lr * v, v


def _steps_over(w, vel, X, y, idx_order, spec, *, step0, snap_at, snaps, sizes):
    # consume idx_order in minibatches, mutating w and vel in place
    lr, mom = spec.learning_rate, spec.momentum
    step = step0
    for s in range(0, len(idx_order), spec.batch):
        idx = idx_order[s : s + spec.batch]
        loss, grad = _forward_backward_flat(w, sizes, X[idx], y[idx])
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at step {step + 1}")
        vel *= mom
        vel += grad
        w -= lr * vel
        step += 1
        if snap_at is not None and step in snap_at:
            snaps[step] = w.copy()
    return step


def _train(
    w0: np.ndarray,
    vel0: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    order: DataOrder,
    spec: RunSpec,
    sizes: Sequence[int],
    *,
    epoch1: Optional[np.ndarray],
    active: np.ndarray,
    stream: int,
    max_steps: Optional[int],
    snap_at: Optional[set],
    stop_epsilon: Optional[float],
):
    w = np.array(w0, copy=True)
    vel = np.array(vel0, copy=True)
    snaps: dict[int, np.ndarray] = {}
    if snap_at and 0 in snap_at:
        snaps[0] = w.copy()
    step = 0
    err = math.nan
    epoch = 1
    while True:
        if epoch == 1:
            idx_order = epoch1 if epoch1 is not None else np.empty(0, dtype=int)
        else:
            idx_order = order.reshuffle(stream, epoch, active)
        if max_steps is not None and step + len(idx_order) // spec.batch > max_steps:
            idx_order = idx_order[: (max_steps - step) * spec.batch]
        step = _steps_over(w, vel, X, y, idx_order, spec, step0=step, snap_at=snap_at, snaps=snaps, sizes=sizes)
        if len(idx_order) > 0 or epoch == 1:
            if stop_epsilon is not None or (max_steps is not None and step >= max_steps) or epoch >= spec.max_epochs:
                err = zero_one_error(w, sizes, X[active], y[active])
        if stop_epsilon is not None and err <= stop_epsilon:
            break
        if max_steps is not None and step >= max_steps:
            break
        if epoch >= spec.max_epochs:
            break
        epoch += 1
    if not np.all(np.isfinite(w)):
        raise TrainingDivergedError(f"non-finite weights after {step} steps")
    return w, vel, step, snaps, err


def coupling_run(
    w_init: np.ndarray,
    sizes: Sequence[int],
    X: np.ndarray,
    y: np.ndarray,
    order: DataOrder,
    spec: RunSpec,
) -> CouplingState:
    """Exactly m/b steps over the epoch-1 prefix; for alpha = 0, no steps.

    With alpha = 0 the returned weights are w_init: the prior is centered at
    the random initialization.
    """
    m = spec.prefix_size(order.n)
    if m == 0:
        return CouplingState(np.array(w_init, copy=True), np.zeros_like(w_init), 0)
    pi1 = order.first_epoch()
    w, vel, step, _, _ = _train(
        w_init, np.zeros_like(w_init), X, y, order, spec, sizes,
        epoch1=pi1[:m], active=pi1[:m], stream=STREAM_FULL,
        max_steps=m // spec.batch, snap_at=None, stop_epsilon=None,
    )
    return CouplingState(w, vel, step)


def sgd_run(
    w_init: np.ndarray,
    sizes: Sequence[int],
    X: np.ndarray,
    y: np.ndarray,
    order: DataOrder,
    spec: RunSpec,
) -> RunTrace:
    """Base run: full-data SGD with the stopping criterion of the run spec.

    Executes the coupling prefix en route (checkpoint ``coupling_end``), then
    the rest of epoch 1 and reshuffled epochs over all of S, checking the 0-1
    training error at epoch boundaries against ``spec.stop_epsilon``; stops at
    the threshold or after ``spec.max_epochs``. Checkpoint ``base_end`` holds
    the final weights.
    """
    n = order.n
    m = spec.prefix_size(n)
    pi1 = order.first_epoch()
    active = np.arange(n)
    snap_at = {m // spec.batch}
    w, vel, step, snaps, err = _train(
        w_init, np.zeros_like(w_init), X, y, order, spec, sizes,
        epoch1=pi1, active=active, stream=STREAM_FULL,
        max_steps=None, snap_at=snap_at, stop_epsilon=spec.stop_epsilon,
    )
    trace = RunTrace(step_count=step, final_error=err)
    trace.checkpoints["coupling_end"] = snaps.get(m // spec.batch, np.array(w_init, copy=True))
    trace.checkpoints["base_end"] = w
    return trace


def prefix_run(
    start: Union[CouplingState, np.ndarray],
    sizes: Sequence[int],
    X: np.ndarray,
    y: np.ndarray,
    order: DataOrder,
    spec: RunSpec,
    t_grid: Sequence[int],
    reshuffle_stream: int = STREAM_PREFIX,
) -> RunTrace:
    """Continue from the coupling state on the prefix data alone.

    Snapshots the weights after each candidate step count T in ``t_grid``
    (counted after the coupling; T = 0 is the coupling state itself). Epochs
    reshuffle only the prefix positions, starting with the second epoch
    immediately.
    """
    t_grid = sorted(set(int(t) for t in t_grid))
    if not t_grid or t_grid[0] < 0:
        raise ValueError("t_grid must be nonempty with nonnegative entries")
    w0, vel0 = _start_state(start)
    n = order.n
    m = spec.prefix_size(n)
    pi1 = order.first_epoch()
    trace = RunTrace()
    trace.checkpoints["coupling_end"] = np.array(w0, copy=True)
    if m == 0:
        # no prefix data: the prior stays at the coupling state for every T
        for t in t_grid:
            trace.checkpoints[f"prefix_{t}"] = np.array(w0, copy=True)
        trace.final_error = math.nan
        return trace
    active = pi1[:m]
    spec2 = _uncapped(spec, needed_steps=t_grid[-1], per_epoch=m // spec.batch)
    w, vel, step, snaps, err = _train(
        w0, vel0, X, y, order, spec2, sizes,
        epoch1=None, active=active, stream=reshuffle_stream,
        max_steps=t_grid[-1], snap_at=set(t_grid), stop_epsilon=None,
    )
    for t in t_grid:
        trace.checkpoints[f"prefix_{t}"] = snaps[t]
    trace.step_count = step
    trace.final_error = zero_one_error(w, sizes, X[active], y[active])
    return trace


def ghost_run(
    start: Union[CouplingState, np.ndarray],
    sizes: Sequence[int],
    X: np.ndarray,
    y: np.ndarray,
    ghost_X: np.ndarray,
    ghost_y: np.ndarray,
    order: DataOrder,
    spec: RunSpec,
    t_grid: Sequence[int],
) -> RunTrace:
    """Continue from the coupling state on prefix data plus ghost fill-ins.

    The composed dataset keeps the prefix positions of S and substitutes
    ghost points (in order) at the remaining positions, then trains with the
    base run's data order, so feeding the true complement back in reproduces
    the base run bitwise.
    """
    t_grid = sorted(set(int(t) for t in t_grid))
    if not t_grid or t_grid[0] < 0:
        raise ValueError("t_grid must be nonempty with nonnegative entries")
    w0, vel0 = _start_state(start)
    n = order.n
    m = spec.prefix_size(n)
    need = n - m
    if len(ghost_X) < need:
        raise ValueError(f"ghost pool has {len(ghost_X)} points, need {need}")
    pi1 = order.first_epoch()
    fill = np.sort(pi1[m:])
    Xg = np.array(X, copy=True)
    yg = np.array(y, copy=True)
    Xg[fill] = ghost_X[:need]
    yg[fill] = ghost_y[:need]
    trace = RunTrace()
    trace.checkpoints["coupling_end"] = np.array(w0, copy=True)
    spec2 = _uncapped(spec, needed_steps=t_grid[-1], per_epoch=n // spec.batch)
    w, vel, step, snaps, err = _train(
        w0, vel0, Xg, yg, order, spec2, sizes,
        epoch1=pi1[m:], active=np.arange(n), stream=STREAM_FULL,
        max_steps=t_grid[-1], snap_at=set(t_grid), stop_epsilon=None,
    )
    for t in t_grid:
        trace.checkpoints[f"ghost_{t}"] = snaps[t]
    trace.step_count = step
    trace.final_error = zero_one_error(w, sizes, Xg, yg)
    return trace


def _start_state(start: Union[CouplingState, np.ndarray]):
    if isinstance(start, CouplingState):
        return start.weights, start.velocity
    w = np.asarray(start)
    return w, np.zeros_like(w)


def _uncapped(spec: RunSpec, needed_steps: int, per_epoch: int) -> RunSpec:
    # snapshot runs are bounded by max_steps, not the epoch cap
    epochs = max(spec.max_epochs, 2 + needed_steps // max(per_epoch, 1))
    return RunSpec(
        alpha=spec.alpha, batch=spec.batch, learning_rate=spec.learning_rate,
        momentum=spec.momentum, stop_epsilon=None, max_epochs=epochs,
    )


def save_checkpoint(path, layer_sizes: Sequence[int], weights: np.ndarray) -> None:
    """Write a weight snapshot: magic 'PBCK', u32 version, u32 L, L u32 layer
    sizes, u64 count, then count little-endian float32 values."""
    sizes = [int(s) for s in layer_sizes]
    w = np.ascontiguousarray(np.asarray(weights, dtype="<f4"))
    if w.shape != (param_count(sizes),):
        raise ValueError("weights do not match layer sizes")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        fh.write(struct.pack("<Q", w.size))
        fh.write(w.tobytes())


def load_checkpoint(path) -> tuple[tuple[int, ...], np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (nl,) = struct.unpack("<I", fh.read(4))
        sizes = struct.unpack(f"<{nl}I", fh.read(4 * nl))
        (count,) = struct.unpack("<Q", fh.read(8))
        if count != param_count(sizes):
            raise ValueError("checkpoint count does not match layer sizes")
        data = fh.read(4 * count)
        if len(data) != 4 * count:
            raise ValueError("truncated checkpoint")
        return tuple(sizes), np.frombuffer(data, dtype="<f4").copy()
