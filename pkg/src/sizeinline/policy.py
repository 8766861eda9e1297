"""Feed-forward policy network with exact backprop, in plain numpy."""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_write_text
from .errors import FormatError, NumericError, ParameterError
from .features import N_FEATURES, STD_FLOOR, FeatureStats

FORMAT_VERSION = 1
DEFAULT_HIDDEN = (40, 20)
N_ACTIONS = 2


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")


class MlpPolicy:
    """pi(a | s) over two actions: 0 = don't inline, 1 = inline.

    Inputs are z-normalized with the stored feature stats, pass through
    rectifier hidden layers, and a softmax output.  Instances are treated as
    immutable: training builds new policies with `with_params`.
    """

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], stats: FeatureStats | None = None):
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        self.stats = stats if stats is not None else FeatureStats.identity()
        dims = self.layer_dims
        if dims[0] != N_FEATURES:
            raise ParameterError(f"first layer must take {N_FEATURES} inputs, got {dims[0]}")
        if dims[-1] != N_ACTIONS:
            raise ParameterError(f"last layer must have {N_ACTIONS} outputs, got {dims[-1]}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ParameterError(f"layer {i}: inconsistent weight/bias shapes")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ParameterError(f"layer {i}: input width does not match previous layer")
        for arr in self.weights + self.biases:
            _check_finite(arr, "policy parameters")
            arr.setflags(write=False)
        self._mean = np.asarray(self.stats.mean)
        self._inv_std = 1.0 / np.maximum(np.asarray(self.stats.std), STD_FLOOR)

    @classmethod
    def initialize(cls, hidden=DEFAULT_HIDDEN, stats: FeatureStats | None = None, seed=0) -> "MlpPolicy":
        """Glorot-uniform hidden layers, zero output layer (uniform policy)."""
        rng = np.random.default_rng(seed)
        dims = [N_FEATURES, *hidden, N_ACTIONS]
        weights, biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            if i == len(dims) - 2:
                w = np.zeros((fan_in, fan_out))
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            weights.append(w)
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, stats)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    # -- flat parameter vector: layer by layer, W row-major then b ---------

    def get_params(self) -> np.ndarray:
        return np.concatenate([a.ravel() for w, b in zip(self.weights, self.biases) for a in (w, b)])

    def with_params(self, theta) -> "MlpPolicy":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ParameterError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        weights, biases, k = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(theta[k : k + w.size].reshape(w.shape))
            k += w.size
            biases.append(theta[k : k + b.size])
            k += b.size
        return MlpPolicy(weights, biases, self.stats)

    def with_stats(self, stats: FeatureStats) -> "MlpPolicy":
        return MlpPolicy(self.weights, self.biases, stats)

    # -- evaluation --------------------------------------------------------

    def normalize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self._mean) * self._inv_std

    def _forward_cache(self, X):
        h = self.normalize(X)
        acts = [h]
        pre = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = z if i == last else np.maximum(z, 0.0)
            acts.append(h)
        return pre, acts

    def logits(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        z = self._forward_cache(X)[1][-1]
        _check_finite(z, "policy logits")
        return z

    def log_proba(self, X) -> np.ndarray:
        z = self.logits(X)
        # two-class log-sigmoid keeps precision when one action is nearly certain
        d = z[:, 1] - z[:, 0]
        return np.stack([-np.logaddexp(0.0, d), -np.logaddexp(0.0, -d)], axis=1)

    def proba(self, X) -> np.ndarray:
        return np.exp(self.log_proba(X))

    def forward(self, f) -> tuple[float, float]:
        p = self.proba(np.asarray(f, dtype=np.float64)[None, :])[0]
        return float(p[0]), float(p[1])

    def act(self, f, mode="argmax", rng: np.random.Generator | None = None) -> int:
        p0, p1 = self.forward(f)
        if mode == "argmax":
            return int(p1 > p0)
        if mode == "sample":
            return int(rng.random() < p1)
        raise ValueError(f"unknown mode {mode!r}")

    def __call__(self, f) -> int:
        return self.act(f, "argmax")

    # -- gradients ---------------------------------------------------------

    def backward(self, X, dlogits) -> np.ndarray:
        """Flat gradient of sum_i <dlogits_i, logits(X_i)> w.r.t. all parameters."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        pre, acts = self._forward_cache(X)
        delta = np.asarray(dlogits, dtype=np.float64).reshape(X.shape[0], N_ACTIONS)
        grads = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
            if i:
                delta = (delta @ self.weights[i].T) * (pre[i - 1] > 0.0)
        g = np.concatenate([a.ravel() for gw, gb in grads for a in (gw, gb)])
        _check_finite(g, "gradient")
        return g

    def logprob_grad(self, f, a: int) -> tuple[float, np.ndarray]:
        """log pi(a | f) and its exact gradient as a flat parameter vector."""
        X = np.asarray(f, dtype=np.float64)[None, :]
        logp = self.log_proba(X)
        d = -np.exp(logp)
        d[0, a] += 1.0
        return float(logp[0, a]), self.backward(X, d)

    # -- describe ----------------------------------------------------------

    def stats_digest(self) -> str:
        text = _floats(self.stats.mean) + "|" + _floats(self.stats.std) + f"|{self.stats.count}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, MlpPolicy):
            return NotImplemented
        return (
            self.layer_dims == other.layer_dims
            and self.stats == other.stats
            and np.array_equal(self.get_params(), other.get_params())
        )

    def __repr__(self):
        return f"MlpPolicy(dims={self.layer_dims}, n_params={self.n_params})"


def entropy_and_grad(policy: MlpPolicy, X) -> tuple[float, np.ndarray]:
    """Mean entropy of pi(.|x) over rows of X, and its parameter gradient."""
    X = np.atleast_2d(X)
    logp = policy.log_proba(X)
    p = np.exp(logp)
    H = -(p * logp).sum(axis=1)
    # dH/dz_j = -p_j (log p_j + H)
    d = -p * (logp + H[:, None]) / X.shape[0]
    return float(H.mean()), policy.backward(X, d)


# -- text format ---------------------------------------------------------------


def _floats(values) -> str:
    return " ".join(format(float(v), ".17g") for v in np.ravel(values))


def dumps(p: MlpPolicy) -> str:
    lines = [
        f"sizeinline-policy {FORMAT_VERSION}",
        "dims " + " ".join(map(str, p.layer_dims)),
        f"stats_count {p.stats.count}",
        "stats_mean " + _floats(p.stats.mean),
        "stats_std " + _floats(p.stats.std),
    ]
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        lines.append(f"weight {i} " + _floats(w))
        lines.append(f"bias {i} " + _floats(b))
    lines.append("end")
    return "\n".join(lines) + "\n"


def _parse_floats(tokens, n, lineno, what):
    if len(tokens) != n:
        raise FormatError(f"{what}: expected {n} values, got {len(tokens)}", lineno)
    try:
        vals = np.array([float(t) for t in tokens])
    except ValueError:
        raise FormatError(f"{what}: bad number", lineno) from None
    if not np.all(np.isfinite(vals)):
        raise FormatError(f"{what}: non-finite value", lineno)
    return vals


def loads(text: str) -> MlpPolicy:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty policy document")
    head = lines[0].split(" ")
    if len(head) != 2 or head[0] != "sizeinline-policy":
        raise FormatError("not a policy document", 1)
    if head[1] != str(FORMAT_VERSION):
        raise FormatError(f"unsupported policy format version {head[1]}", 1)
    if len(lines) < 5:
        raise FormatError("truncated policy document", len(lines))

    def field(i, key):
        parts = lines[i].split(" ")
        if parts[0] != key:
            raise FormatError(f"expected '{key}'", i + 1)
        return parts[1:]

    try:
        dims = [int(t) for t in field(1, "dims")]
    except ValueError:
        raise FormatError("dims must be integers", 2) from None
    if len(dims) < 2 or min(dims) < 1:
        raise FormatError("bad dims", 2)
    if dims[0] != N_FEATURES or dims[-1] != N_ACTIONS:
        raise FormatError(f"dims must start with {N_FEATURES} and end with {N_ACTIONS}, got {dims}", 2)
    count_tok = field(2, "stats_count")
    if len(count_tok) != 1 or not count_tok[0].isdigit():
        raise FormatError("bad stats_count", 3)
    mean = _parse_floats(field(3, "stats_mean"), N_FEATURES, 4, "stats_mean")
    std = _parse_floats(field(4, "stats_std"), N_FEATURES, 5, "stats_std")
    expected = 5 + 2 * (len(dims) - 1) + 1
    if len(lines) != expected:
        raise FormatError(f"expected {expected} lines, found {len(lines)} (truncated or padded)", len(lines))
    weights, biases = [], []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        ln = 5 + 2 * i
        wt = field(ln, "weight")
        bt = field(ln + 1, "bias")
        if not wt or wt[0] != str(i) or not bt or bt[0] != str(i):
            raise FormatError(f"layer {i} out of order", ln + 1)
        weights.append(_parse_floats(wt[1:], a * b, ln + 1, f"weight {i}").reshape(a, b))
        biases.append(_parse_floats(bt[1:], b, ln + 2, f"bias {i}"))
    if lines[-1] != "end":
        raise FormatError("missing 'end' (truncated document)", len(lines))
    try:
        stats = FeatureStats(tuple(mean.tolist()), tuple(std.tolist()), int(count_tok[0]))
    except ParameterError as e:
        raise FormatError(str(e), 4) from None
    return MlpPolicy(weights, biases, stats)


def save(p: MlpPolicy, path) -> None:
    atomic_write_text(path, dumps(p))


def load(path) -> MlpPolicy:
    return loads(Path(path).read_text())


def describe(p: MlpPolicy) -> str:
    return (
        f"dims {' '.join(map(str, p.layer_dims))}\n"
        f"parameters {p.n_params}\n"
        f"stats_count {p.stats.count}\n"
        f"stats_digest {p.stats_digest()}\n"
    )
