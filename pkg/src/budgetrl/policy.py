"""Stochastic policies with analytic log-probability gradients, plus Adam.

Two policy families are provided: a tabular softmax over integer states and
a two-hidden-layer tanh network over feature vectors. Gradients are computed
by hand-rolled backpropagation; there is no autodiff dependency.

Policies are plain value objects: updates build new parameter arrays, so a
snapshot handed to an evaluation worker never changes under it.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

CHECKPOINT_MAGIC = b"BPC1"
_KIND_TABULAR = 0
_KIND_MLP = 1


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _draw(probs: np.ndarray, u: float) -> int:
    acc = 0.0
    last = len(probs) - 1
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return last


@dataclass(frozen=True)
class TabularPolicy:
    """Softmax policy over a logit table of shape [state_count, action_count].

    Zero-initialised logits give the exactly uniform starting policy.
    """

    logits: np.ndarray

    @classmethod
    def uniform(cls, state_count: int, action_count: int) -> "TabularPolicy":
        return cls(np.zeros((state_count, action_count)))

    @property
    def action_count(self) -> int:
        return self.logits.shape[1]

    def parameters(self) -> list[np.ndarray]:
        return [self.logits]

    def with_parameters(self, params: list[np.ndarray]) -> "TabularPolicy":
        (logits,) = params
        return TabularPolicy(logits)

    def action_distribution(self, state: int) -> np.ndarray:
        return softmax(self.logits[state])

    def greedy_action(self, state: int) -> int:
        return int(np.argmax(self.logits[state]))

    def sample_action(self, state: int, rng: np.random.Generator) -> int:
        row = self.logits[state]
        if row.shape[0] == 2:
            # Overflow-safe sigmoid; this is the rollout hot path.
            p0 = 0.5 * (1.0 + math.tanh(0.5 * (row[0] - row[1])))
            return 0 if rng.random() < p0 else 1
        return _draw(softmax(row), rng.random())

    def weighted_score_gradients(
        self, states: np.ndarray, actions: np.ndarray, weights: np.ndarray
    ) -> list[np.ndarray]:
        """sum_i weights[i] * d/dtheta log pi(actions[i] | states[i])."""
        probs = softmax(self.logits[states])
        grad = np.zeros_like(self.logits)
        np.add.at(grad, (states, actions), weights)
        np.subtract.at(grad, states, probs * weights[:, None])
        return [grad]

    def logprob_gradient(self, state: int, action: int) -> list[np.ndarray]:
        if not 0 <= action < self.action_count:
            raise ValueError(f"invalid action {action}")
        return self.weighted_score_gradients(
            np.array([state]), np.array([action]), np.ones(1)
        )


@dataclass(frozen=True)
class MlpPolicy:
    """state_dim -> hidden -> hidden -> action_count network, tanh hidden
    activations and a softmax output.

    Weights start at zero-mean uniform scaled by 1/sqrt(fan_in) with zero
    biases, which keeps the initial action distribution near uniform.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @classmethod
    def initialize(
        cls,
        state_dim: int,
        action_count: int,
        hidden: int = 64,
        rng: np.random.Generator | None = None,
    ) -> "MlpPolicy":
        rng = rng or np.random.default_rng()

        def layer(fan_out, fan_in):
            bound = 1.0 / math.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=(fan_out, fan_in))

        return cls(
            w1=layer(hidden, state_dim),
            b1=np.zeros(hidden),
            w2=layer(hidden, hidden),
            b2=np.zeros(hidden),
            w3=layer(action_count, hidden),
            b3=np.zeros(action_count),
        )

    @property
    def state_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def action_count(self) -> int:
        return self.w3.shape[0]

    def parameters(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def with_parameters(self, params: list[np.ndarray]) -> "MlpPolicy":
        w1, b1, w2, b2, w3, b3 = params
        return MlpPolicy(w1, b1, w2, b2, w3, b3)

    def _hidden_activations(self, state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z1 = np.tanh(self.w1 @ state + self.b1)
        z2 = np.tanh(self.w2 @ z1 + self.b2)
        return z1, z2

    def action_distribution(self, state: np.ndarray) -> np.ndarray:
        if state.shape != (self.state_dim,):
            raise ValueError(
                f"state shape {state.shape} does not match input dim {self.state_dim}"
            )
        _, z2 = self._hidden_activations(state)
        return softmax(self.w3 @ z2 + self.b3)

    def greedy_action(self, state: np.ndarray) -> int:
        _, z2 = self._hidden_activations(state)
        return int(np.argmax(self.w3 @ z2 + self.b3))

    def sample_action(self, state: np.ndarray, rng: np.random.Generator) -> int:
        return _draw(self.action_distribution(state), rng.random())

    def weighted_score_gradients(
        self, states: np.ndarray, actions: np.ndarray, weights: np.ndarray
    ) -> list[np.ndarray]:
        """sum_i weights[i] * d/dtheta log pi(actions[i] | states[i]).

        ``states`` is a [N, state_dim] matrix; the whole batch is pushed
        through one vectorised forward/backward pass.
        """
        z1 = np.tanh(states @ self.w1.T + self.b1)
        z2 = np.tanh(z1 @ self.w2.T + self.b2)
        probs = softmax(z2 @ self.w3.T + self.b3)

        d3 = probs * (-weights[:, None])
        d3[np.arange(len(actions)), actions] += weights
        gw3 = d3.T @ z2
        gb3 = d3.sum(axis=0)
        d2 = (d3 @ self.w3) * (1.0 - z2 * z2)
        gw2 = d2.T @ z1
        gb2 = d2.sum(axis=0)
        d1 = (d2 @ self.w2) * (1.0 - z1 * z1)
        gw1 = d1.T @ states
        gb1 = d1.sum(axis=0)
        return [gw1, gb1, gw2, gb2, gw3, gb3]

    def logprob_gradient(self, state: np.ndarray, action: int) -> list[np.ndarray]:
        if not 0 <= action < self.action_count:
            raise ValueError(f"invalid action {action}")
        if state.shape != (self.state_dim,):
            raise ValueError(
                f"state shape {state.shape} does not match input dim {self.state_dim}"
            )
        return self.weighted_score_gradients(
            state[None, :], np.array([action]), np.ones(1)
        )


Policy = TabularPolicy | MlpPolicy


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators plus hyperparameters."""

    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    step: int
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def initialize(cls, params: list[np.ndarray], lr: float = 3e-4) -> "AdamState":
        return cls(
            m=tuple(np.zeros_like(p) for p in params),
            v=tuple(np.zeros_like(p) for p in params),
            step=0,
            lr=lr,
        )


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam minimisation step.

    Callers performing gradient ascent negate their gradients first.
    """
    if len(params) != len(grads) or any(
        p.shape != g.shape for p, g in zip(params, grads)
    ):
        raise ValueError("parameter and gradient shapes do not match")
    t = state.step + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_params.append(p - state.lr * update)
        new_m.append(m)
        new_v.append(v)
    return new_params, replace(state, m=tuple(new_m), v=tuple(new_v), step=t)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------
#
# Flat binary container: 4-byte magic, kind byte, little-endian uint32 dims,
# then every parameter array as little-endian float64 in declaration order.


def policy_to_bytes(policy: Policy) -> bytes:
    if isinstance(policy, TabularPolicy):
        s, a = policy.logits.shape
        header = CHECKPOINT_MAGIC + struct.pack("<BII", _KIND_TABULAR, s, a)
    elif isinstance(policy, MlpPolicy):
        header = CHECKPOINT_MAGIC + struct.pack(
            "<BIII", _KIND_MLP, policy.state_dim, policy.hidden, policy.action_count
        )
    else:
        raise TypeError(f"unknown policy type {type(policy)!r}")
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in policy.parameters())
    return header + body


def policy_from_bytes(blob: bytes) -> Policy:
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a policy checkpoint (bad magic)")
    kind = blob[4]
    if kind == _KIND_TABULAR:
        s, a = struct.unpack_from("<II", blob, 5)
        offset = 5 + 8
        logits = np.frombuffer(blob, dtype="<f8", count=s * a, offset=offset)
        return TabularPolicy(logits.reshape(s, a).copy())
    if kind == _KIND_MLP:
        d, h, a = struct.unpack_from("<III", blob, 5)
        offset = 5 + 12
        shapes = [(h, d), (h,), (h, h), (h,), (a, h), (a,)]
        params = []
        for shape in shapes:
            count = int(np.prod(shape))
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            params.append(arr.reshape(shape).copy())
            offset += count * 8
        return MlpPolicy(*params)
    raise ValueError(f"unknown policy kind {kind}")


def save_policy(policy: Policy, path) -> None:
    with open(path, "wb") as fh:
        fh.write(policy_to_bytes(policy))


def load_policy(path) -> Policy:
    with open(path, "rb") as fh:
        return policy_from_bytes(fh.read())
