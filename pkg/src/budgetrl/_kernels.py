"""Compiled episode runner for the lava grid.

Running a 200-step gridworld episode through the object-level environment
and network costs ~10us per step in numpy call overhead alone; the training
budgets here need well under that on a single core. This module fuses the
grid dynamics and the network forward pass into one jitted function. The
semantics must match ``envs.PuddleGridEnv.step`` and
``policy.MlpPolicy.action_distribution`` exactly; tests replay kernel action
sequences through the object path to enforce that.

Falls back to plain Python (slow but identical) when numba is unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


@njit(cache=True)
def grid_episode(
    w1,
    b1,
    w2,
    b2,
    w3,
    b3,
    lava,
    width,
    height,
    x0,
    y0,
    o0,
    gx,
    gy,
    horizon,
    gamma,
    uniforms,
    greedy,
    xs,
    ys,
    ors,
    acts,
    costs,
):
    """Run one episode; returns (length, reached, disc_return, disc_cost).

    Writes the pre-action pose, the action and the step cost of step t into
    the output arrays. ``uniforms`` must hold ``horizon`` draws when
    ``greedy`` is false; draw t resolves the action of step t.
    """
    x, y, o = x0, y0, o0
    fgx = gx / width
    fgy = gy / height
    feat = np.zeros(8)
    disc_ret = 0.0
    disc_cost = 0.0
    g = 1.0
    t = 0
    reached = False
    while True:
        xs[t] = x
        ys[t] = y
        ors[t] = o
        feat[0] = x / width
        feat[1] = y / height
        feat[2] = 0.0
        feat[3] = 0.0
        feat[4] = 0.0
        feat[5] = 0.0
        feat[2 + o] = 1.0
        feat[6] = fgx
        feat[7] = fgy
        z1 = np.tanh(w1 @ feat + b1)
        z2 = np.tanh(w2 @ z1 + b2)
        logits = w3 @ z2 + b3
        if greedy:
            a = int(np.argmax(logits))
        else:
            m = logits.max()
            e = np.exp(logits - m)
            p = e / e.sum()
            u = uniforms[t]
            a = 0
            acc = p[0]
            while u >= acc and a < 2:
                a += 1
                acc += p[a]
        acts[t] = a
        if a == 0:
            if o == 0:
                nx, ny = x, y - 1
            elif o == 1:
                nx, ny = x + 1, y
            elif o == 2:
                nx, ny = x, y + 1
            else:
                nx, ny = x - 1, y
            if 0 <= nx < width and 0 <= ny < height:
                x, y = nx, ny
        elif a == 1:
            o = (o - 1) % 4
        else:
            o = (o + 1) % 4
        c = 0.0
        if lava[y, x]:
            c = 1.0
        costs[t] = c
        disc_cost += g * c
        t += 1
        if x == gx and y == gy:
            reached = True
            disc_ret = g
            return t, reached, disc_ret, disc_cost
        if t >= horizon:
            return t, reached, disc_ret, disc_cost
        g *= gamma
