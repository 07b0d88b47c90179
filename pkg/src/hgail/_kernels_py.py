"""Pure numpy implementations of the numeric kernels.

These are the reference versions. ``hgail._kernels`` (Cython) provides the
same functions with identical signatures; :mod:`hgail.kernels` picks one at
import time.
"""

import numpy as np

BACKEND = "python"


def mlp_forward(weights, biases, x):
    """Batched forward pass of a tanh MLP with a linear output layer.

    ``x`` has shape (batch, in). Returns the output (batch, out) and the list
    of post-tanh hidden activations, one per hidden layer.
    """
    acts = []
    h = x
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w.T
        z += b
        if i < last:
            h = np.tanh(z, out=z)
            acts.append(h)
        else:
            h = z
    return h, acts


def mlp_backward(weights, x, acts, gout, gws, gbs):
    """Reverse pass matching :func:`mlp_forward`.

    Parameter gradients (summed over the batch) are written into the
    preallocated ``gws``/``gbs``; the input gradient is returned.
    """
    n = len(weights)
    g = gout
    for i in range(n - 1, -1, -1):
        inp = acts[i - 1] if i > 0 else x
        np.matmul(g.T, inp, out=gws[i])
        np.sum(g, axis=0, out=gbs[i])
        g = g @ weights[i]
        if i > 0:
            a = acts[i - 1]
            g *= 1.0 - a * a
    return g


def gae(rewards, values, gamma, lam):
    """Generalized advantage estimates for fixed-length episodes.

    ``rewards`` and ``values`` are (n_episodes, T). The value after the last
    step is taken as 0 (episode end).
    """
    n, t_len = rewards.shape
    adv = np.empty_like(rewards)
    running = np.zeros(n)
    next_value = np.zeros(n)
    for t in range(t_len - 1, -1, -1):
        delta = rewards[:, t] + gamma * next_value - values[:, t]
        running = delta + gamma * lam * running
        adv[:, t] = running
        next_value = values[:, t]
    return adv


def adam_update(param, grad, m, v, scale, beta1, beta2, eps):
    """In-place Adam step with the bias corrections folded into ``scale``."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    param -= scale * m / (np.sqrt(v) + eps)


def point_mass_step(obs, goals, actions, low, high, max_step, dt, damping, grasp, grasp_radius,
                    success_radius):
    """One step of the reach/grasp point mass for a batch of states.

    Returns the next observations and the sparse rewards (0 on success, -1
    otherwise).
    """
    pos = obs[:, 0:3]
    disp = max_step * np.clip(actions[:, 0:3], -1.0, 1.0)
    new_pos = np.clip(pos + disp, low, high)
    moved = new_pos - pos
    nxt = np.empty_like(obs)
    nxt[:, 0:3] = new_pos
    nxt[:, 3:6] = damping * obs[:, 3:6] + (1.0 - damping) * moved / dt
    if grasp:
        aperture = 0.5 * (np.clip(actions[:, 3], -1.0, 1.0) + 1.0)
        obj = obs[:, 6:9]
        held = (aperture < 0.5) & (np.sqrt(np.sum((pos - obj) ** 2, axis=1)) <= grasp_radius)
        carried = np.clip(obj + moved, low, high)
        dropped = obj.copy()
        dropped[:, 2] = low[2]
        nxt[:, 6:9] = np.where(held[:, None], carried, dropped)
        nxt[:, 9] = aperture
        achieved = nxt[:, 6:9]
        ok = (nxt[:, 9] < 0.5) & (np.sqrt(np.sum((new_pos - achieved) ** 2, axis=1)) <= grasp_radius)
    else:
        achieved = new_pos
        ok = np.ones(len(obs), dtype=bool)
    ok &= np.sqrt(np.sum((achieved - goals) ** 2, axis=1)) <= success_radius
    rewards = np.where(ok, 0, -1).astype(np.int64)
    return nxt, rewards
