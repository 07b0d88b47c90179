# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_kernels_py``.

Matrix products go through the BLAS that scipy links against, called
directly on the row-major buffers; bias adds, bias-gradient sums and the
tanh derivative are plain loops, so no temporaries are created.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

BACKEND = "cython"
_np_tanh = np.tanh


cdef inline void _gemm(char ta, char tb, int m, int n, int k, double alpha, double* a, int lda,
                       double* b, int ldb, double beta, double* c, int ldc) noexcept nogil:
    dgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


def mlp_forward(list weights, list biases, cnp.ndarray x):
    cdef Py_ssize_t n_layers = len(weights)
    cdef int batch = <int>x.shape[0]
    cdef int fan_in, fan_out, r, j
    cdef double[:, ::1] w
    cdef double[::1] b
    cdef double[:, ::1] h = x
    cdef double[:, ::1] z
    cdef list acts = []
    cdef Py_ssize_t i
    cdef cnp.ndarray out
    for i in range(n_layers):
        w = weights[i]
        b = biases[i]
        fan_out = <int>w.shape[0]
        fan_in = <int>w.shape[1]
        out = np.empty((batch, fan_out))
        z = out
        with nogil:
            for r in range(batch):
                for j in range(fan_out):
                    z[r, j] = b[j]
            # row-major Z (batch, out) is column-major Z^T = W H^T
            _gemm(b'T', b'N', fan_out, batch, fan_in, 1.0, &w[0, 0], fan_in,
                  &h[0, 0], fan_in, 1.0, &z[0, 0], fan_out)
        if i < n_layers - 1:
            # numpy's SIMD tanh beats any scalar libm loop here
            _np_tanh(out, out=out)
            acts.append(out)
        h = z
    return out, acts


def mlp_backward(list weights, cnp.ndarray x, list acts, cnp.ndarray gout, list gws, list gbs):
    cdef Py_ssize_t n_layers = len(weights)
    cdef int batch = <int>x.shape[0]
    cdef int fan_in, fan_out, r, j
    cdef double[:, ::1] w, gw, inp, a
    cdef double[::1] gb
    cdef double[:, ::1] g = gout
    cdef double[:, ::1] gprev
    cdef double v
    cdef Py_ssize_t i
    cdef cnp.ndarray gprev_arr = gout
    for i in range(n_layers - 1, -1, -1):
        w = weights[i]
        gw = gws[i]
        gb = gbs[i]
        inp = acts[i - 1] if i > 0 else x
        fan_out = <int>w.shape[0]
        fan_in = <int>w.shape[1]
        gprev_arr = np.empty((batch, fan_in))
        gprev = gprev_arr
        with nogil:
            # dW (out, in) row-major == column-major (in, out) = inp^T g
            _gemm(b'N', b'T', fan_in, fan_out, batch, 1.0, &inp[0, 0], fan_in,
                  &g[0, 0], fan_out, 0.0, &gw[0, 0], fan_in)
            for j in range(fan_out):
                gb[j] = 0.0
            for r in range(batch):
                for j in range(fan_out):
                    gb[j] += g[r, j]
            # g_prev (batch, in) row-major == column-major (in, batch) = W^T g^T
            _gemm(b'N', b'N', fan_in, batch, fan_out, 1.0, &w[0, 0], fan_in,
                  &g[0, 0], fan_out, 0.0, &gprev[0, 0], fan_in)
        if i > 0:
            a = acts[i - 1]
            with nogil:
                for r in range(batch):
                    for j in range(fan_in):
                        v = a[r, j]
                        gprev[r, j] *= 1.0 - v * v
        g = gprev
    return gprev_arr


def gae(cnp.ndarray rewards_arr, cnp.ndarray values_arr, double gamma, double lam):
    cdef double[:, ::1] rewards = rewards_arr
    cdef double[:, ::1] values = values_arr
    cdef Py_ssize_t n = rewards.shape[0], t_len = rewards.shape[1], i, t
    cdef cnp.ndarray adv_arr = np.empty((n, t_len))
    cdef double[:, ::1] adv = adv_arr
    cdef double running, next_value, delta
    with nogil:
        for i in range(n):
            running = 0.0
            next_value = 0.0
            for t in range(t_len - 1, -1, -1):
                delta = rewards[i, t] + gamma * next_value - values[i, t]
                running = delta + gamma * lam * running
                adv[i, t] = running
                next_value = values[i, t]
    return adv_arr


def adam_update(double[::1] param, double[::1] grad, double[::1] m, double[::1] v, double scale,
                double beta1, double beta2, double eps):
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double g
    with nogil:
        for i in range(n):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * (g * g)
            param[i] -= scale * m[i] / (sqrt(v[i]) + eps)


cdef inline double _clip(double x, double lo, double hi) noexcept nogil:
    return lo if x < lo else (hi if x > hi else x)


def point_mass_step(cnp.ndarray obs_arr, cnp.ndarray goals_arr, cnp.ndarray actions_arr, low_arr, high_arr,
                    double max_step, double dt, double damping, bint grasp, double grasp_radius,
                    double success_radius):
    cdef double[:, ::1] obs = np.ascontiguousarray(obs_arr, dtype=np.float64)
    cdef double[:, ::1] goals = np.ascontiguousarray(goals_arr, dtype=np.float64)
    cdef double[:, ::1] actions = np.ascontiguousarray(actions_arr, dtype=np.float64)
    cdef double[::1] low = np.ascontiguousarray(low_arr, dtype=np.float64)
    cdef double[::1] high = np.ascontiguousarray(high_arr, dtype=np.float64)
    cdef Py_ssize_t n = obs.shape[0], i, k
    cdef cnp.ndarray nxt_arr = np.empty((n, obs.shape[1]))
    cdef cnp.ndarray rew_arr = np.empty(n, dtype=np.int64)
    cdef double[:, ::1] nxt = nxt_arr
    cdef long long[::1] rew = rew_arr
    cdef double moved[3]
    cdef double aperture, d, e, p
    cdef bint held, ok
    with nogil:
        for i in range(n):
            for k in range(3):
                p = _clip(obs[i, k] + max_step * _clip(actions[i, k], -1.0, 1.0), low[k], high[k])
                moved[k] = p - obs[i, k]
                nxt[i, k] = p
                nxt[i, 3 + k] = damping * obs[i, 3 + k] + (1.0 - damping) * moved[k] / dt
            ok = True
            if grasp:
                aperture = 0.5 * (_clip(actions[i, 3], -1.0, 1.0) + 1.0)
                d = 0.0
                for k in range(3):
                    e = obs[i, k] - obs[i, 6 + k]
                    d += e * e
                held = aperture < 0.5 and sqrt(d) <= grasp_radius
                for k in range(3):
                    if held:
                        nxt[i, 6 + k] = _clip(obs[i, 6 + k] + moved[k], low[k], high[k])
                    else:
                        nxt[i, 6 + k] = obs[i, 6 + k]
                if not held:
                    nxt[i, 8] = low[2]
                nxt[i, 9] = aperture
                d = 0.0
                for k in range(3):
                    e = nxt[i, k] - nxt[i, 6 + k]
                    d += e * e
                ok = aperture < 0.5 and sqrt(d) <= grasp_radius
                d = 0.0
                for k in range(3):
                    e = nxt[i, 6 + k] - goals[i, k]
                    d += e * e
            else:
                d = 0.0
                for k in range(3):
                    e = nxt[i, k] - goals[i, k]
                    d += e * e
            rew[i] = 0 if (ok and sqrt(d) <= success_radius) else -1
    return nxt_arr, rew_arr
