"""Slow, obviously-correct reference implementations used only by tests."""

import math

import numpy as np


def conv2d_loops(x, w, b, stride, pad):
    n, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for o in range(cout):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0 if b is None else float(b[o])
                for c in range(cin):
                    for ki in range(k):
                        for kj in range(k):
                            r, s = i * stride + ki - pad, j * stride + kj - pad
                            if 0 <= r < h and 0 <= s < wd:
                                acc += float(x[0, c, r, s]) * float(w[o, c, ki, kj])
                out[0, o, i, j] = acc
    return out


def conv_transpose2d_loops(x, w, b, stride, pad, output_padding=0):
    """Scatter definition: each input site stamps the kernel onto the output."""
    n, cin, h, wd = x.shape
    _, cout, k, _ = w.shape
    ho = (h - 1) * stride - 2 * pad + k + output_padding
    wo = (wd - 1) * stride - 2 * pad + k + output_padding
    out = np.zeros((n, cout, ho, wo))
    for c in range(cin):
        for i in range(h):
            for j in range(wd):
                for o in range(cout):
                    for ki in range(k):
                        for kj in range(k):
                            r, s = i * stride + ki - pad, j * stride + kj - pad
                            if 0 <= r < ho and 0 <= s < wo:
                                out[0, o, r, s] += float(x[0, c, i, j]) * float(w[c, o, ki, kj])
    if b is not None:
        out += np.asarray(b, np.float64)[None, :, None, None]
    return out


def depthwise_loops(x, w, b, pad):
    c = x.shape[1]
    out = np.zeros(x.shape)
    for ch in range(c):
        out[:, ch : ch + 1] = conv2d_loops(x[:, ch : ch + 1], w[ch : ch + 1], None if b is None else b[ch : ch + 1], 1, pad)
    return out


def rk4_zoh(a, b, delta, steps=2000):
    """Integrate h' = a h + b u over one step of length delta with RK4.

    Returns (A_bar, B_bar): the response to h(0) = 1 with u = 0, and the
    response to h(0) = 0 with a unit input held constant.
    """
    def run(h, u):
        dt = delta / steps
        f = lambda v: a * v + b * u
        for _ in range(steps):
            k1 = f(h)
            k2 = f(h + 0.5 * dt * k1)
            k3 = f(h + 0.5 * dt * k2)
            k4 = f(h + dt * k3)
            h = h + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return h

    return run(1.0, 0.0), run(0.0, 1.0)


def softplus_scalar(v):
    return max(v, 0.0) + math.log1p(math.exp(-abs(v)))


def scan_loops(x, params):
    """Token-by-token recurrence with scalar math, no shared helpers."""
    A = np.asarray(params.A, np.float64)
    Wd = np.asarray(params.delta_proj, np.float64)
    bd = np.asarray(params.delta_bias, np.float64)
    Wb = np.asarray(params.B_proj, np.float64)
    Wc = np.asarray(params.C_proj, np.float64)
    Dk = np.asarray(params.D_skip, np.float64)
    L, D = x.shape
    N = A.shape[1]
    h = np.zeros((D, N))
    y = np.zeros((L, D))
    for t in range(L):
        xt = [float(v) for v in x[t]]
        Bt = [sum(Wb[n, d] * xt[d] for d in range(D)) for n in range(N)]
        Ct = [sum(Wc[n, d] * xt[d] for d in range(D)) for n in range(N)]
        for d in range(D):
            dt = softplus_scalar(sum(Wd[d, e] * xt[e] for e in range(D)) + bd[d])
            acc = 0.0
            for n in range(N):
                z = dt * A[d, n]
                a_bar = math.exp(z)
                b_bar = (math.expm1(z) / z if z != 0 else 1.0) * dt * Bt[n]
                h[d, n] = a_bar * h[d, n] + b_bar * xt[d]
                acc += Ct[n] * h[d, n]
            y[t, d] = acc + Dk[d] * xt[d]
    return y


def full_attention(tokens, weights, prefix, heads, head_dim):
    """Multi-head attention over all tokens (T, C) with explicit per-head loops."""
    x = np.asarray(tokens, np.float64)
    t, c = x.shape
    qkv = x @ np.asarray(weights[f"{prefix}.qkv.weight"], np.float64).T + weights[f"{prefix}.qkv.bias"]
    q, k, v = qkv[:, :c], qkv[:, c : 2 * c], qkv[:, 2 * c :]
    out = np.zeros((t, c))
    for hd in range(heads):
        sl = slice(hd * head_dim, (hd + 1) * head_dim)
        for i in range(t):
            logits = np.array([q[i, sl] @ k[j, sl] for j in range(t)]) / math.sqrt(head_dim)
            e = np.exp(logits - logits.max())
            p = e / e.sum()
            out[i, sl] = sum(p[j] * v[j, sl] for j in range(t))
    return out @ np.asarray(weights[f"{prefix}.proj.weight"], np.float64).T + weights[f"{prefix}.proj.bias"]


def random_ssm(rng, d, n):
    from sscodec.ssm import SsmParams

    return SsmParams(
        A=-rng.uniform(0.5, 4.0, (d, n)),
        B_proj=rng.normal(scale=0.5, size=(n, d)),
        C_proj=rng.normal(scale=0.5, size=(n, d)),
        delta_proj=rng.normal(scale=0.3, size=(d, d)),
        delta_bias=rng.uniform(-3.0, 0.0, d),
        D_skip=rng.normal(size=d),
    )
