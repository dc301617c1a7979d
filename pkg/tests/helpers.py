"""Shared test oracles: finite differences and brute-force reference kernels.

Everything here is deliberately independent of the library's fast paths:
plain loops and direct formulas only.
"""

import numpy as np

from isac_predict.tensor import Tensor


def rel_error(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def numerical_gradient(fn, x, h=1e-5):
    """Central finite differences of scalar fn w.r.t. array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def gradcheck(build_loss, params, h=1e-5, tol=1e-4):
    """Compare analytic grads of `build_loss(params) -> Tensor` against FD.

    `params` is a dict name -> Tensor (float64). Returns the worst relative
    error over all parameters.
    """
    loss = build_loss()
    loss.backward()
    analytic = {k: t.grad.copy() for k, t in params.items()}
    worst = 0.0
    for name, t in params.items():
        def fn(x, _t=t):
            _t.data = x
            return build_loss().item()
        num = numerical_gradient(fn, t.data.copy(), h=h)
        worst = max(worst, rel_error(analytic[name], num, floor=1e-4))
    assert worst < tol, f"gradient mismatch: worst rel error {worst:.3e}"
    return worst


def matmul_oracle(a, b):
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for l in range(k):
                acc += a[i, l] * b[l, j]
            out[i, j] = acc
    return out


def conv2d_oracle(x, w, bias):
    """Direct-summation same-padded cross-correlation, [C_in,H,W] input."""
    c_in, h_dim, w_dim = x.shape
    c_out, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((c_out, h_dim, w_dim), dtype=np.float64)
    for o in range(c_out):
        for i in range(h_dim):
            for j in range(w_dim):
                acc = bias[o]
                for c in range(c_in):
                    for di in range(kh):
                        for dj in range(kw):
                            ii, jj = i + di - ph, j + dj - pw
                            if 0 <= ii < h_dim and 0 <= jj < w_dim:
                                acc += x[c, ii, jj] * w[o, c, di, dj]
                out[o, i, j] = acc
    return out


def softmax_oracle(x, axis=-1):
    e = np.exp(x)
    return e / e.sum(axis=axis, keepdims=True)


def dft_oracle(x):
    """O(K^2) unitary DFT of a 1-D complex vector."""
    k = len(x)
    out = np.zeros(k, dtype=np.complex128)
    for m in range(k):
        for n in range(k):
            out[m] += x[n] * np.exp(-2j * np.pi * m * n / k)
    return out / np.sqrt(k)


def attention_oracle(q, k, v, heads, causal=False):
    """Brute-force per-head attention loop. q, k, v: [P, D] post-projection."""
    p, d = q.shape
    dh = d // heads
    out = np.zeros((p, d))
    for h in range(heads):
        qs = q[:, h * dh:(h + 1) * dh]
        ks = k[:, h * dh:(h + 1) * dh]
        vs = v[:, h * dh:(h + 1) * dh]
        for i in range(p):
            logits = np.array([qs[i] @ ks[j] / np.sqrt(dh) for j in range(p)])
            if causal:
                logits[i + 1:] = -np.inf
            w = np.exp(logits - logits.max())
            w /= w.sum()
            out[i, h * dh:(h + 1) * dh] = sum(w[j] * vs[j] for j in range(p))
    return out


def make_param(rng, shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)
