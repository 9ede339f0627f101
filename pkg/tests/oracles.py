"""Straight-line scalar reimplementations used as independent test oracles.

Everything here works on nested Python lists with ``math`` only, so it shares
no code path with the vectorized implementation under test.
"""

import math


def to_list(arr):
    return arr.tolist() if hasattr(arr, "tolist") else arr


def mat_vec_row(x, w, b=None):
    """Row vector x (len n) times matrix w (n x m) plus optional bias."""
    n, m = len(w), len(w[0])
    out = []
    for j in range(m):
        acc = 0.0
        for i in range(n):
            acc += x[i] * w[i][j]
        if b is not None:
            acc += b[j]
        out.append(acc)
    return out


def softmax_list(xs):
    mx = max(xs)
    es = [math.exp(v - mx) for v in xs]
    s = sum(es)
    return [e / s for e in es]


def layer_norm_row(x, gamma, beta, eps):
    n = len(x)
    mu = sum(x) / n
    var = sum((v - mu) ** 2 for v in x) / n
    return [(x[i] - mu) / math.sqrt(var + eps) * gamma[i] + beta[i] for i in range(n)]


def linear_params(layer):
    w = to_list(layer.weight.data)
    b = to_list(layer.bias.data) if layer.bias is not None else None
    return w, b


def msa_tokens(tokens, attn, n_heads):
    """Multi-head self-attention over a list of token rows."""
    wq, bq = linear_params(attn.q)
    wk, bk = linear_params(attn.k)
    wv, bv = linear_params(attn.v)
    wo, bo = linear_params(attn.o)
    d = len(tokens[0])
    dh = d // n_heads
    q = [mat_vec_row(t, wq, bq) for t in tokens]
    k = [mat_vec_row(t, wk, bk) for t in tokens]
    v = [mat_vec_row(t, wv, bv) for t in tokens]
    n = len(tokens)
    concat = [[0.0] * d for _ in range(n)]
    for h in range(n_heads):
        lo, hi = h * dh, (h + 1) * dh
        for i in range(n):
            scores = []
            for j in range(n):
                s = 0.0
                for c in range(lo, hi):
                    s += q[i][c] * k[j][c]
                scores.append(s / math.sqrt(dh))
            w = softmax_list(scores)
            for c in range(lo, hi):
                concat[i][c] = sum(w[j] * v[j][c] for j in range(n))
    return [mat_vec_row(row, wo, bo) for row in concat]


def encode_tokens(tokens, layers, n_heads):
    x = [list(r) for r in tokens]
    for layer in layers:
        g, b = to_list(layer.ln.gamma.data), to_list(layer.ln.beta.data)
        normed = [layer_norm_row(r, g, b, layer.ln.eps) for r in x]
        att = msa_tokens(normed, layer.attn, n_heads)
        x = [[att[i][c] + x[i][c] for c in range(len(x[i]))] for i in range(len(x))]
    return x


def mhca_layer(f, a, p, n_heads, weight_mode):
    """Returns (h_v, h_a, per-head dict) for one cross-attention layer."""
    wq, _ = linear_params(p.q)
    wk, _ = linear_params(p.k)
    wv, _ = linear_params(p.v)
    wo, _ = linear_params(p.o)
    d = len(f)
    dh = d // n_heads
    qf, kf, vf = mat_vec_row(f, wq), mat_vec_row(f, wk), mat_vec_row(f, wv)
    qa, ka, va = mat_vec_row(a, wq), mat_vec_row(a, wk), mat_vec_row(a, wv)
    cat_f, cat_a = [0.0] * d, [0.0] * d
    heads = []
    for h in range(n_heads):
        sl = range(h * dh, (h + 1) * dh)

        def dot(x, y):
            return sum(x[c] * y[c] for c in sl) / math.sqrt(dh)

        ef_f, ef_a = math.exp(dot(qf, kf)), math.exp(dot(qf, ka))
        ea_f, ea_a = math.exp(dot(qa, kf)), math.exp(dot(qa, ka))
        b_ff, b_fa = ef_f / (ef_f + ef_a), ef_a / (ef_f + ef_a)
        b_af, b_aa = ea_f / (ea_f + ea_a), ea_a / (ea_f + ea_a)
        if weight_mode == "literal":
            wf, wa = b_ff + b_fa, b_aa + b_af
        else:
            wf, wa = b_ff + b_af, b_aa + b_fa
        heads.append({"ff": b_ff, "fa": b_fa, "af": b_af, "aa": b_aa, "wf": wf, "wa": wa})
        for c in sl:
            cat_f[c] = wf * vf[c]
            cat_a[c] = wa * va[c]
    mf, ma = mat_vec_row(cat_f, wo), mat_vec_row(cat_a, wo)
    lf = (to_list(p.ln_f.gamma.data), to_list(p.ln_f.beta.data))
    la = (to_list(p.ln_a.gamma.data), to_list(p.ln_a.beta.data))
    h_v = layer_norm_row([mf[c] + f[c] for c in range(d)], *lf, p.ln_f.eps)
    h_a = layer_norm_row([ma[c] + a[c] for c in range(d)], *la, p.ln_a.eps)
    return h_v, h_a, heads


def dwf(f, a, params, n_heads, weight_mode):
    h_v, h_a = list(f), list(a)
    all_heads = []
    for layer in params.layers:
        h_v, h_a, heads = mhca_layer(h_v, h_a, layer, n_heads, weight_mode)
        all_heads.append(heads)
    wf = sum(h["wf"] for h in all_heads[-1]) / n_heads
    wa = sum(h["wa"] for h in all_heads[-1]) / n_heads
    return [wf * x for x in f] + [wa * x for x in a], wf, wa, all_heads


def dft_power(frame, n_fft):
    """|X_k|^2 for k = 0..n_fft/2 of a zero-padded frame, by the O(N^2) definition."""
    out = []
    for k in range(n_fft // 2 + 1):
        re_terms, im_terms = [], []
        for n, x in enumerate(frame):
            ang = 2.0 * math.pi * ((k * n) % n_fft) / n_fft
            re_terms.append(x * math.cos(ang))
            im_terms.append(-x * math.sin(ang))
        re, im = math.fsum(re_terms), math.fsum(im_terms)
        out.append(re * re + im * im)
    return out


def mfcc_frames(samples, rate, frame_len_s, shift_s, n_mfcc, n_mels, n_fft, fmin, fmax, floor):
    L = int(round(frame_len_s * rate))
    S = int(round(shift_s * rate))
    window = [0.5 - 0.5 * math.cos(2 * math.pi * n / L) for n in range(L)]

    def mel(f):
        return 2595.0 * math.log10(1.0 + f / 700.0)

    def inv_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    lo_m, hi_m = mel(fmin), mel(fmax)
    edges = [inv_mel(lo_m + (hi_m - lo_m) * i / (n_mels + 1)) for i in range(n_mels + 2)]
    bins = [k * rate / n_fft for k in range(n_fft // 2 + 1)]
    n_frames = (len(samples) - L) // S + 1
    rows = []
    for t in range(n_frames):
        frame = [samples[t * S + n] * window[n] for n in range(L)]
        power = dft_power(frame, n_fft)
        logmel = []
        for m in range(n_mels):
            left, centre, right = edges[m], edges[m + 1], edges[m + 2]
            e = 0.0
            for k, f in enumerate(bins):
                if left < f <= centre:
                    w = (f - left) / (centre - left)
                elif centre < f < right:
                    w = (right - f) / (right - centre)
                else:
                    w = 0.0
                e += w * power[k]
            logmel.append(math.log(max(e, floor)))
        coeffs = []
        for k in range(n_mfcc):
            scale = math.sqrt(1.0 / n_mels) if k == 0 else math.sqrt(2.0 / n_mels)
            coeffs.append(scale * sum(logmel[n] * math.cos(math.pi * k * (2 * n + 1) / (2 * n_mels))
                                      for n in range(n_mels)))
        rows.append(coeffs)
    return rows


def auc_pairs(scores, labels):
    """Fraction of (positive, negative) pairs ranked correctly, ties counted as 1/2."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))
