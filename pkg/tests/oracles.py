"""Independent reference implementations used as test oracles.

These avoid the package's vectorized code paths in favour of plain loops with
math.fsum sums. Inverses come from the adjugate and eigenvalues from the roots
of the characteristic polynomial.
"""

import math

import numpy as np


def brute_force_neighborhood(video, frame, position, spatial_radius, temporal_radius, causal=False):
    """Sorted (frame, index) pairs inside the cylinder, by exhaustive scan."""
    out = []
    for t, f in enumerate(video.frames):
        off = t - frame
        if abs(off) > temporal_radius or (causal and off > 0):
            continue
        for i, p in enumerate(f.positions):
            if math.dist(p, position) <= spatial_radius:
                out.append((t, i))
    return out


def brute_force_knn(video, frame, position, k, temporal_radius):
    cands = []
    for t, f in enumerate(video.frames):
        if abs(t - frame) > temporal_radius:
            continue
        for i, p in enumerate(f.positions):
            cands.append((math.dist(p, position), t - frame, i, t))
    cands.sort()
    return [(t, i) for _, _, i, t in cands[:k]]


def two_pass_stats(points):
    """Population mean and covariance with compensated (fsum) two-pass sums."""
    pts = [list(map(float, p)) for p in points]
    n = len(pts)
    mu = [math.fsum(p[j] for p in pts) / n for j in range(3)]
    cov = [[math.fsum((p[a] - mu[a]) * (p[b] - mu[b]) for p in pts) / n for b in range(3)]
           for a in range(3)]
    return np.array(mu), np.array(cov)


def adjugate_inverse(m):
    m = np.asarray(m, dtype=float)
    a, b, c = m[0]
    d, e, f = m[1]
    g, h, i = m[2]
    det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
    adj = np.array([
        [e * i - f * h, c * h - b * i, b * f - c * e],
        [f * g - d * i, a * i - c * g, c * d - a * f],
        [d * h - e * g, b * g - a * h, a * e - b * d],
    ])
    return adj / det


def charpoly_eigvals(m):
    """Eigenvalues of a symmetric 3x3 from the roots of its characteristic cubic, descending."""
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    c2 = (m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0] + m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
          + m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
    det = np.linalg.det(m)
    roots = np.roots([1.0, -tr, c2, -det])
    return np.sort(roots.real)[::-1]


def regularize(cov, eps=1e-6, floor=1e-9):
    return cov + eps * max(np.trace(cov) / 3.0, floor) * np.eye(3)


def logistic(x):
    return 1.0 / (1.0 + math.exp(-x))


def naive_weight(x, mu, reg, sigma, form="gaussian_rbf"):
    d = [x[j] - mu[j] for j in range(3)]
    inv = adjugate_inverse(reg)
    maha = sum(d[a] * inv[a, b] * d[b] for a in range(3) for b in range(3))
    sq = sum(v * v for v in d)
    if form == "gaussian_rbf":
        geo = math.exp(-sq / (2 * sigma * sigma))
    else:
        geo = 1.0 / math.sqrt(1.0 + sq / (sigma * sigma))
    return geo * math.exp(-0.5 * maha)


def naive_uggc(points, feats, base_radius=0.3, multipliers=(0.5, 1.0, 3.0),
               threshold=math.log(100.0), sharpness=1.0, eps=1e-6, floor=1e-9):
    """UGGC of one neighborhood given its member positions and features."""
    mu, cov = two_pass_stats(points)
    reg = regularize(cov, eps, floor)
    eig = charpoly_eigvals(reg)
    cond = max(eig[0] / eig[-1], 1.0)
    alpha = logistic(sharpness * (threshold - math.log(cond)))
    per_scale = []
    for m in multipliers:
        sigma = m * base_radius
        ws = [naive_weight(p, mu, reg, sigma) for p in points]
        total = math.fsum(ws)
        d = len(feats[0])
        per_scale.append([math.fsum(w * f[j] for w, f in zip(ws, feats)) / total for j in range(d)])
    std = per_scale[int(np.argmin(np.abs(np.log(multipliers))))]
    rob = per_scale[-1]
    out = [alpha * a + (1 - alpha) * b for a, b in zip(std, rob)]
    return np.array(out), alpha, cond, np.array(per_scale)


def naive_attention(q, k, v, frames_q, frames_k, heads, betas, s, phi=lambda u: -u):
    """Explicit-loop multi-head attention with temporal bias; q/k/v are (L, d) lists."""
    q, k, v = (np.asarray(a, dtype=float) for a in (q, k, v))
    lq, d = q.shape
    lk = k.shape[0]
    dh = d // heads
    dv = v.shape[1] // heads
    out = np.zeros((lq, v.shape[1]))
    for h in range(heads):
        for i in range(lq):
            logits = []
            for j in range(lk):
                dot = sum(q[i, h * dh + c] * k[j, h * dh + c] for c in range(dh))
                logits.append(dot / math.sqrt(dh) + betas[h] * phi(s * abs(frames_q[i] - frames_k[j])))
            mx = max(logits)
            ex = [math.exp(x - mx) for x in logits]
            z = math.fsum(ex)
            for c in range(dv):
                out[i, h * dv + c] = math.fsum(e / z * v[j, h * dv + c] for j, e in enumerate(ex))
    return out
