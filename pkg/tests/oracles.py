"""Independent reference computations used by the unit and acceptance tests."""
import itertools

import numpy as np
from scipy.special import expit, log_expit

from posim.data import LongDataset


def weighted_loglik(beta, X, y, w):
    eta = X @ beta
    return float(np.sum(w * (y * log_expit(eta) + (1 - y) * log_expit(-eta))))


def grid_search_mle(X, y, w, lo=-10.0, hi=10.0, points=41, tol=1e-7):
    """Maximize the weighted log-likelihood by repeatedly refined exhaustive grids."""
    X, y, w = (np.asarray(a, dtype=float) for a in (X, y, w))
    p = X.shape[1]
    center = np.zeros(p)
    half = (hi - lo) / 2
    center[:] = (hi + lo) / 2
    while half > tol:
        axes = [np.linspace(c - half, c + half, points) for c in center]
        grid = np.array(list(itertools.product(*axes)))
        eta = grid @ X.T
        ll = (w * (y * log_expit(eta) + (1 - y) * log_expit(-eta))).sum(axis=1)
        center = grid[np.argmax(ll)]
        half *= 4.0 / (points - 1)
    return center


def direct_aalen_increments(data: LongDataset, w_rows):
    """Per-event weighted least squares solved from scratch at every event time.

    Returns ``{event_time: increment vector over [1, a_k, ..., a_0]}``.
    """
    H = data.subject_history("A", fill=0).astype(float)
    out = {}
    for e in np.flatnonzero(data.Y_next == 1):
        t = data.T[e]
        k = int(np.floor(t))
        risk = np.flatnonzero((data.k == k) & (data.T >= t))
        X = np.column_stack([np.ones(risk.size)] + [H[data.id[risk], k - j] for j in range(k + 1)])
        dN = (risk == e).astype(float)
        W = np.diag(w_rows[risk])
        G = X.T @ W @ X
        if np.linalg.matrix_rank(G) < G.shape[0]:
            continue
        out[float(t)] = np.linalg.solve(G, X.T @ W @ dN)
    return out


def hand_stabilized_weights(rows):
    """Running product of num/den ratios, subject by subject, in plain Python.

    ``rows`` is a list of ``(id, k, p_num_observed, p_den_observed)`` sorted by id, k.
    """
    out = []
    current_id, running = None, 1.0
    for sid, _, pn, pd in rows:
        if sid != current_id:
            current_id, running = sid, 1.0
        running = running * (pn / pd)
        out.append(running)
    return out


def shape3_gamma_cdf(x, scale):
    y = x / scale
    return 1.0 - np.exp(-y) * (1.0 + y + y * y / 2.0)


def bisect_shape3(u, scale, lo=0.0, hi=1e5, iters=200):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if shape3_gamma_cdf(mid, scale) < u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def micro_study_two() -> LongDataset:
    """Three subjects, hand-written, with treatment switching both ways."""
    rows = [
        # id, k, A, L, Y_next, T
        (0, 0, 0, 0.5, 0, 5.0),
        (0, 1, 1, 1.0, 0, 5.0),
        (0, 2, 0, 0.2, 0, 5.0),
        (0, 3, 1, 1.5, 0, 5.0),
        (0, 4, 1, 0.3, 0, 5.0),
        (1, 0, 1, 0.1, 0, 2.4),
        (1, 1, 0, 2.0, 0, 2.4),
        (1, 2, 0, 0.7, 1, 2.4),
        (2, 0, 0, 1.2, 0, 5.0),
        (2, 1, 0, 0.4, 0, 5.0),
        (2, 2, 1, 0.9, 0, 5.0),
        (2, 3, 0, 1.1, 0, 5.0),
        (2, 4, 1, 0.6, 0, 5.0),
    ]
    a = np.array(rows)
    return LongDataset(
        study=2,
        n=3,
        K=4,
        id=a[:, 0].astype(np.int64),
        k=a[:, 1].astype(np.int64),
        A=a[:, 2].astype(np.int64),
        L=a[:, 3],
        k_star=np.full(len(rows), -1, dtype=np.int64),
        Y_next=a[:, 4].astype(np.int64),
        forced=np.zeros(len(rows), dtype=bool),
        U=np.zeros(len(rows)),
        T=a[:, 5],
    )


def expit_np(x):
    return expit(np.asarray(x, dtype=float))
