"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def batch_cosine(q_ids, q_mw, ids, mw, offsets):
    n_rows = len(offsets) - 1
    out = np.zeros(n_rows, dtype=np.float64)
    if n_rows == 0 or len(q_ids) == 0:
        return out
    qn = np.sqrt(np.dot(q_mw, q_mw))
    if qn == 0.0:
        return out
    # ids are sorted within the query, so searchsorted finds shared APs
    pos = np.searchsorted(q_ids, ids)
    pos[pos >= len(q_ids)] = 0
    hit = q_ids[pos] == ids
    contrib = np.where(hit, q_mw[pos] * mw, 0.0)
    row_of = np.repeat(np.arange(n_rows), np.diff(offsets))
    dot = np.bincount(row_of, weights=contrib, minlength=n_rows)
    sq = np.bincount(row_of, weights=mw * mw, minlength=n_rows)
    rn = np.sqrt(sq)
    ok = (dot > 0.0) & (rn > 0.0)
    out[ok] = np.minimum(dot[ok] / (qn * rn[ok]), 1.0)
    return out


def match_counts(train, query):
    if train.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return (train == query[None, :]).sum(axis=1).astype(np.int64)
