"""Pure-numpy twin of the compiled lattice scan (same contract as ``_kernels.pyx``)."""

from __future__ import annotations

import numpy as np

CHUNK = 2048


def lattice_dims(ev, tu, points, tau, floor=0.0):
    points = np.ascontiguousarray(points, dtype=float)
    out = np.empty(points.shape[0], dtype=np.int64)
    for start in range(0, points.shape[0], CHUNK):
        out[start : start + CHUNK] = _dims(ev, tu, points[start : start + CHUNK], tau, floor)
    return out


def first_rank_one(ev, tu, points, tau, floor=0.0):
    points = np.ascontiguousarray(points, dtype=float)
    for start in range(0, points.shape[0], CHUNK):
        dims = _dims(ev, tu, points[start : start + CHUNK], tau, floor)
        hits = np.flatnonzero(dims == 1)
        if hits.size:
            return int(start + hits[0])
    return -1


def _dims(ev, tu, w, tau, floor):
    tau2 = tau * tau
    su = np.einsum("la,ab,lb->l", w, tu, w)
    m = np.einsum("la,arp->lrp", w, ev)
    sp = np.einsum("lrp,lrp->l", m, m)
    noise = floor * np.einsum("la,la->l", w, w)
    dims = np.zeros(w.shape[0], dtype=np.int64)
    live = (su > 0.0) & (sp > tau2 * su) & (sp >= noise)
    if not np.any(live):
        return dims
    ml = m[live]
    eig = np.linalg.eigvalsh(ml @ ml.transpose(0, 2, 1))
    top = eig[:, -1:]
    thr = np.maximum(tau2 * top, noise[live][:, None])
    counts = np.sum(eig >= thr, axis=1)
    dims[live] = np.where((top[:, 0] > 0.0) & (top[:, 0] >= noise[live]), counts, 0)
    return dims
