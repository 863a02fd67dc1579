"""njitted inner loops for histogram building and numeric split scanning."""
import numpy as np
from numba import njit


@njit(cache=True)
def build_histograms(bins, offsets, rows, g, h, total):
    """Sum of gradients, hessians and row counts per (feature, bin).

    ``bins`` is (n_rows, n_features); feature ``j`` owns slots
    ``offsets[j]:offsets[j + 1]`` of the flat output arrays.
    """
    hg = np.zeros(total)
    hh = np.zeros(total)
    hc = np.zeros(total, dtype=np.int64)
    n_features = bins.shape[1]
    for r in rows:
        gr = g[r]
        hr = h[r]
        for j in range(n_features):
            k = offsets[j] + bins[r, j]
            hg[k] += gr
            hh[k] += hr
            hc[k] += 1
    return hg, hh, hc


@njit(cache=True)
def _gain(GL, HL, GR, HR, lam):
    dl = HL + lam
    dr = HR + lam
    dt = HL + HR + lam
    if dl <= 0.0 or dr <= 0.0 or dt <= 0.0:
        return -np.inf
    G = GL + GR
    return GL * GL / dl + GR * GR / dr - G * G / dt


@njit(cache=True)
def scan_numeric(hg, hh, hc, msl, lam):
    """Best boundary over bins ``0..nb-1`` with the missing bin last.

    Returns ``(gain, boundary, missing_left)``; boundary ``b`` sends bins
    ``<= b`` left. Candidates are visited missing-right first, then by
    ascending boundary; the first maximum wins.
    """
    nb = hg.shape[0] - 1
    Gm = hg[nb]
    Hm = hh[nb]
    Cm = hc[nb]
    Gt = 0.0
    Ht = 0.0
    Ct = 0
    for b in range(nb):
        Gt += hg[b]
        Ht += hh[b]
        Ct += hc[b]
    best = -np.inf
    best_b = -1
    best_opt = 0
    for opt in range(2):
        cg = 0.0
        ch = 0.0
        cc = 0
        for b in range(nb - 1):
            cg += hg[b]
            ch += hh[b]
            cc += hc[b]
            if cc == 0 or cc == Ct:
                continue
            if opt == 0:
                lc = cc
                gain = _gain(cg, ch, Gt - cg + Gm, Ht - ch + Hm, lam)
            else:
                lc = cc + Cm
                gain = _gain(cg + Gm, ch + Hm, Gt - cg, Ht - ch, lam)
            rc = Ct + Cm - lc
            if lc < msl or rc < msl:
                continue
            if gain > best:
                best = gain
                best_b = b
                best_opt = opt
    return best, best_b, best_opt
