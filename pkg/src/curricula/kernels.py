"""Hot numeric kernels for the toy translation model.

Every kernel is written once as a plain numpy function and compiled with
numba's @njit when available.  Setting the environment variable
``CURRICULA_JIT=0`` (or running without numba installed) selects the
pure-numpy fallback: the same functions executed un-jitted, so both
backends share one source of truth.  ``BACKEND`` records which path is
active; ``benchmarks/bench_kernels.py`` compares the two.

Kernels operate on one sentence at a time (no padding), take parameter
matrices as explicit array arguments, and accumulate gradients in place
into caller-owned arrays.  All floats are float64; token ids are int64.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via CURRICULA_JIT=0 instead
    numba = None
    HAVE_NUMBA = False


def _jit_enabled() -> bool:
    flag = os.environ.get("CURRICULA_JIT", "1").strip().lower()
    return HAVE_NUMBA and flag not in ("0", "false", "no")


USE_JIT = _jit_enabled()
BACKEND = "numba" if USE_JIT else "numpy"

# nogil lets the scoring thread pool run kernels concurrently; fastmath is
# deliberately off so every run on a given backend is bit-reproducible.
# Across backends, results agree to a few ulps but not bitwise: numpy
# reduces sums pairwise while compiled loops reduce sequentially.
_NJIT_OPTS = dict(cache=True, nogil=True, fastmath=False)


def _maybe_jit(fn):
    if USE_JIT:
        return numba.njit(**_NJIT_OPTS)(fn)
    return fn


# ---------------------------------------------------------------------------
# GRU cell
# ---------------------------------------------------------------------------


def _gru_step(x, h, wz, wr, wh, uz, ur, uh, bz, br, bh):
    az = np.dot(x, wz) + np.dot(h, uz) + bz
    z = 1.0 / (1.0 + np.exp(-az))
    ar = np.dot(x, wr) + np.dot(h, ur) + br
    r = 1.0 / (1.0 + np.exp(-ar))
    ah = np.dot(x, wh) + np.dot(r * h, uh) + bh
    g = np.tanh(ah)
    hn = (1.0 - z) * h + z * g
    return hn, z, r, g


def _gru_back(dh, x, h_prev, z, r, g,
              wz, wr, wh, uz, ur, uh,
              g_wz, g_wr, g_wh, g_uz, g_ur, g_uh,
              g_bz, g_br, g_bh):
    # Reverses one _gru_step given the stored gate activations.
    dz = dh * (g - h_prev)
    dg = dh * z
    dh_prev = dh * (1.0 - z)
    dah = dg * (1.0 - g * g)
    d_rh = np.dot(uh, dah)
    dr = d_rh * h_prev
    dh_prev = dh_prev + d_rh * r
    dar = dr * r * (1.0 - r)
    daz = dz * z * (1.0 - z)
    rh = r * h_prev
    g_wz += np.outer(x, daz)
    g_wr += np.outer(x, dar)
    g_wh += np.outer(x, dah)
    g_uz += np.outer(h_prev, daz)
    g_ur += np.outer(h_prev, dar)
    g_uh += np.outer(rh, dah)
    g_bz += daz
    g_br += dar
    g_bh += dah
    dx = np.dot(wz, daz) + np.dot(wr, dar) + np.dot(wh, dah)
    dh_prev = dh_prev + np.dot(uz, daz) + np.dot(ur, dar)
    return dx, dh_prev


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------


def pair_logprobs(src, tgt, bos, eos,
                  emb_src, emb_tgt,
                  ewz, ewr, ewh, euz, eur, euh, ebz, ebr, ebh,
                  dwz, dwr, dwh, duz, dur, duh, dbz, dbr, dbh,
                  attn, out_w, out_b):
    """Teacher-forced log-probabilities, one entry per target position.

    Position t scores tgt[t]; the final position scores the end marker,
    so the result has len(tgt) + 1 entries.
    """
    d = emb_src.shape[1]
    S = src.shape[0]
    L = tgt.shape[0]
    ell = L + 1

    H = np.empty((S, d))
    h = np.zeros(d)
    for t in range(S):
        h, z, r, g = _gru_step(emb_src[src[t]], h,
                               ewz, ewr, ewh, euz, eur, euh, ebz, ebr, ebh)
        H[t] = h

    HP = np.dot(H, attn)
    lp = np.empty(ell)
    s = H[S - 1].copy()
    for t in range(ell):
        inp = bos if t == 0 else tgt[t - 1]
        s, z, r, g = _gru_step(emb_tgt[inp], s,
                               dwz, dwr, dwh, duz, dur, duh, dbz, dbr, dbh)
        a = np.dot(HP, s)
        amax = a.max()
        ea = np.exp(a - amax)
        alpha = ea / ea.sum()
        c = np.dot(alpha, H)
        feat = np.empty(2 * d)
        feat[:d] = s
        feat[d:] = c
        logits = np.dot(feat, out_w) + out_b
        mx = logits.max()
        ex = np.exp(logits - mx)
        zs = ex.sum()
        y = tgt[t] if t < L else eos
        lp[t] = logits[y] - mx - np.log(zs)
    return lp


def corpus_pass(flat_src, off_src, flat_tgt, off_tgt, bos, eos,
                emb_src, emb_tgt,
                ewz, ewr, ewh, euz, eur, euh, ebz, ebr, ebh,
                dwz, dwr, dwh, duz, dur, duh, dbz, dbr, dbh,
                attn, out_w, out_b):
    """Forward-score a packed corpus slice.

    Returns per-pair (sum of token log-probs, sum of token probs,
    scored length).  Enough to derive both the summed NLL and the
    arithmetic-mean prediction score without storing per-token arrays.
    """
    n = off_src.shape[0] - 1
    lp_sums = np.empty(n)
    p_sums = np.empty(n)
    lens = np.empty(n, np.int64)
    for i in range(n):
        src = flat_src[off_src[i]:off_src[i + 1]]
        tgt = flat_tgt[off_tgt[i]:off_tgt[i + 1]]
        lp = pair_logprobs(src, tgt, bos, eos,
                           emb_src, emb_tgt,
                           ewz, ewr, ewh, euz, eur, euh, ebz, ebr, ebh,
                           dwz, dwr, dwh, duz, dur, duh, dbz, dbr, dbh,
                           attn, out_w, out_b)
        s = 0.0
        e = 0.0
        for j in range(lp.shape[0]):
            s += lp[j]
            e += np.exp(lp[j])
        lp_sums[i] = s
        p_sums[i] = e
        lens[i] = lp.shape[0]
    return lp_sums, p_sums, lens


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


def pair_loss_grads(src, tgt, bos, eos,
                    emb_src, emb_tgt,
                    ewz, ewr, ewh, euz, eur, euh, ebz, ebr, ebh,
                    dwz, dwr, dwh, duz, dur, duh, dbz, dbr, dbh,
                    attn, out_w, out_b,
                    g_emb_src, g_emb_tgt,
                    g_ewz, g_ewr, g_ewh, g_euz, g_eur, g_euh, g_ebz, g_ebr, g_ebh,
                    g_dwz, g_dwr, g_dwh, g_duz, g_dur, g_duh, g_dbz, g_dbr, g_dbh,
                    g_attn, g_out_w, g_out_b):
    """Summed negative log-likelihood of one pair plus exact gradients.

    Gradients accumulate (+=) into the g_* arrays so a batch driver can
    sum contributions without temporaries.  Returns the scalar loss.
    """
    d = emb_src.shape[1]
    S = src.shape[0]
    L = tgt.shape[0]
    ell = L + 1
    V = out_b.shape[0]

    # encoder forward, gates kept for the reverse sweep
    H = np.empty((S, d))
    Ze = np.empty((S, d))
    Re = np.empty((S, d))
    Ge = np.empty((S, d))
    h = np.zeros(d)
    for t in range(S):
        h, z, r, g = _gru_step(emb_src[src[t]], h,
                               ewz, ewr, ewh, euz, eur, euh, ebz, ebr, ebh)
        H[t] = h
        Ze[t] = z
        Re[t] = r
        Ge[t] = g

    HP = np.dot(H, attn)

    # decoder forward (teacher forcing)
    Sp = np.empty((ell, d))
    Sd = np.empty((ell, d))
    Zd = np.empty((ell, d))
    Rd = np.empty((ell, d))
    Gd = np.empty((ell, d))
    Al = np.empty((ell, S))
    Cx = np.empty((ell, d))
    Pr = np.empty((ell, V))
    loss = 0.0
    s = H[S - 1].copy()
    for t in range(ell):
        inp = bos if t == 0 else tgt[t - 1]
        Sp[t] = s
        s, z, r, g = _gru_step(emb_tgt[inp], s,
                               dwz, dwr, dwh, duz, dur, duh, dbz, dbr, dbh)
        Sd[t] = s
        Zd[t] = z
        Rd[t] = r
        Gd[t] = g
        a = np.dot(HP, s)
        amax = a.max()
        ea = np.exp(a - amax)
        alpha = ea / ea.sum()
        Al[t] = alpha
        c = np.dot(alpha, H)
        Cx[t] = c
        feat = np.empty(2 * d)
        feat[:d] = s
        feat[d:] = c
        logits = np.dot(feat, out_w) + out_b
        mx = logits.max()
        ex = np.exp(logits - mx)
        zs = ex.sum()
        Pr[t] = ex / zs
        y = tgt[t] if t < L else eos
        loss += -(logits[y] - mx - np.log(zs))

    # decoder + attention backward
    dH = np.zeros((S, d))
    dHP = np.zeros((S, d))
    ds_next = np.zeros(d)
    for t in range(ell - 1, -1, -1):
        y = tgt[t] if t < L else eos
        dlogits = Pr[t].copy()
        dlogits[y] -= 1.0
        s = Sd[t]
        feat = np.empty(2 * d)
        feat[:d] = s
        feat[d:] = Cx[t]
        g_out_b += dlogits
        g_out_w += np.outer(feat, dlogits)
        dfeat = np.dot(out_w, dlogits)
        ds = dfeat[:d] + ds_next
        dc = dfeat[d:]
        alpha = Al[t]
        dalpha = np.dot(H, dc)
        dH += np.outer(alpha, dc)
        adot = (alpha * dalpha).sum()
        da = alpha * (dalpha - adot)
        ds = ds + np.dot(da, HP)
        dHP += np.outer(da, s)
        inp = bos if t == 0 else tgt[t - 1]
        dx, dh_prev = _gru_back(ds, emb_tgt[inp], Sp[t], Zd[t], Rd[t], Gd[t],
                                dwz, dwr, dwh, duz, dur, duh,
                                g_dwz, g_dwr, g_dwh, g_duz, g_dur, g_duh,
                                g_dbz, g_dbr, g_dbh)
        g_emb_tgt[inp] += dx
        ds_next = dh_prev

    # decoder start state was the final encoder state
    dH[S - 1] += ds_next
    g_attn += np.dot(np.ascontiguousarray(H.T), dHP)
    dH += np.dot(dHP, np.ascontiguousarray(attn.T))

    # encoder backward
    zvec = np.zeros(d)
    dh_next = np.zeros(d)
    for t in range(S - 1, -1, -1):
        dh = dH[t] + dh_next
        h_prev = H[t - 1] if t > 0 else zvec
        dx, dh_prev = _gru_back(dh, emb_src[src[t]], h_prev, Ze[t], Re[t], Ge[t],
                                ewz, ewr, ewh, euz, eur, euh,
                                g_ewz, g_ewr, g_ewh, g_euz, g_eur, g_euh,
                                g_ebz, g_ebr, g_ebh)
        g_emb_src[src[t]] += dx
        dh_next = dh_prev

    return loss


def batch_loss_grads(flat_src, off_src, flat_tgt, off_tgt, idx, bos, eos,
                     emb_src, emb_tgt,
                     ewz, ewr, ewh, euz, eur, euh, ebz, ebr, ebh,
                     dwz, dwr, dwh, duz, dur, duh, dbz, dbr, dbh,
                     attn, out_w, out_b,
                     g_emb_src, g_emb_tgt,
                     g_ewz, g_ewr, g_ewh, g_euz, g_eur, g_euh, g_ebz, g_ebr, g_ebh,
                     g_dwz, g_dwr, g_dwh, g_duz, g_dur, g_duh, g_dbz, g_dbr, g_dbh,
                     g_attn, g_out_w, g_out_b):
    """Sum pair_loss_grads over the pairs selected by idx.

    Caller zeroes the gradient arrays; the return value is the summed
    negative log-likelihood of the batch.
    """
    total = 0.0
    for k in range(idx.shape[0]):
        i = idx[k]
        src = flat_src[off_src[i]:off_src[i + 1]]
        tgt = flat_tgt[off_tgt[i]:off_tgt[i + 1]]
        total += pair_loss_grads(
            src, tgt, bos, eos,
            emb_src, emb_tgt,
            ewz, ewr, ewh, euz, eur, euh, ebz, ebr, ebh,
            dwz, dwr, dwh, duz, dur, duh, dbz, dbr, dbh,
            attn, out_w, out_b,
            g_emb_src, g_emb_tgt,
            g_ewz, g_ewr, g_ewh, g_euz, g_eur, g_euh, g_ebz, g_ebr, g_ebh,
            g_dwz, g_dwr, g_dwh, g_duz, g_dur, g_duh, g_dbz, g_dbr, g_dbh,
            g_attn, g_out_w, g_out_b)
    return total


# ---------------------------------------------------------------------------
# Decoding and optimization
# ---------------------------------------------------------------------------


def greedy_decode(src, bos, eos, max_len,
                  emb_src, emb_tgt,
                  ewz, ewr, ewh, euz, eur, euh, ebz, ebr, ebh,
                  dwz, dwr, dwh, duz, dur, duh, dbz, dbr, dbh,
                  attn, out_w, out_b):
    """Argmax decoding; stops at the end marker or after max_len tokens.

    Ties pick the lowest token id (first argmax occurrence).
    """
    d = emb_src.shape[1]
    S = src.shape[0]

    H = np.empty((S, d))
    h = np.zeros(d)
    for t in range(S):
        h, z, r, g = _gru_step(emb_src[src[t]], h,
                               ewz, ewr, ewh, euz, eur, euh, ebz, ebr, ebh)
        H[t] = h

    HP = np.dot(H, attn)
    out = np.empty(max_len, np.int64)
    n = 0
    prev = bos
    s = H[S - 1].copy()
    for t in range(max_len):
        s, z, r, g = _gru_step(emb_tgt[prev], s,
                               dwz, dwr, dwh, duz, dur, duh, dbz, dbr, dbh)
        a = np.dot(HP, s)
        amax = a.max()
        ea = np.exp(a - amax)
        alpha = ea / ea.sum()
        c = np.dot(alpha, H)
        feat = np.empty(2 * d)
        feat[:d] = s
        feat[d:] = c
        logits = np.dot(feat, out_w) + out_b
        y = int(np.argmax(logits))
        if y == eos:
            break
        out[n] = y
        n += 1
        prev = y
    return out[:n].copy()


def adam_step(theta, grad, m, v, t, lr, b1, b2, eps):
    """One adaptive-moment update on the flat parameter vector."""
    m[:] = b1 * m + (1.0 - b1) * grad
    v[:] = b2 * v + (1.0 - b2) * grad * grad
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    theta -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


_gru_step = _maybe_jit(_gru_step)
_gru_back = _maybe_jit(_gru_back)
pair_logprobs = _maybe_jit(pair_logprobs)
corpus_pass = _maybe_jit(corpus_pass)
pair_loss_grads = _maybe_jit(pair_loss_grads)
batch_loss_grads = _maybe_jit(batch_loss_grads)
greedy_decode = _maybe_jit(greedy_decode)
adam_step = _maybe_jit(adam_step)
