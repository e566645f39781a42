"""Pure numpy implementation of the stepping kernel.

Mirrors ``_kernels.pyx`` argument for argument; used when the compiled
extension is unavailable and as a reference in the test-suite.
"""
import numpy as np

# accumulator columns
ACC_OVERSHOOT = 0
ACC_DRIFT_L1 = 1
ACC_XI_PLUS = 2
ACC_XI_MINUS = 3
ACC_ETA_PLUS = 4
ACC_ETA_MINUS = 5
ACC_PAIR_PLUS = 6
ACC_PAIR_MINUS = 7
ACC_EXCEED = 8
ACC_SUBSTEPS = 9
N_ACC = 10

DRIFT_ZERO = 0
DRIFT_POLY = 1
DRIFT_DELTA = 2


def _drift(g, kind, poly, lam, edge, fedge, sedge):
    if kind == DRIFT_ZERO:
        return np.zeros_like(g)
    if kind == DRIFT_POLY:
        x2 = g * g
        s = np.zeros_like(g)
        for b in poly[::-1]:
            s = s * x2 + b
        return s * g
    inside = np.abs(g) <= edge
    xi = np.where(inside, g, 0.0)
    out = np.log1p(-xi) - np.log1p(xi) + lam * xi
    out = np.where(g > edge, fedge + sedge * (g - edge), out)
    return np.where(g < -edge, -fedge + sedge * (g + edge), out)


def _slope(g, kind, poly, lam, edge, sedge):
    if kind == DRIFT_ZERO:
        return np.zeros_like(g)
    if kind == DRIFT_POLY:
        x2 = g * g
        s = np.zeros_like(g)
        for k in range(len(poly) - 1, -1, -1):
            s = s * x2 + (2 * k + 1) * poly[k]
        return s
    inside = np.abs(g) <= edge
    xi = np.where(inside, g, 0.0)
    return np.where(inside, lam - 2.0 / (1.0 - xi * xi), sedge)


def _flog(g, lam):
    # only called on |g| < 1
    return np.log1p(-g) - np.log1p(g) + lam * g


def advance(state, noise, decay, gain, syn, anaT, kind, poly, lam, edge, fedge, sedge,
            dt, diag, acc, prof=None, x_out=None, f_out=None, sub_decay=None, sub_gain=None,
            sub_c=None, margin=1.0):
    """Advance ``state`` (E, M+1) in place through ``noise.shape[0]`` steps.

    When ``sub_c`` is given, a member whose local stiffness
    ``max |f'(X)| * sub_c[0]`` exceeds ``margin`` has the deterministic
    part of its step split into ``2**lv`` substeps (row ``lv`` of
    ``sub_decay`` / ``sub_gain``), with ``lv`` the first level passing the
    test; the noise increment is added once at the end.

    Returns the first step index at which a member became non-finite, or -1.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _advance(state, noise, decay, gain, syn, anaT, kind, poly, lam, edge, fedge,
                        sedge, dt, diag, acc, prof, x_out, f_out, sub_decay, sub_gain, sub_c,
                        margin)


def _advance(state, noise, decay, gain, syn, anaT, kind, poly, lam, edge, fedge, sedge,
             dt, diag, acc, prof, x_out, f_out, sub_decay, sub_gain, sub_c, margin):
    K = noise.shape[0]
    P = syn.shape[1]
    w = dt / P
    bad = -1
    for k in range(K):
        g = state @ syn
        fv = _drift(g, kind, poly, lam, edge, fedge, sedge)
        if diag >= 1:
            acc[:, ACC_OVERSHOOT] = np.maximum(
                acc[:, ACC_OVERSHOOT], np.max(np.abs(g) - 1.0, axis=1).clip(min=0.0))
            acc[:, ACC_DRIFT_L1] += w * np.sum(np.abs(fv), axis=1)
        if diag >= 2:
            pos = g > 0
            xp = np.where(pos, -fv, 0.0)
            xm = np.where(pos, 0.0, fv)
            acc[:, ACC_XI_PLUS] += w * xp.sum(axis=1)
            acc[:, ACC_XI_MINUS] += w * xm.sum(axis=1)
            inner = np.abs(g) < 1.0
            gl = np.where(inner, g, 0.0)
            fl = _flog(gl, lam)
            ep = np.where(pos & inner, -fv + fl, np.where(g >= 1.0, -fv, 0.0))
            em = np.where(~pos & inner, fv - fl, np.where(g <= -1.0, fv, 0.0))
            acc[:, ACC_ETA_PLUS] += w * ep.sum(axis=1)
            acc[:, ACC_ETA_MINUS] += w * em.sum(axis=1)
            acc[:, ACC_PAIR_PLUS] += w * ((1.0 - g) * ep).sum(axis=1)
            acc[:, ACC_PAIR_MINUS] += w * ((1.0 + g) * em).sum(axis=1)
            acc[:, ACC_EXCEED] += w * (~inner).sum(axis=1)
            if prof is not None:
                prof[:, 0, :] += dt * xp
                prof[:, 1, :] += dt * xm
        F = fv @ anaT.T
        if x_out is not None:
            x_out[k] = state
        if f_out is not None:
            f_out[k] = F
        lv = np.zeros(state.shape[0], dtype=int)
        if sub_c is not None and len(sub_c) > 1:
            lip = np.max(np.abs(_slope(g, kind, poly, lam, edge, sedge)), axis=1)
            for j in range(1, len(sub_c)):
                lv += lip * sub_c[j - 1] > margin
        plain = lv == 0
        state[plain] = state[plain] * decay + gain * F[plain]
        for e in np.flatnonzero(~plain):
            acc[e, ACC_SUBSTEPS] += 1.0
            row = state[e] * sub_decay[lv[e]] + sub_gain[lv[e]] * F[e]
            for _ in range(1, 2 ** lv[e]):
                fe = _drift(row @ syn, kind, poly, lam, edge, fedge, sedge)
                row = row * sub_decay[lv[e]] + sub_gain[lv[e]] * (fe @ anaT.T)
            state[e] = row
        state += noise[k]
        if bad < 0 and not np.all(np.isfinite(state)):
            bad = k
    return bad
