"""Compiled scalar kernels and event loops.

Catalogue kernels are evaluated through these functions on both the compiled
and the pure-Python paths, so the two paths agree bit for bit.
"""
import math

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

COAG_CONSTANT = 0
COAG_SUM_POWER = 1
COAG_PRODUCT_SUM = 2
COAG_GEOMETRIC = 3
COAG_DIFFERENCE = 4
COAG_EXP_CUTOFF = 5

FRAG_CONSTANT = 0
FRAG_INVERSE_LINEAR = 1
FRAG_POWER = 2

EXPRESSION = -1


@njit(cache=True)
def coag_value(code, p, cap, x, y):
    if x <= 0.0 or y <= 0.0:
        return 0.0
    if x > y:
        x, y = y, x
    if code == COAG_CONSTANT:
        v = p[0]
    elif code == COAG_SUM_POWER:
        v = (x ** p[0] + y ** p[0]) ** p[1]
    elif code == COAG_PRODUCT_SUM:
        v = x ** p[0] * y ** p[1] + x ** p[1] * y ** p[0]
    elif code == COAG_GEOMETRIC:
        v = (x * y) ** (0.5 * p[0]) * (x + y) ** (-p[1])
    elif code == COAG_DIFFERENCE:
        v = (x ** p[0] + y ** p[0]) ** p[1] * abs(x ** p[2] - y ** p[2])
    elif code == COAG_EXP_CUTOFF:
        s = x + y
        v = s ** p[0] * math.exp(-p[2] * s ** (-p[1]))
    else:
        v = math.nan
    if v > cap:
        v = cap
    return v


@njit(cache=True)
def frag_value(code, p, x):
    if x <= 0.0:
        return 0.0
    if code == FRAG_CONSTANT:
        return p[0]
    if code == FRAG_INVERSE_LINEAR:
        return p[0] / (1.0 + x)
    if code == FRAG_POWER:
        return p[0] * x ** p[1]
    return math.nan


@njit(cache=True)
def coag_matrix(code, p, cap, xs):
    n = xs.shape[0]
    out = np.empty((n, n))
    for a in range(n):
        for b in range(a, n):
            v = coag_value(code, p, cap, xs[b], xs[a])
            out[a, b] = v
            out[b, a] = v
    return out


@njit(cache=True)
def mass_and_norm(m, n, lam):
    """Compensated total mass and lambda-norm of the first n entries."""
    s = 0.0
    c = 0.0
    nl = 0.0
    for k in range(n):
        v = m[k]
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
        nl += v ** lam
    return s + c, nl


# ------------------------------------------------------------ event engines

ST_TMAX = 0
ST_BUDGET = 1
ST_ABSORBED = 2
ST_TAU = 3
ST_OVERFLOW = 4

KIND_INIT = 0
KIND_COALESCE = 1
KIND_FRAGMENT = 2

WHO_BOTH = 0
WHO_FIRST = 1
WHO_SECOND = 2


@njit(cache=True)
def coalesce_into(m, n, i, j, out, src):
    """Write c_ij(m) into out (stable descending); src maps new -> old rank."""
    s = m[i] + m[j]
    r = 0
    placed = False
    for k in range(n):
        if k == i or k == j:
            continue
        if not placed and m[k] < s:
            out[r] = s
            src[r] = -1
            r += 1
            placed = True
        out[r] = m[k]
        src[r] = k
        r += 1
    if not placed:
        out[r] = s
        src[r] = -1
        r += 1
    return r


@njit(cache=True)
def fragment_into(m, n, i, theta, tlen, out, src):
    """Write f_i,theta(m) into out; zero-mass pieces are dropped."""
    x = m[i]
    npc = 0
    for l in range(tlen):
        if theta[l] * x > 0.0:
            npc += 1
        else:
            break
    r = 0
    k = 0
    l = 0
    while True:
        if k == i:
            k += 1
        if k >= n or l >= npc:
            break
        p = theta[l] * x
        if m[k] >= p:
            out[r] = m[k]
            src[r] = k
            k += 1
        else:
            out[r] = p
            src[r] = -1
            l += 1
        r += 1
    while k < n:
        if k != i:
            out[r] = m[k]
            src[r] = k
            r += 1
        k += 1
    while l < npc:
        out[r] = theta[l] * x
        src[r] = -1
        l += 1
        r += 1
    return r


@njit(cache=True)
def _pick_frag(Fv, n, weights, btot, target):
    """Select (particle, atom) for a fragmentation target in [0, rho_f)."""
    na = weights.shape[0]
    acc = 0.0
    last_i = -1
    for i in range(n):
        ri = Fv[i] * btot
        if ri > 0.0:
            last_i = i
        base = acc
        acc += ri
        if target < acc:
            for a in range(na):
                base += Fv[i] * weights[a]
                if target < base:
                    return i, a
            return i, na - 1
    return last_i, na - 1


@njit(cache=True)
def run_single(m0, kcode, kp, kcap, has_coag, fcode, fp, weights, thetas, tlens,
               t_max, lam, tau_cap, max_events, rng, record,
               ot, okind, oi, oj, on, omass, onorm):
    n = m0.shape[0]
    na = weights.shape[0]
    maxlen = 1
    for a in range(na):
        if tlens[a] > maxlen:
            maxlen = tlens[a]
    btot = 0.0
    for a in range(na):
        btot += weights[a]
    cap = 2 * (n + maxlen) + 8
    m = np.empty(cap)
    m2 = np.empty(cap)
    src = np.empty(cap, np.int64)
    Fv = np.empty(cap)
    Fv2 = np.empty(cap)
    rows = np.empty(cap)
    kc = cap if has_coag else 1
    K = np.zeros((kc, kc))
    K2 = np.zeros((kc, kc))
    for k in range(n):
        m[k] = m0[k]
    for r in range(n):
        Fv[r] = frag_value(fcode, fp, m[r])
        if has_coag:
            for s in range(r + 1, n):
                v = coag_value(kcode, kp, kcap, m[s], m[r])
                K[r, s] = v
                K[s, r] = v

    t = 0.0
    events = 0
    mass, norm = mass_and_norm(m, n, lam)
    sup = norm
    if record:
        ot[0] = 0.0
        okind[0] = KIND_INIT
        oi[0] = 0
        oj[0] = 0
        on[0] = n
        omass[0] = mass
        onorm[0] = norm
    if norm >= tau_cap:
        return ST_TAU, m[:n].copy(), events, t, sup

    status = ST_TMAX
    while True:
        coag_total = 0.0
        if has_coag:
            for i in range(n):
                acc = 0.0
                for j in range(i + 1, n):
                    acc += K[i, j]
                rows[i] = acc
                coag_total += acc
        fsum = 0.0
        for i in range(n):
            fsum += Fv[i]
        frag_total = btot * fsum
        total = coag_total + frag_total
        if not math.isfinite(total):
            status = ST_OVERFLOW
            break
        if total == 0.0:
            status = ST_ABSORBED
            t = t_max
            break
        if events >= max_events:
            status = ST_BUDGET
            break
        u1 = rng.random()
        dt = -math.log1p(-u1) / total
        if t + dt > t_max:
            t = t_max
            status = ST_TMAX
            break
        t = t + dt
        target = rng.random() * total

        kind = KIND_FRAGMENT
        ci = -1
        cj = -1
        if target < coag_total:
            kind = KIND_COALESCE
            acc = 0.0
            for i in range(n):
                base = acc
                acc += rows[i]
                if target < acc:
                    ci = i
                    for j in range(i + 1, n):
                        base += K[i, j]
                        if target < base:
                            cj = j
                            break
                    if cj < 0:
                        for j in range(n - 1, i, -1):
                            if K[i, j] > 0.0:
                                cj = j
                                break
                    break
            nn = coalesce_into(m, n, ci, cj, m2, src)
        else:
            ci, cj = _pick_frag(Fv, n, weights, btot, target - coag_total)
            nn = fragment_into(m, n, ci, thetas[cj], tlens[cj], m2, src)

        for r in range(nn):
            sr = src[r]
            if sr >= 0:
                Fv2[r] = Fv[sr]
            else:
                Fv2[r] = frag_value(fcode, fp, m2[r])
            if has_coag:
                for s in range(r + 1, nn):
                    ss = src[s]
                    if sr >= 0 and ss >= 0:
                        v = K[sr, ss]
                    else:
                        v = coag_value(kcode, kp, kcap, m2[s], m2[r])
                    K2[r, s] = v
                    K2[s, r] = v
        m, m2 = m2, m
        Fv, Fv2 = Fv2, Fv
        K, K2 = K2, K
        n = nn
        events += 1

        if n + maxlen > cap:
            ncap = 2 * (n + maxlen) + 8
            mm = np.empty(ncap)
            mm[:n] = m[:n]
            m = mm
            m2 = np.empty(ncap)
            src = np.empty(ncap, np.int64)
            ff = np.empty(ncap)
            ff[:n] = Fv[:n]
            Fv = ff
            Fv2 = np.empty(ncap)
            rows = np.empty(ncap)
            if has_coag:
                kk = np.zeros((ncap, ncap))
                kk[:n, :n] = K[:n, :n]
                K = kk
                K2 = np.zeros((ncap, ncap))
            cap = ncap

        mass, norm = mass_and_norm(m, n, lam)
        if norm > sup:
            sup = norm
        if record:
            ot[events] = t
            okind[events] = kind
            oi[events] = ci + 1
            oj[events] = cj + 1 if kind == KIND_COALESCE else cj
            on[events] = n
            omass[events] = mass
            onorm[events] = norm
        if norm >= tau_cap:
            status = ST_TAU
            break
    return status, m[:n].copy(), events, t, sup


@njit(cache=True)
def dlambda_arrays(a, na, b, nb, lam):
    L = na if na > nb else nb
    s = 0.0
    for k in range(L):
        x = a[k] ** lam if k < na else 0.0
        y = b[k] ** lam if k < nb else 0.0
        s += abs(x - y)
    return s


@njit(cache=True)
def run_coupled(m0, mt0, kcode, kp, kcap, has_coag, fcode, fp, weights, thetas, tlens,
                t_max, lam, tau_cap, max_events, rng, record,
                ot, okind, oi, oj, owho, on1, on2, omass1, omass2, onorm1, onorm2, odist):
    na = weights.shape[0]
    maxlen = 1
    for a in range(na):
        if tlens[a] > maxlen:
            maxlen = tlens[a]
    n1 = m0.shape[0]
    n2 = mt0.shape[0]
    cap = 2 * (max(n1, n2) + maxlen) + 8
    m = np.empty(cap)
    mt = np.empty(cap)
    buf = np.empty(cap)
    src = np.empty(cap, np.int64)
    m[:n1] = m0
    mt[:n2] = mt0

    t = 0.0
    events = 0
    mass1, norm1 = mass_and_norm(m, n1, lam)
    mass2, norm2 = mass_and_norm(mt, n2, lam)
    dist = dlambda_arrays(m, n1, mt, n2, lam)
    sup = dist
    if record:
        ot[0] = 0.0
        okind[0] = KIND_INIT
        oi[0] = 0
        oj[0] = 0
        owho[0] = WHO_BOTH
        on1[0] = n1
        on2[0] = n2
        omass1[0] = mass1
        omass2[0] = mass2
        onorm1[0] = norm1
        onorm2[0] = norm2
        odist[0] = dist
    if norm1 >= tau_cap or norm2 >= tau_cap:
        return ST_TAU, m[:n1].copy(), mt[:n2].copy(), events, t, sup

    status = ST_TMAX
    while True:
        L = n1 if n1 > n2 else n2
        npairs = L * (L - 1) // 2 if has_coag else 0
        nch = npairs + L * na
        ra = np.empty(nch)
        rb = np.empty(nch)
        c = 0
        if has_coag:
            for i in range(L):
                for j in range(i + 1, L):
                    ra[c] = coag_value(kcode, kp, kcap, m[j], m[i]) if j < n1 else 0.0
                    rb[c] = coag_value(kcode, kp, kcap, mt[j], mt[i]) if j < n2 else 0.0
                    c += 1
        for i in range(L):
            fa = frag_value(fcode, fp, m[i]) if i < n1 else 0.0
            fb = frag_value(fcode, fp, mt[i]) if i < n2 else 0.0
            for a in range(na):
                ra[c] = fa * weights[a]
                rb[c] = fb * weights[a]
                c += 1
        total = 0.0
        for c in range(nch):
            total += ra[c] if ra[c] > rb[c] else rb[c]
        if not math.isfinite(total):
            status = ST_OVERFLOW
            break
        if total == 0.0:
            status = ST_ABSORBED
            t = t_max
            break
        if events >= max_events:
            status = ST_BUDGET
            break
        dt = -math.log1p(-rng.random()) / total
        if t + dt > t_max:
            t = t_max
            status = ST_TMAX
            break
        t = t + dt
        target = rng.random() * total
        acc = 0.0
        sel = -1
        last = -1
        for c in range(nch):
            mx = ra[c] if ra[c] > rb[c] else rb[c]
            if mx > 0.0:
                last = c
            acc += mx
            if target < acc:
                sel = c
                break
        if sel < 0:
            sel = last
        a_r = ra[sel]
        b_r = rb[sel]
        mx = a_r if a_r > b_r else b_r
        mn = b_r if a_r > b_r else a_r
        z = rng.random() * mx
        if z < mn:
            who = WHO_BOTH
        elif a_r > b_r:
            who = WHO_FIRST
        else:
            who = WHO_SECOND

        if sel < npairs:
            kind = KIND_COALESCE
            ci = 0
            rem = sel
            while rem >= L - 1 - ci:
                rem -= L - 1 - ci
                ci += 1
            cj = ci + 1 + rem
        else:
            kind = KIND_FRAGMENT
            q = sel - npairs
            ci = q // na
            cj = q % na

        if who != WHO_SECOND:
            if kind == KIND_COALESCE:
                nn = coalesce_into(m, n1, ci, cj, buf, src)
            else:
                nn = fragment_into(m, n1, ci, thetas[cj], tlens[cj], buf, src)
            m, buf = buf, m
            n1 = nn
        if who != WHO_FIRST:
            if kind == KIND_COALESCE:
                nn = coalesce_into(mt, n2, ci, cj, buf, src)
            else:
                nn = fragment_into(mt, n2, ci, thetas[cj], tlens[cj], buf, src)
            mt, buf = buf, mt
            n2 = nn
        events += 1

        big = n1 if n1 > n2 else n2
        if big + maxlen > cap:
            ncap = 2 * (big + maxlen) + 8
            x = np.empty(ncap)
            x[:n1] = m[:n1]
            m = x
            y = np.empty(ncap)
            y[:n2] = mt[:n2]
            mt = y
            buf = np.empty(ncap)
            src = np.empty(ncap, np.int64)
            cap = ncap

        mass1, norm1 = mass_and_norm(m, n1, lam)
        mass2, norm2 = mass_and_norm(mt, n2, lam)
        dist = dlambda_arrays(m, n1, mt, n2, lam)
        if dist > sup:
            sup = dist
        if record:
            ot[events] = t
            okind[events] = kind
            oi[events] = ci + 1
            oj[events] = cj + 1 if kind == KIND_COALESCE else cj
            owho[events] = who
            on1[events] = n1
            on2[events] = n2
            omass1[events] = mass1
            omass2[events] = mass2
            onorm1[events] = norm1
            onorm2[events] = norm2
            odist[events] = dist
        if norm1 >= tau_cap or norm2 >= tau_cap:
            status = ST_TAU
            break
    return status, m[:n1].copy(), mt[:n2].copy(), events, t, sup
