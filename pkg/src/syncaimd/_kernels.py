"""Inner loops of the event-driven simulators.

Every function here is written so that it runs unchanged either as numba
nopython code or as plain numpy (see ``_accel``). Shares are always in
capacity-normalized units; callers scale inter-event times by capacity.

Policy kinds and utility kinds are small integer codes so that the kernels
stay free of Python objects.
"""

import numpy as np

from ._accel import jit

POLICY_CONSTANT = 0
POLICY_WINDOW_MEAN = 1
POLICY_UTILITY = 2

UTILITY_QUADRATIC = 0
UTILITY_LOG_BARRIER = 1
UTILITY_POWER = 2

DEGENERATE_AVERAGE = 1e-9


@jit
def aimd_apply(alpha, beta, drops, x, out):
    """Write ``A x`` into ``out`` and return the normalized inter-event time."""
    n = x.shape[0]
    any_drop = False
    s = 0.0
    for i in range(n):
        if drops[i]:
            out[i] = beta[i] * x[i]
            any_drop = True
        else:
            out[i] = x[i]
        s += out[i]
    if not any_drop:
        return 0.0
    t = (1.0 - s) / np.sum(alpha)
    if t < 0.0:
        t = 0.0
    for i in range(n):
        out[i] += alpha[i] * t
    return t


@jit
def observe(x, buf, hist, cnt, avg):
    """Push ``x`` into the state ring, refresh ``avg`` and push it into the average ring.

    ``cnt`` holds ``[states buffered, state write pos, averages buffered, average write pos]``.
    """
    N = buf.shape[0]
    pos = cnt[1]
    buf[pos, :] = x
    cnt[1] = (pos + 1) % N
    if cnt[0] < N:
        cnt[0] += 1
    m = cnt[0]
    avg[:] = 0.0
    for j in range(m):
        avg += buf[j]
    avg /= m
    hp = cnt[3]
    hist[hp, :] = avg
    cnt[3] = (hp + 1) % (N + 1)
    if cnt[2] < N + 1:
        cnt[2] += 1


@jit
def utility_slope(kind, coef, gamma, s):
    if kind == UTILITY_QUADRATIC:
        return 2.0 * coef * s
    if kind == UTILITY_LOG_BARRIER:
        return -coef / s
    return coef * s ** (gamma - 1.0)


@jit
def eval_policy(kind, res, eps, xi, const_p, ukind, upar, own_avg, other_avg,
                own_hist, own_count, other_hist, other_count, N, out):
    """Per-agent MD probabilities for resource ``res`` (0 = a, 1 = b), clamped to [eps, 1]."""
    n = own_avg.shape[0]
    if kind == POLICY_CONSTANT:
        for i in range(n):
            out[i] = const_p[res, i]
    elif kind == POLICY_WINDOW_MEAN:
        for i in range(n):
            s = 0.0
            for j in range(own_count):
                s += own_hist[j, i]
            for j in range(other_count):
                s += other_hist[j, i]
            out[i] = s / (2.0 * N)
    else:
        for i in range(n):
            xc = own_avg[i]
            if xc <= DEGENERATE_AVERAGE:
                raise ValueError("degenerate average share in utility-gradient policy")
            d = utility_slope(ukind[i], upar[i, 0], upar[i, 1], xc) + upar[i, 2] * other_avg[i]
            out[i] = xi * d / xc
    for i in range(n):
        if out[i] < eps:
            out[i] = eps
        elif out[i] > 1.0:
            out[i] = 1.0


@jit
def fire_event(res, alpha, beta, x, buf, hist, cnt, avg, other_avg, other_hist, other_cnt,
               pos_in_window, u, kind, eps, xi, const_p, ukind, upar, p_out, drops_out, tmp):
    """One capacity event of one resource; updates ``x`` in place, returns normalized T.

    The state reached at the previous event is entered into the averaging
    window only now, when it is actually observed at capacity; the first
    event of a window has already been observed at the meta event.
    """
    N = buf.shape[0]
    if pos_in_window > 0:
        observe(x, buf, hist, cnt, avg)
    eval_policy(kind, res, eps, xi, const_p, ukind, upar, avg, other_avg,
                hist, cnt[2], other_hist, other_cnt[2], N, p_out)
    for i in range(x.shape[0]):
        drops_out[i] = u[i] < p_out[i]
    t = aimd_apply(alpha, beta, drops_out, x, tmp)
    x[:] = tmp
    return t


@jit
def run_single(alpha, beta, x0, u, N, kind, eps, xi, const_p, ukind, upar, res):
    """Single-resource place-dependent IFS over ``u.shape[0]`` capacity events.

    The resource's own averages stand in for the second resource, so the
    two-resource policies reduce to their one-resource analogues; ``res``
    picks the row of a constant policy.
    """
    K = u.shape[0]
    n = x0.shape[0]
    states = np.empty((K + 1, n))
    drops = np.zeros((K, n), dtype=np.bool_)
    probs = np.empty((K, n))
    T = np.empty(K)
    x = x0.copy()
    buf = np.zeros((N, n))
    hist = np.zeros((N + 1, n))
    cnt = np.zeros(4, dtype=np.int64)
    avg = np.zeros(n)
    p = np.empty(n)
    d = np.zeros(n, dtype=np.bool_)
    tmp = np.empty(n)
    states[0] = x
    observe(x, buf, hist, cnt, avg)
    for k in range(K):
        if k > 0:
            observe(x, buf, hist, cnt, avg)
        eval_policy(kind, res, eps, xi, const_p, ukind, upar, avg, avg,
                    hist, cnt[2], hist, cnt[2], N, p)
        for i in range(n):
            d[i] = u[k, i] < p[i]
        T[k] = aimd_apply(alpha, beta, d, x, tmp)
        x[:] = tmp
        states[k + 1] = x
        drops[k] = d
        probs[k] = p
    return states, drops, probs, T


@jit
def run_coupled(alpha_a, beta_a, cap_a, alpha_b, beta_b, cap_b, x0_a, x0_b,
                u_a, u_b, ug_a, ug_b, N, L, kind, eps, xi, const_p, ukind, upar, global_md):
    """Synchronized two-resource AIMD over ``L`` meta events of ``N`` events per resource.

    Returns per-resource states x(0..LN), patterns, probabilities, averages
    used, inter-event times and event times, plus the real-time firing order
    (0 = a, 1 = b), window durations tau, the natural capacity arrival
    time of each resource in each window and the state each resource froze
    with.
    """
    n = x0_a.shape[0]
    K = L * N
    states_a = np.empty((K + 1, n))
    states_b = np.empty((K + 1, n))
    drops_a = np.zeros((K, n), dtype=np.bool_)
    drops_b = np.zeros((K, n), dtype=np.bool_)
    probs_a = np.empty((K, n))
    probs_b = np.empty((K, n))
    avgs_a = np.empty((K, n))
    avgs_b = np.empty((K, n))
    T_a = np.empty(K)
    T_b = np.empty(K)
    psi_a = np.empty(K + 1)
    psi_b = np.empty(K + 1)
    order = np.empty(2 * K, dtype=np.int8)
    tau = np.empty(L)
    arrive_a = np.empty(L)
    arrive_b = np.empty(L)
    frozen_a = np.empty((L, n))
    frozen_b = np.empty((L, n))

    xa = x0_a.copy()
    xb = x0_b.copy()
    buf_a = np.zeros((N, n))
    buf_b = np.zeros((N, n))
    hist_a = np.zeros((N + 1, n))
    hist_b = np.zeros((N + 1, n))
    cnt_a = np.zeros(4, dtype=np.int64)
    cnt_b = np.zeros(4, dtype=np.int64)
    avg_a = np.zeros(n)
    avg_b = np.zeros(n)
    p = np.empty(n)
    d = np.zeros(n, dtype=np.bool_)
    tmp = np.empty(n)

    observe(xa, buf_a, hist_a, cnt_a, avg_a)
    observe(xb, buf_b, hist_b, cnt_b, avg_b)
    states_a[0] = xa
    states_b[0] = xb
    psi = 0.0
    psi_a[0] = psi
    psi_b[0] = psi
    ka = 0
    kb = 0
    oi = 0
    for l in range(L):
        ma = 0
        mb = 0
        sa = 0.0
        sb = 0.0
        while ma < N or mb < N:
            if mb >= N or (ma < N and sa <= sb):
                t = fire_event(0, alpha_a, beta_a, xa, buf_a, hist_a, cnt_a, avg_a,
                               avg_b, hist_b, cnt_b, ma, u_a[ka], kind, eps, xi,
                               const_p, ukind, upar, p, d, tmp)
                probs_a[ka] = p
                drops_a[ka] = d
                avgs_a[ka] = avg_a
                T_a[ka] = t * cap_a
                psi_a[ka] = psi + sa
                sa += T_a[ka]
                states_a[ka + 1] = xa
                ka += 1
                ma += 1
                order[oi] = 0
                if ma == N:
                    frozen_a[l] = xa
            else:
                t = fire_event(1, alpha_b, beta_b, xb, buf_b, hist_b, cnt_b, avg_b,
                               avg_a, hist_a, cnt_a, mb, u_b[kb], kind, eps, xi,
                               const_p, ukind, upar, p, d, tmp)
                probs_b[kb] = p
                drops_b[kb] = d
                avgs_b[kb] = avg_b
                T_b[kb] = t * cap_b
                psi_b[kb] = psi + sb
                sb += T_b[kb]
                states_b[kb + 1] = xb
                kb += 1
                mb += 1
                order[oi] = 1
                if mb == N:
                    frozen_b[l] = xb
            oi += 1
        tau[l] = max(sa, sb)
        arrive_a[l] = psi + sa
        arrive_b[l] = psi + sb
        psi = psi + tau[l]
        if global_md:
            # off by default; outside the verified model
            eval_policy(kind, 0, eps, xi, const_p, ukind, upar, avg_a, avg_b,
                        hist_a, cnt_a[2], hist_b, cnt_b[2], N, p)
            for i in range(n):
                d[i] = ug_a[l, i] < p[i]
            ga = aimd_apply(alpha_a, beta_a, d, xa, tmp) * cap_a
            xa[:] = tmp
            eval_policy(kind, 1, eps, xi, const_p, ukind, upar, avg_b, avg_a,
                        hist_b, cnt_b[2], hist_a, cnt_a[2], N, p)
            for i in range(n):
                d[i] = ug_b[l, i] < p[i]
            gb = aimd_apply(alpha_b, beta_b, d, xb, tmp) * cap_b
            xb[:] = tmp
            psi = psi + max(ga, gb)
            states_a[ka] = xa
            states_b[kb] = xb
        psi_a[ka] = psi
        psi_b[kb] = psi
        observe(xa, buf_a, hist_a, cnt_a, avg_a)
        observe(xb, buf_b, hist_b, cnt_b, avg_b)
    return (states_a, states_b, drops_a, drops_b, probs_a, probs_b, avgs_a, avgs_b,
            T_a, T_b, psi_a, psi_b, order, tau, arrive_a, arrive_b, frozen_a, frozen_b)


@jit
def running_mean(xs):
    """Incremental running mean of the rows of ``xs``: row k is mean of rows 0..k."""
    K, n = xs.shape
    out = np.empty((K, n))
    m = np.zeros(n)
    for k in range(K):
        m += (xs[k] - m) / (k + 1)
        out[k] = m
    return out
