"""Compiled path kernels.

Every path owns a xoshiro256** stream seeded from ``(seed, path index)``
via splitmix64, so results do not depend on thread count or order.
"""

import math

import numpy as np
from numba import njit, prange

POLICY_NULL = 0
POLICY_SS = 1
POLICY_SCHEDULE = 2

SCHEME_EXACT = 0
SCHEME_EULER = 1


@njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def _splitmix(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True)
def seed_stream(seed, path, st):
    sm = np.uint64(seed) ^ (np.uint64(path) * np.uint64(0xD1B54A32D192ED03))
    sm, st[0] = _splitmix(sm)
    sm, st[1] = _splitmix(sm)
    sm, st[2] = _splitmix(sm)
    sm, st[3] = _splitmix(sm)
    st[4] = np.uint64(0)  # cached-normal flag


@njit(cache=True)
def next_u64(st):
    result = _rotl(st[1] * np.uint64(5), 7) * np.uint64(9)
    t = st[1] << np.uint64(17)
    st[2] ^= st[0]
    st[3] ^= st[1]
    st[1] ^= st[2]
    st[0] ^= st[3]
    st[2] ^= t
    st[3] = _rotl(st[3], 45)
    return result


@njit(cache=True)
def uniform(st):
    # 53 random bits in (0, 1)
    return ((next_u64(st) >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def normal(st, cache):
    if st[4] != np.uint64(0):
        st[4] = np.uint64(0)
        return cache[0]
    while True:
        u = 2.0 * uniform(st) - 1.0
        v = 2.0 * uniform(st) - 1.0
        r = u * u + v * v
        if 0.0 < r < 1.0:
            break
    f = math.sqrt(-2.0 * math.log(r) / r)
    cache[0] = v * f
    st[4] = np.uint64(1)
    return u * f


@njit(cache=True)
def _block_size(y, lstrig, mu, sig, dt, remaining, max_block, margin):
    """Longest block (in grid steps) whose increment stays ``margin`` sd clear of the trigger.

    Solves ``margin sig sqrt(h) + |mu| h <= d`` for ``h``.
    """
    d = y - lstrig
    if d <= 0.0:
        return 1
    a = abs(mu)
    b = margin * sig
    if a > 0.0:
        u = 2.0 * d / (b + math.sqrt(b * b + 4.0 * a * d))
    else:
        u = d / b
    k = int(u * u / dt)
    if k > max_block:
        k = max_block
    if k > remaining:
        k = remaining
    return max(k, 1)


@njit(cache=True)
def _bridge_reward(st, cache, y0, y1, t0, h, mu, sig, gamma, rho, strata):
    """Unbiased estimate of the discounted reward integral (times gamma) over a bridge from y0 to y1."""
    acc = 0.0
    ly = y0
    tprev = 0.0
    for j in range(strata):
        tj = (j + uniform(st)) * h / strata
        # bridge from (tprev, ly) to (h, y1) evaluated at tj
        w = (tj - tprev) / (h - tprev)
        var = sig * sig * (tj - tprev) * (h - tj) / (h - tprev)
        ly = ly + w * (y1 - ly) + math.sqrt(var) * normal(st, cache)
        acc += math.exp(gamma * ly - rho * (t0 + tj))
        tprev = tj
    return acc * h / strata


@njit(cache=True)
def _simulate_one(
    path, seed, x0, dt, n_steps, rho, nu, sig, gamma, c0, c1,
    kind, s, S, sched_idx, sched_size, scheme, max_block, margin, strata, bridge_tol,
    out_reward, out_cost, out_xT, out_count, out_mingap,
):
    st = np.empty(5, dtype=np.uint64)
    cache = np.empty(1)
    seed_stream(seed, path, st)
    # pending right halves of split blocks: (length in steps, end state)
    stk_k = np.empty(64, dtype=np.int64)
    stk_y = np.empty(64)
    top = 0
    mu = nu - 0.5 * sig * sig
    sqdt = math.sqrt(dt)
    inv_g = 1.0 / gamma
    ls = math.log(s) if kind == POLICY_SS else -np.inf
    lS = math.log(S)
    log_tol = math.log(bridge_tol)
    reward = 0.0
    cost = 0.0
    count = 0
    last_imp = -1
    mingap = n_steps + 1
    y = math.log(x0)
    n = 0
    nxt = 0  # next schedule entry

    # impulses due at t = 0
    if kind == POLICY_SS and y <= ls:
        cost += c0 * (S - x0) + c1
        y = lS
        count += 1
        last_imp = 0
    while kind == POLICY_SCHEDULE and nxt < sched_idx.shape[0] and sched_idx[nxt] == 0:
        cost += c0 * sched_size[nxt] + c1
        y = math.log(math.exp(y) + sched_size[nxt])
        count += 1
        last_imp = 0
        nxt += 1

    while n < n_steps:
        t0 = n * dt
        if top > 0:
            top -= 1
            k = stk_k[top]
            y1 = stk_y[top]
        else:
            remaining = n_steps - n
            if kind == POLICY_SCHEDULE and nxt < sched_idx.shape[0]:
                remaining = min(remaining, sched_idx[nxt] - n)
            if scheme == SCHEME_EULER or max_block <= 1:
                k = 1
            elif kind == POLICY_SS:
                k = _block_size(y, ls, mu, sig, dt, remaining, max_block, margin)
            else:
                k = min(max_block, remaining)
            if k == 1:
                z = normal(st, cache)
                if scheme == SCHEME_EXACT:
                    y1 = y + mu * dt + sig * sqdt * z
                else:
                    x1 = math.exp(y) * (1.0 + nu * dt + sig * sqdt * z)
                    if not x1 > 0.0:
                        out_reward[path] = np.nan
                        return
                    y1 = math.log(x1)
            else:
                h = k * dt
                y1 = y + mu * h + sig * math.sqrt(h) * normal(st, cache)

        if k > 1 and kind == POLICY_SS:
            # split while the bridge may touch the trigger
            while k > 1:
                d0 = y - ls
                d1 = y1 - ls
                if d1 > 0.0 and -2.0 * d0 * d1 / (sig * sig * k * dt) < log_tol:
                    break
                k1 = k // 2
                w = k1 / k
                var = sig * sig * k1 * (k - k1) * dt / k
                ym = y + w * (y1 - y) + math.sqrt(var) * normal(st, cache)
                stk_k[top] = k - k1
                stk_y[top] = y1
                top += 1
                k = k1
                y1 = ym

        if k == 1:
            reward += 0.5 * dt * (math.exp(gamma * y - rho * t0) + math.exp(gamma * y1 - rho * (t0 + dt))) * inv_g
        else:
            reward += _bridge_reward(st, cache, y, y1, t0, k * dt, mu, sig, gamma, rho, strata) * inv_g
        n += k
        y = y1
        if kind == POLICY_SS and y <= ls:
            disc = math.exp(-rho * n * dt)
            cost += disc * (c0 * (S - math.exp(y)) + c1)
            y = lS
            top = 0  # the rest of the pre-sampled uncontrolled path is discarded
            count += 1
            if last_imp >= 0:
                mingap = min(mingap, n - last_imp)
            last_imp = n
        while kind == POLICY_SCHEDULE and nxt < sched_idx.shape[0] and sched_idx[nxt] == n:
            disc = math.exp(-rho * n * dt)
            cost += disc * (c0 * sched_size[nxt] + c1)
            y = math.log(math.exp(y) + sched_size[nxt])
            count += 1
            if last_imp >= 0:
                mingap = min(mingap, n - last_imp)
            last_imp = n
            nxt += 1

    out_reward[path] = reward
    out_cost[path] = cost
    out_xT[path] = math.exp(y)
    out_count[path] = count
    out_mingap[path] = mingap


@njit(cache=True, parallel=True)
def simulate_paths(
    n_paths, seed, x0, dt, n_steps, rho, nu, sig, gamma, c0, c1,
    kind, s, S, sched_idx, sched_size, scheme, max_block, margin, strata, bridge_tol,
):
    reward = np.empty(n_paths)
    cost = np.empty(n_paths)
    xT = np.empty(n_paths)
    count = np.empty(n_paths, dtype=np.int64)
    mingap = np.empty(n_paths, dtype=np.int64)
    for i in prange(n_paths):
        _simulate_one(
            i, seed, x0, dt, n_steps, rho, nu, sig, gamma, c0, c1,
            kind, s, S, sched_idx, sched_size, scheme, max_block, margin, strata, bridge_tol,
            reward, cost, xT, count, mingap,
        )
    return reward, cost, xT, count, mingap


@njit(cache=True)
def trace_path(path, seed, x0, dt, n_steps, nu, sig, kind, s, S, sched_idx, sched_size, scheme, every):
    """Fine-grid path of one policy; returns (t, x, impulse_flag) every ``every`` steps and at impulses."""
    st = np.empty(5, dtype=np.uint64)
    cache = np.empty(1)
    seed_stream(seed, path, st)
    mu = nu - 0.5 * sig * sig
    sqdt = math.sqrt(dt)
    cap = n_steps + 2
    ts = np.empty(cap)
    xs = np.empty(cap)
    flags = np.zeros(cap, dtype=np.int64)
    r = 0
    x = x0
    nxt = 0
    ts[r] = 0.0
    xs[r] = x
    r += 1
    for n in range(n_steps + 1):
        if n > 0:
            z = normal(st, cache)
            if scheme == SCHEME_EXACT:
                x = x * math.exp(mu * dt + sig * sqdt * z)
            else:
                x = max(x * (1.0 + nu * dt + sig * sqdt * z), 1e-300)
        jumped = False
        if kind == POLICY_SS and x <= s:
            x = S
            jumped = True
        while kind == POLICY_SCHEDULE and nxt < sched_idx.shape[0] and sched_idx[nxt] == n:
            x += sched_size[nxt]
            nxt += 1
            jumped = True
        if (jumped or (n > 0 and n % every == 0)) and r < cap:
            ts[r] = n * dt
            xs[r] = x
            flags[r] = 1 if jumped else 0
            r += 1
    return ts[:r], xs[:r], flags[:r]


@njit(cache=True, parallel=True)
def coupled_fourth_moment(n_paths, seed, x, y, dt, checkpoints, nu, sig, scheme):
    """Per-path ``|X^x_t - X^y_t|**4`` at each checkpoint step under common noise."""
    n_cp = checkpoints.shape[0]
    out = np.empty((n_paths, n_cp))
    mu = nu - 0.5 * sig * sig
    sqdt = math.sqrt(dt)
    last = checkpoints[n_cp - 1]
    for i in prange(n_paths):
        st = np.empty(5, dtype=np.uint64)
        cache = np.empty(1)
        seed_stream(seed, i, st)
        a = x
        b = y
        c = 0
        for n in range(1, last + 1):
            z = normal(st, cache)
            if scheme == SCHEME_EXACT:
                g = math.exp(mu * dt + sig * sqdt * z)
                a *= g
                b *= g
            else:
                a = a * (1.0 + nu * dt + sig * sqdt * z)
                b = b * (1.0 + nu * dt + sig * sqdt * z)
            if n == checkpoints[c]:
                out[i, c] = (a - b) ** 4
                c += 1
    return out
