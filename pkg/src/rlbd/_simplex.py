"""Bounded-variable revised simplex kernel (numba-compiled).

Every row ``a_i x (sense) b_i`` is turned into ``a_i x + s_i = b_i`` with a
slack whose bounds encode the sense, plus one artificial column per row for
phase 1. The basis inverse is kept explicitly and updated by elementary row
operations, with a full refactorization every ``REFACTOR_EVERY`` pivots.

Column states: -1 basic, 0 at lower bound, 1 at upper bound, 2 free at zero.
Status codes: 0 optimal, 1 infeasible, 2 unbounded, 3 iteration cap.
"""

import numpy as np
from numba import njit

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
ITERATION_LIMIT = 3

REFACTOR_EVERY = 64


@njit(cache=True, nogil=True)
def _refactor(A, b, x, basis, state):
    m = A.shape[0]
    B = np.empty((m, m))
    for i in range(m):
        B[:, i] = A[:, basis[i]]
    Binv = np.ascontiguousarray(np.linalg.inv(B))
    r = b.copy()
    for j in range(A.shape[1]):
        if state[j] != -1 and x[j] != 0.0:
            r -= A[:, j] * x[j]
    xB = Binv @ r
    for i in range(m):
        x[basis[i]] = xB[i]
    return Binv


@njit(cache=True, nogil=True)
def _run_phase(A, AT, b, cost, lo, hi, x, basis, state, Binv, it, max_iter,
               opt_tol, piv_tol, bland_after):
    m, N = A.shape
    degenerate = 0
    bland = False
    since_refactor = 0
    while True:
        if it >= max_iter:
            return ITERATION_LIMIT, it, Binv
        cB = np.empty(m)
        for i in range(m):
            cB[i] = cost[basis[i]]
        y = cB @ Binv
        d = cost - AT @ y

        enter = -1
        best_gain = 0.0
        for j in range(N):
            s = state[j]
            if s == -1 or lo[j] == hi[j]:
                continue
            dj = d[j]
            gain = 0.0
            if s == 0:
                if dj < -opt_tol:
                    gain = -dj
            elif s == 1:
                if dj > opt_tol:
                    gain = dj
            else:
                if abs(dj) > opt_tol:
                    gain = abs(dj)
            if gain > 0.0:
                if bland:
                    enter = j
                    break
                if gain > best_gain:
                    best_gain = gain
                    enter = j
        if enter == -1:
            return OPTIMAL, it, Binv

        direction = 1.0 if d[enter] < 0.0 else -1.0
        alpha = Binv @ AT[enter]

        step = np.inf
        if lo[enter] > -np.inf and hi[enter] < np.inf:
            step = hi[enter] - lo[enter]
        leave = -1
        leave_to = 0
        best_piv = 0.0
        for i in range(m):
            a = direction * alpha[i]
            bi = basis[i]
            if a > piv_tol:
                if lo[bi] == -np.inf:
                    continue
                ratio = (x[bi] - lo[bi]) / a
                to = 0
            elif a < -piv_tol:
                if hi[bi] == np.inf:
                    continue
                ratio = (hi[bi] - x[bi]) / (-a)
                to = 1
            else:
                continue
            if ratio < 0.0:
                ratio = 0.0
            take = False
            if ratio < step - 1e-12:
                take = True
            elif ratio <= step + 1e-12 and leave != -1:
                if bland:
                    take = bi < basis[leave]
                else:
                    take = abs(a) > best_piv
            if take:
                step = ratio
                leave = i
                leave_to = to
                best_piv = abs(a)

        if step == np.inf:
            return UNBOUNDED, it, Binv

        if step > 0.0:
            x[enter] += direction * step
            for i in range(m):
                x[basis[i]] -= direction * step * alpha[i]

        if leave == -1:
            # bound flip of the entering column
            if direction > 0.0:
                x[enter] = hi[enter]
                state[enter] = 1
            else:
                x[enter] = lo[enter]
                state[enter] = 0
        else:
            bl = basis[leave]
            if leave_to == 0:
                x[bl] = lo[bl]
            else:
                x[bl] = hi[bl]
            state[bl] = leave_to
            basis[leave] = enter
            state[enter] = -1
            piv = alpha[leave]
            Binv[leave, :] /= piv
            for i in range(m):
                if i != leave and alpha[i] != 0.0:
                    Binv[i, :] -= alpha[i] * Binv[leave, :]
            since_refactor += 1
            if since_refactor >= REFACTOR_EVERY:
                Binv = _refactor(A, b, x, basis, state)
                since_refactor = 0

        if step <= 1e-12:
            degenerate += 1
            if degenerate >= bland_after:
                bland = True
        it += 1


@njit(cache=True, nogil=True)
def _dual_refactor(A0, b, x, basis, state, BT, active):
    """Dense reinversion for the slack-identity layout; all columns active."""
    m, n = A0.shape
    B = np.zeros((m, m))
    for i in range(m):
        j = basis[i]
        if j < n:
            B[:, i] = A0[:, j]
        else:
            B[j - n, i] = 1.0
    BT[:, :] = np.linalg.inv(B).T
    for i in range(m):
        active[i] = True
    r = b.copy()
    for j in range(n):
        if state[j] != -1 and x[j] != 0.0:
            r -= A0[:, j] * x[j]
    for i in range(m):
        j = n + i
        if state[j] != -1 and x[j] != 0.0:
            r[i] -= x[j]
    for i in range(m):
        acc = 0.0
        for k in range(m):
            acc += BT[k, i] * r[k]
        x[basis[i]] = acc


@njit(cache=True, nogil=True)
def _run_dual(A0, A0T, b, cost, lo, hi, x, basis, state, it, max_iter,
              feas_tol, opt_tol, piv_tol, bland_after):
    """Bounded dual simplex from the all-slack basis.

    Columns ``0..n-1`` are ``A0``, columns ``n..n+m-1`` the slack identity.
    The basis inverse is held transposed in ``BT``; a column of the inverse
    differs from the unit vector only once its row has been a pivot row, and
    ``plist`` records those rows so every product costs O(m * pivots).
    """
    m, n = A0.shape
    N = n + m
    BT = np.eye(m)
    active = np.zeros(m, dtype=np.bool_)
    plist = np.empty(m, dtype=np.int64)
    na = 0
    degenerate = 0
    bland = False
    since_refactor = 0
    cB = np.empty(m)
    y = np.empty(m)
    d = np.empty(N)
    rho = np.empty(m)
    row = np.empty(N)
    alpha = np.empty(m)
    while True:
        if it >= max_iter:
            return ITERATION_LIMIT, it, BT
        leave = -1
        worst = 0.0
        for i in range(m):
            bi = basis[i]
            xi = x[bi]
            viol = 0.0
            if xi < lo[bi] - feas_tol * (1.0 + abs(lo[bi])):
                viol = lo[bi] - xi
            elif xi > hi[bi] + feas_tol * (1.0 + abs(hi[bi])):
                viol = xi - hi[bi]
            if viol > 0.0:
                if bland:
                    if leave == -1 or bi < basis[leave]:
                        leave = i
                elif viol > worst:
                    worst = viol
                    leave = i
        if leave == -1:
            return OPTIMAL, it, BT
        bl = basis[leave]
        below = x[bl] < lo[bl]
        target = lo[bl] if below else hi[bl]

        # y = cB^T Binv ; column k of Binv is BT[k]
        for i in range(m):
            cB[i] = cost[basis[i]]
        for k in range(m):
            if active[k]:
                acc = 0.0
                for i in range(m):
                    acc += cB[i] * BT[k, i]
                y[k] = acc
            else:
                y[k] = cB[k]
        # rho = row `leave` of Binv
        for k in range(m):
            if active[k]:
                rho[k] = BT[k, leave]
            else:
                rho[k] = 1.0 if k == leave else 0.0
        for j in range(n):
            acc_d = 0.0
            acc_r = 0.0
            for i in range(m):
                acc_d += A0T[j, i] * y[i]
                acc_r += A0T[j, i] * rho[i]
            d[j] = cost[j] - acc_d
            row[j] = acc_r
        for i in range(m):
            d[n + i] = cost[n + i] - y[i]
            row[n + i] = rho[i]

        enter = -1
        best = np.inf
        best_piv = 0.0
        for j in range(N):
            s = state[j]
            if s == -1 or lo[j] == hi[j]:
                continue
            a = row[j]
            if abs(a) <= piv_tol:
                continue
            if s == 2:
                ok = True
            elif below:
                ok = (s == 0 and a < 0.0) or (s == 1 and a > 0.0)
            else:
                ok = (s == 0 and a > 0.0) or (s == 1 and a < 0.0)
            if not ok:
                continue
            ratio = abs(d[j]) / abs(a)
            take = False
            if ratio < best - 1e-12:
                take = True
            elif ratio <= best + 1e-12:
                if bland:
                    take = j < enter
                else:
                    take = abs(a) > best_piv
            if take:
                best = ratio
                enter = j
                best_piv = abs(a)
        if enter == -1:
            return INFEASIBLE, it, BT

        # alpha = Binv @ column(enter)
        if enter < n:
            for i in range(m):
                alpha[i] = A0T[enter, i]
            for t in range(na):
                k = plist[t]
                v = A0T[enter, k]
                if v != 0.0:
                    alpha[k] -= v
                    for i in range(m):
                        alpha[i] += BT[k, i] * v
        else:
            k = enter - n
            if active[k]:
                for i in range(m):
                    alpha[i] = BT[k, i]
            else:
                for i in range(m):
                    alpha[i] = 0.0
                alpha[k] = 1.0

        step = (x[bl] - target) / alpha[leave]
        x[enter] += step
        for i in range(m):
            x[basis[i]] -= step * alpha[i]
        x[bl] = target
        state[bl] = 0 if below else 1
        basis[leave] = enter
        state[enter] = -1

        if not active[leave]:
            active[leave] = True
            plist[na] = leave
            na += 1
        pa = alpha[leave]
        for t in range(na):
            k = plist[t]
            pv = BT[k, leave] / pa
            if pv != 0.0:
                for i in range(m):
                    BT[k, i] -= alpha[i] * pv
            BT[k, leave] = pv
        since_refactor += 1
        if since_refactor >= REFACTOR_EVERY:
            _dual_refactor(A0, b, x, basis, state, BT, active)
            na = 0
            for k in range(m):
                plist[na] = k
                na += 1
            since_refactor = 0
        if best <= 1e-12:
            degenerate += 1
            if degenerate >= bland_after:
                bland = True
        it += 1


@njit(cache=True, nogil=True)
def solve_dense(A0, sense, b, c0, lo0, hi0, max_iter, feas_tol, opt_tol,
                piv_tol, bland_after, method):
    """Solve ``min c0 x  s.t.  A0 x (sense) b,  lo0 <= x <= hi0``.

    ``sense`` holds +1 for <=, -1 for >=, 0 for =. ``method`` is 0 (dual
    simplex when the all-slack basis is dual feasible, else primal), 1
    (primal two-phase) or 2 (dual; falls back to primal when the slack basis
    is not dual feasible). Returns ``(status, x, duals, iterations)``; ``x``
    has the structural length.
    """
    m, n = A0.shape
    if method != 1:
        dual_ok = True
        for j in range(n):
            if c0[j] > opt_tol:
                if lo0[j] == -np.inf:
                    dual_ok = False
            elif c0[j] < -opt_tol:
                if hi0[j] == np.inf:
                    dual_ok = False
        if dual_ok:
            return _solve_dual(A0, sense, b, c0, lo0, hi0, max_iter, feas_tol,
                               opt_tol, piv_tol, bland_after)
    return _solve_primal(A0, sense, b, c0, lo0, hi0, max_iter, feas_tol,
                         opt_tol, piv_tol, bland_after)


@njit(cache=True, nogil=True)
def _solve_dual(A0, sense, b, c0, lo0, hi0, max_iter, feas_tol, opt_tol,
                piv_tol, bland_after):
    m, n = A0.shape
    N = n + m
    lo = np.empty(N)
    hi = np.empty(N)
    lo[:n] = lo0
    hi[:n] = hi0
    x = np.zeros(N)
    state = np.zeros(N, dtype=np.int64)
    basis = np.empty(m, dtype=np.int64)
    for j in range(n):
        if c0[j] > opt_tol or (c0[j] >= -opt_tol and lo0[j] > -np.inf):
            x[j] = lo0[j]
            state[j] = 0
        elif hi0[j] < np.inf:
            x[j] = hi0[j]
            state[j] = 1
        else:
            state[j] = 2
    r = b - A0 @ x[:n]
    for i in range(m):
        s = n + i
        if sense[i] > 0:
            lo[s], hi[s] = 0.0, np.inf
        elif sense[i] < 0:
            lo[s], hi[s] = -np.inf, 0.0
        else:
            lo[s], hi[s] = 0.0, 0.0
        x[s] = r[i]
        state[s] = -1
        basis[i] = s
    A0T = np.ascontiguousarray(A0.T)
    cost = np.zeros(N)
    cost[:n] = c0
    status, it, BT = _run_dual(A0, A0T, b, cost, lo, hi, x, basis, state, 0,
                               max_iter, feas_tol, opt_tol, piv_tol,
                               bland_after)
    if status != OPTIMAL:
        return status, x[:n].copy(), np.zeros(m), it
    cB = np.empty(m)
    for i in range(m):
        cB[i] = cost[basis[i]]
    y = BT @ cB
    return OPTIMAL, x[:n].copy(), y, it


@njit(cache=True, nogil=True)
def _solve_primal(A0, sense, b, c0, lo0, hi0, max_iter, feas_tol, opt_tol,
                  piv_tol, bland_after):
    m, n = A0.shape
    N = n + 2 * m
    A = np.zeros((m, N))
    A[:, :n] = A0
    lo = np.empty(N)
    hi = np.empty(N)
    lo[:n] = lo0
    hi[:n] = hi0
    x = np.zeros(N)
    state = np.zeros(N, dtype=np.int64)
    basis = np.empty(m, dtype=np.int64)

    for j in range(n):
        if lo0[j] > -np.inf:
            x[j] = lo0[j]
            state[j] = 0
        elif hi0[j] < np.inf:
            x[j] = hi0[j]
            state[j] = 1
        else:
            x[j] = 0.0
            state[j] = 2
    r = b - A0 @ x[:n]

    Binv = np.zeros((m, m))
    n_art = 0
    for i in range(m):
        s = n + i
        a = n + m + i
        A[i, s] = 1.0
        if sense[i] > 0:
            lo[s], hi[s] = 0.0, np.inf
        elif sense[i] < 0:
            lo[s], hi[s] = -np.inf, 0.0
        else:
            lo[s], hi[s] = 0.0, 0.0
        if lo[s] <= r[i] <= hi[s]:
            x[s] = r[i]
            state[s] = -1
            basis[i] = s
            Binv[i, i] = 1.0
            A[i, a] = 1.0
            lo[a], hi[a] = 0.0, 0.0
            state[a] = 0
        else:
            clamp = lo[s] if r[i] < lo[s] else hi[s]
            x[s] = clamp
            state[s] = 0 if clamp == lo[s] else 1
            resid = r[i] - clamp
            sgn = 1.0 if resid > 0.0 else -1.0
            A[i, a] = sgn
            lo[a], hi[a] = 0.0, np.inf
            x[a] = abs(resid)
            state[a] = -1
            basis[i] = a
            Binv[i, i] = sgn
            n_art += 1
    AT = np.ascontiguousarray(A.T)

    it = 0
    if n_art > 0:
        cost1 = np.zeros(N)
        cost1[n + m:] = 1.0
        status, it, Binv = _run_phase(A, AT, b, cost1, lo, hi, x, basis,
                                      state, Binv, it, max_iter, opt_tol,
                                      piv_tol, bland_after)
        if status == ITERATION_LIMIT:
            return status, x[:n].copy(), np.zeros(m), it
        infeas = 0.0
        for i in range(m):
            infeas += x[n + m + i]
        scale = 1.0
        for i in range(m):
            scale = max(scale, abs(b[i]))
        if infeas > feas_tol * scale:
            return INFEASIBLE, x[:n].copy(), np.zeros(m), it
        for i in range(m):
            a = n + m + i
            hi[a] = 0.0
            if state[a] != -1:
                x[a] = 0.0
                state[a] = 0
        Binv = _refactor(A, b, x, basis, state)

    cost2 = np.zeros(N)
    cost2[:n] = c0
    status, it, Binv = _run_phase(A, AT, b, cost2, lo, hi, x, basis, state,
                                  Binv, it, max_iter, opt_tol, piv_tol,
                                  bland_after)
    if status != OPTIMAL:
        return status, x[:n].copy(), np.zeros(m), it
    Binv = _refactor(A, b, x, basis, state)
    cB = np.empty(m)
    for i in range(m):
        cB[i] = cost2[basis[i]]
    y = cB @ Binv
    return OPTIMAL, x[:n].copy(), y, it
