"""Time-stepping kernels.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with identical semantics. ``MJLS_LQR_NUMBA=0`` (or a missing numba
install) selects the numpy path. ``MJLS_LQR_THREADS`` caps the numba thread
pool used by the Monte Carlo kernel.

Array conventions: coefficient stacks carry a leading time axis of length 1
(constant data) or ``K+1`` (one entry per grid node). ``visited`` is an
int64 array of the mode indices that take part in the integration; all
other modes stay identically zero.
"""

import os
import warnings

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    # the TBB layer is optional; numba falls back to omp/workqueue
    warnings.filterwarnings("ignore", message="The TBB threading layer", category=numba.NumbaWarning)
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f

    prange = range


def numba_enabled():
    flag = os.environ.get("MJLS_LQR_NUMBA", "1").strip().lower()
    return HAVE_NUMBA and flag not in ("0", "false", "no", "off")


def _apply_thread_cap():
    cap = os.environ.get("MJLS_LQR_THREADS")
    if not (HAVE_NUMBA and cap):
        return
    try:
        numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))
    except ValueError:
        pass


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _riccati_rhs_nb(Y, A, S, Q, lam, visited, out):
    n = Y.shape[1]
    for a in range(visited.shape[0]):
        i = visited[a]
        Yi = Y[i]
        Ai = A[i]
        Si = S[i]
        # YS = Y_i S_i
        YS = np.zeros((n, n))
        for r in range(n):
            for c in range(n):
                acc = 0.0
                for q in range(n):
                    acc += Yi[r, q] * Si[q, c]
                YS[r, c] = acc
        for r in range(n):
            for c in range(n):
                acc = Q[i, r, c]
                for q in range(n):
                    acc += Ai[q, r] * Yi[q, c] + Yi[r, q] * Ai[q, c] - YS[r, q] * Yi[q, c]
                for b in range(visited.shape[0]):
                    j = visited[b]
                    acc += lam[i, j] * Y[j, r, c]
                out[i, r, c] = acc


@njit(cache=True)
def _coef(arr, k, h_frac):
    # h_frac: 0 -> node k, 1 -> node k+1, 0.5 -> midpoint average
    if arr.shape[0] == 1:
        return arr[0]
    if h_frac == 0.0:
        return arr[k]
    if h_frac == 1.0:
        return arr[k + 1]
    return 0.5 * (arr[k] + arr[k + 1])


@njit(cache=True)
def _symmetrize_nb(Y, visited):
    n = Y.shape[1]
    for a in range(visited.shape[0]):
        i = visited[a]
        for r in range(n):
            for c in range(r + 1, n):
                v = 0.5 * (Y[i, r, c] + Y[i, c, r])
                Y[i, r, c] = v
                Y[i, c, r] = v


@njit(cache=True)
def _all_finite(Y):
    for v in Y.ravel():
        if not np.isfinite(v):
            return False
    return True


@njit(cache=True)
def _riccati_nb(A, S, Q, QT, lam, visited, h, K, rk4):
    N, n = QT.shape[0], QT.shape[1]
    Y = np.zeros((K + 1, N, n, n))
    for a in range(visited.shape[0]):
        Y[K, visited[a]] = QT[visited[a]]
    cur = Y[K].copy()
    k1 = np.zeros((N, n, n))
    k2 = np.zeros((N, n, n))
    k3 = np.zeros((N, n, n))
    k4 = np.zeros((N, n, n))
    tmp = np.zeros((N, n, n))
    for k in range(K - 1, -1, -1):
        _riccati_rhs_nb(cur, _coef(A, k, 1.0), _coef(S, k, 1.0), _coef(Q, k, 1.0), lam, visited, k1)
        if rk4:
            Am, Sm, Qm = _coef(A, k, 0.5), _coef(S, k, 0.5), _coef(Q, k, 0.5)
            for a in range(visited.shape[0]):
                i = visited[a]
                tmp[i] = cur[i] + 0.5 * h * k1[i]
            _riccati_rhs_nb(tmp, Am, Sm, Qm, lam, visited, k2)
            for a in range(visited.shape[0]):
                i = visited[a]
                tmp[i] = cur[i] + 0.5 * h * k2[i]
            _riccati_rhs_nb(tmp, Am, Sm, Qm, lam, visited, k3)
            for a in range(visited.shape[0]):
                i = visited[a]
                tmp[i] = cur[i] + h * k3[i]
            _riccati_rhs_nb(tmp, _coef(A, k, 0.0), _coef(S, k, 0.0), _coef(Q, k, 0.0), lam, visited, k4)
            for a in range(visited.shape[0]):
                i = visited[a]
                cur[i] = cur[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        else:
            for a in range(visited.shape[0]):
                i = visited[a]
                cur[i] = cur[i] + h * k1[i]
        _symmetrize_nb(cur, visited)
        if not _all_finite(cur):
            return Y, k
        Y[k] = cur
    return Y, -1


@njit(cache=True)
def _moment_rhs_nb(X, M, lam, visited, out):
    n = X.shape[1]
    for a in range(visited.shape[0]):
        i = visited[a]
        Mi = M[i]
        Xi = X[i]
        for r in range(n):
            for c in range(n):
                acc = 0.0
                for q in range(n):
                    acc += Mi[r, q] * Xi[q, c] + Xi[r, q] * Mi[c, q]
                for b in range(visited.shape[0]):
                    j = visited[b]
                    acc += lam[j, i] * X[j, r, c]
                out[i, r, c] = acc


@njit(cache=True)
def _moments_nb(M, lam, visited, X0, h, K, rk4):
    N, n = X0.shape[0], X0.shape[1]
    X = np.zeros((K + 1, N, n, n))
    for a in range(visited.shape[0]):
        X[0, visited[a]] = X0[visited[a]]
    cur = X[0].copy()
    k1 = np.zeros((N, n, n))
    k2 = np.zeros((N, n, n))
    k3 = np.zeros((N, n, n))
    k4 = np.zeros((N, n, n))
    tmp = np.zeros((N, n, n))
    for k in range(K):
        Mk = M[0] if M.shape[0] == 1 else M[k]
        _moment_rhs_nb(cur, Mk, lam, visited, k1)
        if rk4:
            for a in range(visited.shape[0]):
                i = visited[a]
                tmp[i] = cur[i] + 0.5 * h * k1[i]
            _moment_rhs_nb(tmp, Mk, lam, visited, k2)
            for a in range(visited.shape[0]):
                i = visited[a]
                tmp[i] = cur[i] + 0.5 * h * k2[i]
            _moment_rhs_nb(tmp, Mk, lam, visited, k3)
            for a in range(visited.shape[0]):
                i = visited[a]
                tmp[i] = cur[i] + h * k3[i]
            _moment_rhs_nb(tmp, Mk, lam, visited, k4)
            for a in range(visited.shape[0]):
                i = visited[a]
                cur[i] = cur[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        else:
            for a in range(visited.shape[0]):
                i = visited[a]
                cur[i] = cur[i] + h * k1[i]
        _symmetrize_nb(cur, visited)
        if not _all_finite(cur):
            return X, k + 1
        X[k + 1] = cur
    return X, -1


@njit(cache=True)
def _matvec(M, x, out):
    n = x.shape[0]
    for r in range(n):
        acc = 0.0
        for c in range(n):
            acc += M[r, c] * x[c]
        out[r] = acc


@njit(cache=True)
def _quad(G, x):
    n = x.shape[0]
    acc = 0.0
    for r in range(n):
        for c in range(n):
            acc += x[r] * G[r, c] * x[c]
    return acc


@njit(cache=True)
def _path_nb(x0, nodes, modes, M, G, QT, h, K, traj, store):
    n = x0.shape[0]
    x = x0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    if store:
        traj[0] = x
    seg = 0
    nseg = nodes.shape[0]
    cost = 0.0
    for k in range(K):
        while seg + 1 < nseg and nodes[seg + 1] <= k:
            seg += 1
        i = modes[seg]
        km = 0 if M.shape[0] == 1 else k
        Mk = M[km, i]
        Gk = G[km, i]
        c0 = _quad(Gk, x)
        _matvec(Mk, x, k1)
        for r in range(n):
            tmp[r] = x[r] + 0.5 * h * k1[r]
        _matvec(Mk, tmp, k2)
        for r in range(n):
            tmp[r] = x[r] + 0.5 * h * k2[r]
        _matvec(Mk, tmp, k3)
        for r in range(n):
            tmp[r] = x[r] + h * k3[r]
        _matvec(Mk, tmp, k4)
        for r in range(n):
            x[r] = x[r] + (h / 6.0) * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r])
        cost += 0.5 * h * (c0 + _quad(Gk, x))
        if store:
            traj[k + 1] = x
        if not np.isfinite(cost):
            return np.nan
    return cost + _quad(QT[modes[nseg - 1]], x)


@njit(cache=True, parallel=True)
def _mc_batch_nb(x0s, offsets, nodes, modes, M, G, QT, h, K):
    P = x0s.shape[0]
    costs = np.empty(P)
    dummy = np.empty((0, x0s.shape[1]))
    for p in prange(P):
        lo = offsets[p]
        hi = offsets[p + 1]
        costs[p] = _path_nb(x0s[p], nodes[lo:hi], modes[lo:hi], M, G, QT, h, K, dummy, False)
    return costs


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------


def _coef_np(arr, k, frac):
    if arr.shape[0] == 1:
        return arr[0]
    if frac == 0.0:
        return arr[k]
    if frac == 1.0:
        return arr[k + 1]
    return 0.5 * (arr[k] + arr[k + 1])


def _riccati_rhs_np(Y, A, S, Q, lam):
    At = A.transpose(0, 2, 1)
    return At @ Y + Y @ A + np.einsum("ij,jkl->ikl", lam, Y) + Q - Y @ S @ Y


def _sym(Y):
    return 0.5 * (Y + Y.transpose(0, 2, 1))


def _riccati_np(A, S, Q, QT, lam, visited, h, K, rk4):
    N, n = QT.shape[0], QT.shape[1]
    v = visited
    A, S, Q = A[:, v], S[:, v], Q[:, v]
    lv = lam[np.ix_(v, v)]
    Y = np.zeros((K + 1, N, n, n))
    cur = QT[v].copy()
    Y[K, v] = cur
    for k in range(K - 1, -1, -1):
        k1 = _riccati_rhs_np(cur, _coef_np(A, k, 1.0), _coef_np(S, k, 1.0), _coef_np(Q, k, 1.0), lv)
        if rk4:
            Am, Sm, Qm = _coef_np(A, k, 0.5), _coef_np(S, k, 0.5), _coef_np(Q, k, 0.5)
            k2 = _riccati_rhs_np(cur + 0.5 * h * k1, Am, Sm, Qm, lv)
            k3 = _riccati_rhs_np(cur + 0.5 * h * k2, Am, Sm, Qm, lv)
            k4 = _riccati_rhs_np(cur + h * k3, _coef_np(A, k, 0.0), _coef_np(S, k, 0.0), _coef_np(Q, k, 0.0), lv)
            cur = cur + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            cur = cur + h * k1
        cur = _sym(cur)
        if not np.all(np.isfinite(cur)):
            return Y, k
        Y[k, v] = cur
    return Y, -1


def _moment_rhs_np(X, M, lam_t):
    return M @ X + X @ M.transpose(0, 2, 1) + np.einsum("ij,jkl->ikl", lam_t, X)


def _moments_np(M, lam, visited, X0, h, K, rk4):
    N, n = X0.shape[0], X0.shape[1]
    v = visited
    M = M[:, v]
    lt = lam[np.ix_(v, v)].T.copy()
    X = np.zeros((K + 1, N, n, n))
    cur = X0[v].copy()
    X[0, v] = cur
    for k in range(K):
        Mk = M[0] if M.shape[0] == 1 else M[k]
        k1 = _moment_rhs_np(cur, Mk, lt)
        if rk4:
            k2 = _moment_rhs_np(cur + 0.5 * h * k1, Mk, lt)
            k3 = _moment_rhs_np(cur + 0.5 * h * k2, Mk, lt)
            k4 = _moment_rhs_np(cur + h * k3, Mk, lt)
            cur = cur + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            cur = cur + h * k1
        cur = _sym(cur)
        if not np.all(np.isfinite(cur)):
            return X, k + 1
        X[k + 1, v] = cur
    return X, -1


def _mode_grid(offsets, nodes, modes, K, lo, hi):
    out = np.empty((hi - lo, K), dtype=np.int64)
    for r, p in enumerate(range(lo, hi)):
        s = nodes[offsets[p]:offsets[p + 1]]
        lengths = np.diff(np.append(np.minimum(s, K), K))
        out[r] = np.repeat(modes[offsets[p]:offsets[p + 1]], lengths)
    return out


def _mc_chunk_np(x0s, mode_grid, final_modes, M, G, QT, h, K, traj=None):
    x = x0s.copy()
    cost = np.zeros(x.shape[0])
    if traj is not None:
        traj[:, 0] = x
    for k in range(K):
        km = 0 if M.shape[0] == 1 else k
        idx = mode_grid[:, k]
        Mk = M[km][idx]
        Gk = G[km][idx]
        c0 = np.einsum("pi,pij,pj->p", x, Gk, x)
        k1 = np.einsum("pij,pj->pi", Mk, x)
        k2 = np.einsum("pij,pj->pi", Mk, x + 0.5 * h * k1)
        k3 = np.einsum("pij,pj->pi", Mk, x + 0.5 * h * k2)
        k4 = np.einsum("pij,pj->pi", Mk, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        cost += 0.5 * h * (c0 + np.einsum("pi,pij,pj->p", x, Gk, x))
        if traj is not None:
            traj[:, k + 1] = x
    cost += np.einsum("pi,pij,pj->p", x, QT[final_modes], x)
    cost[~np.isfinite(cost)] = np.nan
    return cost


def _mc_batch_np(x0s, offsets, nodes, modes, M, G, QT, h, K, chunk_cells=20_000_000):
    P = x0s.shape[0]
    costs = np.empty(P)
    chunk = max(1, chunk_cells // max(K, 1))
    final = modes[offsets[1:] - 1]
    for lo in range(0, P, chunk):
        hi = min(P, lo + chunk)
        grid = _mode_grid(offsets, nodes, modes, K, lo, hi)
        costs[lo:hi] = _mc_chunk_np(x0s[lo:hi], grid, final[lo:hi], M, G, QT, h, K)
    return costs


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def riccati_integrate(A, S, Q, QT, lam, visited, h, K, rk4=True, use_numba=None):
    """Backward sweep of the coupled Riccati system from node K to node 0.

    Returns ``(Y, bad)`` where ``bad`` is the first node with non-finite
    values, or -1.
    """
    use_numba = numba_enabled() if use_numba is None else use_numba
    args = tuple(np.ascontiguousarray(a, dtype=float) for a in (A, S, Q, QT, lam))
    visited = np.asarray(visited, dtype=np.int64)
    if use_numba:
        return _riccati_nb(*args, visited, float(h), int(K), bool(rk4))
    return _riccati_np(*args, visited, float(h), int(K), bool(rk4))


def moments_integrate(M, lam, visited, X0, h, K, rk4=True, use_numba=None):
    use_numba = numba_enabled() if use_numba is None else use_numba
    M = np.ascontiguousarray(M, dtype=float)
    lam = np.ascontiguousarray(lam, dtype=float)
    X0 = np.ascontiguousarray(X0, dtype=float)
    visited = np.asarray(visited, dtype=np.int64)
    if use_numba:
        return _moments_nb(M, lam, visited, X0, float(h), int(K), bool(rk4))
    return _moments_np(M, lam, visited, X0, float(h), int(K), bool(rk4))


def mc_path_costs(x0s, offsets, nodes, modes, M, G, QT, h, K, use_numba=None):
    """Cost of every path; NaN marks a diverged path."""
    use_numba = numba_enabled() if use_numba is None else use_numba
    x0s = np.ascontiguousarray(x0s, dtype=float)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    nodes = np.ascontiguousarray(nodes, dtype=np.int64)
    modes = np.ascontiguousarray(modes, dtype=np.int64)
    M = np.ascontiguousarray(M, dtype=float)
    G = np.ascontiguousarray(G, dtype=float)
    QT = np.ascontiguousarray(QT, dtype=float)
    if use_numba:
        _apply_thread_cap()
        return _mc_batch_nb(x0s, offsets, nodes, modes, M, G, QT, float(h), int(K))
    return _mc_batch_np(x0s, offsets, nodes, modes, M, G, QT, float(h), int(K))


def mc_single_path(x0, nodes, modes, M, G, QT, h, K, use_numba=None):
    """Trajectory samples ``(K+1, n)`` and cost for one path."""
    use_numba = numba_enabled() if use_numba is None else use_numba
    x0 = np.ascontiguousarray(x0, dtype=float)
    nodes = np.ascontiguousarray(nodes, dtype=np.int64)
    modes = np.ascontiguousarray(modes, dtype=np.int64)
    M = np.ascontiguousarray(M, dtype=float)
    G = np.ascontiguousarray(G, dtype=float)
    QT = np.ascontiguousarray(QT, dtype=float)
    traj = np.empty((int(K) + 1, x0.shape[0]))
    if use_numba:
        cost = _path_nb(x0, nodes, modes, M, G, QT, float(h), int(K), traj, True)
    else:
        offsets = np.array([0, len(nodes)])
        grid = _mode_grid(offsets, nodes, modes, int(K), 0, 1)
        out = np.empty((1, int(K) + 1, x0.shape[0]))
        cost = _mc_chunk_np(x0[None], grid, modes[-1:], M, G, QT, float(h), int(K), traj=out)[0]
        traj = out[0]
    return traj, float(cost)
