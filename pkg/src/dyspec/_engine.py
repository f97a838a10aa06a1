"""Fixed-step integration engine.

Everything that advances state in time lives here: the joint RK4 stepper
for (position, unit frequency, log-stretch, propagator block), chunked
QR walks for spectral estimates, and recording variants for trajectory
dumps and multi-time propagator profiles.

Two implementations share one contract. Catalog flows with built-in
generator kinds run through numba kernels (the fast path); flows or
generators given as Python callables run through a plain numpy twin.
Both use classical RK4 with the frequency renormalized after every
step; backward time means stepping with a negative increment, which is
algebraically the same as integrating the negated vector field.

State layout per trajectory: one float64 vector
    y = [x (n), eta (n), s, M row-major (d*mcols)].
"""

import numpy as np
from numba import njit

from .errors import InputError, IntegrationError

# generator codes for the compiled kernels
GEN_NONE = 0
GEN_AMP_PROJ = 1
GEN_AMP_VERB = 2
GEN_CONST = 3
GEN_FOURIER = 4
GEN_FLOWJAC = 5

_DUMMY_MAT = np.zeros((1, 1))
_DUMMY_FOUR = np.zeros((1, 1, 1))


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _deriv(fcode, fp1, fp2, gcode, gmat, gfour, n, d, mcols, with_mat,
           y, dy, J, u, tmp):
    x = y[:n]
    eta = y[n:2 * n]

    # velocity
    if fcode == 0:  # shear: fp1 cosine coeffs, fp2 sine coeffs, harmonic k
        yy = x[1]
        U = 0.0
        for k in range(fp1.shape[0]):
            U += fp1[k] * np.cos(k * yy) + fp2[k] * np.sin(k * yy)
        u[0] = U
        u[1] = 0.0
    elif fcode == 1:  # cellular
        u[0] = -np.sin(x[0]) * np.cos(x[1])
        u[1] = np.cos(x[0]) * np.sin(x[1])
    else:  # abc
        A0 = fp1[0]
        B0 = fp1[1]
        C0 = fp1[2]
        u[0] = A0 * np.sin(x[2]) + C0 * np.cos(x[1])
        u[1] = B0 * np.sin(x[0]) + A0 * np.cos(x[2])
        u[2] = C0 * np.sin(x[1]) + B0 * np.cos(x[0])

    # jacobian, row i col j = d u_i / d x_j
    if fcode == 0:
        yy = x[1]
        dU = 0.0
        for k in range(fp1.shape[0]):
            dU += k * (fp2[k] * np.cos(k * yy) - fp1[k] * np.sin(k * yy))
        J[0, 0] = 0.0
        J[0, 1] = dU
        J[1, 0] = 0.0
        J[1, 1] = 0.0
    elif fcode == 1:
        c1 = np.cos(x[0])
        s1 = np.sin(x[0])
        c2 = np.cos(x[1])
        s2 = np.sin(x[1])
        J[0, 0] = -c1 * c2
        J[0, 1] = s1 * s2
        J[1, 0] = -s1 * s2
        J[1, 1] = c1 * c2
    else:
        A0 = fp1[0]
        B0 = fp1[1]
        C0 = fp1[2]
        J[0, 0] = 0.0
        J[0, 1] = -C0 * np.sin(x[1])
        J[0, 2] = A0 * np.cos(x[2])
        J[1, 0] = B0 * np.cos(x[0])
        J[1, 1] = 0.0
        J[1, 2] = -A0 * np.sin(x[2])
        J[2, 0] = -B0 * np.sin(x[0])
        J[2, 1] = C0 * np.cos(x[1])
        J[2, 2] = 0.0

    for i in range(n):
        dy[i] = u[i]

    # frequency transport: eta' = -J^T eta + <J^T eta, eta> eta, s' = -<...>
    c = 0.0
    for j in range(n):
        tj = 0.0
        for k in range(n):
            tj += J[k, j] * eta[k]
        tmp[j] = tj
        c += tj * eta[j]
    for i in range(n):
        dy[n + i] = -tmp[i] + c * eta[i]
    dy[2 * n] = -c

    if with_mat and d > 0:
        Mo = 2 * n + 1
        # assemble generator rows on the fly to avoid a (d,d) scratch
        for i in range(d):
            for j in range(mcols):
                dy[Mo + i * mcols + j] = 0.0
        if gcode == GEN_AMP_PROJ or gcode == GEN_AMP_VERB:
            # A = -J + 2 eta eta^T J   (projected)
            # A = +J + eta eta^T J     (verbatim)
            for i in range(d):
                for k in range(d):
                    if gcode == GEN_AMP_PROJ:
                        a = -J[i, k] + 2.0 * eta[i] * tmp[k]
                    else:
                        a = J[i, k] + eta[i] * tmp[k]
                    for j in range(mcols):
                        dy[Mo + i * mcols + j] += a * y[Mo + k * mcols + j]
        elif gcode == GEN_CONST:
            for i in range(d):
                for k in range(d):
                    a = gmat[i, k]
                    if a != 0.0:
                        for j in range(mcols):
                            dy[Mo + i * mcols + j] += a * y[Mo + k * mcols + j]
        elif gcode == GEN_FOURIER:
            x1 = x[0]
            K = (gfour.shape[0] - 1) // 2
            for i in range(d):
                for k in range(d):
                    a = gfour[0, i, k]
                    for kk in range(1, K + 1):
                        a += gfour[2 * kk - 1, i, k] * np.cos(kk * x1)
                        a += gfour[2 * kk, i, k] * np.sin(kk * x1)
                    for j in range(mcols):
                        dy[Mo + i * mcols + j] += a * y[Mo + k * mcols + j]
        elif gcode == GEN_FLOWJAC:
            for i in range(d):
                for k in range(d):
                    a = J[i, k]
                    for j in range(mcols):
                        dy[Mo + i * mcols + j] += a * y[Mo + k * mcols + j]


@njit(cache=True, nogil=True)
def _rk4_steps(fcode, fp1, fp2, gcode, gmat, gfour, n, d, mcols, with_mat,
               y, h, n_steps, k1, k2, k3, k4, yt, J, u, tmp):
    """Advance y in place; returns failing step index or -1 on success."""
    L = 2 * n + 1
    if with_mat:
        L += d * mcols
    for step in range(n_steps):
        _deriv(fcode, fp1, fp2, gcode, gmat, gfour, n, d, mcols, with_mat,
               y, k1, J, u, tmp)
        for i in range(L):
            yt[i] = y[i] + 0.5 * h * k1[i]
        _deriv(fcode, fp1, fp2, gcode, gmat, gfour, n, d, mcols, with_mat,
               yt, k2, J, u, tmp)
        for i in range(L):
            yt[i] = y[i] + 0.5 * h * k2[i]
        _deriv(fcode, fp1, fp2, gcode, gmat, gfour, n, d, mcols, with_mat,
               yt, k3, J, u, tmp)
        for i in range(L):
            yt[i] = y[i] + h * k3[i]
        _deriv(fcode, fp1, fp2, gcode, gmat, gfour, n, d, mcols, with_mat,
               yt, k4, J, u, tmp)
        for i in range(L):
            y[i] += (h / 6.0) * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])
        # keep the frequency on the unit sphere
        nrm = 0.0
        for i in range(n):
            nrm += y[n + i] * y[n + i]
        nrm = np.sqrt(nrm)
        inv = 1.0 / nrm
        for i in range(n):
            y[n + i] *= inv
        ok = True
        for i in range(L):
            if not np.isfinite(y[i]):
                ok = False
                break
        if not ok:
            return step
    return -1


@njit(cache=True, nogil=True)
def _frame_fill(eta, n, F):
    """Orthonormal basis of eta-perp as columns of F (n, n-1).

    n = 2: the rotation (-eta2, eta1).  n = 3: Gram-Schmidt of the two
    standard basis vectors with smallest |eta_j| (ties toward the
    smaller index, taken in that order), then the second column flipped
    if needed so det[eta | F] > 0.
    """
    if n == 2:
        F[0, 0] = -eta[1]
        F[1, 0] = eta[0]
        return
    # two smallest |eta_j|
    j1 = 0
    v1 = abs(eta[0])
    for j in range(1, 3):
        aj = abs(eta[j])
        if aj < v1:
            j1 = j
            v1 = aj
    j2 = -1
    v2 = 1.0e308
    for j in range(3):
        if j == j1:
            continue
        aj = abs(eta[j])
        if aj < v2:
            j2 = j
            v2 = aj
    # f1 = normalize(e_{j1} - <e_{j1},eta> eta)
    for i in range(3):
        F[i, 0] = -eta[j1] * eta[i]
    F[j1, 0] += 1.0
    nrm = np.sqrt(F[0, 0] ** 2 + F[1, 0] ** 2 + F[2, 0] ** 2)
    for i in range(3):
        F[i, 0] /= nrm
    # f2 = normalize(e_{j2} - <e_{j2},eta> eta - <e_{j2},f1> f1)
    for i in range(3):
        F[i, 1] = -eta[j2] * eta[i] - F[j2, 0] * F[i, 0]
    F[j2, 1] += 1.0
    nrm = np.sqrt(F[0, 1] ** 2 + F[1, 1] ** 2 + F[2, 1] ** 2)
    for i in range(3):
        F[i, 1] /= nrm
    det = (eta[0] * (F[1, 0] * F[2, 1] - F[2, 0] * F[1, 1])
           - eta[1] * (F[0, 0] * F[2, 1] - F[2, 0] * F[0, 1])
           + eta[2] * (F[0, 0] * F[1, 1] - F[1, 0] * F[0, 1]))
    if det < 0.0:
        for i in range(3):
            F[i, 1] = -F[i, 1]


@njit(cache=True, nogil=True)
def _k_span(fcode, fp1, fp2, gcode, gmat, gfour, n, d, mcols, with_mat,
            y, h, n_steps, h_last):
    L = y.shape[0]
    k1 = np.empty(L)
    k2 = np.empty(L)
    k3 = np.empty(L)
    k4 = np.empty(L)
    yt = np.empty(L)
    J = np.empty((n, n))
    u = np.empty(n)
    tmp = np.empty(n)
    st = _rk4_steps(fcode, fp1, fp2, gcode, gmat, gfour, n, d, mcols,
                    with_mat, y, h, n_steps, k1, k2, k3, k4, yt, J, u, tmp)
    if st >= 0:
        return st
    if h_last != 0.0:
        st = _rk4_steps(fcode, fp1, fp2, gcode, gmat, gfour, n, d, mcols,
                        with_mat, y, h_last, 1, k1, k2, k3, k4, yt, J, u, tmp)
        if st >= 0:
            return n_steps
    return -1


@njit(cache=True, nogil=True)
def _k_record_traj(fcode, fp1, fp2, n, y, h, n_steps, rec_every, out):
    """Record (x, eta, s) after every rec_every steps; returns status."""
    L = 2 * n + 1
    k1 = np.empty(L)
    k2 = np.empty(L)
    k3 = np.empty(L)
    k4 = np.empty(L)
    yt = np.empty(L)
    J = np.empty((n, n))
    u = np.empty(n)
    tmp = np.empty(n)
    done = 0
    idx = 0
    while done < n_steps:
        take = rec_every
        if n_steps - done < take:
            take = n_steps - done
        st = _rk4_steps(fcode, fp1, fp2, GEN_NONE, _NB_DUMMY_MAT,
                        _NB_DUMMY_FOUR, n, 0, 0, False, y, h, take,
                        k1, k2, k3, k4, yt, J, u, tmp)
        if st >= 0:
            return done + st
        done += take
        for i in range(L):
            out[idx, i] = y[i]
        idx += 1
    return -1


@njit(cache=True, nogil=True)
def _k_record_mat(fcode, fp1, fp2, gcode, gmat, gfour, n, d,
                  y, h, rec_every, n_rec, out_states, out_M):
    """Joint walk recording (x, eta, s) and the raw propagator block."""
    L = 2 * n + 1 + d * d
    k1 = np.empty(L)
    k2 = np.empty(L)
    k3 = np.empty(L)
    k4 = np.empty(L)
    yt = np.empty(L)
    J = np.empty((n, n))
    u = np.empty(n)
    tmp = np.empty(n)
    Mo = 2 * n + 1
    for r in range(n_rec):
        st = _rk4_steps(fcode, fp1, fp2, gcode, gmat, gfour, n, d, d, True,
                        y, h, rec_every, k1, k2, k3, k4, yt, J, u, tmp)
        if st >= 0:
            return r * rec_every + st
        for i in range(2 * n + 1):
            out_states[r, i] = y[i]
        for i in range(d):
            for j in range(d):
                out_M[r, i, j] = y[Mo + i * d + j]
    return -1


@njit(cache=True, nogil=True)
def _k_walk_qr(fcode, fp1, fp2, gcode, gmat, gfour, n, d,
               restricted, adjoint, Y, h, spc, n_chunks,
               out_logs, out_ds, out_stat):
    """Chunked QR walk over a batch of trajectories.

    Y: (B, L) initial states with L sized for the mode's matrix block.
    out_logs: (B, n_chunks, q) log diagonal of the chunk R factors.
    out_ds:   (B, n_chunks) log-stretch increments per chunk.
    out_stat: (B,) failing global step index, -1 for success.
    """
    B = Y.shape[0]
    q = d - 1 if restricted else d
    mcols = q if (restricted and not adjoint) else d
    L = 2 * n + 1 + d * mcols
    Mo = 2 * n + 1

    k1 = np.empty(L)
    k2 = np.empty(L)
    k3 = np.empty(L)
    k4 = np.empty(L)
    yt = np.empty(L)
    J = np.empty((n, n))
    u = np.empty(n)
    tmp = np.empty(n)
    Q = np.empty((q, q))
    Z = np.empty((q, q))
    F1 = np.empty((n, max(n - 1, 1)))
    F2 = np.empty((n, max(n - 1, 1)))
    W1 = np.empty((n, q))
    W2 = np.empty((n, q))
    ybase = np.empty(L)

    for b in range(B):
        y = Y[b]
        out_stat[b] = -1
        for i in range(q):
            for j in range(q):
                Q[i, j] = 1.0 if i == j else 0.0

        for ch in range(n_chunks):
            if not adjoint:
                s0 = y[2 * n]
                if d > 0:
                    if restricted:
                        _frame_fill(y[n:2 * n], n, F1)
                        for i in range(n):
                            for j in range(q):
                                acc = 0.0
                                for k in range(q):
                                    acc += F1[i, k] * Q[k, j]
                                y[Mo + i * q + j] = acc
                    else:
                        for i in range(d):
                            for j in range(d):
                                y[Mo + i * d + j] = Q[i, j]
                st = _rk4_steps(fcode, fp1, fp2, gcode, gmat, gfour, n, d,
                                mcols, d > 0, y, h, spc,
                                k1, k2, k3, k4, yt, J, u, tmp)
                if st >= 0:
                    out_stat[b] = ch * spc + st
                    break
                out_ds[b, ch] = y[2 * n] - s0
                if d > 0:
                    if restricted:
                        _frame_fill(y[n:2 * n], n, F2)
                        for i in range(q):
                            for j in range(q):
                                acc = 0.0
                                for k in range(n):
                                    acc += F2[k, i] * y[Mo + k * q + j]
                                Z[i, j] = acc
                    else:
                        for i in range(d):
                            for j in range(d):
                                Z[i, j] = y[Mo + i * d + j]
            else:
                # one adjoint chunk: backward base leg, then a forward
                # propagator leg from the new base point
                st = _rk4_steps(fcode, fp1, fp2, GEN_NONE, gmat, gfour, n,
                                0, 0, False, y, -h, spc,
                                k1, k2, k3, k4, yt, J, u, tmp)
                if st >= 0:
                    out_stat[b] = ch * spc + st
                    break
                for i in range(L):
                    ybase[i] = y[i]
                sbase = y[2 * n]
                if restricted:
                    _frame_fill(y[n:2 * n], n, F1)
                if d > 0:
                    for i in range(d):
                        for j in range(d):
                            y[Mo + i * d + j] = 1.0 if i == j else 0.0
                st = _rk4_steps(fcode, fp1, fp2, gcode, gmat, gfour, n, d,
                                d, d > 0, y, h, spc,
                                k1, k2, k3, k4, yt, J, u, tmp)
                if st >= 0:
                    out_stat[b] = ch * spc + st
                    break
                out_ds[b, ch] = y[2 * n] - sbase
                if d > 0:
                    if restricted:
                        _frame_fill(y[n:2 * n], n, F2)
                        # Z = F1^T P^T F2 Q with P the forward propagator
                        for i in range(n):
                            for j in range(q):
                                acc = 0.0
                                for k in range(q):
                                    acc += F2[i, k] * Q[k, j]
                                W1[i, j] = acc
                        for i in range(n):
                            for j in range(q):
                                acc = 0.0
                                for k in range(n):
                                    acc += y[Mo + k * d + i] * W1[k, j]
                                W2[i, j] = acc
                        for i in range(q):
                            for j in range(q):
                                acc = 0.0
                                for k in range(n):
                                    acc += F1[k, i] * W2[k, j]
                                Z[i, j] = acc
                    else:
                        for i in range(d):
                            for j in range(d):
                                acc = 0.0
                                for k in range(d):
                                    acc += y[Mo + k * d + i] * Q[k, j]
                                Z[i, j] = acc
                for i in range(L):
                    y[i] = ybase[i]

            if d > 0:
                if q == 1:
                    z = Z[0, 0]
                    az = abs(z)
                    out_logs[b, ch, 0] = np.log(az)
                    Q[0, 0] = 1.0 if z >= 0.0 else -1.0
                else:
                    Qn, R = np.linalg.qr(Z.copy())
                    for i in range(q):
                        if R[i, i] < 0.0:
                            for j in range(q):
                                R[i, j] = -R[i, j]
                                Qn[j, i] = -Qn[j, i]
                        out_logs[b, ch, i] = np.log(R[i, i])
                    for i in range(q):
                        for j in range(q):
                            Q[i, j] = Qn[i, j]
    return 0


# numba needs typed module-level constants for the dummies used inside jit
_NB_DUMMY_MAT = _DUMMY_MAT
_NB_DUMMY_FOUR = _DUMMY_FOUR


# ---------------------------------------------------------------------------
# python twin for callable flows/generators
# ---------------------------------------------------------------------------

class _PyStepper:
    def __init__(self, flow, gen, n, d, mcols):
        self.flow = flow
        self.n = n
        self.d = d
        self.mcols = mcols
        self.gen = gen  # gen(x, eta, J) -> (d, d), or None

    def deriv(self, y, with_mat):
        n, d, mcols = self.n, self.d, self.mcols
        x = y[:n]
        eta = y[n:2 * n]
        u = self.flow.velocity(x)
        J = self.flow.jacobian(x)
        w = J.T @ eta
        c = float(w @ eta)
        dy = np.empty_like(y)
        dy[:n] = u
        dy[n:2 * n] = -w + c * eta
        dy[2 * n] = -c
        if with_mat and d > 0:
            A = self.gen(x, eta, J)
            M = y[2 * n + 1:].reshape(d, mcols)
            dy[2 * n + 1:] = (A @ M).ravel()
        return dy

    def rk4(self, y, h, n_steps, with_mat):
        n = self.n
        for step in range(n_steps):
            k1 = self.deriv(y, with_mat)
            k2 = self.deriv(y + 0.5 * h * k1, with_mat)
            k3 = self.deriv(y + 0.5 * h * k2, with_mat)
            k4 = self.deriv(y + h * k3, with_mat)
            y += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
            y[n:2 * n] /= np.linalg.norm(y[n:2 * n])
            if not np.all(np.isfinite(y)):
                return step
        return -1


def _py_frame(eta):
    n = eta.shape[0]
    F = np.empty((n, n - 1))
    _frame_fill.py_func(eta, n, F)
    return F


# ---------------------------------------------------------------------------
# spec plumbing
# ---------------------------------------------------------------------------

class WalkSpec:
    """Resolved integration plan for one (flow, generator) pair."""

    def __init__(self, flow, gen):
        self.flow = flow
        self.n = flow.dim
        self.gcode = GEN_NONE
        self.gmat = _DUMMY_MAT
        self.gfour = _DUMMY_FOUR
        self.gfunc = None
        self.d = 0

        kind = gen[0] if gen is not None else "none"
        if kind == "none":
            pass
        elif kind == "amp":
            self.gcode = GEN_AMP_PROJ if gen[1] == "projected" else GEN_AMP_VERB
            self.d = self.n
        elif kind == "const":
            A = np.ascontiguousarray(gen[1], dtype=float)
            if A.ndim != 2 or A.shape[0] != A.shape[1]:
                raise InputError("constant generator must be a square matrix")
            self.gcode = GEN_CONST
            self.gmat = A
            self.d = A.shape[0]
        elif kind == "fourier":
            F = np.ascontiguousarray(gen[1], dtype=float)
            if F.ndim != 3 or F.shape[0] % 2 != 1 or F.shape[1] != F.shape[2]:
                raise InputError(
                    "fourier generator must have shape (2K+1, d, d)")
            self.gcode = GEN_FOURIER
            self.gfour = F
            self.d = F.shape[1]
        elif kind == "flowjac":
            self.gcode = GEN_FLOWJAC
            self.d = self.n
        elif kind == "func":
            self.gcode = -1
            self.gfunc = gen[1]
            self.d = int(gen[2])
        else:
            raise InputError(f"unknown generator kind '{kind}'")

        self.fast = flow.kernel is not None and self.gcode >= 0
        if self.fast:
            code, p1, p2 = flow.kernel
            self.fcode = code
            self.fp1 = np.ascontiguousarray(p1, dtype=float)
            self.fp2 = np.ascontiguousarray(p2, dtype=float)

    def pack(self, x, eta, s, M=None, mcols=None):
        n, d = self.n, self.d
        mcols = d if mcols is None else mcols
        y = np.zeros(2 * n + 1 + d * mcols)
        y[:n] = x
        y[n:2 * n] = eta
        y[2 * n] = s
        if M is not None:
            y[2 * n + 1:] = np.asarray(M, dtype=float).ravel()
        return y

    def _pygen(self):
        n = self.n
        if self.gcode == GEN_AMP_PROJ:
            return lambda x, eta, J: -J + 2.0 * np.outer(eta, J.T @ eta)
        if self.gcode == GEN_AMP_VERB:
            return lambda x, eta, J: J + np.outer(eta, J.T @ eta)
        if self.gcode == GEN_CONST:
            A = self.gmat
            return lambda x, eta, J: A
        if self.gcode == GEN_FOURIER:
            F = self.gfour
            K = (F.shape[0] - 1) // 2

            def gf(x, eta, J):
                A = F[0].copy()
                for k in range(1, K + 1):
                    A += F[2 * k - 1] * np.cos(k * x[0])
                    A += F[2 * k] * np.sin(k * x[0])
                return A

            return gf
        if self.gcode == GEN_FLOWJAC:
            return lambda x, eta, J: J
        if self.gcode == -1:
            f = self.gfunc
            return lambda x, eta, J: np.asarray(f(x, eta), dtype=float)
        return None


def _fail_time(step_idx, h):
    return abs(step_idx * h)


def run_span(spec, x, eta, s, M, t, step, with_mat=True):
    """Advance the joint state by time t (signed); returns (x, eta, s, M).

    M may be None (trajectory only) or a (d, mcols) block propagated by
    M' = A M along the way.
    """
    n, d = spec.n, spec.d
    mcols = 0
    if M is not None and with_mat:
        M = np.asarray(M, dtype=float)
        mcols = M.shape[1]
    wm = with_mat and M is not None and d > 0
    h = step if t >= 0 else -step
    n_steps = int(abs(t) / step + 1e-12)
    h_last = t - n_steps * h
    if abs(h_last) < 1e-9 * step:
        h_last = 0.0

    y = spec.pack(x, eta, s, M if wm else None, mcols if wm else 0)
    if spec.fast:
        st = _k_span(spec.fcode, spec.fp1, spec.fp2, spec.gcode, spec.gmat,
                     spec.gfour, n, d if wm else 0, mcols if wm else 0, wm,
                     y, h, n_steps, h_last)
    else:
        pst = _PyStepper(spec.flow, spec._pygen(), n, d if wm else 0,
                         mcols if wm else 0)
        st = pst.rk4(y, h, n_steps, wm)
        if st < 0 and h_last != 0.0:
            st2 = pst.rk4(y, h_last, 1, wm)
            st = n_steps if st2 >= 0 else -1
    if st >= 0:
        raise IntegrationError(
            "state became non-finite during integration",
            last_good_time=_fail_time(st, h))
    Mout = None
    if wm:
        Mout = y[2 * n + 1:].reshape(d, mcols).copy()
    return y[:n].copy(), y[n:2 * n].copy(), float(y[2 * n]), Mout


def run_record_traj(spec, x, eta, s, t, step, record_every=1):
    """Trajectory samples after every record_every steps plus remainder.

    Returns (times, states) where states[k] = [x, eta, s] at times[k];
    the initial state is not included.
    """
    n = spec.n
    h = step if t >= 0 else -step
    n_steps = int(abs(t) / step + 1e-12)
    h_last = t - n_steps * h
    if abs(h_last) < 1e-9 * step:
        h_last = 0.0
    n_rec = (n_steps + record_every - 1) // record_every

    y = spec.pack(x, eta, s)
    out = np.empty((n_rec, 2 * n + 1))
    if spec.fast:
        st = _k_record_traj(spec.fcode, spec.fp1, spec.fp2, n, y, h,
                            n_steps, record_every, out)
    else:
        pst = _PyStepper(spec.flow, None, n, 0, 0)
        st = -1
        done = 0
        idx = 0
        while done < n_steps:
            take = min(record_every, n_steps - done)
            st0 = pst.rk4(y, h, take, False)
            if st0 >= 0:
                st = done + st0
                break
            done += take
            out[idx] = y[:2 * n + 1]
            idx += 1
    if st >= 0:
        raise IntegrationError(
            "state became non-finite during integration",
            last_good_time=_fail_time(st, h))
    times = [min((k + 1) * record_every, n_steps) * h
             for k in range(n_rec)]
    if h_last != 0.0:
        xs, es, ss, _ = run_span(spec, y[:n], y[n:2 * n], y[2 * n], None,
                                 h_last, abs(h_last))
        last = np.concatenate([xs, es, [ss]])
        out = np.vstack([out, last[None, :]]) if n_rec else last[None, :]
        times = times + [t]
    return np.asarray(times), out


def run_record_mat(spec, x, eta, s, rec_dt, n_rec, step):
    """Record (x, eta, s) and the raw propagator at times k*rec_dt.

    Returns (states (n_rec, 2n+1), Ms (n_rec, d, d)); forward time only,
    starting from M = identity.
    """
    n, d = spec.n, spec.d
    rec_every = int(round(rec_dt / step))
    if rec_every <= 0 or abs(rec_every * step - rec_dt) > 1e-9 * max(1.0, rec_dt):
        raise InputError("record interval must be a positive multiple of step")
    y = spec.pack(x, eta, s, np.eye(d))
    out_states = np.empty((n_rec, 2 * n + 1))
    out_M = np.empty((n_rec, d, d))
    if spec.fast:
        st = _k_record_mat(spec.fcode, spec.fp1, spec.fp2, spec.gcode,
                           spec.gmat, spec.gfour, n, d, y, step,
                           rec_every, n_rec, out_states, out_M)
    else:
        pst = _PyStepper(spec.flow, spec._pygen(), n, d, d)
        st = -1
        for r in range(n_rec):
            st0 = pst.rk4(y, step, rec_every, True)
            if st0 >= 0:
                st = r * rec_every + st0
                break
            out_states[r] = y[:2 * n + 1]
            out_M[r] = y[2 * n + 1:].reshape(d, d)
    if st >= 0:
        raise IntegrationError(
            "propagator became non-finite during integration",
            last_good_time=_fail_time(st, step))
    return out_states, out_M


def run_walk_qr(spec, points, step, qr_every, n_chunks,
                restricted=False, adjoint=False, threads=1):
    """Chunked QR walk for a batch of start points.

    points: sequence of (x, eta) pairs.  Returns (logs, ds) with shapes
    (B, n_chunks, q) and (B, n_chunks); q = d or d-1 when restricted
    (q = 0 handled by the caller for scalar-only cocycles).
    """
    n, d = spec.n, spec.d
    if restricted and d != n:
        raise InputError("restriction requires a full-dimensional fiber")
    q = (d - 1) if restricted else d
    mcols = q if (restricted and not adjoint) else d
    B = len(points)
    L = 2 * n + 1 + d * mcols
    Y = np.zeros((B, L))
    for b, (xb, eb) in enumerate(points):
        Y[b, :n] = xb
        Y[b, n:2 * n] = eb

    out_logs = np.zeros((B, n_chunks, max(q, 1)))
    out_ds = np.zeros((B, n_chunks))
    out_stat = np.full(B, -1, dtype=np.int64)

    if spec.fast:
        if threads > 1 and B > 1:
            from concurrent.futures import ThreadPoolExecutor
            bounds = np.linspace(0, B, min(threads, B) + 1).astype(int)
            slices = [slice(a, b2) for a, b2 in zip(bounds[:-1], bounds[1:])
                      if b2 > a]

            def work(sl):
                _k_walk_qr(spec.fcode, spec.fp1, spec.fp2, spec.gcode,
                           spec.gmat, spec.gfour, n, d, restricted, adjoint,
                           Y[sl], step, qr_every, n_chunks,
                           out_logs[sl], out_ds[sl], out_stat[sl])

            with ThreadPoolExecutor(max_workers=len(slices)) as ex:
                list(ex.map(work, slices))
        else:
            _k_walk_qr(spec.fcode, spec.fp1, spec.fp2, spec.gcode, spec.gmat,
                       spec.gfour, n, d, restricted, adjoint, Y, step,
                       qr_every, n_chunks, out_logs, out_ds, out_stat)
    else:
        _py_walk_qr(spec, n, d, q, mcols, restricted, adjoint, Y, step,
                    qr_every, n_chunks, out_logs, out_ds, out_stat)

    bad = np.nonzero(out_stat >= 0)[0]
    if bad.size:
        b0 = int(bad[0])
        raise IntegrationError(
            f"trajectory {b0} became non-finite during the spectral walk",
            last_good_time=_fail_time(int(out_stat[b0]), step))
    return out_logs[:, :, :q] if q > 0 else out_logs[:, :, :0], out_ds


def _py_walk_qr(spec, n, d, q, mcols, restricted, adjoint, Y, step,
                qr_every, n_chunks, out_logs, out_ds, out_stat):
    gen = spec._pygen()
    Mo = 2 * n + 1
    for b in range(Y.shape[0]):
        y = Y[b]
        pst = _PyStepper(spec.flow, gen, n, d, mcols)
        Q = np.eye(max(q, 1))
        for ch in range(n_chunks):
            if not adjoint:
                s0 = y[2 * n]
                if d > 0:
                    if restricted:
                        F1 = _py_frame(y[n:2 * n])
                        y[Mo:] = (F1 @ Q).ravel()
                    else:
                        y[Mo:] = Q.ravel()
                st = pst.rk4(y, step, qr_every, d > 0)
                if st >= 0:
                    out_stat[b] = ch * qr_every + st
                    break
                out_ds[b, ch] = y[2 * n] - s0
                if d > 0:
                    Mend = y[Mo:].reshape(d, mcols)
                    if restricted:
                        Z = _py_frame(y[n:2 * n]).T @ Mend
                    else:
                        Z = Mend.copy()
            else:
                pst_traj = _PyStepper(spec.flow, None, n, 0, 0)
                st = pst_traj.rk4(y, -step, qr_every, False)
                if st >= 0:
                    out_stat[b] = ch * qr_every + st
                    break
                ybase = y.copy()
                sbase = y[2 * n]
                F1 = _py_frame(y[n:2 * n]) if restricted else None
                if d > 0:
                    y[Mo:] = np.eye(d).ravel()
                st = pst.rk4(y, step, qr_every, d > 0)
                if st >= 0:
                    out_stat[b] = ch * qr_every + st
                    break
                out_ds[b, ch] = y[2 * n] - sbase
                if d > 0:
                    P = y[Mo:].reshape(d, d)
                    if restricted:
                        F2 = _py_frame(y[n:2 * n])
                        Z = F1.T @ P.T @ F2 @ Q
                    else:
                        Z = P.T @ Q
                y[:] = ybase
            if d > 0:
                if q == 1:
                    z = float(Z[0, 0])
                    out_logs[b, ch, 0] = np.log(abs(z))
                    Q = np.array([[1.0 if z >= 0.0 else -1.0]])
                else:
                    Qn, R = np.linalg.qr(Z)
                    sgn = np.sign(np.diag(R))
                    sgn[sgn == 0.0] = 1.0
                    Qn = Qn * sgn
                    out_logs[b, ch, :] = np.log(np.abs(np.diag(R)))
                    Q = Qn


def warmup():
    """Compile the kernels on a trivial problem (first call only)."""
    from . import flows
    fl = flows.cellular_flow()
    spec = WalkSpec(fl, ("amp", "projected"))
    x = np.array([1.0, 1.0])
    eta = np.array([1.0, 0.0])
    run_span(spec, x, eta, 0.0, np.eye(2), 0.01, 1e-2)
    run_record_traj(spec, x, eta, 0.0, 0.02, 1e-2)
    run_record_mat(spec, x, eta, 0.0, 0.01, 1, 1e-2)
    run_walk_qr(spec, [(x, eta)], 1e-2, 2, 2)
    run_walk_qr(spec, [(x, eta)], 1e-2, 2, 2, restricted=True)
    run_walk_qr(spec, [(x, eta)], 1e-2, 2, 2, adjoint=True)
