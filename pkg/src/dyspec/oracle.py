"""Reference propagators and spectra with independent numerics.

Each oracle fixes a generator family whose propagator or spectrum is
known in closed form (constant coefficients, periodic coefficients via
the monodromy, the parallel shear amplitude equation, decoupled
diagonal rates).  None of the evaluations here touch the RK4/QR
integration stack: exact formulas where they exist, otherwise a
midpoint exponential product with its own truncated-series matrix
exponential.  oracle_cocycle_handle builds the runnable twin of an
oracle so estimator output can be compared against ground truth.

Time-dependent generators are realized as cocycles over a constant
unit-speed shear (no stagnation, zero velocity gradient), whose first
coordinate advances linearly and acts as the clock.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .bichar import PhasePoint
from .cocycle import amplitude_cocycle, custom_cocycle
from .errors import InputError, UnsupportedOracleError
from .flows import shear_flow
from .spectrum import _window_plan, merge_intervals

__all__ = [
    "Oracle", "constant_oracle", "floquet_oracle", "shear_oracle",
    "diagonal_oracle", "generic_oracle", "exact_propagator", "exact_state",
    "brute_force_propagator", "exact_sacker_sell", "oracle_cocycle_handle",
]

# fine step for the cached monodromy and partial-period factors; chosen
# off the brute-force default so cross-checks use distinct grids
_MONODROMY_STEP = 5e-5


@dataclass(frozen=True)
class Oracle:
    """A generator family with reference answers."""

    kind: str
    dim: int
    data: dict = field(repr=False)


def constant_oracle(A):
    """Generator A constant in time."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError("constant oracle needs a square matrix")
    return Oracle("constant", A.shape[0], {"A": A.copy()})


def _fourier_eval(F, xi):
    """A(xi) = F[0] + sum_k F[2k-1] cos(k xi) + F[2k] sin(k xi)."""
    A = F[0].copy()
    K = (F.shape[0] - 1) // 2
    for k in range(1, K + 1):
        A += F[2 * k - 1] * math.cos(k * xi) + F[2 * k] * math.sin(k * xi)
    return A


def floquet_oracle(fourier, period=2.0 * math.pi):
    """Periodic generator from trigonometric coefficients.

    fourier has shape (2K+1, d, d) over the phase 2 pi t / period; the
    monodromy matrix is computed once at construction by a fine
    midpoint product, so its eigenvalues carry the whole spectrum.
    """
    F = np.asarray(fourier, dtype=float)
    if F.ndim != 3 or F.shape[0] % 2 != 1 or F.shape[1] != F.shape[2]:
        raise InputError("fourier coefficients must have shape (2K+1, d, d)")
    period = float(period)
    if period <= 0:
        raise InputError("period must be positive")
    omega = 2.0 * math.pi / period

    def gen(t):
        return _fourier_eval(F, omega * t)

    mono = _midpoint_product(gen, 0.0, period, _MONODROMY_STEP)
    return Oracle("floquet", F.shape[1],
                  {"fourier": F.copy(), "period": period, "monodromy": mono})


def shear_oracle(flow=None, x0=(0.0, 0.0), eta0=(0.0, 1.0)):
    """Amplitude cocycle along a parallel-shear trajectory.

    The velocity gradient is constant along any shear streamline, so
    the frequency, the stretch and the full amplitude propagator all
    close in quadratures; see exact_propagator for the formulas.
    """
    if flow is None:
        flow = shear_flow()
    if flow.name != "shear" or flow.dim != 2:
        raise InputError("shear oracle requires a shear catalog flow")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (2,):
        raise InputError("x0 must be a point in R^2")
    eta0 = np.asarray(eta0, dtype=float)
    nrm = np.linalg.norm(eta0)
    if eta0.shape != (2,) or nrm == 0.0:
        raise InputError("eta0 must be a nonzero vector in R^2")
    eta0 = eta0 / nrm
    # profile slope at the streamline, from the stored coefficients
    y = float(x0[1])
    p = flow.params
    g = 0.0
    for k, a in enumerate(p["sin_coeffs"], start=1):
        g += k * a * math.cos(k * y)
    for k, a in enumerate(p["cos_coeffs"], start=1):
        g -= k * a * math.sin(k * y)
    return Oracle("shear_amplitude", 2,
                  {"flow": flow, "x0": x0, "eta0": eta0, "g": float(g)})


def diagonal_oracle(rates, antiderivatives):
    """Decoupled generator diag(a_1(t), ..., a_d(t)).

    antiderivatives[i] must be an exact primitive of rates[i]; windowed
    growth rates then reduce to difference quotients of the primitives.
    """
    if len(rates) != len(antiderivatives) or not rates:
        raise InputError("need one antiderivative per rate function")
    return Oracle("diagonal", len(rates),
                  {"rates": tuple(rates), "anti": tuple(antiderivatives)})


def generic_oracle(gen_func, dim):
    """Arbitrary generator t -> (d, d); no closed-form answers."""
    dim = int(dim)
    if dim < 1:
        raise InputError("fiber dimension must be positive")
    return Oracle("generic", dim, {"gen": gen_func})


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def _shear_pieces(orc, t):
    """(w, nw2) for the shear oracle: unnormalized frequency and its
    squared norm; w(t) = (c, d - g t c) for eta0 = (c, d)."""
    c, d = orc.data["eta0"]
    g = orc.data["g"]
    v = d - g * t * c
    return np.array([c, v]), c * c + v * v


def exact_propagator(orc, t):
    """Closed-form propagator of the oracle at time t >= 0."""
    if not isinstance(orc, Oracle):
        raise InputError("expected an Oracle")
    t = float(t)
    if t < 0:
        raise InputError("oracle time must be nonnegative")
    if orc.kind == "constant":
        return scipy.linalg.expm(t * orc.data["A"])
    if orc.kind == "floquet":
        P = orc.data["period"]
        k = int(t / P + 1e-12)
        rem = t - k * P
        if abs(rem) < 1e-12 * max(1.0, t):
            rem = 0.0
        M = np.linalg.matrix_power(orc.data["monodromy"], k)
        if rem > 0.0:
            omega = 2.0 * math.pi / P
            F = orc.data["fourier"]
            part = _midpoint_product(lambda s: _fourier_eval(F, omega * s),
                                     0.0, rem, _MONODROMY_STEP)
            M = part @ M
        return M
    if orc.kind == "shear_amplitude":
        # B = [[1, B12], [0, 1/nw2]]: the first basis vector is fixed,
        # the second column follows from the conserved pairing and the
        # primitive of (c^2 - v^2)/(c^2 + v^2)^2
        c, d = orc.data["eta0"]
        g = orc.data["g"]
        w, nw2 = _shear_pieces(orc, t)
        if abs(c) > 1e-8:
            b12 = (d - w[1] / nw2) / c
        else:
            b12 = -g * t
        return np.array([[1.0, b12], [0.0, 1.0 / nw2]])
    if orc.kind == "diagonal":
        anti = orc.data["anti"]
        return np.diag([math.exp(F(t) - F(0.0)) for F in anti])
    raise UnsupportedOracleError(
        f"oracle kind '{orc.kind}' has no closed-form propagator")


def exact_state(orc, t):
    """Closed-form (eta(t), s(t)) along the oracle trajectory.

    Available for the shear oracle, where the frequency equation
    integrates to w(t) = (c, d - g t c), eta = w/|w|, s = log|w|.
    """
    if not isinstance(orc, Oracle):
        raise InputError("expected an Oracle")
    if orc.kind != "shear_amplitude":
        raise UnsupportedOracleError(
            f"oracle kind '{orc.kind}' has no closed-form state")
    w, nw2 = _shear_pieces(orc, float(t))
    return w / math.sqrt(nw2), 0.5 * math.log(nw2)


# ---------------------------------------------------------------------------
# brute force
# ---------------------------------------------------------------------------

def _taylor_expm(B):
    """exp(B) by plain series; only for small-norm arguments."""
    d = B.shape[0]
    T = np.eye(d)
    term = np.eye(d)
    for k in range(1, 60):
        term = term @ B / k
        T = T + term
        if np.abs(term).max() <= 1e-18 * max(1.0, np.abs(T).max()):
            break
    return T


def _midpoint_product(gen, t0, t1, h):
    """Product of exp(h A(midpoint)) factors across [t0, t1]."""
    span = t1 - t0
    n = max(1, int(math.ceil(span / h - 1e-12)))
    hh = span / n
    A0 = np.asarray(gen(t0 + 0.5 * hh), dtype=float)
    M = _taylor_expm(hh * A0)
    for k in range(1, n):
        Ak = np.asarray(gen(t0 + (k + 0.5) * hh), dtype=float)
        M = _taylor_expm(hh * Ak) @ M
    return M


def _generator_func(orc):
    """The oracle's generator as a plain function of time."""
    if orc.kind == "constant":
        A = orc.data["A"]
        return lambda t: A
    if orc.kind == "floquet":
        F = orc.data["fourier"]
        omega = 2.0 * math.pi / orc.data["period"]
        return lambda t: _fourier_eval(F, omega * t)
    if orc.kind == "shear_amplitude":
        c, _ = orc.data["eta0"]
        g = orc.data["g"]

        def gen(t):
            w, nw2 = _shear_pieces(orc, t)
            return np.array([
                [0.0, g * (2.0 * c * c / nw2 - 1.0)],
                [0.0, 2.0 * g * c * w[1] / nw2],
            ])

        return gen
    if orc.kind == "diagonal":
        rates = orc.data["rates"]

        def gen(t):
            return np.diag([float(a(t)) for a in rates])

        return gen
    return orc.data["gen"]


def brute_force_propagator(orc, t, fine_step=1e-4):
    """Midpoint exponential product over [0, t] at a forced-fine step.

    Second-order in fine_step and completely independent of both the
    closed forms and the RK4 integration stack; fine_step above 1e-4
    is rejected to keep the cross-check meaningful.
    """
    if not isinstance(orc, Oracle):
        raise InputError("expected an Oracle")
    t = float(t)
    if t < 0:
        raise InputError("oracle time must be nonnegative")
    fine_step = float(fine_step)
    if not (0.0 < fine_step <= 1e-4 + 1e-15):
        raise InputError("fine_step must lie in (0, 1e-4]")
    if t == 0.0:
        return np.eye(orc.dim)
    return _midpoint_product(_generator_func(orc), 0.0, t, fine_step)


# ---------------------------------------------------------------------------
# reference spectra
# ---------------------------------------------------------------------------

def exact_sacker_sell(orc, T=None, W=None, step=1e-3, qr_every=10,
                      burn_in=None, window_factor=None, merge_tol=0.05):
    """Reference spectrum of the oracle as a list of (lo, hi) intervals.

    Constant and periodic generators have point spectra (eigenvalue
    real parts, log-moduli of monodromy eigenvalues over the period);
    the shear amplitude spectrum is {0} since its propagator grows
    algebraically.  The diagonal kind mirrors the estimator's window
    geometry: difference quotients of the exact primitives over the
    same window-start grid, so T and W (defaulting to the estimator
    defaults 200 and 20) matter only there.
    """
    if not isinstance(orc, Oracle):
        raise InputError("expected an Oracle")
    if orc.kind == "constant":
        pts = sorted(float(v.real) for v in np.linalg.eigvals(orc.data["A"]))
        return merge_intervals([(p, p) for p in pts], 0.0)
    if orc.kind == "floquet":
        P = orc.data["period"]
        mods = np.abs(np.linalg.eigvals(orc.data["monodromy"]))
        if mods.min() <= 0.0:
            raise UnsupportedOracleError("monodromy is numerically singular")
        pts = sorted(math.log(float(m)) / P for m in mods)
        # the fine-product monodromy carries O(step^2) noise; defective
        # eigenvalues split by its square root, so collapse at 1e-4
        return merge_intervals([(p, p) for p in pts], 1e-4)
    if orc.kind == "shear_amplitude":
        return [(0.0, 0.0)]
    if orc.kind == "diagonal":
        plan = _window_plan(T if T is not None else 200.0,
                            W if W is not None else 20.0,
                            step, qr_every, burn_in, window_factor)
        dc = plan.dc
        weff = plan.weff_chunks * dc
        starts = np.arange(plan.burn_chunks,
                           plan.n_chunks - plan.weff_chunks + 1)
        ivs = []
        for F in orc.data["anti"]:
            rates = [(F(j * dc + weff) - F(j * dc)) / weff for j in starts]
            ivs.append((min(rates), max(rates)))
        return merge_intervals(ivs, merge_tol)
    raise UnsupportedOracleError(
        f"oracle kind '{orc.kind}' has no reference spectrum")


# ---------------------------------------------------------------------------
# runnable twins
# ---------------------------------------------------------------------------

def _clock_flow(speed=1.0):
    """Constant drift (speed, 0): x1 = speed * t, zero velocity gradient."""
    return shear_flow(sin_coeffs=(), constant=speed)


def oracle_cocycle_handle(orc):
    """(cocycle handle, canonical start points) matching the oracle.

    Time-dependent kinds ride the constant clock flow; the shear kind
    returns the genuine amplitude cocycle over its own flow.
    """
    if not isinstance(orc, Oracle):
        raise InputError("expected an Oracle")
    if orc.kind == "constant":
        flow = _clock_flow()
        handle = custom_cocycle(flow, matrix=orc.data["A"])
        starts = [PhasePoint((0.0, 0.0), (0.0, 1.0))]
    elif orc.kind == "floquet":
        flow = _clock_flow(2.0 * math.pi / orc.data["period"])
        handle = custom_cocycle(flow, fourier=orc.data["fourier"])
        starts = [PhasePoint((0.0, 0.0), (0.0, 1.0))]
    elif orc.kind == "shear_amplitude":
        flow = orc.data["flow"]
        handle = amplitude_cocycle(flow)
        starts = [PhasePoint(orc.data["x0"], orc.data["eta0"])]
    elif orc.kind in ("diagonal", "generic"):
        flow = _clock_flow()
        if orc.kind == "diagonal":
            rates = orc.data["rates"]

            def gen(x, eta):
                return np.diag([float(a(x[0])) for a in rates])
        else:
            raw = orc.data["gen"]

            def gen(x, eta):
                return np.asarray(raw(x[0]), dtype=float)

        handle = custom_cocycle(flow, func=gen, dim=orc.dim)
        starts = [PhasePoint((0.0, 0.0), (0.0, 1.0))]
    else:
        raise InputError(f"unknown oracle kind '{orc.kind}'")
    return handle, starts
