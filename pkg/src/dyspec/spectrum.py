"""Spectral estimation for linear cocycles over the transport flow.

The dynamical spectrum is approximated by a windowed-QR surrogate: the
propagator is re-factorized by QR every qr_every steps, the log of each
diagonal R entry accumulates per chunk, and sliding Steklov windows of
the accumulated rates give per-trajectory intervals whose union over an
ensemble, merged up to a tolerance, is the estimate.

Window geometry: rates are read off windows of length
window_factor * W starting after a burn-in (both default-derived from
W).  Plain length-W windows pick up rate excursions ~log(1+(cW)^2)/(2W)
from purely algebraic transients (frequency realignment near
hyperbolic points contributes a factor polynomial in t, not
exponential), which at W = 20 is an order of magnitude above the
merge tolerance; averaging K consecutive windows shrinks the artifact
by 1/K while every aggregated rate remains a convex combination of
plain window rates, so the estimate only tightens.  The aggregated
windows are the recorded windowed exponents.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import qmc

from . import _engine
from .bichar import PhasePoint
from .cocycle import CocycleHandle, adjoint, orthonormal_frame, _normalize
from .errors import ConditioningError, InputError, IntegrationError
from .flows import FlowField, eval_jacobian

__all__ = [
    "SpectrumEstimate", "merge_intervals", "effective_window",
    "sacker_sell_estimate", "lyapunov_exponents", "build_ensemble",
    "halton_ensemble", "distinguished_seeds", "hypo_certificate",
    "HypoCertificate", "ManeCertificate", "mane_search",
    "mane_search_bilateral", "BilateralManeReport", "minkowski_sum",
    "gap_bounds_check", "GapBoundsReport", "connectedness_threshold",
    "essential_spectrum_annulus", "algebraic_rate_floor",
]

# log of QR diagonal entries below this is treated as numerically
# singular (e^-690 < 1e-300, the conditioning contract)
_LOG_DEGENERATE = math.log(1e-300)


# ---------------------------------------------------------------------------
# intervals
# ---------------------------------------------------------------------------

def merge_intervals(intervals, tol=0.0):
    """Union of closed intervals; gaps smaller than tol are closed too.

    Overlapping or touching intervals always merge; disjoint intervals
    merge when the gap between them is strictly below tol.  Returns a
    sorted list of disjoint (lo, hi) tuples.
    """
    ivs = []
    for lo, hi in intervals:
        lo, hi = float(lo), float(hi)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise InputError("interval endpoints must be finite")
        if lo > hi:
            raise InputError(f"empty interval [{lo}, {hi}]")
        ivs.append((lo, hi))
    if not ivs:
        return []
    ivs.sort()
    out = [ivs[0]]
    for lo, hi in ivs[1:]:
        clo, chi = out[-1]
        if lo <= chi or lo - chi < tol:
            out[-1] = (clo, max(chi, hi))
        else:
            out.append((lo, hi))
    return out


@dataclass
class SpectrumEstimate:
    """Disjoint closed rate intervals with per-interval sample counts."""

    intervals: list
    samples: Optional[list] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        ivs = [(float(lo), float(hi)) for lo, hi in self.intervals]
        for lo, hi in ivs:
            if lo > hi:
                raise InputError(f"interval [{lo}, {hi}] has lo > hi")
        for (_, hi0), (lo1, _) in zip(ivs, ivs[1:]):
            if lo1 <= hi0:
                raise InputError("intervals must be sorted and disjoint")
        self.intervals = ivs
        if self.samples is not None:
            self.samples = [int(c) for c in self.samples]
            if len(self.samples) != len(ivs):
                raise InputError("one sample count per interval required")

    def hull(self):
        if not self.intervals:
            raise InputError("empty spectrum estimate has no hull")
        return (self.intervals[0][0], self.intervals[-1][1])

    def diameter(self):
        lo, hi = self.hull()
        return hi - lo

    def contains(self, rate, tol=0.0):
        return any(lo - tol <= rate <= hi + tol for lo, hi in self.intervals)

    def scale(self, m):
        """Estimate of the m-th power cocycle: intervals scaled by m."""
        m = float(m)
        scaled = [(m * lo, m * hi) if m >= 0 else (m * hi, m * lo)
                  for lo, hi in self.intervals]
        merged = merge_intervals(scaled, 0.0)
        params = dict(self.params)
        params["scaled_by"] = m
        return SpectrumEstimate(merged, None, params)

    def to_dict(self):
        return {
            "intervals": [[lo, hi] for lo, hi in self.intervals],
            "samples": list(self.samples) if self.samples is not None else None,
            "params": dict(self.params),
        }


# ---------------------------------------------------------------------------
# window geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _WindowPlan:
    dc: float
    n_chunks: int
    burn_chunks: int
    w_chunks: int
    factor: int

    @property
    def weff_chunks(self):
        return self.factor * self.w_chunks

    @property
    def n_windows(self):
        return self.n_chunks - self.weff_chunks - self.burn_chunks + 1


def _window_plan(T, W, step, qr_every, burn_in=None, window_factor=None):
    if step <= 0 or T <= 0 or W <= 0:
        raise InputError("T, W, step must all be positive")
    qr_every = int(qr_every)
    if qr_every < 1:
        raise InputError("qr_every must be a positive integer")
    if W > T / 4:
        raise InputError("window W must not exceed T/4")
    dc = qr_every * step
    n_chunks = int(T / dc + 1e-9)
    if n_chunks < 4:
        raise InputError("horizon must cover at least 4 QR chunks")
    burn = W if burn_in is None else float(burn_in)
    if burn < 0:
        raise InputError("burn_in must be nonnegative")
    burn_chunks = int(round(burn / dc))
    w_chunks = max(1, int(round(W / dc)))
    avail = n_chunks - burn_chunks - w_chunks
    if avail < 0:
        raise InputError("horizon too short for the window and burn-in")
    if window_factor is None:
        factor = min(5, max(1, avail // w_chunks))
    else:
        factor = int(window_factor)
        if factor < 1:
            raise InputError("window_factor must be a positive integer")
    plan = _WindowPlan(dc, n_chunks, burn_chunks, w_chunks, factor)
    if plan.n_windows < 1:
        raise InputError("horizon too short for the aggregated window")
    return plan


def effective_window(T, W, step=1e-3, qr_every=10, burn_in=None,
                     window_factor=None):
    """(burn-in, aggregated window length) used at these settings."""
    plan = _window_plan(T, W, step, qr_every, burn_in, window_factor)
    return plan.burn_chunks * plan.dc, plan.weff_chunks * plan.dc


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def _check_ensemble(flow, ensemble):
    if not ensemble:
        raise InputError("ensemble must be non-empty")
    for p in ensemble:
        if not isinstance(p, PhasePoint):
            raise InputError("ensemble entries must be PhasePoints")
        if p.dim != flow.dim:
            raise InputError("ensemble point dimension does not match flow")


def _chunk_totals(nf, ensemble, step, qr_every, n_chunks, threads):
    """Per-chunk log-growth per QR channel, shape (B, n_chunks, C).

    Scalar-only cocycles contribute one channel built from the stretch
    increments; matrix cocycles add the rescale and stretch corrections
    to every diagonal channel.
    """
    spec = _engine.WalkSpec(nf.flow, nf.mat)
    points = [(p.x, p.eta) for p in ensemble]
    logs, ds = _engine.run_walk_qr(
        spec, points, step, qr_every, n_chunks,
        restricted=nf.restricted, adjoint=nf.adj, threads=threads)
    dc = qr_every * step
    correction = nf.m * ds - nf.lam * dc
    if logs.shape[2] == 0:
        totals = correction[:, :, None]
    else:
        if (logs <= _LOG_DEGENERATE).any():
            raise ConditioningError(
                "QR diagonal underflow: propagator numerically singular")
        if not np.isfinite(logs).all():
            raise IntegrationError("QR walk produced non-finite factors")
        totals = logs + correction[:, :, None]
    return totals


def sacker_sell_estimate(cocycle, ensemble, T, W, step=1e-3, merge_tol=0.05,
                         qr_every=10, burn_in=None, window_factor=None,
                         threads=1, return_samples=False):
    """Windowed-QR estimate of the dynamical spectrum.

    For every trajectory and QR channel, Steklov averages of the
    accumulated log-growth over sliding aggregated windows give a
    [min, max] interval; the union over the ensemble, merged with
    merge_tol, is returned.  With return_samples=True also returns the
    full windowed-rate table as an array with columns (seed index,
    channel index, window start time, rate).
    """
    nf = _normalize(cocycle)
    _check_ensemble(nf.flow, ensemble)
    if merge_tol < 0:
        raise InputError("merge_tol must be nonnegative")
    plan = _window_plan(T, W, step, qr_every, burn_in, window_factor)
    totals = _chunk_totals(nf, ensemble, step, qr_every, plan.n_chunks,
                           threads)
    B, _, C = totals.shape
    csum = np.zeros((B, plan.n_chunks + 1, C))
    np.cumsum(totals, axis=1, out=csum[:, 1:, :])
    starts = np.arange(plan.burn_chunks,
                       plan.n_chunks - plan.weff_chunks + 1)
    span = plan.weff_chunks * plan.dc
    win = (csum[:, starts + plan.weff_chunks, :] - csum[:, starts, :]) / span

    raw = []
    for b in range(B):
        for i in range(C):
            raw.append((win[b, :, i].min(), win[b, :, i].max()))
    merged = merge_intervals(raw, merge_tol)
    counts = []
    for lo, hi in merged:
        counts.append(int(((win >= lo - 1e-12) & (win <= hi + 1e-12)).sum()))
    burn, weff = (plan.burn_chunks * plan.dc, plan.weff_chunks * plan.dc)
    est = SpectrumEstimate(merged, counts, {
        "T": float(T), "W": float(W), "step": float(step),
        "qr_every": int(qr_every), "merge_tol": float(merge_tol),
        "burn_in": burn, "window_factor": plan.factor,
        "effective_window": weff, "ensemble_size": B,
    })
    if not return_samples:
        return est
    start_times = starts * plan.dc
    rows = np.empty((B * len(starts) * C, 4))
    r = 0
    for b in range(B):
        for i in range(C):
            nw = len(starts)
            rows[r:r + nw, 0] = b
            rows[r:r + nw, 1] = i
            rows[r:r + nw, 2] = start_times
            rows[r:r + nw, 3] = win[b, :, i]
            r += nw
    return est, rows


def lyapunov_exponents(cocycle, start, T, step=1e-3, qr_every=10):
    """Discrete-QR Lyapunov exponents from one trajectory.

    Time-averages of the accumulated per-channel log-growth over [0, T],
    sorted descending; scalar cocycles return the single stretch rate.
    """
    nf = _normalize(cocycle)
    if not isinstance(start, PhasePoint):
        raise InputError("start must be a PhasePoint")
    if start.dim != nf.flow.dim:
        raise InputError("start dimension does not match flow")
    if step <= 0:
        raise InputError("step must be positive")
    qr_every = int(qr_every)
    if qr_every < 1:
        raise InputError("qr_every must be a positive integer")
    if T < 10 * qr_every * step:
        raise InputError("horizon must cover at least 10 QR chunks")
    dc = qr_every * step
    n_chunks = int(T / dc + 1e-9)
    totals = _chunk_totals(nf, [start], step, qr_every, n_chunks, threads=1)
    rates = totals[0].sum(axis=0) / (n_chunks * dc)
    return sorted((float(r) for r in rates), reverse=True)


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

def halton_ensemble(flow, size, seed):
    """Low-discrepancy seeds on torus x unit sphere (scrambled Halton)."""
    if size < 1:
        raise InputError("ensemble size must be positive")
    n = flow.dim
    sampler = qmc.Halton(d=n + (n - 1), scramble=True, seed=seed)
    u = sampler.random(size)
    pts = []
    for row in u:
        x = 2.0 * np.pi * row[:n]
        if n == 2:
            phi = 2.0 * np.pi * row[n]
            eta = np.array([np.cos(phi), np.sin(phi)])
        else:
            z = 2.0 * row[n] - 1.0
            phi = 2.0 * np.pi * row[n + 1]
            r = np.sqrt(max(0.0, 1.0 - z * z))
            eta = np.array([r * np.cos(phi), r * np.sin(phi), z])
        pts.append(PhasePoint(x, eta))
    return pts


def distinguished_seeds(flow, T, W, step=1e-3, qr_every=10, burn_in=None,
                        window_factor=None):
    """Deterministic seeds at declared stagnation points.

    At a hyperbolic stagnation point the frequency generator -J^T has
    real eigendirections along which the stretch rate is constant; one
    anchor seed per real eigendirection pins the extreme rates.  When
    two real rates differ, near-eigendirection seeds with calibrated
    offsets exp(-t*(r_max - r_min)) cross over from the slow to the
    fast rate at time t*, so their window averages sweep the whole
    rate range and keep the estimated interval connected.
    """
    if not flow.stagnation_points:
        return []
    burn, weff = effective_window(T, W, step, qr_every, burn_in,
                                  window_factor)
    crossover_times = [burn + weff * fr for fr in (0.2, 0.5, 1.0)]
    seeds = []
    for xstar in flow.stagnation_points:
        xstar = np.asarray(xstar, dtype=float)
        G = -eval_jacobian(flow, xstar).T
        vals, vecs = np.linalg.eig(G)
        real = [(float(vals[i].real), np.real(vecs[:, i]))
                for i in range(len(vals)) if abs(vals[i].imag) < 1e-12]
        real.sort(key=lambda p: -p[0])
        for rate, v in real:
            nv = np.linalg.norm(v)
            if nv > 1e-12:
                seeds.append(PhasePoint(xstar, v / nv))
        if len(real) >= 2:
            r_hi, v_hi = real[0]
            r_lo, v_lo = real[-1]
            gap = r_hi - r_lo
            if gap > 1e-9:
                for tstar in crossover_times:
                    expo = -tstar * gap
                    if expo < -640.0:
                        continue
                    eta0 = v_lo / np.linalg.norm(v_lo) \
                        + math.exp(expo) * v_hi / np.linalg.norm(v_hi)
                    seeds.append(PhasePoint(xstar, eta0))
    return seeds


def build_ensemble(flow, size, seed, T=None, W=None, step=1e-3, qr_every=10,
                   burn_in=None, window_factor=None):
    """Ensemble of start points: distinguished seeds plus Halton fill.

    When the flow declares stagnation points and the window geometry
    (T, W) is known, deterministic anchor/crossover seeds come first;
    scrambled-Halton low-discrepancy points fill up to size.
    """
    if size < 1:
        raise InputError("ensemble size must be positive")
    seeds = []
    if T is not None and W is not None:
        seeds = distinguished_seeds(flow, T, W, step, qr_every, burn_in,
                                    window_factor)
    seeds = seeds[:size]
    fill = size - len(seeds)
    if fill > 0:
        seeds = seeds + halton_ensemble(flow, fill, seed)
    return seeds


# ---------------------------------------------------------------------------
# finite-time growth certificates
# ---------------------------------------------------------------------------

@dataclass
class HypoCertificate:
    """Two-rate certificate from growth at horizons n and 2n.

    lambda1 estimates the lim inf of the per-unit-time growth at the
    first horizon, lambda1 + lambda2 the lim sup at the doubled
    horizon.  lambda1 <= lambda2 puts some spectrum inside
    [lambda1, lambda2]; lambda2 <= lambda1 puts all of [lambda2,
    lambda1] inside the spectrum.
    """

    lambda1: float
    lambda2: float
    conclusion: str
    interval: tuple
    evidence: list


def hypo_certificate(evidence):
    """Build a HypoCertificate from (n_k, g1_k, g2_k) triples.

    g1_k is the per-unit-time log-growth at horizon n_k, g2_k the one
    at horizon 2 n_k still divided by n_k.  The trailing half of the
    sequence estimates the limits.
    """
    evidence = [(float(n), float(g1), float(g2)) for n, g1, g2 in evidence]
    if len(evidence) < 3:
        raise InputError("need at least 3 evidence entries")
    ns = [e[0] for e in evidence]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise InputError("horizons n_k must be strictly increasing")
    tail = evidence[len(evidence) // 2:]
    lam1 = min(e[1] for e in tail)
    lam2 = max(e[2] for e in tail) - lam1
    if lam1 <= lam2:
        conclusion = "interval_intersects_spectrum"
        interval = (lam1, lam2)
    else:
        conclusion = "interval_contained_in_spectrum"
        interval = (lam2, lam1)
    return HypoCertificate(lam1, lam2, conclusion, interval, evidence)


# ---------------------------------------------------------------------------
# Mane search
# ---------------------------------------------------------------------------

@dataclass
class ManeCertificate:
    """Witness of non-dichotomy at rate lam over horizon 2N.

    profile[k] = norm of the rescaled propagator applied to x0 at
    integer time k; stays below C throughout while exceeding c at the
    midpoint N.
    """

    theta: PhasePoint
    x0: np.ndarray
    lam: float
    horizon_N: int
    c: float
    C: float
    profile: list

    def __post_init__(self):
        if self.c <= 0 or self.C < self.c:
            raise InputError("certificate requires 0 < c <= C")
        if abs(np.linalg.norm(self.x0) - 1.0) > 1e-9:
            raise InputError("certificate direction must be unit")
        N = self.horizon_N
        if len(self.profile) != 2 * N + 1:
            raise InputError("profile must have 2N+1 entries")
        if not (self.profile[N] > self.c):
            raise InputError("profile must exceed c at the midpoint")
        if any(p >= self.C for p in self.profile):
            raise InputError("profile must stay below C")


@dataclass
class BilateralManeReport:
    primal: Optional[ManeCertificate]
    adjoint: Optional[ManeCertificate]

    @property
    def found(self):
        return self.primal is not None or self.adjoint is not None

    @property
    def side(self):
        if self.primal is not None:
            return "primal"
        if self.adjoint is not None:
            return "adjoint"
        return None


def _integer_time_records(nf, theta, k_max, step):
    """Propagator matrices and stretch logs at integer times 0..k_max.

    Returns (mats, s_list): mats[k] is the matrix factor at time k
    (None throughout for scalar cocycles), s_list[k] the accumulated
    log-stretch entering the scalar factor exp(m s - lam k).
    """
    rec_every = int(round(1.0 / step))
    if rec_every < 1 or abs(rec_every * step - 1.0) > 1e-9:
        raise InputError("step must divide the unit recording interval")
    spec = _engine.WalkSpec(nf.flow, nf.mat)
    n = nf.flow.dim

    if not nf.adj:
        if nf.mat is None:
            _, states = _engine.run_record_traj(
                spec, theta.x, theta.eta, 0.0, float(k_max), step, rec_every)
            s_list = [0.0] + [float(states[k][2 * n]) for k in range(k_max)]
            return [None] * (k_max + 1), s_list
        states, Ms = _engine.run_record_mat(
            spec, theta.x, theta.eta, 0.0, 1.0, k_max, step)
        s_list = [0.0] + [float(states[k][2 * n]) for k in range(k_max)]
        if nf.restricted:
            F0 = orthonormal_frame(theta.eta)
            mats = [np.eye(n - 1)]
            for k in range(k_max):
                Fk = orthonormal_frame(states[k][n:2 * n])
                mats.append(Fk.T @ Ms[k] @ F0)
        else:
            mats = [np.eye(nf.d)] + [Ms[k] for k in range(k_max)]
        return mats, s_list

    # adjoint: walk the base point backward at integer times, then
    # accumulate unit-time transposed chunks
    _, back = _engine.run_record_traj(
        spec, theta.x, theta.eta, 0.0, -float(k_max), step, rec_every)
    base_pts = [(theta.x, theta.eta, 0.0)]
    for k in range(k_max):
        base_pts.append((back[k][:n].copy(), back[k][n:2 * n].copy(),
                         float(back[k][2 * n])))
    s_list = [-p[2] for p in base_pts]
    if nf.mat is None:
        return [None] * (k_max + 1), s_list
    q = nf.d - 1 if nf.restricted else nf.d
    mats = [np.eye(q)]
    P = np.eye(q)
    for k in range(1, k_max + 1):
        xk, ek, sk = base_pts[k]
        _, e_end, _, C = _engine.run_span(spec, xk, ek, sk, np.eye(nf.d),
                                          1.0, step)
        if nf.restricted:
            chunk = orthonormal_frame(ek).T @ C.T @ orthonormal_frame(e_end)
        else:
            chunk = C.T
        P = chunk @ P
        mats.append(P)
    return mats, s_list


def _profile_logs(mats, s_list, m, lam_total, x):
    """log of |rescaled propagator applied to x| at each integer time."""
    out = np.empty(len(mats))
    for k, M in enumerate(mats):
        if M is None:
            amp = 0.0
        else:
            v = M @ x
            nv = float(np.linalg.norm(v))
            amp = math.log(nv) if nv > 0 else -math.inf
        out[k] = amp + m * s_list[k] - lam_total * k
    return out


def _ascend_ratio(mats, s_list, m, lam_total, N, x0, iters=80):
    """Projected ascent of log(profile[N] / max_k profile[k]) on the sphere."""

    def value_grad(x):
        p = _profile_logs(mats, s_list, m, lam_total, x)
        kstar = int(np.argmax(p))
        f = p[N] - p[kstar]

        def grad_term(k):
            M = mats[k]
            if M is None:
                return np.zeros_like(x)
            v = M @ x
            denom = float(v @ v)
            if denom <= 0:
                return np.zeros_like(x)
            return (M.T @ v) / denom

        g = grad_term(N) - grad_term(kstar)
        return f, g

    x = x0 / np.linalg.norm(x0)
    f, g = value_grad(x)
    alpha = 0.5
    for _ in range(iters):
        gp = g - (g @ x) * x
        gn = np.linalg.norm(gp)
        if gn < 1e-13 or not np.isfinite(gn):
            break
        a = alpha
        moved = False
        for _ in range(7):
            xn = x + a * gp
            xn = xn / np.linalg.norm(xn)
            fn, gnew = value_grad(xn)
            if fn > f + 1e-14:
                x, f, g = xn, fn, gnew
                alpha = min(2.0 * a, 1.0)
                moved = True
                break
            a *= 0.5
        if not moved:
            break
    return x, f


def mane_search(cocycle, lam, theta_grid, N, step=1e-3, ratio_threshold=0.1):
    """Search for a bounded-orbit witness at rate lam.

    For each start point, propagators at integer times 0..2N are
    rescaled by exp(-lam k); candidate directions (right singular
    vectors of the midpoint matrix, the standard basis, and their
    projected-ascent refinements) are scored by the ratio of the
    midpoint norm to the running maximum.  The best candidate clearing
    ratio_threshold yields a certificate; None means no witness found.
    """
    nf = _normalize(cocycle)
    N = int(N)
    if N < 4:
        raise InputError("horizon N must be at least 4")
    if not (0.0 < ratio_threshold <= 1.0):
        raise InputError("ratio_threshold must lie in (0, 1]")
    if not theta_grid:
        raise InputError("theta grid must be non-empty")
    lam = float(lam)
    lam_total = lam + nf.lam
    log_thresh = math.log(ratio_threshold)

    best = None  # (f, theta, x, profile_logs)
    for theta in theta_grid:
        if not isinstance(theta, PhasePoint):
            raise InputError("theta grid entries must be PhasePoints")
        if theta.dim != nf.flow.dim:
            raise InputError("grid point dimension does not match flow")
        mats, s_list = _integer_time_records(nf, theta, 2 * N, step)
        dim = 1 if mats[0] is None else mats[0].shape[0]
        if dim == 1:
            cands = [np.array([1.0])]
        else:
            _, _, Vt = np.linalg.svd(mats[N])
            cands = [Vt[i] for i in range(dim)]
            cands += [np.eye(dim)[i] for i in range(dim)]
        for x0 in cands:
            x, f = _ascend_ratio(mats, s_list, nf.m, lam_total, N, x0)
            if best is None or f > best[0]:
                p = _profile_logs(mats, s_list, nf.m, lam_total, x)
                best = (f, theta, x, p)

    if best is None or best[0] < log_thresh:
        return None
    f, theta, x, p = best
    try:
        profile = [math.exp(v) for v in p]
        c = math.exp(p[N]) * 0.99
        C = max(profile) * 1.01
    except OverflowError:
        raise IntegrationError(
            "certificate norms overflow double precision; rate lam is "
            "too far from the propagator growth") from None
    return ManeCertificate(theta.copy(), x.copy(), lam, N, c, C, profile)


def mane_search_bilateral(cocycle, lam, theta_grid, N, step=1e-3,
                          ratio_threshold=0.1):
    """Run mane_search on the cocycle and on its adjoint.

    A witness on either side is evidence that lam is in the spectrum;
    absence on both sides is evidence (not proof) that it is not.
    """
    primal = mane_search(cocycle, lam, theta_grid, N, step, ratio_threshold)
    dual = mane_search(adjoint(cocycle), lam, theta_grid, N, step,
                       ratio_threshold)
    return BilateralManeReport(primal, dual)


# ---------------------------------------------------------------------------
# interval arithmetic on estimates
# ---------------------------------------------------------------------------

def minkowski_sum(a, b):
    """Pairwise interval sums of two estimates, merged."""
    if not isinstance(a, SpectrumEstimate) or not isinstance(b, SpectrumEstimate):
        raise InputError("minkowski_sum expects two SpectrumEstimates")
    if not a.intervals or not b.intervals:
        raise InputError("minkowski_sum requires non-empty estimates")
    tol = max(float(a.params.get("merge_tol", 0.0)),
              float(b.params.get("merge_tol", 0.0)))
    sums = [(la + lb, ha + hb) for la, ha in a.intervals
            for lb, hb in b.intervals]
    merged = merge_intervals(sums, tol)
    return SpectrumEstimate(merged, None, {"merge_tol": tol})


@dataclass
class GapBoundsReport:
    passed: bool
    checks: list

    @property
    def violations(self):
        return [c for c in self.checks if not c["ok"]]


def gap_bounds_check(sigma_c, sigma_phi, sigma_product, tol=1e-9):
    """Check the admissible-gap inequalities of a product estimate.

    Every gap of sigma_product inside its hull must consist of rates
    rho with max(sigma_c) + min(sigma_phi) < rho < min(sigma_c) +
    max(sigma_phi); reports one check per gap.
    """
    for est in (sigma_c, sigma_phi, sigma_product):
        if not isinstance(est, SpectrumEstimate) or not est.intervals:
            raise InputError("gap_bounds_check requires non-empty estimates")
    c_lo, c_hi = sigma_c.hull()
    p_lo, p_hi = sigma_phi.hull()
    lower = c_hi + p_lo
    upper = c_lo + p_hi
    checks = []
    ivs = sigma_product.intervals
    for (la, ha), (lb, hb) in zip(ivs, ivs[1:]):
        ok = (lower <= ha + tol) and (lb <= upper + tol)
        checks.append({
            "gap": (ha, lb),
            "lower_bound": lower,
            "upper_bound": upper,
            "ok": bool(ok),
        })
    return GapBoundsReport(all(c["ok"] for c in checks), checks)


def connectedness_threshold(sigma_b, lambda_max, lambda_min):
    """Exponent magnitude above which the weighted spectrum is predicted
    connected: diameter of sigma_b over the stretch-rate spread."""
    if not isinstance(sigma_b, SpectrumEstimate) or not sigma_b.intervals:
        raise InputError("connectedness_threshold requires a non-empty "
                         "estimate")
    lambda_max = float(lambda_max)
    lambda_min = float(lambda_min)
    if not (lambda_max > lambda_min):
        raise InputError("lambda_max must exceed lambda_min")
    lo, hi = sigma_b.hull()
    return (hi - lo) / (lambda_max - lambda_min)


def essential_spectrum_annulus(sigma, t):
    """Radii exp(t * interval) per interval of the estimate."""
    if not isinstance(sigma, SpectrumEstimate) or not sigma.intervals:
        raise InputError("essential_spectrum_annulus requires a non-empty "
                         "estimate")
    t = float(t)
    if t <= 0:
        raise InputError("time t must be positive")
    out = []
    for lo, hi in sigma.intervals:
        try:
            out.append((math.exp(t * lo), math.exp(t * hi)))
        except OverflowError:
            raise IntegrationError(
                f"annulus radius exp({t * hi:.3g}) overflows double "
                "precision") from None
    return out


def algebraic_rate_floor(flow, window, grid_n=16):
    """Smallest spectrum diameter resolvable at this window length.

    Algebraic (polynomial-in-t) transients of the frequency dynamics
    produce windowed rates up to log(1 + (G w)^2) / w even when every
    true exponent vanishes, G the largest velocity-gradient norm; a
    measured diameter at or below this (10%-inflated) floor is
    indistinguishable from a point.
    """
    if window <= 0:
        raise InputError("window must be positive")
    grid_n = int(grid_n)
    if grid_n < 4:
        raise InputError("grid_n must be at least 4")
    axes = [np.linspace(0.0, 2.0 * np.pi, grid_n, endpoint=False)] * flow.dim
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    J = flow.jacobian(pts)
    G = float(np.linalg.norm(J, ord=2, axis=(-2, -1)).max())
    return 1.1 * math.log1p((G * window) ** 2) / window
