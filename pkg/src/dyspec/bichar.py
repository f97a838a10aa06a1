"""Joint transport of position, unit frequency, and log-stretch.

The state is (x, eta, s): the base point advected by the velocity
field, a unit covector driven by the negative Jacobian transpose with
its radial component projected out, and the accumulated log of that
radial component.  exp(s(t)) equals the length ratio |xi(t)|/|xi(0)|
of the unnormalized covector solution xi' = -J^T xi.

Positions are stored unwrapped (the flows are periodic in each
coordinate, so trajectories never need folding back into a fundamental
domain); wrap with flows.wrap_torus for display.
"""

from dataclasses import dataclass, InitVar

import numpy as np

from . import _engine
from .errors import InputError
from .flows import FlowField


@dataclass
class PhasePoint:
    """A point (x, eta, s) of the transport state space.

    eta is normalized on construction by default; pass normalize=False
    to store the array exactly as given (trusted caller).
    """

    x: np.ndarray
    eta: np.ndarray
    s: float = 0.0
    normalize: InitVar[bool] = True

    def __post_init__(self, normalize):
        self.x = np.array(self.x, dtype=float)
        self.eta = np.array(self.eta, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.eta.shape:
            raise InputError("position and frequency must be 1d arrays of "
                             "the same length")
        if normalize:
            nrm = float(np.linalg.norm(self.eta))
            if not np.isfinite(nrm) or nrm == 0.0:
                raise InputError("frequency must be a finite nonzero vector")
            self.eta = self.eta / nrm
        self.s = float(self.s)

    @property
    def dim(self):
        return self.x.shape[0]

    def copy(self):
        return PhasePoint(self.x, self.eta, self.s, normalize=False)


@dataclass
class TrajectorySample:
    """One recorded state along a trajectory."""

    t: float
    point: PhasePoint

    @property
    def x(self):
        return self.point.x

    @property
    def eta(self):
        return self.point.eta

    @property
    def s(self):
        return self.point.s


def _check_flow_point(flow, point):
    if not isinstance(flow, FlowField):
        raise InputError("flow must be a FlowField")
    if point.dim != flow.dim:
        raise InputError(
            f"point dimension {point.dim} does not match flow dimension "
            f"{flow.dim}")


def advance(flow, point, t, step=1e-3, record_every=1):
    """Integrate the joint state for time t (negative means backward).

    Classical RK4 with fixed step; the frequency is renormalized after
    every step.  Returns samples at t = 0, at every record_every-th
    step, and at the final time (a shorter last step covers any
    remainder when |t| is not a multiple of step).
    """
    _check_flow_point(flow, point)
    if step <= 0:
        raise InputError("step must be positive")
    record_every = int(record_every)
    if record_every < 1:
        raise InputError("record_every must be a positive integer")

    start = TrajectorySample(0.0, point.copy())
    if t == 0:
        return [start]

    spec = _engine.WalkSpec(flow, None)
    times, states = _engine.run_record_traj(
        spec, point.x, point.eta, point.s, t, step, record_every)
    n = flow.dim
    out = [start]
    for k in range(len(times)):
        row = states[k]
        out.append(TrajectorySample(float(times[k]), PhasePoint(
            row[:n].copy(), row[n:2 * n].copy(), float(row[2 * n]),
            normalize=False)))
    return out


def advance_point(flow, point, t, step=1e-3):
    """Endpoint-only variant of advance; returns a PhasePoint."""
    _check_flow_point(flow, point)
    if step <= 0:
        raise InputError("step must be positive")
    if t == 0:
        return point.copy()
    spec = _engine.WalkSpec(flow, None)
    x, eta, s, _ = _engine.run_span(
        spec, point.x, point.eta, point.s, None, t, step)
    return PhasePoint(x, eta, s, normalize=False)


def samples_to_csv(samples):
    """Render trajectory samples as CSV text (t, x_i..., eta_i..., s)."""
    if not samples:
        raise InputError("no samples to serialize")
    n = samples[0].point.dim
    cols = (["t"] + [f"x{i + 1}" for i in range(n)]
            + [f"eta{i + 1}" for i in range(n)] + ["s"])
    lines = [",".join(cols)]
    for smp in samples:
        vals = [smp.t, *smp.point.x, *smp.point.eta, smp.point.s]
        lines.append(",".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def flow_jacobian(flow, x, t, step=1e-3):
    """Differential of the time-t flow map at x.

    Solves M' = J(x(t)) M with M(0) = I along the trajectory through x;
    negative t gives the differential of the backward map.
    """
    if not isinstance(flow, FlowField):
        raise InputError("flow must be a FlowField")
    x = np.asarray(x, dtype=float)
    if x.shape != (flow.dim,):
        raise InputError(
            f"position must have shape ({flow.dim},), got {x.shape}")
    if step <= 0:
        raise InputError("step must be positive")
    n = flow.dim
    if t == 0:
        return np.eye(n)
    spec = _engine.WalkSpec(flow, ("flowjac",))
    eta0 = np.zeros(n)
    eta0[0] = 1.0  # frequency slot is inert here; any unit vector works
    _, _, _, M = _engine.run_span(spec, x, eta0, 0.0, np.eye(n), t, step)
    return M
