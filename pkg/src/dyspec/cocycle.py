"""Linear cocycles over the joint transport flow.

A CocycleHandle is a symbolic description: the amplitude cocycle (the
matrix solution of b' = A_B(x, eta) b along a trajectory), the scalar
stretch cocycle exp(m s(t)), pointwise products, rescalings by
exp(-lambda t), adjoints over the inverse flow, the restriction of the
amplitude cocycle to the orthogonal complement of eta, and custom
generators for validation fixtures.

Every handle reduces to a normal form (one optional matrix factor, a
scalar stretch exponent, a rate shift, an adjoint flag, a restriction
flag); propagation and spectral estimation both consume that form, so
algebraically equal handles evaluate identically.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _engine
from .bichar import PhasePoint
from .errors import InputError, IntegrationError
from .flows import FlowField, eval_jacobian

__all__ = [
    "CocycleHandle", "amplitude_cocycle", "scalar_stretch", "product",
    "rescaled", "adjoint", "restricted", "custom_cocycle",
    "amplitude_generator", "propagate", "restrict_to_orthogonal",
    "orthonormal_frame",
]


@dataclass(frozen=True)
class CocycleHandle:
    """Immutable description of a linear cocycle over one flow."""

    kind: str
    flow: FlowField
    fiber_dim: int
    form: str = "projected"            # amplitude: projected | verbatim
    exponent: float = 0.0              # scalar_stretch power m
    shift: float = 0.0                 # rescaled rate lambda
    base: Optional["CocycleHandle"] = None
    left: Optional["CocycleHandle"] = None
    right: Optional["CocycleHandle"] = None
    matrix: Optional[np.ndarray] = None
    fourier: Optional[np.ndarray] = None
    func: Optional[Callable] = None


def _require_flow(flow):
    if not isinstance(flow, FlowField):
        raise InputError("flow must be a FlowField")


def _flow_key(flow):
    return (flow.name, flow.dim, tuple(sorted(flow.params.items())))


def amplitude_cocycle(flow, form="projected"):
    """The n x n cocycle generated by the amplitude equation.

    form="projected" (default) uses A_B = -J + 2 eta eta^T J, which
    conserves <b, xi>; form="verbatim" uses +J + eta eta^T J, which
    does not (kept for comparison runs).
    """
    _require_flow(flow)
    if form not in ("projected", "verbatim"):
        raise InputError("form must be 'projected' or 'verbatim'")
    return CocycleHandle("amplitude", flow, flow.dim, form=form)


def scalar_stretch(flow, m=1.0):
    """The scalar cocycle exp(m s(t)), s the accumulated log-stretch."""
    _require_flow(flow)
    m = float(m)
    if not np.isfinite(m):
        raise InputError("stretch exponent must be finite")
    return CocycleHandle("scalar_stretch", flow, 1, exponent=m)


def product(left, right):
    """Pointwise product of two cocycles over the same flow.

    At most one factor may carry a matrix part (a product of two matrix
    cocycles does not satisfy the cocycle identity); this is checked at
    evaluation time when the factors are themselves composite.
    """
    if not isinstance(left, CocycleHandle) or not isinstance(right, CocycleHandle):
        raise InputError("product expects two cocycle handles")
    if _flow_key(left.flow) != _flow_key(right.flow):
        raise InputError("product factors must live over the same flow")
    fiber = max(left.fiber_dim, right.fiber_dim)
    if left.fiber_dim > 1 and right.fiber_dim > 1:
        raise InputError("at least one product factor must be scalar")
    return CocycleHandle("product", left.flow, fiber, left=left, right=right)


def rescaled(base, lam):
    """The cocycle exp(-lambda t) * base."""
    if not isinstance(base, CocycleHandle):
        raise InputError("rescaled expects a cocycle handle")
    lam = float(lam)
    if not np.isfinite(lam):
        raise InputError("rescaling rate must be finite")
    return CocycleHandle("rescaled", base.flow, base.fiber_dim,
                         shift=lam, base=base)


def adjoint(base):
    """The adjoint cocycle over the inverse flow.

    Evaluates the transpose of the base propagator started from the
    backward image of the query point, so the result is again a cocycle
    (over the time-reversed trajectory flow).
    """
    if not isinstance(base, CocycleHandle):
        raise InputError("adjoint expects a cocycle handle")
    return CocycleHandle("adjoint", base.flow, base.fiber_dim, base=base)


def restricted(base):
    """Amplitude cocycle compressed to the (n-1)-dim complement of eta.

    The complement of the frequency direction is invariant under the
    projected amplitude flow, so the compression is itself a cocycle.
    """
    if not isinstance(base, CocycleHandle):
        raise InputError("restricted expects a cocycle handle")
    nf = _normalize(base)
    if nf.mat is None or nf.mat[0] != "amp":
        raise InputError("restriction is defined for amplitude cocycles")
    if nf.restricted:
        raise InputError("cocycle is already restricted")
    return CocycleHandle("restricted", base.flow, base.fiber_dim - 1,
                         base=base)


def custom_cocycle(flow, matrix=None, fourier=None, func=None, dim=None):
    """Cocycle with a user-supplied generator along the trajectory.

    Exactly one of:
      matrix:  constant (d, d) generator;
      fourier: coefficients (2K+1, d, d) for A(x1) = F[0]
               + sum_k F[2k-1] cos(k x1) + F[2k] sin(k x1);
      func:    callable A(x, eta) -> (d, d), requires dim.
    """
    _require_flow(flow)
    given = [matrix is not None, fourier is not None, func is not None]
    if sum(given) != 1:
        raise InputError(
            "exactly one of matrix, fourier, func must be given")
    if matrix is not None:
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InputError("matrix generator must be square")
        return CocycleHandle("custom_generator", flow, matrix.shape[0],
                             matrix=matrix)
    if fourier is not None:
        fourier = np.asarray(fourier, dtype=float)
        if (fourier.ndim != 3 or fourier.shape[0] % 2 != 1
                or fourier.shape[1] != fourier.shape[2]):
            raise InputError("fourier generator must have shape (2K+1, d, d)")
        return CocycleHandle("custom_generator", flow, fourier.shape[1],
                             fourier=fourier)
    if dim is None:
        raise InputError("func generator requires dim")
    dim = int(dim)
    if dim < 1:
        raise InputError("fiber dimension must be positive")
    return CocycleHandle("custom_generator", flow, dim, func=func)


# ---------------------------------------------------------------------------
# normal form
# ---------------------------------------------------------------------------

class _NormalForm:
    __slots__ = ("flow", "lam", "m", "mat", "d", "adj", "restricted")

    def __init__(self, flow):
        self.flow = flow
        self.lam = 0.0
        self.m = 0.0
        self.mat = None      # engine generator tuple, or None
        self.d = 0
        self.adj = False
        self.restricted = False

    @property
    def fiber_dim(self):
        if self.mat is None:
            return 1
        return self.d - 1 if self.restricted else self.d


def _absorb_matrix(nf, mat, d):
    if nf.mat is not None:
        raise InputError(
            "cocycle reduces to a product of two matrix factors, which "
            "is not a cocycle; keep at most one matrix factor")
    nf.mat = mat
    nf.d = d


def _normalize(handle):
    if not isinstance(handle, CocycleHandle):
        raise InputError("expected a cocycle handle")
    nf = _NormalForm(handle.flow)
    _walk_top(handle, nf)
    return nf


def _walk_top(handle, nf):
    """Resolve handle into nf; adjoint parity tracked explicitly."""
    stack_adj = False
    node = handle
    # peel rescale/adjoint wrappers iteratively, then dispatch once
    while True:
        if node.kind == "rescaled":
            nf.lam += node.shift
            node = node.base
        elif node.kind == "adjoint":
            stack_adj = not stack_adj
            node = node.base
        else:
            break
    if node.kind == "product":
        lf = _normalize(node.left)
        rf = _normalize(node.right)
        if lf.adj != rf.adj:
            raise InputError(
                "product factors must share orientation; take the adjoint "
                "of the whole product instead")
        child_adj = lf.adj
        for child in (lf, rf):
            nf.lam += child.lam
            nf.m += child.m
            if child.mat is not None:
                _absorb_matrix(nf, child.mat, child.d)
                nf.restricted = nf.restricted or child.restricted
        nf.adj = stack_adj != child_adj
    elif node.kind == "restricted":
        inner = _normalize(node.base)
        if inner.mat is None or inner.mat[0] != "amp":
            raise InputError("restriction is defined for amplitude cocycles")
        if inner.restricted:
            raise InputError("cocycle is already restricted")
        nf.lam += inner.lam
        nf.m += inner.m
        nf.mat = inner.mat
        nf.d = inner.d
        nf.restricted = True
        nf.adj = stack_adj != inner.adj
    elif node.kind == "amplitude":
        _absorb_matrix(nf, ("amp", node.form), node.flow.dim)
        nf.adj = stack_adj
    elif node.kind == "scalar_stretch":
        nf.m += node.exponent
        nf.adj = stack_adj
    elif node.kind == "custom_generator":
        if node.matrix is not None:
            _absorb_matrix(nf, ("const", node.matrix), node.fiber_dim)
        elif node.fourier is not None:
            _absorb_matrix(nf, ("fourier", node.fourier), node.fiber_dim)
        else:
            _absorb_matrix(nf, ("func", node.func, node.fiber_dim),
                           node.fiber_dim)
        nf.adj = stack_adj
    else:
        raise InputError(f"unknown cocycle kind '{node.kind}'")


# ---------------------------------------------------------------------------
# pointwise evaluation
# ---------------------------------------------------------------------------

def orthonormal_frame(eta):
    """Deterministic orthonormal basis of the complement of eta.

    n=2: the single column (-eta2, eta1).  n=3: Gram-Schmidt of the two
    standard basis vectors with smallest |eta_j| (ties toward the
    smaller index, taken in that order), second column flipped so
    det[eta | frame] > 0.  eta must be unit to 1e-6.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != 1 or eta.shape[0] not in (2, 3):
        raise InputError("frame is defined for unit vectors in R^2 or R^3")
    if abs(np.linalg.norm(eta) - 1.0) > 1e-6:
        raise InputError("frame requires a unit vector")
    return _engine._py_frame(eta)


def amplitude_generator(flow, point, form="projected"):
    """Generator of the amplitude cocycle at one phase point."""
    _require_flow(flow)
    if form not in ("projected", "verbatim"):
        raise InputError("form must be 'projected' or 'verbatim'")
    if point.dim != flow.dim:
        raise InputError("point dimension does not match flow")
    eta = point.eta
    if abs(np.linalg.norm(eta) - 1.0) > 1e-6:
        raise InputError("frequency must be unit to 1e-6")
    J = eval_jacobian(flow, point.x)
    w = J.T @ eta
    if form == "projected":
        return -J + 2.0 * np.outer(eta, w)
    return J + np.outer(eta, w)


def _scalar_factor(m, ds, lam, t):
    arg = m * ds - lam * t
    try:
        return math.exp(arg)
    except OverflowError:
        raise IntegrationError(
            f"scalar cocycle factor exp({arg:.3g}) overflowed") from None


def propagate(cocycle, point, t, step=1e-3):
    """Evaluate the finite-time propagator of the cocycle at point.

    Returns a fiber_dim x fiber_dim matrix (1 x 1 for scalar kinds);
    t = 0 returns the identity exactly.  t must be nonnegative; the
    adjoint kinds internally run the base point backward first.
    """
    nf = _normalize(cocycle)
    if not isinstance(point, PhasePoint):
        raise InputError("point must be a PhasePoint")
    if point.dim != nf.flow.dim:
        raise InputError("point dimension does not match flow")
    t = float(t)
    if t < 0:
        raise InputError("cocycle time must be nonnegative")
    if step <= 0:
        raise InputError("step must be positive")
    fiber = nf.fiber_dim
    if t == 0.0:
        return np.eye(fiber)

    spec = _engine.WalkSpec(nf.flow, nf.mat)
    x0, eta0, s0 = point.x, point.eta, point.s

    if nf.adj:
        # back up the base point, then run the forward propagator
        xb, eb, sb, _ = _engine.run_span(spec, x0, eta0, s0, None, -t, step,
                                         with_mat=False)
        start = (xb, eb, sb)
    else:
        start = (x0, eta0, s0)

    if nf.mat is None:
        xs, es, s1, _ = _engine.run_span(spec, start[0], start[1], start[2],
                                         None, t, step, with_mat=False)
        val = _scalar_factor(nf.m, s1 - start[2], nf.lam, t)
        return np.array([[val]])

    d = nf.d
    if nf.restricted and not nf.adj:
        M0 = orthonormal_frame(start[1])
    else:
        M0 = np.eye(d)
    xs, es, s1, M = _engine.run_span(spec, start[0], start[1], start[2],
                                     M0, t, step)
    if nf.restricted:
        if nf.adj:
            # transpose of frame(end)^T P frame(start)
            M = orthonormal_frame(start[1]).T @ M.T @ orthonormal_frame(es)
        else:
            M = orthonormal_frame(es).T @ M
    elif nf.adj:
        M = M.T
    out = _scalar_factor(nf.m, s1 - start[2], nf.lam, t) * M
    if not np.all(np.isfinite(out)):
        raise IntegrationError("propagator has non-finite entries")
    return out


def restrict_to_orthogonal(cocycle, point, t, step=1e-3):
    """Propagator of the amplitude cocycle compressed to eta-perp.

    Equals frame(eta(t))^T B_t frame(eta(0)); defined for amplitude
    handles only.
    """
    if not isinstance(cocycle, CocycleHandle) or cocycle.kind != "amplitude":
        raise InputError("restriction is defined for amplitude cocycles")
    return propagate(restricted(cocycle), point, t, step)
