"""Steady incompressible velocity fields on the flat torus.

The catalog is deliberately small: a parallel shear with a configurable
Fourier profile, the cellular (Taylor-Green type) field, and the ABC
field.  Each flow carries closed-form velocity and Jacobian callables,
both vectorized over leading axes, plus enough metadata for the fast
integration kernels.

Coordinates live on [0, 2*pi)^n.  Evaluations wrap their inputs, so
callers may hand in unwrapped trajectory coordinates.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InputError

TWO_PI = 2.0 * np.pi

# integer codes used by the compiled kernels
KERNEL_SHEAR = 0
KERNEL_CELLULAR = 1
KERNEL_ABC = 2


@dataclass
class FlowField:
    """A steady velocity field u0 on the n-torus.

    Attributes
    ----------
    dim : int
        Spatial dimension n (2 or 3 for the built-ins).
    name : str
        Catalog name, or a free-form label for custom fields.
    params : dict
        Parameters the field was built with, echoed into outputs.
    velocity : callable
        x with shape (..., n) -> u0(x) with shape (..., n).
    jacobian : callable
        x with shape (..., n) -> grad u0(x) with shape (..., n, n),
        entry [i, j] = d u_i / d x_j.
    stagnation_points : tuple
        Known stagnation points worth seeding ensembles with
        (hyperbolic ones anchor extreme stretching rates).
    kernel : tuple or None
        (code, par1, par2) consumed by the compiled integrator; None
        forces the pure-Python integration path.
    """

    dim: int
    name: str
    params: dict
    velocity: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    stagnation_points: tuple = ()
    kernel: Optional[tuple] = field(default=None, repr=False)


def wrap_torus(x):
    """Map coordinates into [0, 2*pi) componentwise."""
    return np.mod(x, TWO_PI)


def _check_point(flow, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != flow.dim:
        raise InputError(
            f"flow '{flow.name}' has dimension {flow.dim}, "
            f"got point with last axis {x.shape[-1]}"
        )
    return x


def eval_velocity(flow, x):
    """Evaluate u0 at x (wrapping applied); validates the dimension."""
    return flow.velocity(_check_point(flow, x))


def eval_jacobian(flow, x):
    """Evaluate grad u0 at x (wrapping applied); validates the dimension."""
    return flow.jacobian(_check_point(flow, x))


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

def shear_flow(sin_coeffs=(1.0,), cos_coeffs=(), constant=0.0):
    """Parallel shear u0 = (U(x2), 0) with a trigonometric profile.

    U(y) = constant + sum_k sin_coeffs[k-1] sin(k y)
                    + sum_k cos_coeffs[k-1] cos(k y),  k = 1, 2, ...

    The default is U(y) = sin y.
    """
    sin_c = np.asarray(sin_coeffs, dtype=float)
    cos_c = np.asarray(cos_coeffs, dtype=float)
    K = max(len(sin_c), len(cos_c))
    # packed profile arrays indexed by harmonic k = 0..K; entry 0 of the
    # cosine array is the constant term
    pc = np.zeros(K + 1)
    ps = np.zeros(K + 1)
    pc[0] = constant
    pc[1:len(cos_c) + 1] = cos_c
    ps[1:len(sin_c) + 1] = sin_c
    ks = np.arange(K + 1, dtype=float)

    def profile(y):
        ky = np.multiply.outer(y, ks)
        return np.sin(ky) @ ps + np.cos(ky) @ pc

    def dprofile(y):
        ky = np.multiply.outer(y, ks)
        return np.cos(ky) @ (ks * ps) - np.sin(ky) @ (ks * pc)

    def velocity(x):
        x = wrap_torus(x)
        u = np.zeros_like(x)
        u[..., 0] = profile(x[..., 1])
        return u

    def jacobian(x):
        x = wrap_torus(x)
        J = np.zeros(x.shape + (2,))
        J[..., 0, 1] = dprofile(x[..., 1])
        return J

    params = {
        "sin_coeffs": [float(v) for v in sin_c],
        "cos_coeffs": [float(v) for v in cos_c],
        "constant": float(constant),
    }
    return FlowField(
        dim=2,
        name="shear",
        params=params,
        velocity=velocity,
        jacobian=jacobian,
        stagnation_points=(),
        kernel=(KERNEL_SHEAR, pc, ps),
    )


def cellular_flow():
    """Cellular field with stream function psi = sin x1 sin x2.

    u0 = (-d2 psi, d1 psi) = (-sin x1 cos x2, cos x1 sin x2).  The points
    (0, 0), (0, pi), (pi, 0), (pi, pi) are hyperbolic stagnation points
    with stretching rate 1.
    """

    def velocity(x):
        x = wrap_torus(x)
        u = np.empty_like(x)
        u[..., 0] = -np.sin(x[..., 0]) * np.cos(x[..., 1])
        u[..., 1] = np.cos(x[..., 0]) * np.sin(x[..., 1])
        return u

    def jacobian(x):
        x = wrap_torus(x)
        c1, s1 = np.cos(x[..., 0]), np.sin(x[..., 0])
        c2, s2 = np.cos(x[..., 1]), np.sin(x[..., 1])
        J = np.empty(x.shape + (2,))
        J[..., 0, 0] = -c1 * c2
        J[..., 0, 1] = s1 * s2
        J[..., 1, 0] = -s1 * s2
        J[..., 1, 1] = c1 * c2
        return J

    return FlowField(
        dim=2,
        name="cellular",
        params={},
        velocity=velocity,
        jacobian=jacobian,
        stagnation_points=((0.0, 0.0),),
        kernel=(KERNEL_CELLULAR, np.zeros(1), np.zeros(1)),
    )


def abc_flow(A=1.0, B=1.0, C=1.0):
    """Arnold-Beltrami-Childress field on the 3-torus.

    u0 = (A sin x3 + C cos x2, B sin x1 + A cos x3, C sin x2 + B cos x1).
    Beltrami (curl u0 = u0), hence a steady Euler solution.
    """
    A, B, C = float(A), float(B), float(C)

    def velocity(x):
        x = wrap_torus(x)
        u = np.empty_like(x)
        u[..., 0] = A * np.sin(x[..., 2]) + C * np.cos(x[..., 1])
        u[..., 1] = B * np.sin(x[..., 0]) + A * np.cos(x[..., 2])
        u[..., 2] = C * np.sin(x[..., 1]) + B * np.cos(x[..., 0])
        return u

    def jacobian(x):
        x = wrap_torus(x)
        J = np.zeros(x.shape + (3,))
        J[..., 0, 1] = -C * np.sin(x[..., 1])
        J[..., 0, 2] = A * np.cos(x[..., 2])
        J[..., 1, 0] = B * np.cos(x[..., 0])
        J[..., 1, 2] = -A * np.sin(x[..., 2])
        J[..., 2, 0] = -B * np.sin(x[..., 0])
        J[..., 2, 1] = C * np.cos(x[..., 1])
        return J

    return FlowField(
        dim=3,
        name="abc",
        params={"A": A, "B": B, "C": C},
        velocity=velocity,
        jacobian=jacobian,
        stagnation_points=(),
        kernel=(KERNEL_ABC, np.array([A, B, C]), np.zeros(1)),
    )


def counterexample_flow():
    """u = (sin 2 x2, sin x1): divergence-free but NOT a steady Euler flow.

    curl((u . grad) u) = 3 sin x1 sin 2 x2, so the steadiness check must
    reject it.  Kept out of the CLI catalog; used to exercise the check.
    """

    def velocity(x):
        x = wrap_torus(x)
        u = np.empty_like(x)
        u[..., 0] = np.sin(2.0 * x[..., 1])
        u[..., 1] = np.sin(x[..., 0])
        return u

    def jacobian(x):
        x = wrap_torus(x)
        J = np.zeros(x.shape + (2,))
        J[..., 0, 1] = 2.0 * np.cos(2.0 * x[..., 1])
        J[..., 1, 0] = np.cos(x[..., 0])
        return J

    return FlowField(
        dim=2,
        name="counterexample",
        params={},
        velocity=velocity,
        jacobian=jacobian,
    )


FLOW_CATALOG = {
    "shear": shear_flow,
    "cellular": cellular_flow,
    "abc": abc_flow,
}


def make_flow(name, **params):
    """Build a catalog flow by name; unknown names list the catalog."""
    if name not in FLOW_CATALOG:
        raise InputError(
            f"unknown flow '{name}'; catalog: {sorted(FLOW_CATALOG)}"
        )
    return FLOW_CATALOG[name](**params)


# ---------------------------------------------------------------------------
# steadiness check
# ---------------------------------------------------------------------------

@dataclass
class SteadyReport:
    passed: bool
    max_residual: float
    tol: float
    grid_n: int


def _spectral_partials(f, axes):
    """d f / d x_axis for each axis, by FFT on the periodic grid.

    f has shape grid^n; exact for trigonometric polynomials below the
    Nyquist frequency, which covers every catalog field.
    """
    n = f.ndim
    fh = np.fft.fftn(f)
    outs = []
    for ax in axes:
        k = np.fft.fftfreq(f.shape[ax], d=1.0 / f.shape[ax])
        # unit spacing 2*pi/N: d/dx multiplies mode k by i*k
        shape = [1] * n
        shape[ax] = f.shape[ax]
        outs.append(np.real(np.fft.ifftn(fh * (1j * k.reshape(shape)))))
    return outs


def check_steady_euler(flow, grid_n=32, tol=1e-6):
    """Verify curl((u0 . grad) u0) = 0 on a uniform periodic grid.

    A velocity field solves the steady Euler equations with some
    pressure iff the advection term is a gradient, i.e. its curl
    vanishes.  The curl is taken spectrally, so smooth catalog fields
    are resolved to round-off.
    """
    if grid_n < 8:
        raise InputError("grid_n must be at least 8")
    n = flow.dim
    ax = np.linspace(0.0, TWO_PI, grid_n, endpoint=False)
    grids = np.meshgrid(*([ax] * n), indexing="ij")
    X = np.stack(grids, axis=-1)

    u = eval_velocity(flow, X)
    J = eval_jacobian(flow, X)
    adv = np.einsum("...ij,...j->...i", J, u)

    if n == 2:
        d1a2 = _spectral_partials(adv[..., 1], [0])[0]
        d2a1 = _spectral_partials(adv[..., 0], [1])[0]
        resid = np.abs(d1a2 - d2a1)
    elif n == 3:
        d = [_spectral_partials(adv[..., i], [0, 1, 2]) for i in range(3)]
        curl = np.stack(
            [
                d[2][1] - d[1][2],
                d[0][2] - d[2][0],
                d[1][0] - d[0][1],
            ],
            axis=-1,
        )
        resid = np.linalg.norm(curl, axis=-1)
    else:
        raise InputError(f"steadiness check supports dim 2 or 3, got {n}")

    max_resid = float(resid.max())
    return SteadyReport(
        passed=max_resid < tol,
        max_residual=max_resid,
        tol=float(tol),
        grid_n=int(grid_n),
    )
