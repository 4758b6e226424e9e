"""The two-branch intermittent circle map family and its derivatives.

The family is degree-2 on S^1 = R/Z with a neutral fixed point at 0 ~ 1:

    f(x) = x * (1 + 2^alpha * x^alpha)          on [0, 1/2)
    f(x) = x - 2^alpha * (1 - x)^(alpha + 1)    on [1/2, 1]

At alpha = 0 this is the doubling map.  Branch 1 covers [0, 1/2],
branch 2 covers [1/2, 1]; each is an increasing diffeomorphism onto
[0, 1].  Everything here is a pure function of immutable inputs, and
every operation accepts scalars or numpy arrays.

All x- and alpha-derivatives are coded in closed form; the test suite
cross-checks them against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MapParams",
    "PartitionSequences",
    "InverseSolverError",
    "map_value",
    "map_derivative",
    "branch_inverse",
    "branch_inverse_derivative",
    "partition_sequences",
    "parameter_velocity",
    "parameter_velocity_derivative",
    "parameter_acceleration",
    "pullback_velocity",
    "dalpha_branch_inverse",
    "dalpha_branch_inverse_derivative",
    "dalpha_pullback_velocity",
    "envelope_constant",
    "circle_distance",
]

TOL_INV = 1e-14
MAX_INV_ITER = 200


class InverseSolverError(RuntimeError):
    """Inverse-branch solve failed to meet the residual tolerance."""


@dataclass(frozen=True)
class MapParams:
    """Parameters selecting one member of the map family.

    alpha in [0, 1) is the intermittency exponent; d is the branch
    count.  Only the concrete two-branch family above is instantiated;
    the branch interface is kept general so a d >= 3 family can be
    added behind the same surface.
    """

    alpha: float
    d: int = 2
    branch_endpoints: tuple = (0.0, 0.5, 1.0)

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.d < 2:
            raise ValueError("branch count d must be >= 2")
        ep = tuple(float(e) for e in self.branch_endpoints)
        if len(ep) != self.d + 1 or ep[0] != 0.0 or ep[-1] != 1.0:
            raise ValueError("branch_endpoints must be d+1 values from 0 to 1")
        if any(b <= a for a, b in zip(ep, ep[1:])):
            raise ValueError("branch_endpoints must be strictly increasing")
        if self.d != 2 or ep != (0.0, 0.5, 1.0):
            raise NotImplementedError(
                "only the two-branch family with endpoints (0, 1/2, 1) ships"
            )
        object.__setattr__(self, "branch_endpoints", ep)

    @property
    def neutral_branches(self) -> tuple:
        """Branches touching the neutral point 0 ~ 1 (first and last)."""
        return (1, self.d)


@dataclass(frozen=True)
class PartitionSequences:
    """Backward orbits of the neutral branches.

    z[n] decreases to 0 under the branch-1 inverse; z_prime_gap[n] is
    the distance 1 - z'_n of the mirrored sequence increasing to 1.
    f(z[n+1]) = z[n] holds to the inverse-solver tolerance.
    """

    z: np.ndarray
    z_prime_gap: np.ndarray
    z0: float

    @property
    def n_terms(self) -> int:
        return len(self.z)

    def fit_exponent(self, window=(100, 10000)):
        """Least-squares slope of log z_n against log n on the window."""
        n = np.arange(1, len(self.z) + 1)
        m = (n >= window[0]) & (n <= window[1])
        if m.sum() < 10:
            raise ValueError("window contains fewer than 10 sequence terms")
        return float(np.polyfit(np.log(n[m]), np.log(self.z[m]), 1)[0])


def circle_distance(x):
    """Distance to the neutral point 0 ~ 1 on the circle."""
    x = np.asarray(x, dtype=float)
    return np.minimum(np.mod(x, 1.0), 1.0 - np.mod(x, 1.0))


def _check_branch(p: MapParams, i: int) -> None:
    if not (1 <= i <= p.d):
        raise ValueError(f"branch index {i} outside 1..{p.d}")


def map_value(p: MapParams, x):
    """Evaluate f(x) mod 1.  Exactly 0 at the fixed point x = 0."""
    x = np.asarray(x, dtype=float)
    a, c = p.alpha, 2.0 ** p.alpha
    left = x * (1.0 + c * np.abs(x) ** a)
    right = x - c * np.abs(1.0 - x) ** (a + 1.0)
    out = np.mod(np.where(x < 0.5, left, right), 1.0)
    out = np.where(x == 0.0, 0.0, out)
    return out if out.ndim else float(out)


def _branch_value(p: MapParams, i: int, x):
    """f on branch i as a real-valued increasing map onto [0, 1]."""
    a, c = p.alpha, 2.0 ** p.alpha
    x = np.asarray(x, dtype=float)
    if i == 1:
        return x * (1.0 + c * x ** a)
    return x - c * (1.0 - x) ** (a + 1.0)


def map_derivative(p: MapParams, x, order: int = 1):
    """Derivative of f in x of the given order (1, 2 or 3).

    Orders >= 2 are undefined exactly at the non-smooth points 0 and
    1/2 and raise there; order 1 extends continuously (f'(0) = 1 for
    alpha > 0, = 2 for the doubling map).
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    x = np.asarray(x, dtype=float)
    if order >= 2 and 0.0 < p.alpha and np.any((x == 0.0) | (x == 0.5) | (x == 1.0)):
        raise ValueError("derivative of order >= 2 undefined at branch endpoints")
    a, c = p.alpha, 2.0 ** p.alpha
    u = 1.0 - x
    with np.errstate(divide="ignore", invalid="ignore"):
        if order == 1:
            left = 1.0 + c * (a + 1.0) * x ** a
            right = 1.0 + c * (a + 1.0) * u ** a
        elif order == 2:
            left = c * (a + 1.0) * a * x ** (a - 1.0)
            right = -c * (a + 1.0) * a * u ** (a - 1.0)
        else:
            left = c * (a + 1.0) * a * (a - 1.0) * x ** (a - 2.0)
            right = c * (a + 1.0) * a * (a - 1.0) * u ** (a - 2.0)
    out = np.where(x < 0.5, left, right)
    if order == 1 and a > 0.0:
        out = np.where((x == 0.0) | (x == 1.0), 1.0, out)
    return out if out.ndim else float(out)


def _offset_residual(alpha: float, form: str, s, target):
    """Residual of the branch equation in endpoint-offset coordinates.

    "outer" solves u + 2^a u^(1+a) = target (offset from the neutral
    endpoint); "inner" solves s + B(s) = target with
    B(s) = (1 - (1-2s)^(1+a)) / 2 (offset from the interior endpoint).
    Both keep full relative precision for tiny offsets, which absolute
    coordinates near 1/2 and 1 cannot.
    """
    a = alpha
    if form == "outer":
        return s + 2.0 ** a * s ** (1.0 + a) - target
    if a == 0.0:
        return 2.0 * s - target  # keep the doubling map bit-exact
    with np.errstate(divide="ignore"):
        b = -0.5 * np.expm1((1.0 + a) * np.log1p(-2.0 * s))
    return s + b - target


def _offset_slope(alpha: float, form: str, s):
    a = alpha
    if form == "outer":
        return 1.0 + 2.0 ** a * (1.0 + a) * s ** a
    return 1.0 + (1.0 + a) * (1.0 - 2.0 * s) ** a


def _solve_offsets(alpha: float, form: str, targets: np.ndarray) -> np.ndarray:
    """Safeguarded Newton for the offset equations on [0, 1/2].

    Brackets shrink by bisection whenever the Newton step leaves them;
    iteration stops at a zero residual or a stall, keeping the best
    iterate seen.  Residuals above TOL_INV raise: for this family the
    solve cannot fail, so failure signals a bug in the caller.
    """
    t = np.asarray(targets, dtype=float)
    lo = np.zeros_like(t)
    hi = np.full_like(t, 0.5)
    x = 0.5 * t  # exact at alpha = 0
    best_x = x.copy()
    best_r = np.abs(_offset_residual(alpha, form, x, t))
    for _ in range(MAX_INV_ITER):
        r = _offset_residual(alpha, form, x, t)
        absr = np.abs(r)
        improved = absr < best_r
        best_x = np.where(improved, x, best_x)
        best_r = np.where(improved, absr, best_r)
        if np.all(best_r == 0.0):
            break
        hi = np.where(r > 0.0, x, hi)
        lo = np.where(r <= 0.0, x, lo)
        xn = x - r / _offset_slope(alpha, form, x)
        outside = (xn <= lo) | (xn >= hi) | ~np.isfinite(xn)
        xn = np.where(outside, 0.5 * (lo + hi), xn)
        if np.all(xn == x):
            break
        x = xn
    # residuals scale with the targets, so tolerate TOL_INV relative to 1
    if np.any(best_r > TOL_INV):
        raise InverseSolverError(
            f"offset solve ({form}) residual {float(best_r.max()):.3e} "
            f"above {TOL_INV:.0e}")
    return best_x


def branch_inverse_offsets(p: MapParams, i: int, y):
    """Inverse of branch i in endpoint-offset coordinates.

    Returns (near_far_side, offset): side False means the offset is
    measured from the branch endpoint hit at y = 0 (x = 0 for branch 1,
    x = 1/2 for branch d), side True from the endpoint hit at y = 1.
    Offsets carry full relative precision even where the absolute
    position would round at ulp(1/2) or ulp(1).
    """
    _check_branch(p, i)
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any((y_arr < 0.0) | (y_arr > 1.0)):
        raise ValueError("branch_inverse needs y in [0, 1]")
    side = y_arr > 0.5
    offs = np.empty_like(y_arr)
    low_form = "outer" if i == 1 else "inner"
    high_form = "inner" if i == 1 else "outer"
    if np.any(~side):
        offs[~side] = _solve_offsets(p.alpha, low_form, y_arr[~side])
    if np.any(side):
        offs[side] = _solve_offsets(p.alpha, high_form, 1.0 - y_arr[side])
    return side, offs


def branch_inverse(p: MapParams, i: int, y):
    """Inverse of branch i: the x in I_i with f(x) = y.

    Solved in offset coordinates (see branch_inverse_offsets) and
    mapped back to absolute position.
    """
    y_in = np.asarray(y, dtype=float)
    side, offs = branch_inverse_offsets(p, i, y)
    if i == 1:
        x = np.where(side, 0.5 - offs, offs)
    else:
        x = np.where(side, 1.0 - offs, 0.5 + offs)
    return x if y_in.ndim else float(x[0])


def branch_inverse_derivative(p: MapParams, i: int, x, order: int = 1):
    """x-derivative of the inverse branch g_i, orders 1..3, in closed form."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    g = branch_inverse(p, i, x)
    fp = map_derivative(p, g, 1)
    if order == 1:
        out = 1.0 / fp
    else:
        fpp = map_derivative(p, g, 2)
        if order == 2:
            out = -fpp / fp ** 3
        else:
            fppp = map_derivative(p, g, 3)
            out = (3.0 * fpp ** 2 - fp * fppp) / fp ** 5
    return out


def partition_sequences(p: MapParams, n_terms: int, z0: float | None = None) -> PartitionSequences:
    """Backward neutral-branch orbits z_n (to 0) and z'_n (to 1).

    z0 defaults to the branch-1 preimage of the branch endpoint 1/2,
    i.e. f(z0) = 1/2, so J_1 = (z_1, z0) sits at the top of the first
    branch; any z0 in (0, 1/2) is accepted.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    if z0 is None:
        z0 = branch_inverse(p, 1, 0.5)
    if not (0.0 < z0 < p.branch_endpoints[1]):
        raise ValueError("z0 must lie strictly inside the first branch")
    z = np.empty(n_terms + 1)
    zp = np.empty(n_terms + 1)
    z[0], zp[0] = z0, 1.0 - z0
    for n in range(n_terms):
        z[n + 1] = branch_inverse(p, 1, z[n])
        zp[n + 1] = 1.0 - branch_inverse(p, p.d, 1.0 - zp[n])
    return PartitionSequences(z=z[1:], z_prime_gap=zp[1:], z0=float(z0))


def parameter_velocity(p: MapParams, x):
    """d f_alpha / d alpha at x (the velocity of the family).

    Closed forms:  2^a x^(a+1) ln(2x) on branch 1 and
    -2^a (1-x)^(a+1) ln(2(1-x)) on branch 2; zero at 0, 1/2 and 1.
    """
    x = np.asarray(x, dtype=float)
    a, c = p.alpha, 2.0 ** p.alpha
    u = 1.0 - x
    with np.errstate(divide="ignore", invalid="ignore"):
        left = c * x ** (a + 1.0) * np.log(2.0 * x)
        right = -c * u ** (a + 1.0) * np.log(2.0 * u)
    out = np.where(x < 0.5, left, right)
    out = np.where((x == 0.0) | (x == 1.0), 0.0, out)
    return out if out.ndim else float(out)


def _velocity_x_derivative(p: MapParams, x, order: int):
    """order-th x-derivative of parameter_velocity, closed form."""
    x = np.asarray(x, dtype=float)
    a, c = p.alpha, 2.0 ** p.alpha
    u = 1.0 - x
    with np.errstate(divide="ignore", invalid="ignore"):
        ll, lu = np.log(2.0 * x), np.log(2.0 * u)
        if order == 1:
            left = c * x ** a * ((a + 1.0) * ll + 1.0)
            right = c * u ** a * ((a + 1.0) * lu + 1.0)
        elif order == 2:
            left = c * x ** (a - 1.0) * (a * (a + 1.0) * ll + 2.0 * a + 1.0)
            right = -c * u ** (a - 1.0) * (a * (a + 1.0) * lu + 2.0 * a + 1.0)
        else:
            left = c * x ** (a - 2.0) * (a * (a * a - 1.0) * ll + 3.0 * a * a - 1.0)
            right = c * u ** (a - 2.0) * (a * (a * a - 1.0) * lu + 3.0 * a * a - 1.0)
    return np.where(x < 0.5, left, right)


def parameter_velocity_derivative(p: MapParams, x, order: int = 1):
    """x-derivative (orders 1..3) of the family velocity."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    out = _velocity_x_derivative(p, x, order)
    return out if out.ndim else float(out)


def parameter_acceleration(p: MapParams, x):
    """Second alpha-derivative of the family: ln(2x)-weighted velocity."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(x < 0.5, np.log(2.0 * x), np.log(2.0 * (1.0 - x)))
    out = parameter_velocity(p, x) * lg
    out = np.where((x == 0.0) | (x == 1.0), 0.0, out)
    return out if out.ndim else float(out)


def pullback_velocity(p: MapParams, i: int, x, order: int = 0):
    """Family velocity at the image pulled back through branch i.

    Order 0 is v(g_i(x)); orders 1..3 are its x-derivatives by the
    chain rule through the closed-form inverse-branch derivatives.
    Only the neutral branches 1 and d carry the perturbation field.
    Undefined at x = 0 (logarithmic singularity).
    """
    if i not in p.neutral_branches:
        raise ValueError("pullback velocity is defined on the neutral branches")
    if order not in (0, 1, 2, 3):
        raise ValueError("order must be 0..3")
    x_in = np.asarray(x, dtype=float)
    if np.any(x_in == 0.0):
        raise ValueError("pullback velocity undefined at x = 0")
    g = branch_inverse(p, i, x)
    if order == 0:
        out = parameter_velocity(p, g)
    else:
        g1 = branch_inverse_derivative(p, i, x, 1)
        v1 = _velocity_x_derivative(p, g, 1)
        if order == 1:
            out = v1 * g1
        else:
            g2 = branch_inverse_derivative(p, i, x, 2)
            v2 = _velocity_x_derivative(p, g, 2)
            if order == 2:
                out = v2 * g1 ** 2 + v1 * g2
            else:
                g3 = branch_inverse_derivative(p, i, x, 3)
                v3 = _velocity_x_derivative(p, g, 3)
                out = v3 * g1 ** 3 + 3.0 * v2 * g1 * g2 + v1 * g3
    out = np.asarray(out)
    return out if x_in.ndim else float(out)


def dalpha_branch_inverse(p: MapParams, i: int, x):
    """alpha-derivative of the inverse branch: -X_i(x) / f'(g_i(x))."""
    x_in = np.asarray(x, dtype=float)
    g = branch_inverse(p, i, x)
    out = -pullback_velocity(p, i, x, 0) / map_derivative(p, g, 1)
    out = np.asarray(out)
    return out if x_in.ndim else float(out)


def dalpha_branch_inverse_derivative(p: MapParams, i: int, x):
    """alpha-derivative of g_i': -X'/f'(g) + X f''(g)/f'(g)^3."""
    x_in = np.asarray(x, dtype=float)
    g = branch_inverse(p, i, x)
    fp = map_derivative(p, g, 1)
    fpp = map_derivative(p, g, 2)
    out = (-pullback_velocity(p, i, x, 1) / fp
           + pullback_velocity(p, i, x, 0) * fpp / fp ** 3)
    out = np.asarray(out)
    return out if x_in.ndim else float(out)


def dalpha_pullback_velocity(p: MapParams, i: int, x):
    """alpha-derivative of the pulled-back velocity field.

    Chain rule: (d_alpha g_i) * v'(g_i) + (d^2_alpha f)(g_i).  Used by
    the second-derivative diagnostic of the transfer operator.
    """
    x_in = np.asarray(x, dtype=float)
    g = branch_inverse(p, i, x)
    out = (dalpha_branch_inverse(p, i, x) * _velocity_x_derivative(p, g, 1)
           + parameter_acceleration(p, g))
    out = np.asarray(out)
    return out if x_in.ndim else float(out)


def envelope_constant(p: MapParams, i: int, order: int, x_lo: float = 1e-4,
                      x_hi: float = 0.5, n_samples: int = 4000) -> float:
    """Measured constant in |X^(k)(x)| <= C |x|^(a+1-k) (1 + |ln x|).

    Reports the sup of the ratio over log-spaced samples of [x_lo, x_hi];
    the envelope holds iff this stays bounded as x_lo shrinks.  |x| is
    the circle distance to the neutral point, so branch d is sampled
    near 1 and branch 1 near 0.
    """
    xs = np.geomspace(x_lo, x_hi, n_samples)
    pts = xs if i == 1 else 1.0 - xs
    vals = np.abs(pullback_velocity(p, i, pts, order))
    env = xs ** (p.alpha + 1.0 - order) * (1.0 + np.abs(np.log(xs)))
    return float(np.max(vals / env))
