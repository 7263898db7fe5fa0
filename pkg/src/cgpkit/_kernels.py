"""Stepping kernels shared by every integrator.

The kernels are written once, in the subset of Python that numba compiles,
and built twice by :func:`_build`: as ``@njit`` functions (``JIT``) used when
the problem's right-hand side is itself a numba function, and as ordinary
Python functions (``PY``) for any other callable.  Both builds run the same
arithmetic in the same order.

Every implicit method is expressed as a fixed-point map ``z = G(rhs, z, args)``
over its flattened unknowns and solved by ``picard`` or ``newton``.  Solvers
return ``(z, iterations, converged, residual)``; kernels never raise on
non-convergence, the Python layer turns the flag into an exception.
"""

from types import SimpleNamespace

import numpy as np
from numba import njit
from numba.core.dispatcher import Dispatcher

_SQRT_EPS = 1.4901161193847656e-08


def _identity(fn):
    return fn


def _build(jit: bool) -> SimpleNamespace:
    deco = njit if jit else _identity

    @deco
    def max_abs(x):
        m = 0.0
        for i in range(x.shape[0]):
            a = abs(x[i])
            if a > m or a != a:
                m = a
        return m

    @deco
    def diff_norm(a, b):
        m = 0.0
        for i in range(a.shape[0]):
            d = abs(a[i] - b[i])
            if d > m or d != d:
                m = d
        return m

    @deco
    def picard(G, rhs, z0, args, tol, maxit):
        z = z0
        prev = np.inf
        diff = np.inf
        within = False
        for it in range(1, maxit + 1):
            znew = G(rhs, z, args)
            diff = diff_norm(znew, z)
            z = znew
            if not np.isfinite(diff):
                return z, it, False, diff
            within = diff <= tol * (1.0 + max_abs(z))
            # keep iterating while still contracting: stopping inside tol
            # leaves a same-signed residual that accumulates over long runs
            if within and (diff == 0.0 or diff >= prev):
                return z, it, True, diff
            prev = diff
        return z, maxit, within, diff

    @deco
    def newton(G, rhs, z0, args, tol, maxit):
        n = z0.shape[0]
        z = z0.copy()
        jac = np.empty((n, n))
        prev = np.inf
        diff = np.inf
        within = False
        for it in range(1, maxit + 1):
            g0 = G(rhs, z, args)
            for j in range(n):
                zp = z.copy()
                zp[j] += _SQRT_EPS * (abs(z[j]) if z[j] != 0.0 else 1.0)
                step = zp[j] - z[j]
                gp = G(rhs, zp, args)
                for i in range(n):
                    jac[i, j] = -(gp[i] - g0[i]) / step
                jac[j, j] += 1.0
            znew = z - np.linalg.solve(jac, z - g0)
            diff = diff_norm(znew, z)
            z = znew
            if not np.isfinite(diff):
                return z, it, False, diff
            within = diff <= tol * (1.0 + max_abs(z))
            if within and (diff == 0.0 or diff >= prev):
                return z, it, True, diff
            prev = diff
        return z, maxit, within, diff

    # -- cGP(1): U1 = U0 + h/2 (F(t, U0) + F(t + h, U1)) --------------------

    @deco
    def cgp1_map(rhs, z, args):
        t, h, u0, f0 = args
        return u0 + (0.5 * h) * (f0 + rhs(t + h, z))

    @deco
    def cgp1_advance(solve, rhs, t, y, h, params, tol, maxit):
        f0 = rhs(t, y)
        return solve(cgp1_map, rhs, y.copy(), (t, h, y, f0), tol, maxit)

    # -- cGP(2): fixed point in the end value U2, midpoint U1 = G1(U2) -------

    @deco
    def cgp2_midpoint(rhs, t, h, u0, f0, u2):
        return 0.5 * u0 + 0.5 * u2 + (h / 8.0) * (f0 - rhs(t + h, u2))

    @deco
    def cgp2_map(rhs, z, args):
        t, h, u0, f0 = args
        f2 = rhs(t + h, z)
        u1 = 0.5 * u0 + 0.5 * z + (h / 8.0) * (f0 - f2)
        f1 = rhs(t + 0.5 * h, u1)
        return u0 + (h / 6.0) * (f0 + 4.0 * f1 + f2)

    @deco
    def cgp2_advance(solve, rhs, t, y, h, params, tol, maxit):
        f0 = rhs(t, y)
        return solve(cgp2_map, rhs, y.copy(), (t, h, y, f0), tol, maxit)

    @deco
    def cgp2_step(solve, rhs, t, y, h, tol, maxit):
        f0 = rhs(t, y)
        u2, it, ok, res = solve(cgp2_map, rhs, y.copy(), (t, h, y, f0), tol, maxit)
        u1 = cgp2_midpoint(rhs, t, h, y, f0, u2)
        return u1, u2, it, ok, res

    # -- cGP(k) from assembled coefficients ----------------------------------
    # unknowns z = (U^1, ..., U^k); inner = inverse of alpha[:, 1:]

    @deco
    def cgpk_map(rhs, z, args):
        t, h, u0, f0, theta, inner, alpha0, beta = args
        k = inner.shape[0]
        d = u0.shape[0]
        F = np.empty((k + 1, d))
        F[0] = f0
        for j in range(1, k + 1):
            F[j] = rhs(t + 0.5 * h * (theta[j] + 1.0), z[(j - 1) * d:j * d])
        out = np.zeros(k * d)
        for i in range(k):
            row = -alpha0[i] * u0
            for mu in range(k + 1):
                row = row + (0.5 * h * beta[i, mu]) * F[mu]
            for m in range(k):
                out[m * d:(m + 1) * d] += inner[m, i] * row
        return out

    @deco
    def cgpk_stages(solve, rhs, t, y, h, params, tol, maxit):
        theta, inner, alpha0, beta = params
        k = inner.shape[0]
        d = y.shape[0]
        f0 = rhs(t, y)
        z0 = np.empty(k * d)
        for j in range(k):
            z0[j * d:(j + 1) * d] = y
        return solve(cgpk_map, rhs, z0, (t, h, y, f0, theta, inner, alpha0, beta), tol, maxit)

    @deco
    def cgpk_advance(solve, rhs, t, y, h, params, tol, maxit):
        d = y.shape[0]
        z, it, ok, res = cgpk_stages(solve, rhs, t, y, h, params, tol, maxit)
        return z[z.shape[0] - d:].copy(), it, ok, res

    # -- implicit Runge-Kutta on stage derivatives K_i -----------------------

    @deco
    def rk_map(rhs, z, args):
        t, h, y, a, c = args
        s = c.shape[0]
        d = y.shape[0]
        out = np.empty(s * d)
        for i in range(s):
            yi = y.copy()
            for j in range(s):
                if a[i, j] != 0.0:
                    yi += (h * a[i, j]) * z[j * d:(j + 1) * d]
            out[i * d:(i + 1) * d] = rhs(t + c[i] * h, yi)
        return out

    @deco
    def rk_advance(solve, rhs, t, y, h, params, tol, maxit):
        a, b, c = params
        s = b.shape[0]
        d = y.shape[0]
        f0 = rhs(t, y)
        z0 = np.empty(s * d)
        for i in range(s):
            z0[i * d:(i + 1) * d] = f0
        z, it, ok, res = solve(rk_map, rhs, z0, (t, h, y, a, c), tol, maxit)
        ynew = y.copy()
        for i in range(s):
            ynew += (h * b[i]) * z[i * d:(i + 1) * d]
        return ynew, it, ok, res

    # -- general linear methods on stage values Y_i ---------------------------

    @deco
    def glm_map(rhs, z, args):
        t, h, base, a, c = args
        s = c.shape[0]
        d = base.shape[0] // s
        F = np.empty((s, d))
        for j in range(s):
            F[j] = rhs(t + c[j] * h, z[j * d:(j + 1) * d])
        out = base.copy()
        for i in range(s):
            for j in range(s):
                if a[i, j] != 0.0:
                    out[i * d:(i + 1) * d] += (h * a[i, j]) * F[j]
        return out

    @deco
    def glm_advance(solve, rhs, t, inputs, h, params, tol, maxit):
        a, u, b, v, c = params
        s = c.shape[0]
        r = inputs.shape[0]
        d = inputs.shape[1]
        base = np.zeros(s * d)
        for i in range(s):
            for k in range(r):
                if u[i, k] != 0.0:
                    base[i * d:(i + 1) * d] += u[i, k] * inputs[k]
        z, it, ok, res = solve(glm_map, rhs, base.copy(), (t, h, base, a, c), tol, maxit)
        F = np.empty((s, d))
        for j in range(s):
            F[j] = rhs(t + c[j] * h, z[j * d:(j + 1) * d])
        out = np.zeros((r, d))
        for k in range(r):
            for l in range(r):
                if v[k, l] != 0.0:
                    out[k] += v[k, l] * inputs[l]
            for j in range(s):
                if b[k, j] != 0.0:
                    out[k] += (h * b[k, j]) * F[j]
        return out, it, ok, res

    # -- marching loops -------------------------------------------------------

    @deco
    def n_samples(n, stride):
        m = n // stride + 1
        if n % stride != 0:
            m += 1
        return m

    @deco
    def march(advance, solve, rhs, t0, y0, h, n, stride, params, tol, maxit):
        d = y0.shape[0]
        states = np.empty((n_samples(n, stride), d))
        steps = np.empty(states.shape[0], np.int64)
        states[0] = y0
        steps[0] = 0
        y = y0.copy()
        j = 1
        iters = 0
        for k in range(n):
            ynew, it, ok, res = advance(solve, rhs, t0 + k * h, y, h, params, tol, maxit)
            iters += it
            if not ok:
                return states, steps, j, k, iters, False, res, it, y
            y = ynew
            if (k + 1) % stride == 0 or k + 1 == n:
                states[j] = y
                steps[j] = k + 1
                j += 1
        return states, steps, j, n, iters, True, 0.0, 0, y

    @deco
    def glm_march(solve, rhs, t0, x0, h, n, stride, params, tol, maxit):
        d = x0.shape[1]
        states = np.empty((n_samples(n, stride), d))
        steps = np.empty(states.shape[0], np.int64)
        states[0] = x0[0]
        steps[0] = 0
        x = x0.copy()
        j = 1
        iters = 0
        for k in range(n):
            xnew, it, ok, res = glm_advance(solve, rhs, t0 + k * h, x, h, params, tol, maxit)
            iters += it
            if not ok:
                return states, steps, j, k, iters, False, res, it, x
            x = xnew
            if (k + 1) % stride == 0 or k + 1 == n:
                states[j] = x[0]
                steps[j] = k + 1
                j += 1
        return states, steps, j, n, iters, True, 0.0, 0, x

    return SimpleNamespace(**{k: v for k, v in locals().items() if callable(v) and k != "deco"})


JIT = _build(True)
PY = _build(False)


def kernels_for(rhs) -> SimpleNamespace:
    """Compiled kernels for numba right-hand sides, plain Python otherwise."""
    return JIT if isinstance(rhs, Dispatcher) else PY


def solver_for(kernels: SimpleNamespace, config):
    return kernels.newton if config.newton else kernels.picard
