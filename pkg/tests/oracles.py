"""Independent reference computations used by the tests."""

import warnings

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from meshfree_nonlocal.quadrature import Mode


def polar_moment(a, b, c, e, s, delta, D0, mode):
    """Adaptive polar quadrature of ``int_B gamma z1^a z2^b [z1^c z2^e / |z|^2]``."""
    scale = D0 / delta ** (2 + 2 - s)

    def angular(t):
        val = np.cos(t) ** a * np.sin(t) ** b
        if mode is Mode.PERIDYNAMIC:
            val *= np.cos(t) ** c * np.sin(t) ** e
        return val

    with warnings.catch_warnings():
        # odd angular moments are zero and trip the roundoff detector
        warnings.simplefilter("ignore", IntegrationWarning)
        ang = quad(angular, 0.0, 2 * np.pi, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
    # radial part: r^(a+b) r^-s r dr on (0, delta)
    rad = quad(lambda r: r ** (a + b - s + 1), 0.0, delta, epsabs=1e-16, epsrel=1e-13, limit=200)[0]
    return scale * ang * rad


def dense_kkt_weights(B, W, g):
    """Full saddle-point solve; valid only when ``B`` has full row rank."""
    m, k = B.shape[1], B.shape[0]
    K = np.zeros((m + k, m + k))
    K[:m, :m] = np.diag(W)
    K[:m, m:] = B.T
    K[m:, :m] = B
    rhs = np.concatenate([np.zeros(m), g])
    sol = np.linalg.solve(K, rhs)
    # the printed saddle system has +B^T, so its multipliers are -lambda
    return sol[:m], -sol[m:]


def dense_operator(op):
    """Row-by-row dense matrix of a bond-list operator, independent of ``to_sparse``."""
    n = op.n_points
    w = op.effective_coef()
    if op.components == 1:
        M = np.zeros((n, n))
        for b in range(op.n_bonds):
            i, j = op.row[b], op.col[b]
            M[i, j] += w[b]
            M[i, i] -= w[b]
        return M
    M = np.zeros((2 * n, 2 * n))
    for b in range(op.n_bonds):
        i, j = op.row[b], op.col[b]
        blk = w[b] * np.outer(op.unit[b], op.unit[b])
        M[2 * i:2 * i + 2, 2 * j:2 * j + 2] += blk
        M[2 * i:2 * i + 2, 2 * i:2 * i + 2] -= blk
    return M


def dense_constrained_solve(op, layer, values, rhs, mass=0.0):
    """Solve with a dense matrix built from :func:`dense_operator`."""
    comps = op.components
    L = dense_operator(op)
    n = L.shape[0]
    A = mass * np.eye(n) - L
    b = np.asarray(rhs, dtype=float).reshape(-1).copy()
    for i, v in zip(layer, np.asarray(values).reshape(len(layer), -1)):
        for k in range(comps):
            r = comps * i + k
            A[r] = 0.0
            A[r, r] = 1.0
            b[r] = v[k]
    x = np.linalg.solve(A, b)
    return x if comps == 1 else x.reshape(-1, 2)


def _sympy():
    import sympy
    return sympy


def symbolic_diffusion_action(a_expr, u_expr):
    """Callable ``div(a grad u)`` built with sympy from expressions in ``x, y``."""
    sp = _sympy()
    x, y = sp.symbols("x y")
    a, u = sp.sympify(a_expr), sp.sympify(u_expr)
    expr = sp.diff(a * sp.diff(u, x), x) + sp.diff(a * sp.diff(u, y), y)
    return sp.lambdify((x, y), sp.simplify(expr), "numpy")


def symbolic_navier_action(mu_expr, u_expr, v_expr):
    """``div(mu (grad u + grad u^T) + mu (div u) I)``: the bond-based 2D limit (lambda = mu)."""
    sp = _sympy()
    x, y = sp.symbols("x y")
    mu, u, v = sp.sympify(mu_expr), sp.sympify(u_expr), sp.sympify(v_expr)
    div = sp.diff(u, x) + sp.diff(v, y)
    sxx = mu * (2 * sp.diff(u, x) + div)
    syy = mu * (2 * sp.diff(v, y) + div)
    sxy = mu * (sp.diff(u, y) + sp.diff(v, x))
    fx = sp.diff(sxx, x) + sp.diff(sxy, y)
    fy = sp.diff(sxy, x) + sp.diff(syy, y)
    return sp.lambdify((x, y), fx, "numpy"), sp.lambdify((x, y), fy, "numpy")


def symbolic_nonlocal_polynomial_action(x0, y0, delta):
    """Exact ``2 gamma int_B (5 + x + x') (u(x') - u(x)) dx'`` for ``u = x^6 + y^6``, constant kernel."""
    sp = _sympy()
    r, t, d = sp.symbols("r t d", positive=True)
    X, Y = sp.Rational(x0), sp.Rational(y0)
    xp, yp = X + r * sp.cos(t), Y + r * sp.sin(t)
    integrand = (5 + X + xp) * (xp ** 6 + yp ** 6 - X ** 6 - Y ** 6) * r
    inner = sp.integrate(sp.expand(integrand), (t, 0, 2 * sp.pi))
    val = sp.integrate(inner, (r, 0, d))
    gamma = 4 / (sp.pi * d ** 4)
    return float((2 * gamma * val).subs(d, sp.Rational(delta)))
