"""Independent symbolic oracles for conformally flat and radial test metrics.

Computes reference values with sympy using closed-form conformal-change
formulas, never the Rust tensor pipeline. Output is frozen into the Rust tests.
"""
import sympy as sp


def cart(n):
    xs = sp.symbols(f"x1:{n+1}", real=True)
    r = sp.sqrt(sum(x**2 for x in xs))
    return xs, r


def lap(f, xs):
    return sum(sp.diff(f, x, 2) for x in xs)


def conformal_q(n, u_of_r, expo, point):
    """Q of g = u^expo * delta via g = e^{2w} delta formulas."""
    xs, r = cart(n)
    u = u_of_r(r)
    w = sp.Rational(1, 2) * expo * sp.log(u)
    subs = dict(zip(xs, point))
    dw = [sp.diff(w, x) for x in xs]
    lw = lap(w, xs)
    grad2 = sum(d**2 for d in dw)
    ric = [[-(n - 2) * (sp.diff(w, xs[i], xs[j]) - dw[i] * dw[j])
            - (lw + (n - 2) * grad2) * (1 if i == j else 0) for j in range(n)] for i in range(n)]
    R = sp.exp(-2 * w) * (-2 * (n - 1) * lw - (n - 2) * (n - 1) * grad2)
    lapgR = sp.exp(-2 * w) * (lap(R, xs) + (n - 2) * sum(sp.diff(w, x) * sp.diff(R, x) for x in xs))
    ric2 = sp.exp(-4 * w) * sum(ric[i][j] ** 2 for i in range(n) for j in range(n))
    c = sp.Rational(n**3 - 4 * n**2 + 16 * n - 16, 8 * (n - 1) ** 2 * (n - 2) ** 2)
    Q = -lapgR / (2 * (n - 1)) - sp.Rational(2, (n - 2) ** 2) * ric2 + c * R**2
    return sp.N(R.subs(subs), 30), sp.N(Q.subs(subs), 30)


def paneitz_q(n, v_of_r, point):
    """Q of g = v^{4/(n-4)} delta from the flat bilaplacian, n != 4."""
    xs, r = cart(n)
    v = v_of_r(r)
    q = sp.Rational(2, n - 4) * v ** sp.Rational(-(n + 4), n - 4) * lap(lap(v, xs), xs)
    return sp.N(q.subs(dict(zip(xs, point))), 30)


def radial_energy_limit(n, u_of_r, expo):
    """Fourth-order energy limit of g = u^expo delta (h = phi delta, phi radial)."""
    r = sp.symbols("r", positive=True)
    phi = u_of_r(r) ** expo - 1
    lapphi = sp.diff(phi, r, 2) + (n - 1) / r * sp.diff(phi, r)
    omega = 2 * sp.pi ** sp.Rational(n, 2) / sp.gamma(sp.Rational(n, 2))
    dens = (n - 1) * sp.diff(lapphi, r) * r ** (n - 1) * omega
    return sp.limit(dens, r, sp.oo), dens


if __name__ == "__main__":
    a = sp.Rational(1, 10)
    pt5 = [sp.Rational(3, 2), sp.Rational(-1, 2), 1, sp.Rational(1, 4), 2]
    R5, Q5 = conformal_q(5, lambda r: 1 + a * r**-2, sp.Rational(4, 3), pt5)
    Qp = paneitz_q(5, lambda r: (1 + a * r**-2) ** sp.Rational(1, 3), pt5)
    print("conformal5 u=1+0.1r^-2 exp=4/3 at", pt5, "R =", R5, "Q =", Q5, "Q_paneitz =", Qp)
    pt4 = [sp.Rational(3, 2), sp.Rational(-1, 2), 1, sp.Rational(1, 4)]
    R4, Q4 = conformal_q(4, lambda r: 1 + a * r**-2, 1, pt4)
    print("conformal4 u=1+0.1r^-2 exp=1 at", pt4, "R =", R4, "Q =", Q4)
    pt3 = [sp.Rational(3, 2), sp.Rational(-1, 2), 1]
    R3, Q3 = conformal_q(3, lambda r: 1 + a * r**-1, 4, pt3)
    print("conformal3 u=1+0.1/r exp=4 at", pt3, "R =", R3, "Q =", Q3)
    for n, u, e in [(5, lambda r: 1 + a / r, sp.Rational(4, 3)),
                    (6, lambda r: 1 + a * r**-2, 1),
                    (6, lambda r: 1 + a * r**-1, 1)]:
        lim, _ = radial_energy_limit(n, u, e)
        print("energy limit n=", n, lim, sp.N(lim, 20))
