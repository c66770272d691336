"""Regenerate the frozen constants used in the test suite.

Run from the repository root:

    python3 tools/make_oracles.py

Every constant the tests assert against a literal value is derived here from
an independent route (closed-form moments via sympy, hand-sized Girsanov sums
via exact arithmetic) and printed in copy-paste form.  The noise-stream pins
at the bottom are self-referential by design: they freeze the current output
of the package's own counter-based generator so regressions in the stream
layout are caught, and they must be refreshed whenever that layout changes
on purpose.
"""

import sympy as sp


def moment_constants():
    t, a, b, x0 = sp.symbols("t a b x0", real=True)

    # linear-drift mean: dx = (a x + b) dt + (noise), m' = a m + b
    mean = (x0 + b / a) * sp.exp(a * t) - b / a
    subs_ou = {a: -1, b: sp.Rational(1, 2), x0: 1}
    print("# linear-drift mean, a=-1, b=1/2, x0=1")
    print("OU_MEAN_T05 =", float(mean.subs(subs_ou).subs(t, sp.Rational(1, 2))))
    print("OU_MEAN_T1  =", float(mean.subs(subs_ou).subs(t, 1)))

    # second moment of the same model with unit additive noise:
    # s' = 2 a s + 2 b m + 1
    s = sp.Function("s")
    m_expr = mean.subs(subs_ou)
    ode = sp.Eq(s(t).diff(t), 2 * subs_ou[a] * s(t) + 2 * subs_ou[b] * m_expr + 1)
    sol = sp.dsolve(ode, s(t), ics={s(0): 1}).rhs
    print("OU_X2_T1    =", float(sol.subs(t, 1)))

    # square-root-diffusion mean obeys the same linear ODE
    subs_cir = {a: -1, b: sp.Rational(3, 4), x0: 1}
    print("# square-root-diffusion mean, a=-1, b=3/4, x0=1")
    print("CIR_MEAN_T1 =", float(mean.subs(subs_cir).subs(t, 1)))

    # radial drift a/x with unit noise: d(x^2) = (2a+1) dt + martingale
    print("# radial model second moment, a=1, x0=1")
    print("BESSEL_X2_T05 =", float(sp.Rational(1) + 3 * sp.Rational(1, 2)))
    print("BESSEL_X2_T1  =", float(sp.Rational(1) + 3))


def girsanov_constants():
    # two-step path, scalar noise, h(x) = -2x, exact rational arithmetic
    times = [sp.Rational(0), sp.Rational(1, 10), sp.Rational(1, 4)]
    states = [sp.Rational(1), sp.Rational(13, 10), sp.Rational(9, 10)]
    dw = [sp.Rational(1, 5), sp.Rational(-2, 5)]
    h = lambda x: -2 * x
    cross = sum(h(states[k]) * dw[k] for k in range(2))
    quad = sum(h(states[k]) ** 2 * (times[k + 1] - times[k]) for k in range(2))
    print("# two-step Girsanov sums, h(x) = -2x")
    print("GIRSANOV_Q_OVER_P =", float(cross - quad / 2))
    print("GIRSANOV_P_OVER_Q =", float(-cross - quad / 2))


def stream_pins():
    try:
        from stochsym.kernels import normal_block
    except ImportError:
        print("# stochsym not importable; stream pins skipped")
        return
    block = normal_block(seed=20260818, leg=0, path_lo=0, npaths=2, count=3)
    print("# first draws of two neighbouring streams, seed 20260818, leg 0")
    print("STREAM_PIN_PATH0 =", block[0].tolist())
    print("STREAM_PIN_PATH1 =", block[1].tolist())


if __name__ == "__main__":
    moment_constants()
    girsanov_constants()
    stream_pins()
