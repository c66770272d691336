"""Residual checks for symmetry, straightening and triangular structure.

Every check samples a supplied set of domain points, evaluates the defining
equations of the property under test, and reports the worst and mean
residuals in a ResidualReport.  Nothing here proves anything symbolically;
a check passing means the residuals stay below the tolerance on the sample.

Tolerance ladder: finite-difference derivatives support about 1e-5, analytic
Jacobians/Hessians about 1e-9; both are configurable per call.  Points where
a coefficient evaluation leaves the domain are skipped and counted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import DomainError, NumericError
from .fields import ScalarField, VectorField
from .sde import Sde
from .transform import (FiniteTransformation, InfinitesimalTransformation,
                        lie_bracket, pushforward, transform_sde)

FD_TOL = 1e-5
ANALYTIC_TOL = 1e-9


@dataclass
class ResidualReport:
    """Outcome of one residual check over a point sample.

    passed is derived, never set: it is max_residual <= tolerance.
    """

    op: str
    model: str
    points: int
    max_residual: float
    mean_residual: float
    tolerance: float
    breakdown: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    skipped: int = 0
    passed: bool = field(init=False)

    def __post_init__(self):
        self.max_residual = float(self.max_residual)
        self.mean_residual = float(self.mean_residual)
        self.passed = bool(self.max_residual <= self.tolerance)

    def to_dict(self) -> dict:
        return {
            "op": self.op,
            "model": self.model,
            "points": self.points,
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "skipped": self.skipped,
            "breakdown": {k: float(v) for k, v in self.breakdown.items()},
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def _collect(op: str, model: str, tolerance: float, rows: List[dict]) -> ResidualReport:
    """Fold per-point residual dicts into a report (rows may be empty)."""
    if rows:
        per_point = np.array([max(r.values()) for r in rows])
        breakdown = {k: max(r[k] for r in rows) for k in rows[0]}
        max_res = float(per_point.max())
        mean_res = float(per_point.mean())
    else:
        breakdown = {}
        max_res = np.inf
        mean_res = np.inf
    return ResidualReport(op=op, model=model, points=len(rows),
                          max_residual=max_res, mean_residual=mean_res,
                          tolerance=tolerance, breakdown=breakdown)


def _sup(arr) -> float:
    return float(np.max(np.abs(np.asarray(arr, dtype=float))))


def check_finite_symmetry(t: FiniteTransformation, sde: Sde, points,
                          tolerance: float = FD_TOL, model: str = "",
                          use_analytic: bool = True) -> ResidualReport:
    """Does T fix the SDE?  Residuals of the transformed minus original pair."""
    tsde = transform_sde(t, sde, use_analytic=use_analytic)
    rows = []
    skipped = 0
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        try:
            rows.append({
                "drift": _sup(tsde.mu(x) - sde.mu(x)),
                "diffusion": _sup(tsde.sigma(x) - sde.sigma(x)),
            })
        except DomainError:
            skipped += 1
    report = _collect("finite_symmetry", model, tolerance, rows)
    report.skipped = skipped
    return report


def check_determining_equations(v: InfinitesimalTransformation, sde: Sde, points,
                                tolerance: float = FD_TOL, model: str = "",
                                use_analytic: bool = True) -> ResidualReport:
    """Residuals of the two symmetry conditions on (Y, C, tau, H).

    drift equation:     Y(mu) - L(Y) - sigma H + tau mu = 0
    diffusion equation: [Y, sigma] + (tau/2) sigma + sigma C = 0
    """
    rows = []
    skipped = 0
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        try:
            x = sde.check_point(x)
            mu = sde.mu(x)
            sig = sde.sigma(x)
            a_mat = 0.5 * sig @ sig.T
            mu_jac = sde.mu.jacobian(x, use_analytic)
            yv = v.y(x)
            y_jac = v.y.jacobian(x, use_analytic)
            y_hess = v.y.hessian(x, use_analytic)
            tau = v.tau(x)
            gen_y = np.einsum("jk,ijk->i", a_mat, y_hess) + y_jac @ mu
            eq_drift = mu_jac @ yv - gen_y - sig @ v.hh(x) + tau * mu
            eq_diff = (sde.sigma.directional(x, yv, use_analytic) - y_jac @ sig
                       + 0.5 * tau * sig + sig @ v.c(x))
            rows.append({"drift": _sup(eq_drift), "diffusion": _sup(eq_diff)})
        except DomainError:
            skipped += 1
    report = _collect("determining_equations", model, tolerance, rows)
    report.skipped = skipped
    return report


def check_lemma_identities(v: InfinitesimalTransformation, sde: Sde,
                           f: ScalarField, points, tolerance: float = 1e-4,
                           model: str = "", use_analytic: bool = True) -> ResidualReport:
    """Commutation identities any symmetry satisfies against a test function.

    generator identity: Y(L(f)) - L(Y(f)) = -tau L(f) + grad(f) . sigma . H
    gradient identity:  Y(sigma^T) grad(f)
                        = sigma^T (grad Y)^T grad(f) - (tau/2) sigma^T grad(f)
                          + C sigma^T grad(f)

    Third derivatives of f come from direct high-order stencils, so the
    default tolerance is looser than for the first-order checks.
    """
    rows = []
    skipped = 0
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        try:
            x = sde.check_point(x)
            grad = f.gradient(x, use_analytic)
            hess = f.hessian(x, use_analytic)
            third = f.third(x)
            mu = sde.mu(x)
            mu_jac = sde.mu.jacobian(x, use_analytic)
            sig = sde.sigma(x)
            sig_jac = sde.sigma.jacobian(x, use_analytic)
            a_mat = 0.5 * sig @ sig.T
            # da[j, k, i] = d_i A^{jk}
            da = 0.5 * (np.einsum("jai,ka->jki", sig_jac, sig)
                        + np.einsum("ja,kai->jki", sig, sig_jac))
            yv = v.y(x)
            y_jac = v.y.jacobian(x, use_analytic)
            y_hess = v.y.hessian(x, use_analytic)
            tau = v.tau(x)
            hvec = v.hh(x)

            d_lf = (np.einsum("jki,jk->i", da, hess)
                    + np.einsum("jk,ijk->i", a_mat, third)
                    + mu_jac.T @ grad + hess @ mu)
            y_lf = float(yv @ d_lf)

            grad_g = y_jac.T @ grad + hess @ yv
            hess_g = (np.einsum("ijk,i->jk", y_hess, grad)
                      + y_jac.T @ hess + hess @ y_jac
                      + np.einsum("i,ijk->jk", yv, third))
            l_yf = float(np.sum(a_mat * hess_g) + mu @ grad_g)

            lf = float(np.sum(a_mat * hess) + mu @ grad)
            rhs1 = -tau * lf + float(grad @ (sig @ hvec))
            res1 = abs((y_lf - l_yf) - rhs1)

            lhs2 = sde.sigma.directional(x, yv, use_analytic).T @ grad
            rhs2 = (sig.T @ y_jac.T @ grad - 0.5 * tau * (sig.T @ grad)
                    + v.c(x) @ (sig.T @ grad))
            res2 = _sup(lhs2 - rhs2)
            rows.append({"generator_identity": res1, "gradient_identity": res2})
        except DomainError:
            skipped += 1
    report = _collect("lemma_identities", model, tolerance, rows)
    report.skipped = skipped
    return report


def check_quasi_doob(h: VectorField, potential: ScalarField, sde: Sde, points,
                     tolerance: float = 1e-6, doob_tolerance: float = 1e-8,
                     model: str = "", use_analytic: bool = True) -> ResidualReport:
    """Is h the gradient-form measure change generated by the potential?

    gradient_form:   h = sigma^T grad(potential)
    energy_identity: |h|^2 / 2 = (|sigma^T grad(potential)|^2) / 2
                     (the compatibility condition, evaluated in log domain)

    Also reports the range of G = |sigma^T grad(potential)|^2 / 2
    + L(potential); the measure change is a Doob one exactly when G vanishes,
    and the report's extra carries that flag.
    """
    rows = []
    gvals = []
    skipped = 0
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        try:
            x = sde.check_point(x)
            grad = potential.gradient(x, use_analytic)
            hess = potential.hessian(x, use_analytic)
            sig = sde.sigma(x)
            mu = sde.mu(x)
            a_mat = 0.5 * sig @ sig.T
            sgrad = sig.T @ grad
            hval = h(x)
            lpot = float(np.sum(a_mat * hess) + mu @ grad)
            g = 0.5 * float(sgrad @ sgrad) + lpot
            if not np.isfinite(g):
                raise NumericError(f"non-finite potential statistics at {x.tolist()}")
            gvals.append(g)
            rows.append({
                "gradient_form": _sup(hval - sgrad),
                "energy_identity": abs(0.5 * float(hval @ hval)
                                       - 0.5 * float(sgrad @ sgrad)),
            })
        except DomainError:
            skipped += 1
    report = _collect("quasi_doob", model, tolerance, rows)
    report.skipped = skipped
    if gvals:
        g_arr = np.asarray(gvals)
        report.extra = {
            "g_min": float(g_arr.min()),
            "g_max": float(g_arr.max()),
            "g_sup": float(np.max(np.abs(g_arr))),
            "doob": bool(np.max(np.abs(g_arr)) <= doob_tolerance),
        }
    return report


def check_algebra_closure(vs: Sequence[InfinitesimalTransformation], sde: Sde,
                          points, tolerance: float = FD_TOL, model: str = "",
                          use_analytic: bool = True) -> ResidualReport:
    """Brackets of symmetries are symmetries; fit their structure constants.

    For every pair (i, j), the bracket [V_i, V_j] is run through
    check_determining_equations, and the coefficients e^k in
    [V_i, V_j] = sum_k e^k V_k are fitted by least squares jointly over all
    sampled points (stacking the Y, C, tau, H components).  The report's
    extra lists, per pair, the constants and the fit residual.  When every
    field carries a quasi-Doob potential, the bracket's H is additionally
    compared against sigma^T grad of the bracket potential.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m = vs[0].m
    iu = np.triu_indices(m, k=1)

    def stack(w: InfinitesimalTransformation, x: np.ndarray) -> np.ndarray:
        return np.concatenate([
            w.y(x),
            w.c(x)[iu],
            [w.tau(x)],
            w.hh(x),
        ])

    rows = []
    pair_stats = []
    quasi = all(w.k is not None for w in vs)
    for i in range(len(vs)):
        for j in range(i + 1, len(vs)):
            br = lie_bracket(vs[i], vs[j])
            det = check_determining_equations(br, sde, points,
                                              tolerance=tolerance,
                                              use_analytic=use_analytic)
            basis = []
            target = []
            pot_res = 0.0
            for x in points:
                basis.append(np.column_stack([stack(w, x) for w in vs]))
                target.append(stack(br, x))
                if quasi:
                    sgrad = sde.sigma(x).T @ br.k.gradient(x)
                    pot_res = max(pot_res, _sup(br.hh(x) - sgrad))
            a_mat = np.vstack(basis)
            b_vec = np.concatenate(target)
            coeff, *_ = np.linalg.lstsq(a_mat, b_vec, rcond=None)
            fit = _sup(a_mat @ coeff - b_vec)
            row = {"bracket_symmetry": det.max_residual, "fit": fit}
            if quasi:
                row["bracket_potential"] = pot_res
            rows.append(row)
            pair_stats.append({"i": i, "j": j,
                               "constants": [float(c) for c in coeff],
                               "fit_residual": float(fit)})
    if not rows:
        rows = [{"bracket_symmetry": 0.0, "fit": 0.0}]
    report = _collect("algebra_closure", model, tolerance, rows)
    report.points = len(points)
    report.extra = {"pairs": pair_stats}
    return report


def structure_constants(report: ResidualReport, i: int, j: int) -> np.ndarray:
    """Fitted constants for the pair (i, j) from a closure report."""
    for entry in report.extra.get("pairs", []):
        if entry["i"] == i and entry["j"] == j:
            return np.asarray(entry["constants"], dtype=float)
    raise KeyError(f"no pair ({i}, {j}) in report")


def check_straightening(t: FiniteTransformation,
                        vs: Sequence[InfinitesimalTransformation], points,
                        potential: Optional[ScalarField] = None,
                        tolerance: float = FD_TOL, model: str = "",
                        use_analytic: bool = True) -> ResidualReport:
    """Do the fields become strong (pure space) symmetries after T?

    Checks, per field V_i = (Y_i, C_i, tau_i, H_i):

      rotation_pde: Y_i(B) + B C_i = 0
      clock_pde:    Y_i(eta) + tau_i eta = 0
      measure_pde:  Y_i(h) - (-tau_i/2 + C_i) h + H_i = 0
      strong_image: the pushforward of V_i through T has vanishing C, tau, H
      potential_pde (when both t's potential and V_i's k are given):
                    Y_i(potential) + k_i = 0
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m = t.m
    eye = np.eye(m)
    pushed = [pushforward(t, v) for v in vs]
    rows = []
    skipped = 0
    for x in points:
        try:
            row = {}
            bx = t.b(x)
            ex = t.eta(x)
            hx = t.h(x)
            xp = t.phi(x)
            for idx, v in enumerate(vs):
                yv = v.y(x)
                r_b = t.b.directional(x, yv, use_analytic) + bx @ v.c(x)
                r_eta = float(t.eta.gradient(x, use_analytic) @ yv) + v.tau(x) * ex
                r_h = (t.h.jacobian(x, use_analytic) @ yv
                       - (-0.5 * v.tau(x) * eye + v.c(x)) @ hx + v.hh(x))
                row[f"rotation_pde_{idx}"] = _sup(r_b)
                row[f"clock_pde_{idx}"] = abs(r_eta)
                row[f"measure_pde_{idx}"] = _sup(r_h)
                if potential is not None and v.k is not None:
                    r_k = float(potential.gradient(x, use_analytic) @ yv) + v.k(x)
                    row[f"potential_pde_{idx}"] = abs(r_k)
                w = pushed[idx]
                row[f"strong_image_{idx}"] = max(
                    _sup(w.c(xp)), abs(w.tau(xp)), _sup(w.hh(xp)))
            rows.append(row)
        except DomainError:
            skipped += 1
    report = _collect("straightening", model, tolerance, rows)
    report.skipped = skipped
    return report


def check_triangular(sde: Sde, r: int, points, tolerance: float = 1e-6,
                     model: str = "", use_analytic: bool = True) -> ResidualReport:
    """Forbidden-dependency test for the reduced/triangular structure.

    With coordinates (x^1, ..., x^n) and the first r of them straightened,
    row j of (mu, sigma) may depend only on x^{min(j,r)+1}, ..., x^n.  The
    residual is the largest forbidden partial derivative, scaled by
    1/(1 + |coefficient|) so the tolerance acts as a relative threshold for
    large coefficients.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = sde.n
    rows = []
    skipped = 0
    for x in points:
        try:
            x = sde.check_point(x)
            mu = sde.mu(x)
            sig = sde.sigma(x)
            mu_jac = sde.mu.jacobian(x, use_analytic)
            sig_jac = sde.sigma.jacobian(x, use_analytic)
            worst = 0.0
            for j in range(n):
                limit = min(j + 1, r)
                for i in range(limit):
                    worst = max(worst, abs(mu_jac[j, i]) / (1.0 + abs(mu[j])))
                    for alpha in range(sde.m):
                        worst = max(worst, abs(sig_jac[j, alpha, i])
                                    / (1.0 + abs(sig[j, alpha])))
            rows.append({"forbidden_dependence": worst})
        except DomainError:
            skipped += 1
    report = _collect("triangular", model, tolerance, rows)
    report.skipped = skipped
    return report


def check_reduced_form(t: FiniteTransformation, sde: Sde, expected: Sde,
                       points, tolerance: float = 1e-6,
                       model: str = "") -> ResidualReport:
    """Does transforming the SDE through T land on the expected closed form?

    The transformed drift and diffusion are evaluated at the images of the
    sampled points and compared entrywise against the stored reduced SDE.
    """
    mapped = transform_sde(t, sde)
    rows = []
    skipped = 0
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        try:
            xp = t.phi(sde.check_point(x))
            rows.append({
                "drift": _sup(mapped.mu(xp) - expected.mu(xp)),
                "diffusion": _sup(mapped.sigma(xp) - expected.sigma(xp)),
            })
        except DomainError:
            skipped += 1
    report = _collect("reduced_form", model, tolerance, rows)
    report.skipped = skipped
    return report
