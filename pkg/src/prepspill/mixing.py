"""Contact-balance closure for the group mixing fractions.

Partnership counts between groups must balance: the number of contacts group
A has with group B equals the number B has with A.  With per-capita contact
rates held fixed, those balance equations pin the mixing fractions down to
(basic model) a unique point or (risk model) a one-parameter family, onto
which the configured prior fractions are projected.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InfeasibleClosure

_RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class BasicMixing:
    """Mixing fractions of the 3-group model.

    eta_msm: proportion of MSM contacts that are with MSM.
    alpha_hetf: proportion of HETF contacts that are with MSM.
    """

    eta_msm: float
    alpha_hetf: float

    def __post_init__(self):
        for name in ("eta_msm", "alpha_hetf"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} = {v} outside [0, 1]")

    def as_tuple(self):
        return (self.eta_msm, self.alpha_hetf)


@dataclass(frozen=True)
class RiskMixing:
    """Mixing fractions of the 4-group (risk-stratified) model.

    eta_msm / eta_hetfh: proportion of MSM contacts with MSM / high-risk HETF.
    alpha_hetfh / alpha_hetfl: proportion of high-/low-risk HETF contacts with MSM.
    xi_hetm: proportion of HETM contacts with high-risk HETF.
    """

    eta_msm: float
    eta_hetfh: float
    alpha_hetfh: float
    alpha_hetfl: float
    xi_hetm: float

    def __post_init__(self):
        for name in ("eta_msm", "eta_hetfh", "alpha_hetfh", "alpha_hetfl",
                     "xi_hetm"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} = {v} outside [0, 1]")
        if self.eta_msm + self.eta_hetfh > 1.0 + 1e-12:
            raise ValueError("eta_msm + eta_hetfh exceeds 1")

    def as_tuple(self):
        return (self.eta_msm, self.eta_hetfh, self.alpha_hetfh,
                self.alpha_hetfl, self.xi_hetm)


def _check_unit_interval(name, value, t=None):
    if not (0.0 <= value <= 1.0):
        raise InfeasibleClosure(
            f"closure gives {name} = {value:.6g} outside [0, 1]", t=t, value=value)


def close_basic(N, a, priors=None, t=None):
    """Close the 3-group mixing fractions for populations N and contact rates a.

    The two balance equations in two unknowns are uniquely solvable by
    elimination, so the prior fractions do not move the answer; they are
    accepted for interface symmetry with the risk variant and used only in
    error reporting.

    Order of N and a is (msm, hetf, hetm).  Raises InfeasibleClosure when the
    eliminated solution leaves [0, 1]; no silent clamping.
    """
    B0, B1, B2 = N[0] * a[0], N[1] * a[1], N[2] * a[2]
    if min(B0, B1, B2) <= 0.0:
        raise InfeasibleClosure("nonpositive total contact volume", t=t)
    alpha = 1.0 - B2 / B1
    _check_unit_interval("alpha_hetf", alpha, t)
    eta = 1.0 - alpha * B1 / B0
    _check_unit_interval("eta_msm", eta, t)
    return BasicMixing(eta_msm=eta, alpha_hetf=alpha)


def basic_residuals(mix, N, a):
    """Relative residuals of the two basic balance equations."""
    B0, B1, B2 = N[0] * a[0], N[1] * a[1], N[2] * a[2]
    scale = max(B0, B1, B2)
    r1 = ((1.0 - mix.eta_msm) * B0 - mix.alpha_hetf * B1) / scale
    r2 = ((1.0 - mix.alpha_hetf) * B1 - B2) / scale
    return (r1, r2)


def close_risk(N, a, priors, t=None):
    """Close the 4-group mixing fractions, staying as near the priors as possible.

    Order of N and a is (msm, hetf_h, hetf_l, hetm).  The four balance
    equations leave one degree of freedom; parameterising the feasible line
    by xi_hetm makes every other fraction affine in xi (and eta_msm constant),
    so the squared distance to the priors is a univariate convex quadratic
    minimised in closed form, with the minimiser clamped to the sub-interval
    of xi keeping all five fractions in [0, 1].
    """
    B0, B1, B2, B3 = N[0] * a[0], N[1] * a[1], N[2] * a[2], N[3] * a[3]
    if min(B0, B1, B2, B3) <= 0.0:
        raise InfeasibleClosure("nonpositive total contact volume", t=t)

    # eta_msm is forced by the balance structure, independent of xi.
    eta_msm = 1.0 - (B1 + B2 - B3) / B0
    _check_unit_interval("eta_msm", eta_msm, t)

    lo = max(0.0, (B1 - B0) / B3, 1.0 - B2 / B3)
    hi = min(1.0, B1 / B3)
    if lo > hi:
        raise InfeasibleClosure(
            f"empty feasible interval for xi_hetm: [{lo:.6g}, {hi:.6g}]",
            t=t, value=lo)

    # Affine parameterisation x -> (eta_hetfh, alpha_hetfh, alpha_hetfl, xi).
    slopes = (-B3 / B0, -B3 / B1, B3 / B2, 1.0)
    offsets = (B1 / B0, 1.0, 1.0 - B3 / B2, 0.0)
    targets = (priors.eta_hetfh, priors.alpha_hetfh, priors.alpha_hetfl,
               priors.xi_hetm)
    quad = sum(s * s for s in slopes)
    lin = sum(s * (o - p) for s, o, p in zip(slopes, offsets, targets))
    xi = min(max(-lin / quad, lo), hi)

    values = {
        "eta_hetfh": (B1 - xi * B3) / B0,
        "alpha_hetfh": 1.0 - xi * B3 / B1,
        "alpha_hetfl": 1.0 - (1.0 - xi) * B3 / B2,
        "xi_hetm": xi,
    }
    for name, v in values.items():
        if -1e-14 <= v < 0.0 or 1.0 < v <= 1.0 + 1e-14:
            # roundoff at a clamped boundary
            values[name] = min(max(v, 0.0), 1.0)
        else:
            _check_unit_interval(name, v, t)
    return RiskMixing(eta_msm=eta_msm, **values)


def risk_residuals(mix, N, a):
    """Relative residuals of the four risk-model balance equations."""
    B0, B1, B2, B3 = N[0] * a[0], N[1] * a[1], N[2] * a[2], N[3] * a[3]
    scale = max(B0, B1, B2, B3)
    return (
        (mix.eta_hetfh * B0 - mix.alpha_hetfh * B1) / scale,
        ((1.0 - mix.eta_msm - mix.eta_hetfh) * B0 - mix.alpha_hetfl * B2) / scale,
        ((1.0 - mix.alpha_hetfh) * B1 - mix.xi_hetm * B3) / scale,
        ((1.0 - mix.alpha_hetfl) * B2 - (1.0 - mix.xi_hetm) * B3) / scale,
    )


def risk_objective(mix, priors):
    """Squared distance from a mixing tuple to the priors (the projection objective)."""
    return sum((x - p) ** 2 for x, p in zip(mix.as_tuple(), priors.as_tuple()))
