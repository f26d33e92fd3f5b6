"""Georgia study presets and the published result tables they are checked against.

Parameter values and 2017 initial conditions for both model variants, the
published 10-year incidence tables (used as golden data by the validators),
and the study window conventions.

Window convention: the published "10-yr incidence 2020-30" covers calendar
years 2020 through 2030 inclusive, i.e. t in [2020, 2031).  Reproducing the
tables requires this window; see README for the reconciliation.
"""

from __future__ import annotations

import numpy as np

from .integrators import IntegratorConfig
from .mixing import BasicMixing, RiskMixing
from .model import StateVec, TransmissionProbs, make_spec

SIM_START = 2017.0
INTERVENTION_START = 2020.0
REPORT_END = 2031.0  # end of calendar year 2030

MU = 1.0 / 50.0
PROBS = TransmissionProbs(beta_mm=0.0008, beta_fm=0.0003, beta_mf=0.0004)


def georgia_basic():
    """3-group Georgia parameterisation; returns (spec, initial state at 2017)."""
    spec = make_spec(
        variant="basic",
        Pi=(3874.0, 65497.0, 63549.0),
        a=(94.7, 47.3, 48.5),
        delta=(1.0 / 200.0, 1.0 / 100.0, 1.0 / 50.0),
        epsilon=(0.089, 0.0003, 0.0),
        probs=PROBS,
        mu=MU,
        mixing_priors=BasicMixing(eta_msm=0.858, alpha_hetf=0.02),
    )
    y0 = StateVec.make(S=(123418.0, 3260101.0, 3138939.0),
                       I=(42000.0, 14700.0, 7000.0))
    return spec, y0


def georgia_risk():
    """4-group Georgia parameterisation; returns (spec, initial state at 2017)."""
    spec = make_spec(
        variant="risk",
        Pi=(3784.0, 3275.0, 62222.0, 63549.0),
        a=(94.7, 91.0, 43.7, 48.5),
        delta=(1.0 / 200.0, 1.0 / 50.0, 1.0 / 100.0, 1.0 / 50.0),
        epsilon=(0.089, 0.0061, 0.0, 0.0),
        probs=PROBS,
        mu=MU,
        mixing_priors=RiskMixing(eta_msm=0.858, eta_hetfh=0.071,
                                 alpha_hetfh=0.06, alpha_hetfl=0.01,
                                 xi_hetm=0.005),
    )
    y0 = StateVec.make(S=(123418.0, 243340.0, 3016762.0, 3138939.0),
                       I=(42000.0, 8820.0, 5880.0, 7000.0))
    return spec, y0


def georgia_spec(variant):
    if variant == "basic":
        return georgia_basic()
    if variant == "risk":
        return georgia_risk()
    raise ValueError(f"unknown variant {variant!r}")


def default_integrator(t0=SIM_START, t_end=REPORT_END):
    return IntegratorConfig(t0=t0, t_end=t_end, method="rk45_adaptive",
                            rtol=1e-8, atol=1e-6)


# Published 10-year (2020-2030 inclusive) cumulative incidence and, per
# intervention, infections prevented relative to baseline.  Keys are
# (group receiving PrEP, additional persons); values are dicts of published
# cells: incidence per reported group plus prevented counts.
TABLE_BASIC_BASELINE = {"total": 29019.0, "msm": 22824.0, "hetf": 4021.0,
                        "hetm": 2174.0}
TABLE_BASIC_INTERVENTIONS = {
    ("msm", 10000): {"total": 26613.0, "prevented": 2406.0},
    ("msm", 25000): {"total": 23200.0, "prevented": 5819.0},
    ("msm", 50000): {"total": 18026.0, "prevented": 10993.0},
    ("hetf", 10000): {"total": 29005.0, "prevented": 14.0},
    ("hetf", 25000): {"total": 28986.0, "prevented": 33.0},
    ("hetf", 50000): {"total": 28951.0, "prevented": 68.0},
    ("hetm", 10000): {"total": 29012.0, "prevented": 7.0},
    ("hetm", 25000): {"total": 28999.0, "prevented": 20.0},
    ("hetm", 50000): {"total": 28981.0, "prevented": 38.0},
}

TABLE_RISK_BASELINE = {"total": 29644.0, "msm": 22783.0, "hetf": 4132.0,
                       "hetm": 2729.0}
TABLE_RISK_INTERVENTIONS = {
    ("msm", 10000): {"total": 27242.0, "prevented": 2402.0},
    ("msm", 25000): {"total": 23838.0, "prevented": 5806.0},
    ("msm", 50000): {"total": 18667.0, "prevented": 10977.0},
    ("hetf_h", 10000): {"total": 29548.0, "prevented": 96.0},
    ("hetf_h", 25000): {"total": 29405.0, "prevented": 239.0},
    ("hetf_h", 50000): {"total": 29163.0, "prevented": 481.0},
    ("hetf_l", 10000): {"total": 29636.0, "prevented": 8.0},
    ("hetf_l", 25000): {"total": 29627.0, "prevented": 17.0},
    ("hetf_l", 50000): {"total": 29608.0, "prevented": 36.0},
    ("hetm", 10000): {"total": 29631.0, "prevented": 13.0},
    ("hetm", 25000): {"total": 29618.0, "prevented": 26.0},
    ("hetm", 50000): {"total": 29591.0, "prevented": 53.0},
}

# Qualitative surveillance bands for the 2017-2020 burn-in (plot-data sanity
# checks; the underlying anchors are read off charts, not tabulated).
PREVALENCE_ANCHOR_2017 = {"basic": 63700.0, "risk": 63700.0}  # total PWH at t0
PREVALENCE_BAND = (0.85, 1.30)     # acceptable multiple of the anchor through 2020
ANNUAL_INCIDENCE_BAND = (1800.0, 3200.0)  # total new infections/year, 2017-2019

# Intervention arms of the published studies, in table order.
BASIC_ARMS = [("msm", d) for d in (10000, 25000, 50000)] + \
             [("hetf", d) for d in (10000, 25000, 50000)] + \
             [("hetm", d) for d in (10000, 25000, 50000)]
RISK_ARMS = [("msm", d) for d in (10000, 25000, 50000)] + \
            [("hetf_h", d) for d in (10000, 25000, 50000)] + \
            [("hetf_l", d) for d in (10000, 25000, 50000)] + \
            [("hetm", d) for d in (10000, 25000, 50000)]


def reported_groups(variant):
    """Groups as reported in the published tables (risk HETF strata combined)."""
    return ("msm", "hetf", "hetm")


def combine_reported(variant, labels, per_group):
    """Map per-model-group values onto the reported (msm, hetf, hetm) columns."""
    per_group = np.asarray(per_group, dtype=float)
    if variant == "basic":
        return {lbl: float(v) for lbl, v in zip(labels, per_group)}
    return {
        "msm": float(per_group[labels.index("msm")]),
        "hetf": float(per_group[labels.index("hetf_h")]
                      + per_group[labels.index("hetf_l")]),
        "hetm": float(per_group[labels.index("hetm")]),
    }
