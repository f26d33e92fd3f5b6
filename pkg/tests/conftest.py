import pytest

from prepspill.integrators import IntegratorConfig, integrate
from prepspill.mixing import BasicMixing, RiskMixing
from prepspill.model import StateVec, TransmissionProbs, dfe, make_spec
from prepspill.presets import georgia_basic, georgia_risk


@pytest.fixture(scope="session")
def basic():
    return georgia_basic()


@pytest.fixture(scope="session")
def risk():
    return georgia_risk()


def stationary_risk():
    """Georgia risk parameters with recruitment balanced to the 2017 populations,
    so the disease-free equilibrium is mixing-feasible (the literal preset's
    DFE is not, see decisions notes)."""
    spec, y0 = georgia_risk()
    N0 = y0.N
    from dataclasses import replace
    groups = tuple((gid, replace(p, Pi=spec.mu * N0[i]))
                   for i, (gid, p) in enumerate(spec.groups))
    return replace(spec, groups=groups), y0


@pytest.fixture(scope="session")
def risk_stationary():
    return stationary_risk()


def random_spec(rng, variant, feasible=True):
    """Random parameter draw around the published magnitudes; optionally
    rejection-sampled until the DFE and nominal populations close feasibly."""
    from prepspill.mixing import close_basic, close_risk
    from prepspill.errors import InfeasibleClosure

    n = 3 if variant == "basic" else 4
    for _ in range(500):
        mu = rng.uniform(0.01, 0.04)
        Pi = rng.uniform(2e3, 8e4, n)
        a = rng.uniform(30.0, 120.0, n)
        delta = rng.uniform(0.0, 0.03, n)
        eps = rng.uniform(0.0, 0.4, n)
        probs = TransmissionProbs(beta_mm=rng.uniform(0, 0.002),
                                  beta_fm=rng.uniform(0, 0.001),
                                  beta_mf=rng.uniform(0, 0.001))
        if variant == "basic":
            priors = BasicMixing(eta_msm=rng.uniform(0.5, 0.95),
                                 alpha_hetf=rng.uniform(0.001, 0.1))
        else:
            eta_msm = rng.uniform(0.5, 0.95)
            priors = RiskMixing(eta_msm=eta_msm,
                                eta_hetfh=rng.uniform(0.01,
                                                      min(0.2, 1.0 - eta_msm)),
                                alpha_hetfh=rng.uniform(0.01, 0.2),
                                alpha_hetfl=rng.uniform(0.001, 0.05),
                                xi_hetm=rng.uniform(0.001, 0.2))
        spec = make_spec(variant, Pi, a, delta, eps, probs, mu, priors)
        if not feasible:
            return spec
        try:
            eq = dfe(spec)
            close = close_basic if variant == "basic" else close_risk
            close(eq.N, a, priors)
        except InfeasibleClosure:
            continue
        return spec
    raise RuntimeError("no feasible random spec found")


def random_state(rng, spec, scale=1.0, jitter=None):
    """Random nonnegative state, rejection-sampled until the mixing closure
    is feasible there."""
    from prepspill.errors import InfeasibleClosure
    from prepspill.model import closed_mixing

    eq = dfe(spec)
    for _ in range(500):
        if jitter is not None:
            S = eq.S * rng.uniform(1 - jitter, 1 + jitter, spec.n) * scale
            I = eq.S * rng.uniform(0.001, jitter, spec.n) * scale
        else:
            S = eq.S * rng.uniform(0.2, 1.0, spec.n) * scale
            I = eq.S * rng.uniform(0.001, 0.15, spec.n) * scale
        state = StateVec.make(S, I)
        try:
            closed_mixing(spec, state.N)
        except InfeasibleClosure:
            continue
        return state
    raise RuntimeError("no feasible random state found")


@pytest.fixture(scope="session")
def baseline_basic(basic):
    spec, y0 = basic
    cfg = IntegratorConfig(t0=2017.0, t_end=2031.0, rtol=1e-8, atol=1e-6)
    return integrate(spec, y0, cfg, sample_times=[2020.0])


@pytest.fixture(scope="session")
def baseline_risk(risk):
    spec, y0 = risk
    cfg = IntegratorConfig(t0=2017.0, t_end=2031.0, rtol=1e-8, atol=1e-6)
    return integrate(spec, y0, cfg, sample_times=[2020.0])
