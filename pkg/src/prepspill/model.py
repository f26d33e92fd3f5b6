"""Group-structured susceptible/infected HIV transmission models.

Two variants share one representation: a 3-group model (msm, hetf, hetm) and
a 4-group model stratifying heterosexual females by risk (msm, hetf_h,
hetf_l, hetm).  Each group carries susceptible S_j, infected I_j, and a
cumulative-incidence accumulator C_j integrated alongside the state so annual
counts are exact under adaptive stepping.

The force of infection is written through per-group contact-coefficient
vectors ("lambda vectors") of length 2n whose only nonzero entries sit at the
infected slots of partner groups; the per-susceptible infection rate of group
j is then (1 - epsilon_j) * (lambda_j . X) with X the interleaved state
(S_0, I_0, ..., S_{n-1}, I_{n-1}).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ZeroPopulation
from .mixing import BasicMixing, RiskMixing, close_basic, close_risk

BASIC_GROUPS = ("msm", "hetf", "hetm")
RISK_GROUPS = ("msm", "hetf_h", "hetf_l", "hetm")


@dataclass(frozen=True)
class GroupId:
    label: str
    index: int


@dataclass(frozen=True)
class GroupParams:
    """Demographic and intervention parameters of one group.

    Pi: recruitment into the sexually active population, persons/year.
    a: average contacts per year.
    delta: disease-induced mortality, 1/year.
    epsilon: fraction of susceptibles on PrEP, in [0, 1].
    """

    Pi: float
    a: float
    delta: float
    epsilon: float

    def __post_init__(self):
        if min(self.Pi, self.a, self.delta, self.epsilon) < 0.0:
            raise ValueError("group parameters must be nonnegative")
        if self.epsilon > 1.0:
            raise ValueError(f"epsilon = {self.epsilon} exceeds 1")


@dataclass(frozen=True)
class TransmissionProbs:
    """Per-contact transmission probabilities.

    beta_mm: male-to-male, beta_fm: female-to-male, beta_mf: male-to-female.
    """

    beta_mm: float
    beta_fm: float
    beta_mf: float

    def __post_init__(self):
        for name in ("beta_mm", "beta_fm", "beta_mf"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} = {v} outside [0, 1]")


@dataclass(frozen=True)
class ModelSpec:
    """A fully parameterised model instance.

    ``mixing_priors`` are the target fractions fed to the contact-balance
    closure.  ``mixing`` is normally None, meaning the closure is re-solved
    from the current populations at every right-hand-side evaluation; setting
    it pins the fractions (useful for frozen-mixing experiments).
    """

    variant: str
    groups: tuple
    probs: TransmissionProbs
    mu: float
    mixing_priors: object
    mixing: object = None

    def __post_init__(self):
        expected = BASIC_GROUPS if self.variant == "basic" else RISK_GROUPS
        if self.variant not in ("basic", "risk"):
            raise ValueError(f"unknown variant {self.variant!r}")
        labels = tuple(gid.label for gid, _ in self.groups)
        if labels != expected:
            raise ValueError(f"variant {self.variant!r} needs groups {expected}, got {labels}")
        for i, (gid, _) in enumerate(self.groups):
            if gid.index != i:
                raise ValueError(f"group {gid.label} has index {gid.index}, expected {i}")
        if self.mu <= 0.0:
            raise ValueError("mu must be positive")
        want = BasicMixing if self.variant == "basic" else RiskMixing
        if not isinstance(self.mixing_priors, want):
            raise ValueError(f"mixing_priors must be {want.__name__} for {self.variant}")
        if self.mixing is not None and not isinstance(self.mixing, want):
            raise ValueError(f"mixing must be {want.__name__} for {self.variant}")

    @property
    def n(self):
        return len(self.groups)

    @property
    def labels(self):
        return tuple(gid.label for gid, _ in self.groups)

    def group_index(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no group {label!r} in variant {self.variant!r}") from None

    def param_arrays(self):
        """(Pi, a, delta, epsilon) as float arrays in group order."""
        ps = [p for _, p in self.groups]
        return (np.array([p.Pi for p in ps]), np.array([p.a for p in ps]),
                np.array([p.delta for p in ps]), np.array([p.epsilon for p in ps]))

    def with_epsilon(self, new_eps):
        """Copy of the spec with coverage fractions replaced.

        ``new_eps`` maps group label -> epsilon; unlisted groups keep theirs.
        """
        groups = []
        for gid, p in self.groups:
            if gid.label in new_eps:
                p = replace(p, epsilon=float(new_eps[gid.label]))
            groups.append((gid, p))
        return replace(self, groups=tuple(groups))

    def with_delta_zero(self):
        """Copy of the spec with disease-induced mortality switched off."""
        groups = tuple((gid, replace(p, delta=0.0)) for gid, p in self.groups)
        return replace(self, groups=groups)


def make_spec(variant, Pi, a, delta, epsilon, probs, mu, mixing_priors, mixing=None):
    """Assemble a ModelSpec from parallel parameter sequences in group order."""
    names = BASIC_GROUPS if variant == "basic" else RISK_GROUPS
    groups = tuple(
        (GroupId(label=lbl, index=i),
         GroupParams(Pi=float(Pi[i]), a=float(a[i]), delta=float(delta[i]),
                     epsilon=float(epsilon[i])))
        for i, lbl in enumerate(names))
    return ModelSpec(variant=variant, groups=groups, probs=probs, mu=float(mu),
                     mixing_priors=mixing_priors, mixing=mixing)


@dataclass(frozen=True)
class StateVec:
    """Compartment populations, one entry per group, plus cumulative incidence."""

    S: np.ndarray
    I: np.ndarray
    C: np.ndarray

    @classmethod
    def make(cls, S, I, C=None):
        S = np.asarray(S, dtype=float)
        I = np.asarray(I, dtype=float)
        C = np.zeros_like(S) if C is None else np.asarray(C, dtype=float)
        if S.min() < 0.0 or I.min() < 0.0 or C.min() < 0.0:
            raise ValueError("compartment populations must be nonnegative")
        return cls(S=S, I=I, C=C)

    @property
    def N(self):
        return self.S + self.I

    def to_flat(self):
        """Interleaved layout: S_0, I_0, ..., S_{n-1}, I_{n-1}, C_0, ..., C_{n-1}."""
        n = len(self.S)
        out = np.empty(3 * n)
        out[0:2 * n:2] = self.S
        out[1:2 * n:2] = self.I
        out[2 * n:] = self.C
        return out

    @classmethod
    def from_flat(cls, y, n):
        y = np.asarray(y, dtype=float)
        return cls(S=y[0:2 * n:2].copy(), I=y[1:2 * n:2].copy(), C=y[2 * n:3 * n].copy())


def closed_mixing(spec, N, t=None):
    """Mixing fractions at populations N: the pinned ones if the spec fixes
    them, otherwise the closure projection of the priors."""
    if spec.mixing is not None:
        return spec.mixing
    _, a, _, _ = spec.param_arrays()
    if spec.variant == "basic":
        return close_basic(N, a, spec.mixing_priors, t=t)
    return close_risk(N, a, spec.mixing_priors, t=t)


def build_lambda_vectors(spec, state, t=None):
    """Contact-coefficient vectors, one row per group, columns over the
    interleaved (S, I) slots.  Row j dotted with the interleaved state gives
    the raw (pre-(1-eps), pre-S) force of infection on group j."""
    N = state.N
    if np.any(N <= 0.0):
        bad = spec.labels[int(np.argmax(N <= 0.0))]
        raise ZeroPopulation(f"group {bad} has N = 0")
    _, a, _, _ = spec.param_arrays()
    probs = spec.probs
    mix = closed_mixing(spec, N, t=t)
    n = spec.n
    L = np.zeros((n, 2 * n))
    if spec.variant == "basic":
        eta, alpha = mix.eta_msm, mix.alpha_hetf
        L[0, 1] = a[0] * eta * probs.beta_mm / N[0]
        L[0, 3] = a[0] * (1.0 - eta) * probs.beta_fm / N[1]
        L[1, 1] = a[1] * alpha * probs.beta_mf / N[0]
        L[1, 5] = a[1] * (1.0 - alpha) * probs.beta_mf / N[2]
        L[2, 3] = a[2] * probs.beta_fm / N[1]
    else:
        em, ehh, ahh, ahl, xi = mix.as_tuple()
        L[0, 1] = a[0] * em * probs.beta_mm / N[0]
        L[0, 3] = a[0] * ehh * probs.beta_fm / N[1]
        L[0, 5] = a[0] * (1.0 - em - ehh) * probs.beta_fm / N[2]
        L[1, 1] = a[1] * ahh * probs.beta_mf / N[0]
        L[1, 7] = a[1] * (1.0 - ahh) * probs.beta_mf / N[3]
        L[2, 1] = a[2] * ahl * probs.beta_mf / N[0]
        L[2, 7] = a[2] * (1.0 - ahl) * probs.beta_mf / N[3]
        L[3, 3] = a[3] * xi * probs.beta_fm / N[1]
        L[3, 5] = a[3] * (1.0 - xi) * probs.beta_fm / N[2]
    return L


def incidence(spec, state, t=None):
    """Per-group infection flux lambda_j = (1 - eps_j) (lambda_j . X) S_j, persons/year."""
    L = build_lambda_vectors(spec, state, t=t)
    x = state.to_flat()[:2 * spec.n]
    _, _, _, eps = spec.param_arrays()
    return (1.0 - eps) * (L @ x) * state.S


def rhs(spec, state, t=0.0):
    """Time derivative of the state (including cumulative-incidence slots)."""
    inc = incidence(spec, state, t=t)
    Pi, _, delta, _ = spec.param_arrays()
    mu = spec.mu
    dS = Pi - inc - mu * state.S
    dI = inc - (mu + delta) * state.I
    return StateVec(S=dS, I=dI, C=inc)


def dfe(spec):
    """Disease-free equilibrium: S_j = Pi_j / mu, no infections."""
    Pi, _, _, _ = spec.param_arrays()
    S = Pi / spec.mu
    return StateVec(S=S, I=np.zeros_like(S), C=np.zeros_like(S))


# ---------------------------------------------------------------------------
# Flat fast path used by the integrators.  Python-float arithmetic beats tiny
# numpy arrays by an order of magnitude at these dimensions.
# ---------------------------------------------------------------------------

def flat_rhs_factory(spec, tracked_counts=None):
    """Build rhs(t, y) -> list over the flat layout [Sj,Ij interleaved, C...].

    ``tracked_counts`` optionally gives absolute person counts on PrEP per
    group; coverage is then re-derived as E_j / S_j at every evaluation
    (capped at 1) instead of using the spec's fixed fractions.
    """
    Pi, a, delta, eps = (tuple(v) for v in spec.param_arrays())
    mu = spec.mu
    bmm, bfm, bmf = spec.probs.beta_mm, spec.probs.beta_fm, spec.probs.beta_mf
    fixed = spec.mixing.as_tuple() if spec.mixing is not None else None
    counts = tuple(tracked_counts) if tracked_counts is not None else None

    if spec.variant == "basic":
        Pi0, Pi1, Pi2 = Pi
        a0, a1, a2 = a
        d0, d1, d2 = delta
        memo = [None, None]

        def f(t, y):
            S0, I0, S1, I1, S2, I2 = y[0], y[1], y[2], y[3], y[4], y[5]
            N0 = S0 + I0
            N1 = S1 + I1
            N2 = S2 + I2
            if N0 <= 0.0 or N1 <= 0.0 or N2 <= 0.0:
                raise ZeroPopulation(f"zero group population at t = {t}")
            if fixed is not None:
                eta, alpha = fixed
            elif memo[0] == (N0, N1, N2):
                eta, alpha = memo[1]
            else:
                mix = close_basic((N0, N1, N2), (a0, a1, a2),
                                  spec.mixing_priors, t=t)
                eta, alpha = mix.eta_msm, mix.alpha_hetf
                memo[0] = (N0, N1, N2)
                memo[1] = (eta, alpha)
            if counts is None:
                e0, e1, e2 = eps
            else:
                e0 = min(counts[0] / S0, 1.0) if counts[0] else eps[0]
                e1 = min(counts[1] / S1, 1.0) if counts[1] else eps[1]
                e2 = min(counts[2] / S2, 1.0) if counts[2] else eps[2]
            lam0 = a0 * (eta * bmm * I0 / N0 + (1.0 - eta) * bfm * I1 / N1)
            lam1 = a1 * bmf * (alpha * I0 / N0 + (1.0 - alpha) * I2 / N2)
            lam2 = a2 * bfm * I1 / N1
            inc0 = (1.0 - e0) * lam0 * S0
            inc1 = (1.0 - e1) * lam1 * S1
            inc2 = (1.0 - e2) * lam2 * S2
            return [Pi0 - inc0 - mu * S0, inc0 - (mu + d0) * I0,
                    Pi1 - inc1 - mu * S1, inc1 - (mu + d1) * I1,
                    Pi2 - inc2 - mu * S2, inc2 - (mu + d2) * I2,
                    inc0, inc1, inc2]

        return f

    Pi0, Pi1, Pi2, Pi3 = Pi
    a0, a1, a2, a3 = a
    d0, d1, d2, d3 = delta
    memo = [None, None]

    def f(t, y):
        S0, I0, S1, I1 = y[0], y[1], y[2], y[3]
        S2, I2, S3, I3 = y[4], y[5], y[6], y[7]
        N0 = S0 + I0
        N1 = S1 + I1
        N2 = S2 + I2
        N3 = S3 + I3
        if N0 <= 0.0 or N1 <= 0.0 or N2 <= 0.0 or N3 <= 0.0:
            raise ZeroPopulation(f"zero group population at t = {t}")
        if fixed is not None:
            em, ehh, ahh, ahl, xi = fixed
        elif memo[0] == (N0, N1, N2, N3):
            em, ehh, ahh, ahl, xi = memo[1]
        else:
            mix = close_risk((N0, N1, N2, N3), (a0, a1, a2, a3),
                             spec.mixing_priors, t=t)
            em, ehh, ahh, ahl, xi = mix.as_tuple()
            memo[0] = (N0, N1, N2, N3)
            memo[1] = (em, ehh, ahh, ahl, xi)
        if counts is None:
            e0, e1, e2, e3 = eps
        else:
            e0 = min(counts[0] / S0, 1.0) if counts[0] else eps[0]
            e1 = min(counts[1] / S1, 1.0) if counts[1] else eps[1]
            e2 = min(counts[2] / S2, 1.0) if counts[2] else eps[2]
            e3 = min(counts[3] / S3, 1.0) if counts[3] else eps[3]
        lam0 = a0 * (em * bmm * I0 / N0 + ehh * bfm * I1 / N1
                     + (1.0 - em - ehh) * bfm * I2 / N2)
        lam1 = a1 * bmf * (ahh * I0 / N0 + (1.0 - ahh) * I3 / N3)
        lam2 = a2 * bmf * (ahl * I0 / N0 + (1.0 - ahl) * I3 / N3)
        lam3 = a3 * bfm * (xi * I1 / N1 + (1.0 - xi) * I2 / N2)
        inc0 = (1.0 - e0) * lam0 * S0
        inc1 = (1.0 - e1) * lam1 * S1
        inc2 = (1.0 - e2) * lam2 * S2
        inc3 = (1.0 - e3) * lam3 * S3
        return [Pi0 - inc0 - mu * S0, inc0 - (mu + d0) * I0,
                Pi1 - inc1 - mu * S1, inc1 - (mu + d1) * I1,
                Pi2 - inc2 - mu * S2, inc2 - (mu + d2) * I2,
                Pi3 - inc3 - mu * S3, inc3 - (mu + d3) * I3,
                inc0, inc1, inc2, inc3]

    return f
