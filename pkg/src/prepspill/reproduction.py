"""Next-generation matrices, control reproduction numbers, stability probes.

The control reproduction number is the spectral radius of F V^{-1} evaluated
at the disease-free equilibrium.  Both a dense numeric eigenvalue route and
closed-form solutions by radicals (cubic for the 3-group model, quartic via
the resolvent cubic for the 4-group model) are provided; the closed forms are
cross-checked against the numeric value and degrade to it with a diagnostic
when they disagree, so the numeric route is always the source of truth.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleClosure
from .integrators import IntegratorConfig, integrate
from .model import StateVec, closed_mixing, dfe

_AGREE_RTOL = 1e-9
_IMAG_TOL = 1e-9


@dataclass(frozen=True)
class NGMatrices:
    """New-infection matrix F, diagonal transition matrix V, and the DFE
    populations the entries were evaluated at."""

    F: np.ndarray
    V: np.ndarray
    labels: tuple
    dfe_populations: np.ndarray

    @property
    def K(self):
        return np.diag(self.V)


@dataclass(frozen=True)
class ReproductionNumber:
    value: float
    method: str  # "closed_form" or "numeric"
    components: dict
    diagnostic: str = None


def build_ngm(spec):
    """Assemble F and V at the disease-free equilibrium.

    Mixing fractions are closed at the DFE populations Pi_j / mu (unless the
    spec pins them).  Entry (j, p) of F is the rate at which one infected in
    group p creates infections in group j near the DFE.
    """
    eq = dfe(spec)
    Nstar = eq.N
    if np.any(Nstar <= 0.0):
        raise InfeasibleClosure("DFE has an empty group; NGM undefined")
    _, a, delta, eps = spec.param_arrays()
    probs = spec.probs
    mix = closed_mixing(spec, Nstar)
    n = spec.n
    F = np.zeros((n, n))
    if spec.variant == "basic":
        eta, al = mix.eta_msm, mix.alpha_hetf
        F[0, 0] = a[0] * (1 - eps[0]) * eta * probs.beta_mm
        F[0, 1] = a[0] * (1 - eps[0]) * (1 - eta) * probs.beta_fm * Nstar[0] / Nstar[1]
        F[1, 0] = a[1] * (1 - eps[1]) * al * probs.beta_mf * Nstar[1] / Nstar[0]
        F[1, 2] = a[1] * (1 - eps[1]) * (1 - al) * probs.beta_mf * Nstar[1] / Nstar[2]
        F[2, 1] = a[2] * (1 - eps[2]) * probs.beta_fm * Nstar[2] / Nstar[1]
    else:
        em, ehh, ahh, ahl, xi = mix.as_tuple()
        F[0, 0] = a[0] * (1 - eps[0]) * em * probs.beta_mm
        F[0, 1] = a[0] * (1 - eps[0]) * ehh * probs.beta_fm * Nstar[0] / Nstar[1]
        F[0, 2] = a[0] * (1 - eps[0]) * (1 - em - ehh) * probs.beta_fm * Nstar[0] / Nstar[2]
        F[1, 0] = a[1] * (1 - eps[1]) * ahh * probs.beta_mf * Nstar[1] / Nstar[0]
        F[1, 3] = a[1] * (1 - eps[1]) * (1 - ahh) * probs.beta_mf * Nstar[1] / Nstar[3]
        F[2, 0] = a[2] * (1 - eps[2]) * ahl * probs.beta_mf * Nstar[2] / Nstar[0]
        F[2, 3] = a[2] * (1 - eps[2]) * (1 - ahl) * probs.beta_mf * Nstar[2] / Nstar[3]
        F[3, 1] = a[3] * (1 - eps[3]) * xi * probs.beta_fm * Nstar[3] / Nstar[1]
        F[3, 2] = a[3] * (1 - eps[3]) * (1 - xi) * probs.beta_fm * Nstar[3] / Nstar[2]
    V = np.diag(spec.mu + delta)
    return NGMatrices(F=F, V=V, labels=spec.labels, dfe_populations=Nstar)


def rc_numeric(ngm):
    """Spectral radius of F V^{-1} by dense eigenvalues."""
    A = ngm.F @ np.linalg.inv(ngm.V)
    value = float(np.max(np.abs(np.linalg.eigvals(A))))
    return ReproductionNumber(value=value, method="numeric", components={})


def _cubic_roots(b, c, d):
    """All roots of z^3 + b z^2 + c z + d, complex principal radicals."""
    P = c - b * b / 3.0
    Q = 2.0 * b ** 3 / 27.0 - b * c / 3.0 + d
    disc = cmath.sqrt(complex((Q / 2.0) ** 2 + (P / 3.0) ** 3))
    u3 = -Q / 2.0 + disc
    if abs(u3) < 1e-300:
        u3 = -Q / 2.0 - disc
    if abs(u3) < 1e-300:
        return [complex(-b / 3.0)] * 3
    u = u3 ** (1.0 / 3.0)
    w = complex(-0.5, math.sqrt(3.0) / 2.0)
    roots = []
    for k in range(3):
        uk = u * w ** k
        roots.append(uk - P / (3.0 * uk) - b / 3.0)
    # one Newton polish per root; Cardano through rotations loses precision
    for i, z in enumerate(roots):
        for _ in range(2):
            fz = ((z + b) * z + c) * z + d
            dfz = (3.0 * z + 2.0 * b) * z + c
            if abs(dfz) > 0.0:
                z = z - fz / dfz
        roots[i] = z
    return roots


def rc_closed_basic(ngm):
    """Closed-form spectral radius of the 3-group F V^{-1} by Cardano.

    Expressed through the coupling ratios G: with
    a = G_msm_msm = f11/K1, the characteristic cubic is
    x^3 - a x^2 - (G_msm_hetf*G_hetf_msm + G_hetm_hetf*G_hetf_hetm) x
        + a * G_hetm_hetf * G_hetf_hetm = 0,
    whose largest root is (G2/G1 + G1).real + a/3 with
    G1 = cbrt(G4 + G3 + sqrt((G4+G3)^2 - G2^3)).  Cross-checked against the
    numeric eigenvalue; on disagreement the numeric value is returned with a
    diagnostic.
    """
    if ngm.F.shape != (3, 3):
        raise ValueError("basic closed form needs a 3x3 NGM")
    F, K, Ns = ngm.F, ngm.K, ngm.dfe_populations
    G_mm = F[0, 0] / K[0]
    G_fm = F[0, 1] * Ns[1] / (K[1] * Ns[0])   # hetf <- msm coupling
    G_mf = F[1, 0] * Ns[0] / (K[0] * Ns[1])
    G_hf = F[1, 2] * Ns[2] / (K[2] * Ns[1])
    G_fh = F[2, 1] * Ns[1] / (K[1] * Ns[2])
    bc = G_mf * G_fm
    de = G_hf * G_fh
    G2 = (G_mm / 3.0) ** 2 + (bc + de) / 3.0
    G3 = G_mm * (bc / 6.0 - de / 3.0)
    G4 = (G_mm / 3.0) ** 3
    comps = {"G_msm_msm": G_mm, "G_hetf_msm": G_fm, "G_msm_hetf": G_mf,
             "G_hetm_hetf": G_hf, "G_hetf_hetm": G_fh,
             "G2": G2, "G3": G3, "G4": G4}
    disc = cmath.sqrt(complex((G4 + G3) ** 2 - G2 ** 3))
    G1 = (G4 + G3 + disc) ** (1.0 / 3.0)
    comps["G1"] = G1
    if abs(G1) < 1e-300:
        closed = G_mm / 3.0
        resid = 0.0
    else:
        z = G2 / G1 + G1
        closed = z.real + G_mm / 3.0
        resid = abs(z.imag)
    numeric = rc_numeric(ngm).value
    scale = max(numeric, 1e-30)
    if resid < _IMAG_TOL and abs(closed - numeric) <= _AGREE_RTOL * scale:
        return ReproductionNumber(value=closed, method="closed_form", components=comps)
    return ReproductionNumber(
        value=numeric, method="numeric", components=comps,
        diagnostic=(f"ClosedFormMismatch: closed = {closed!r} "
                    f"(imag residue {resid:.3e}) vs numeric = {numeric!r}"))


def _depressed_quartic_roots(p, q, r):
    """All roots of x^4 + p x^2 + q x + r via Ferrari's resolvent cubic."""
    scale = max(1.0, abs(p), abs(q), abs(r))
    if abs(q) <= 1e-14 * scale:
        roots = []
        inner = cmath.sqrt(complex(p * p - 4.0 * r))
        for s in (1.0, -1.0):
            z = cmath.sqrt((-p + s * inner) / 2.0)
            roots += [z, -z]
        return roots
    # resolvent cubic in u = A^2: u^3 + 2p u^2 + (p^2 - 4r) u - q^2 = 0;
    # u(0) = -q^2 < 0 guarantees a positive real root
    res = _cubic_roots(2.0 * p, p * p - 4.0 * r, -q * q)
    us = [z.real for z in res
          if abs(z.imag) <= 1e-6 * max(1.0, abs(z)) and z.real > 0.0]
    if not us:
        us = [max(z.real for z in res)]
    u = max(us)
    A = math.sqrt(u)
    c1 = (p + u) / 2.0 - q / (2.0 * A)
    c2 = (p + u) / 2.0 + q / (2.0 * A)
    h1 = cmath.sqrt(complex(A * A - 4.0 * c1)) / 2.0
    h2 = cmath.sqrt(complex(A * A - 4.0 * c2)) / 2.0
    h3 = A / 2.0
    return [-h3 - h1, -h3 + h1, h3 - h2, h3 + h2]


def rc_closed_risk(ngm):
    """Closed-form spectral radius of the 4-group F_r V_r^{-1}.

    Uses the H-combinations of the matrix entries: with D = K1 K2 K3 K4,

      H11 = f12 f21 f34 f43 + f13 f24 f31 f42 - f12 f24 f31 f43 - f13 f21 f34 f42
      H12 = K3 K4 f12 f21 + K2 K4 f13 f31 + K1 K3 f24 f42 + K1 K2 f34 f43
      H13 = K3 f11 f24 f42 + K2 f11 f34 f43

    give the depressed-quartic coefficients H8, H9, H10; the four candidate
    values are f11/(4 K1) + {-H1-H3, H1-H3, H3-H2, H3+H2} with H1, H2, H3
    obtained from the resolvent cubic, and the reproduction number is their
    maximum.  Cross-checked against the numeric eigenvalue as in the basic
    variant.
    """
    if ngm.F.shape != (4, 4):
        raise ValueError("risk closed form needs a 4x4 NGM")
    F, K = ngm.F, ngm.K
    f11, f12, f13 = F[0, 0], F[0, 1], F[0, 2]
    f21, f24 = F[1, 0], F[1, 3]
    f31, f34 = F[2, 0], F[2, 3]
    f42, f43 = F[3, 1], F[3, 2]
    K1, K2, K3, K4 = K
    D = K1 * K2 * K3 * K4
    H11 = f12 * f21 * f34 * f43 + f13 * f24 * f31 * f42 \
        - f12 * f24 * f31 * f43 - f13 * f21 * f34 * f42
    H12 = K3 * K4 * f12 * f21 + K2 * K4 * f13 * f31 \
        + K1 * K3 * f24 * f42 + K1 * K2 * f34 * f43
    H13 = K3 * f11 * f24 * f42 + K2 * f11 * f34 * f43
    H9 = 3.0 * f11 ** 2 / (8.0 * K1 ** 2) + H12 / D
    H10 = f11 ** 3 / (8.0 * K1 ** 3) + f11 * H12 / (2.0 * K1 ** 2 * K2 * K3 * K4) \
        - H13 / D
    H8 = 3.0 * f11 ** 4 / (256.0 * K1 ** 4) \
        + f11 ** 2 * H12 / (16.0 * K1 ** 3 * K2 * K3 * K4) \
        - f11 * H13 / (4.0 * K1 ** 2 * K2 * K3 * K4) - H11 / D
    base = f11 / (4.0 * K1)
    roots = _depressed_quartic_roots(-H9, -H10, -H8)
    comps = {"H8": H8, "H9": H9, "H10": H10, "H11": H11, "H12": H12, "H13": H13}
    # recover the H1/H2/H3 decomposition for reporting
    comps["H3"] = (roots[3] + roots[2]).real / 2.0
    comps["H2"] = (roots[3] - roots[2]).real / 2.0
    comps["H1"] = (roots[1] - roots[0]).real / 2.0
    cands = [base + z.real for z in roots
             if abs(z.imag) <= _IMAG_TOL * max(1.0, abs(z))]
    for i, z in enumerate(roots):
        comps[f"R_cr{i + 1}"] = base + z.real if abs(z.imag) <= 1e-9 * max(1.0, abs(z)) \
            else complex(base + z.real, z.imag)
    numeric = rc_numeric(ngm).value
    scale = max(numeric, 1e-30)
    if cands and abs(max(cands) - numeric) <= _AGREE_RTOL * scale:
        return ReproductionNumber(value=max(cands), method="closed_form",
                                  components=comps)
    closed = max(cands) if cands else float("nan")
    return ReproductionNumber(
        value=numeric, method="numeric", components=comps,
        diagnostic=f"ClosedFormMismatch: closed = {closed!r} vs numeric = {numeric!r}")


def rc_closed(spec_or_ngm, spec=None):
    """Closed-form reproduction number for either variant."""
    ngm = spec_or_ngm if isinstance(spec_or_ngm, NGMatrices) else build_ngm(spec_or_ngm)
    return rc_closed_basic(ngm) if ngm.F.shape == (3, 3) else rc_closed_risk(ngm)


def scale_transmission(spec, multiplier):
    """Spec copy with all transmission probabilities scaled by a factor."""
    from dataclasses import replace
    p = spec.probs
    return replace(spec, probs=type(p)(beta_mm=min(p.beta_mm * multiplier, 1.0),
                                       beta_fm=min(p.beta_fm * multiplier, 1.0),
                                       beta_mf=min(p.beta_mf * multiplier, 1.0)))


def tune_multiplier_to_rc(spec, target, lo=1e-6, hi=10.0, tol=1e-10):
    """Bisect a global transmission multiplier until rho(F V^-1) hits target."""
    def rc_of(m):
        return rc_numeric(build_ngm(scale_transmission(spec, m))).value

    flo, fhi = rc_of(lo) - target, rc_of(hi) - target
    if flo * fhi > 0:
        raise ValueError(f"target R = {target} not bracketed by multipliers [{lo}, {hi}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = rc_of(mid) - target
        if abs(fm) < tol:
            return mid
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


@dataclass
class StabilityProbeReport:
    rc_hat: float
    regime: str               # "decay" or "growth"
    n_trials: int
    horizon: float
    confirmed: bool
    conclusive: bool
    max_terminal_ratio: float  # decay: max over trials of sumI(end)/sumI(0)
    notes: str = ""


def _random_feasible_states(spec, n_trials, rng):
    """Random states inside the delta=0 invariant box (S_j <= S_j*, N <= Pi/mu)
    that are also mixing-feasible; rejection sampling."""
    eq = dfe(spec)
    Sstar = eq.S
    _, a, _, _ = spec.param_arrays()
    out = []
    guard = 0
    while len(out) < n_trials:
        guard += 1
        if guard > 200 * n_trials:
            raise RuntimeError("could not sample enough feasible states")
        S = Sstar * rng.uniform(0.3, 1.0, size=spec.n)
        I = Sstar * rng.uniform(0.0, 0.2, size=spec.n)
        if np.sum(S + I) > np.sum(Sstar):
            continue
        try:
            closed_mixing(spec, S + I)
        except InfeasibleClosure:
            continue
        out.append(StateVec.make(S, I))
    return out


def stability_probe(spec, n_trials=50, horizon=None, seed=0,
                    decay_ratio=1e-3, growth_factor=10.0, horizon_cap=32768.0):
    """Empirically probe the disease-free equilibrium's stability.

    The spec must have delta = 0 (the regime the global result covers).
    If the delta-free reproduction number is below one, integrates from
    ``n_trials`` random feasible states and doubles the horizon until total
    infections fall below ``decay_ratio`` of their start (or the cap is
    reached -> inconclusive).  If above one, seeds a small perturbation of
    the DFE and requires growth by ``growth_factor``.
    """
    _, _, delta, _ = spec.param_arrays()
    if np.any(delta != 0.0):
        raise ValueError("stability probe applies to delta = 0 specs")
    rc_hat = rc_numeric(build_ngm(spec)).value
    rng = np.random.default_rng(seed)
    n = spec.n

    if rc_hat < 1.0:
        states = _random_feasible_states(spec, n_trials, rng)
        h = 256.0 if horizon is None else horizon
        while True:
            worst = 0.0
            for y0 in states:
                cfg = IntegratorConfig(t0=0.0, t_end=h, method="rk45_adaptive",
                                       rtol=1e-8, atol=1e-8, dt_max=h / 8)
                traj = integrate(spec, y0, cfg)
                end = traj.final_state()
                start_tot = float(np.sum(y0.I))
                ratio = float(np.sum(end.I)) / start_tot if start_tot > 0 else 0.0
                worst = max(worst, ratio)
            if worst < decay_ratio:
                return StabilityProbeReport(rc_hat=rc_hat, regime="decay",
                                            n_trials=n_trials, horizon=h,
                                            confirmed=True, conclusive=True,
                                            max_terminal_ratio=worst)
            if h >= horizon_cap:
                return StabilityProbeReport(rc_hat=rc_hat, regime="decay",
                                            n_trials=n_trials, horizon=h,
                                            confirmed=False, conclusive=False,
                                            max_terminal_ratio=worst,
                                            notes="horizon cap reached")
            h *= 2.0

    # growth regime: perturb the DFE
    eq = dfe(spec)
    I0 = np.full(n, 1.0)
    y0 = StateVec.make(eq.S - I0, I0)
    start_tot = float(np.sum(I0))
    h = 64.0 if horizon is None else horizon
    while True:
        cfg = IntegratorConfig(t0=0.0, t_end=h, method="rk45_adaptive",
                               rtol=1e-8, atol=1e-8, dt_max=h / 8)
        traj = integrate(spec, y0, cfg)
        ratio = float(np.sum(traj.final_state().I)) / start_tot
        if ratio >= growth_factor:
            return StabilityProbeReport(rc_hat=rc_hat, regime="growth",
                                        n_trials=1, horizon=h, confirmed=True,
                                        conclusive=True, max_terminal_ratio=ratio)
        if h >= horizon_cap:
            return StabilityProbeReport(rc_hat=rc_hat, regime="growth",
                                        n_trials=1, horizon=h, confirmed=False,
                                        conclusive=False, max_terminal_ratio=ratio,
                                        notes="horizon cap reached")
        h *= 2.0
