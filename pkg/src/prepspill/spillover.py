"""Forward sensitivities of the epidemic state to PrEP coverage ("spillover").

For a source group k, the sensitivity pair (sigma_j, gamma_j) tracks how
every group's susceptible and infected populations respond to a marginal
increase in the coverage fraction eps_k.  Sign convention used throughout
this package: responses are reported as *reductions*, i.e.

    sigma_j = -dS_j/d(eps_k),   gamma_j = -dI_j/d(eps_k),

so gamma_j counts infections averted in group j per unit of additional
coverage in group k, and is positive when PrEP helps.  The finite-difference
check in :func:`fd_oracle` returns the same convention.

Two dynamic modes:

* "practical" (default): the sensitivity block decays at the natural removal
  rate mu regardless of delta, while being driven by the full state
  trajectory.  This mirrors how the published simulations treat the system.
* "exact_delta" (basic variant only): infected sensitivities decay at
  mu + delta_j and the population-size correction vectors (see
  :func:`xi_correction`) are added, making the block the exact derivative
  system of the delta != 0 model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import PerturbationOutOfRange, UnsupportedVariant, ZeroPopulation
from .integrators import Trajectory, integrate, integrate_flat
from .model import closed_mixing, rhs

MODES = ("practical", "exact_delta")


@dataclass(frozen=True)
class SensitivityState:
    """Sensitivity pair for one source group at one instant."""

    source: str
    source_index: int
    sigma: np.ndarray
    gamma: np.ndarray

    @classmethod
    def zero(cls, spec, source):
        k = spec.group_index(source) if isinstance(source, str) else int(source)
        n = spec.n
        return cls(source=spec.labels[k], source_index=k,
                   sigma=np.zeros(n), gamma=np.zeros(n))


@dataclass
class SensitivityTrajectory:
    """Time series of one source's sensitivity block."""

    source: str
    source_index: int
    times: np.ndarray
    sigma: np.ndarray  # (n_times, n_groups)
    gamma: np.ndarray

    def at(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) <= 1e-9:
            sig, gam = self.sigma[i], self.gamma[i]
        else:
            sig = np.array([np.interp(t, self.times, self.sigma[:, j])
                            for j in range(self.sigma.shape[1])])
            gam = np.array([np.interp(t, self.times, self.gamma[:, j])
                            for j in range(self.gamma.shape[1])])
        return SensitivityState(source=self.source, source_index=self.source_index,
                                sigma=sig, gamma=gam)


@dataclass(frozen=True)
class NNTResult:
    """Additional person-years on PrEP in group k per infection prevented in group j."""

    j: str
    k: str
    horizon: float
    nnt_simple: float
    nnt_integral: float
    defined: bool


def _mix_weights(spec, mix, a):
    """Per group: list of (partner index, contact coefficient a_j * frac * beta)."""
    probs = spec.probs
    if spec.variant == "basic":
        eta, al = mix.eta_msm, mix.alpha_hetf
        return (
            ((0, a[0] * eta * probs.beta_mm), (1, a[0] * (1 - eta) * probs.beta_fm)),
            ((0, a[1] * al * probs.beta_mf), (2, a[1] * (1 - al) * probs.beta_mf)),
            ((1, a[2] * probs.beta_fm),),
        )
    em, ehh, ahh, ahl, xi = mix.as_tuple()
    return (
        ((0, a[0] * em * probs.beta_mm), (1, a[0] * ehh * probs.beta_fm),
         (2, a[0] * (1 - em - ehh) * probs.beta_fm)),
        ((0, a[1] * ahh * probs.beta_mf), (3, a[1] * (1 - ahh) * probs.beta_mf)),
        ((0, a[2] * ahl * probs.beta_mf), (3, a[2] * (1 - ahl) * probs.beta_mf)),
        ((1, a[3] * xi * probs.beta_fm), (2, a[3] * (1 - xi) * probs.beta_fm)),
    )


def spillover_rhs(spec, state, sens, mode="practical", t=None):
    """Time derivative of one sensitivity block given the current state."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "exact_delta" and spec.variant != "basic":
        raise UnsupportedVariant("exact_delta mode is derived for the basic variant only")
    N = state.N
    if np.any(N <= 0.0):
        raise ZeroPopulation("zero group population")
    _, a, delta, eps = spec.param_arrays()
    mu = spec.mu
    mix = closed_mixing(spec, N, t=t)
    w = _mix_weights(spec, mix, a)
    n = spec.n
    k = sens.source_index
    lam = np.array([sum(c * state.I[p] / N[p] for p, c in w[j]) for j in range(n)])
    bdot = np.array([sum(c * sens.gamma[p] / N[p] for p, c in w[j]) for j in range(n)])
    coup = (1.0 - eps) * (bdot * state.S + lam * sens.sigma)
    dsig = -coup - mu * sens.sigma
    if mode == "practical":
        dgam = coup - mu * sens.gamma
    else:
        dgam = coup - (mu + delta) * sens.gamma
        xi_dot = np.array([
            sum(c * (sens.sigma[p] + sens.gamma[p]) / N[p] ** 2 * state.I[p]
                for p, c in w[j]) for j in range(n)])
        corr = (1.0 - eps) * xi_dot * state.S
        dsig += corr
        dgam -= corr
    inhom = lam[k] * state.S[k]
    dsig[k] -= inhom
    dgam[k] += inhom
    return SensitivityState(source=sens.source, source_index=k, sigma=dsig, gamma=dgam)


def xi_correction(spec, state, sens):
    """Population-size correction vectors for the exact-delta mode.

    Returns (Xi, contrib): Xi is (n, 2n) with entries
    a_j * frac * beta * (sigma_p + gamma_p) / N_p^2 at partner infected
    slots, and contrib_j = (1 - eps_j) * (Xi_j . X) * S_j is the term added
    to dsigma_j/dt and subtracted from dgamma_j/dt when the flag is on.
    Only derived for the basic variant.
    """
    if spec.variant != "basic":
        raise UnsupportedVariant("correction vectors exist for the basic variant only")
    N = state.N
    if np.any(N <= 0.0):
        raise ZeroPopulation("zero group population")
    _, a, _, eps = spec.param_arrays()
    mix = closed_mixing(spec, N)
    w = _mix_weights(spec, mix, a)
    n = spec.n
    Xi = np.zeros((n, 2 * n))
    for j in range(n):
        for p, c in w[j]:
            Xi[j, 2 * p + 1] = c * (sens.sigma[p] + sens.gamma[p]) / N[p] ** 2
    x = state.to_flat()[:2 * n]
    contrib = (1.0 - eps) * (Xi @ x) * state.S
    return Xi, contrib


def _augmented_rhs_factory(spec, source_indices, mode):
    """Flat rhs over [state | C | one (sigma, gamma) block per source]."""
    Pi, a, delta, eps = (np.asarray(v) for v in spec.param_arrays())
    mu = spec.mu
    n = spec.n
    base = 3 * n
    exact = mode == "exact_delta"
    if exact and spec.variant != "basic":
        raise UnsupportedVariant("exact_delta mode is derived for the basic variant only")
    gdecay = mu + delta if exact else np.full(n, mu)

    def f(t, y):
        S = np.array(y[0:2 * n:2])
        I = np.array(y[1:2 * n:2])
        N = S + I
        if np.any(N <= 0.0):
            raise ZeroPopulation(f"zero group population at t = {t}")
        mix = closed_mixing(spec, N, t=t)
        w = _mix_weights(spec, mix, a)
        lam = np.array([sum(c * I[p] / N[p] for p, c in w[j]) for j in range(n)])
        inc = (1.0 - eps) * lam * S
        out = np.empty(base + 2 * n * len(source_indices))
        out[0:2 * n:2] = Pi - inc - mu * S
        out[1:2 * n:2] = inc - (mu + delta) * I
        out[2 * n:base] = inc
        for b, k in enumerate(source_indices):
            off = base + 2 * n * b
            sig = np.array(y[off:off + 2 * n:2])
            gam = np.array(y[off + 1:off + 2 * n:2])
            bdot = np.array([sum(c * gam[p] / N[p] for p, c in w[j]) for j in range(n)])
            coup = (1.0 - eps) * (bdot * S + lam * sig)
            dsig = -coup - mu * sig
            dgam = coup - gdecay * gam
            if exact:
                xi_dot = np.array([
                    sum(c * (sig[p] + gam[p]) / N[p] ** 2 * I[p] for p, c in w[j])
                    for j in range(n)])
                corr = (1.0 - eps) * xi_dot * S
                dsig += corr
                dgam -= corr
            inhom = lam[k] * S[k]
            dsig[k] -= inhom
            dgam[k] += inhom
            out[off:off + 2 * n:2] = dsig
            out[off + 1:off + 2 * n:2] = dgam
        return out

    return f


def integrate_with_spillover(spec, y0, sources, cfg, mode="practical",
                             sample_times=None):
    """Jointly integrate the state and the requested sensitivity blocks.

    Sensitivities start from exactly zero at cfg.t0.  Returns the state
    trajectory and one SensitivityTrajectory per requested source, keyed by
    group label.  With an empty source set this is identical to
    :func:`prepspill.integrators.integrate`.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    src = sorted(spec.group_index(s) if isinstance(s, str) else int(s)
                 for s in set(sources))
    if not src:
        traj = integrate(spec, y0, cfg, sample_times=sample_times)
        return traj, {}
    n = spec.n
    f = _augmented_rhs_factory(spec, src, mode)
    y0_flat = np.concatenate([y0.to_flat(), np.zeros(2 * n * len(src))])
    ts, ys, clamps = integrate_flat(f, y0_flat, cfg, n_state=2 * n,
                                    sample_times=sample_times)
    times = np.array(ts)
    ymat = np.array(ys)
    traj = Trajectory(times=times, states=ymat, labels=spec.labels,
                      clamp_events=clamps)
    sens = {}
    for b, k in enumerate(src):
        off = 3 * n + 2 * n * b
        block = ymat[:, off:off + 2 * n]
        sens[spec.labels[k]] = SensitivityTrajectory(
            source=spec.labels[k], source_index=k, times=times,
            sigma=block[:, 0::2].copy(), gamma=block[:, 1::2].copy())
    return traj, sens


def per_person_effect(sens, state, j):
    """Effect per additional person on PrEP in the source group.

    Returns (gamma_j / S_k, sigma_j / S_k): infections averted in group j
    (and susceptibles forgone) per extra person covered in group k, at the
    current time.  j is a group index.
    """
    Sk = state.S[sens.source_index]
    if Sk <= 0.0:
        raise ZeroPopulation(f"source group {sens.source} has S = 0")
    return sens.gamma[j] / Sk, sens.sigma[j] / Sk


def incidence_sensitivity(spec, state, sens, j, mode="practical"):
    """Sensitivity of group j's incidence rate to persons on PrEP in the source:
    d/dt [gamma_j / S_k] + mu * gamma_j / S_k, evaluated from the available
    state and sensitivity derivatives."""
    k = sens.source_index
    Sk = state.S[k]
    if Sk <= 0.0:
        raise ZeroPopulation(f"source group {sens.source} has S = 0")
    dstate = rhs(spec, state)
    dsens = spillover_rhs(spec, state, sens, mode=mode)
    quot_dot = (dsens.gamma[j] * Sk - sens.gamma[j] * dstate.S[k]) / Sk ** 2
    return quot_dot + spec.mu * sens.gamma[j] / Sk


def nnt(sens_traj, state_traj, j, k, T, mu):
    """Person-years of additional PrEP in group k per infection prevented in
    group j over [t_start, t_start + T], t_start being the sensitivity start.

    nnt_simple = T * S_k(T) / gamma_j(T); nnt_integral keeps the
    mu * integral(gamma/S) term in the denominator.  Undefined (flagged, not
    raised) when gamma_j(T) <= 0.
    """
    if isinstance(k, str):
        if k != sens_traj.source:
            raise ValueError(f"sensitivity block is for source {sens_traj.source!r}, not {k!r}")
        k_idx = sens_traj.source_index
    else:
        k_idx = int(k)
        if k_idx != sens_traj.source_index:
            raise ValueError("source mismatch between k and sensitivity block")
    j_idx = state_traj.labels.index(j) if isinstance(j, str) else int(j)
    t_start = sens_traj.times[0]
    t_eval = t_start + T
    if t_eval > state_traj.times[-1] + 1e-9:
        raise ValueError(f"T = {T} reaches beyond the trajectory span")
    gam_T = sens_traj.at(t_eval).gamma[j_idx]
    S_T = state_traj.state_at(t_eval).S[k_idx]
    jl, kl = state_traj.labels[j_idx], sens_traj.source
    if gam_T <= 0.0:
        return NNTResult(j=jl, k=kl, horizon=T, nnt_simple=float("nan"),
                         nnt_integral=float("nan"), defined=False)
    if sens_traj.times.shape != state_traj.times.shape or \
            not np.allclose(sens_traj.times, state_traj.times):
        raise ValueError("sensitivity and state trajectories use different grids")
    idx = np.flatnonzero((sens_traj.times >= t_start - 1e-12)
                         & (sens_traj.times <= t_eval + 1e-12))
    tt = sens_traj.times[idx]
    ratio = sens_traj.gamma[idx, j_idx] / state_traj.states[idx, 2 * k_idx]
    integral = float(np.trapezoid(ratio, tt))
    simple = T * S_T / gam_T
    full = T / (gam_T / S_T + mu * integral)
    return NNTResult(j=jl, k=kl, horizon=T, nnt_simple=simple,
                     nnt_integral=full, defined=True)


@dataclass
class FdEstimate:
    """Finite-difference sensitivity estimate on a fixed sample grid.

    Same sign convention as SensitivityTrajectory (reductions).  ``scheme``
    records whether a central difference was possible or a one-sided
    fallback was used at a coverage boundary.
    """

    source: str
    source_index: int
    times: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    scheme: str


def fd_oracle(spec, y0, k, eps_tilde, cfg, sample_times=None):
    """Estimate the coverage sensitivity by differencing two perturbed runs.

    Integrates the given spec with eps_k shifted by +/- eps_tilde and forms
    (X(eps - e) - X(eps + e)) / (2 e), matching the package's
    reduction-sign convention.  Falls back to a one-sided difference when
    eps_k sits at a boundary of [0, 1]; raises PerturbationOutOfRange when
    no admissible perturbation exists.
    """
    if eps_tilde <= 0.0:
        raise PerturbationOutOfRange("eps_tilde must be positive")
    k_idx = spec.group_index(k) if isinstance(k, str) else int(k)
    label = spec.labels[k_idx]
    eps_k = spec.groups[k_idx][1].epsilon
    hi, lo = eps_k + eps_tilde, eps_k - eps_tilde
    if lo >= 0.0 and hi <= 1.0:
        scheme, pair, denom = "central", (lo, hi), 2.0 * eps_tilde
    elif hi <= 1.0:
        scheme, pair, denom = "forward", (eps_k, hi), eps_tilde
    elif lo >= 0.0:
        scheme, pair, denom = "backward", (lo, eps_k), eps_tilde
    else:
        raise PerturbationOutOfRange(
            f"eps_{label} = {eps_k} admits no +/-{eps_tilde} perturbation in [0, 1]")
    grid = _breakpoint_grid(cfg, sample_times)
    runs = []
    for e in pair:
        pspec = spec.with_epsilon({label: e})
        traj = integrate(pspec, y0, cfg, sample_times=grid)
        runs.append(np.array([traj.row_at(t)[:2 * spec.n] for t in grid]))
    diff = (runs[0] - runs[1]) / denom
    return FdEstimate(source=label, source_index=k_idx, times=np.array(grid),
                      sigma=diff[:, 0::2], gamma=diff[:, 1::2], scheme=scheme)


def _breakpoint_grid(cfg, sample_times):
    pts = {cfg.t0, cfg.t_end}
    y = int(np.ceil(cfg.t0))
    while y < cfg.t_end:
        if y > cfg.t0:
            pts.add(float(y))
        y += 1
    if sample_times is not None:
        pts.update(float(t) for t in sample_times)
    return sorted(pts)


def sensitivity_to_csv(sens_map, labels, path_or_file):
    """Write sensitivity trajectories as columns sigma_<j>__<k>, gamma_<j>__<k>."""
    sources = sorted(sens_map)
    times = sens_map[sources[0]].times
    header = ["t"]
    cols = []
    for k in sources:
        st = sens_map[k]
        for j, jl in enumerate(labels):
            header += [f"sigma_{jl}__{k}", f"gamma_{jl}__{k}"]
            cols.append((st, j))

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, t in enumerate(times):
            row = [repr(float(t))]
            for st, j in cols:
                row += [repr(float(st.sigma[i, j])), repr(float(st.gamma[i, j]))]
            w.writerow(row)

    if hasattr(path_or_file, "write"):
        write(path_or_file)
    else:
        with open(path_or_file, "w", encoding="utf-8", newline="") as fh:
            write(fh)
