"""Time integration with cumulative-incidence accounting.

Two methods: classic fixed-step RK4 and an embedded Dormand-Prince 5(4) pair
with PI-free elementary step control.  Both are forced to land exactly on
every integer calendar year inside the span (plus any extra sample times), so
annual aggregates are plain differences of stored values, never interpolated.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NegativeState, PartialYear, StepSizeUnderflow
from .model import StateVec, flat_rhs_factory

log = logging.getLogger(__name__)

# Dormand-Prince 5(4) tableau.
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


@dataclass(frozen=True)
class IntegratorConfig:
    """Integration window and method settings.

    t0/t_end are calendar years ("model year 2020" starts at t = 2020.0).
    dt is the fixed step for rk4_fixed; rtol/atol/dt_min/dt_max control the
    adaptive method.  atol is in persons.
    """

    t0: float
    t_end: float
    method: str = "rk45_adaptive"
    dt: float = 0.05
    rtol: float = 1e-8
    atol: float = 1e-6
    dt_min: float = 1e-10
    dt_max: float = 25.0

    def __post_init__(self):
        if self.method not in ("rk4_fixed", "rk45_adaptive"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.t_end <= self.t0:
            raise ValueError("t_end must exceed t0")
        if self.dt <= 0 or self.rtol <= 0 or self.atol <= 0:
            raise ValueError("dt, rtol, atol must be positive")

    def over(self, t0, t_end):
        return replace(self, t0=float(t0), t_end=float(t_end))


@dataclass
class Trajectory:
    """Accepted integration nodes plus bookkeeping.

    states rows follow the flat layout of the integrated system; the first
    3n columns are the model state (S/I interleaved, then C), any further
    columns belong to augmented blocks owned by the caller.
    """

    times: np.ndarray
    states: np.ndarray
    labels: tuple
    clamp_events: list = field(default_factory=list)

    @property
    def n_groups(self):
        return len(self.labels)

    def index_of(self, t, tol=1e-9):
        i = int(np.searchsorted(self.times, t))
        for j in (i - 1, i, i + 1):
            if 0 <= j < len(self.times) and abs(self.times[j] - t) <= tol:
                return j
        return None

    def row_at(self, t):
        """Flat row at time t: stored node if available, else linear interpolation."""
        i = self.index_of(t)
        if i is not None:
            return self.states[i]
        if not (self.times[0] <= t <= self.times[-1]):
            raise ValueError(f"t = {t} outside trajectory span")
        return np.array([np.interp(t, self.times, self.states[:, j])
                         for j in range(self.states.shape[1])])

    def state_at(self, t):
        return StateVec.from_flat(self.row_at(t), self.n_groups)

    def final_state(self):
        return StateVec.from_flat(self.states[-1], self.n_groups)

    def to_csv(self, path_or_file):
        header = ["t"]
        for lbl in self.labels:
            header += [f"S_{lbl}", f"I_{lbl}"]
        header += [f"C_{lbl}" for lbl in self.labels]
        n = self.n_groups

        def write(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t, row in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row[:3 * n]])

        if hasattr(path_or_file, "write"):
            write(path_or_file)
        else:
            with open(path_or_file, "w", encoding="utf-8", newline="") as fh:
                write(fh)


def _breakpoints(cfg, sample_times):
    pts = {cfg.t0, cfg.t_end}
    y = math.ceil(cfg.t0)
    while y < cfg.t_end:
        if y > cfg.t0:
            pts.add(float(y))
        y += 1
    if sample_times is not None:
        for t in sample_times:
            t = float(t)
            if not (cfg.t0 <= t <= cfg.t_end):
                raise ValueError(f"sample time {t} outside [{cfg.t0}, {cfg.t_end}]")
            pts.add(t)
    return sorted(pts)


def _postprocess_step(t, y, n_state, atol, clamp_events):
    """Clamp tiny negatives in the physical slots; hard negatives are fatal."""
    for i in range(n_state):
        v = y[i]
        if v < 0.0:
            if v < -atol:
                raise NegativeState(
                    f"state component {i} = {v:.6g} < -atol at t = {t:.6f}")
            y[i] = 0.0
            clamp_events.append((t, i, v))
            log.info("clamped component %d (%.3e) to 0 at t=%.6f", i, v, t)


def integrate_flat(f, y0, cfg, n_state, sample_times=None):
    """Integrate dy/dt = f(t, y) over cfg's window.

    ``n_state`` marks how many leading components are physical populations
    subject to the nonnegativity policy; trailing components (cumulative
    counters, sensitivity blocks) may take either sign.
    Returns (times list, states list, clamp_events).
    """
    breaks = _breakpoints(cfg, sample_times)
    y = [float(v) for v in y0]
    ts = [breaks[0]]
    ys = [list(y)]
    clamps = []

    if cfg.method == "rk4_fixed":
        for b0, b1 in zip(breaks[:-1], breaks[1:]):
            t = b0
            nsub = max(1, math.ceil((b1 - b0) / cfg.dt - 1e-12))
            h = (b1 - b0) / nsub
            for i in range(nsub):
                k1 = f(t, y)
                y2 = [yi + 0.5 * h * ki for yi, ki in zip(y, k1)]
                k2 = f(t + 0.5 * h, y2)
                y3 = [yi + 0.5 * h * ki for yi, ki in zip(y, k2)]
                k3 = f(t + 0.5 * h, y3)
                y4 = [yi + h * ki for yi, ki in zip(y, k3)]
                k4 = f(t + h, y4)
                y = [yi + h / 6.0 * (a + 2.0 * b + 2.0 * c + d)
                     for yi, a, b, c, d in zip(y, k1, k2, k3, k4)]
                t = b1 if i == nsub - 1 else t + h
                _postprocess_step(t, y, n_state, cfg.atol, clamps)
                ts.append(t)
                ys.append(list(y))
        return ts, ys, clamps

    # Dormand-Prince with FSAL
    t = breaks[0]
    k1 = f(t, y)
    h = min(cfg.dt_max, max(cfg.dt_min, 1e-2))
    for target in breaks[1:]:
        while t < target - 1e-13:
            h = min(h, cfg.dt_max, target - t)
            if h < cfg.dt_min:
                raise StepSizeUnderflow(f"dt = {h:.3e} below dt_min at t = {t:.6f}")
            ks = [k1]
            for s in range(1, 7):
                acc = [0.0] * len(y)
                arow = _DP_A[s]
                for j, aij in enumerate(arow):
                    if aij != 0.0:
                        kj = ks[j]
                        for i in range(len(y)):
                            acc[i] += aij * kj[i]
                ys_stage = [yi + h * ai for yi, ai in zip(y, acc)]
                ks.append(f(t + _DP_C[s] * h, ys_stage))
            ynew = [yi + h * sum(b * ks[j][i] for j, b in enumerate(_DP_B5) if b)
                    for i, yi in enumerate(y)]
            # scaled RMS error of the embedded difference
            err2 = 0.0
            for i in range(len(y)):
                e = h * sum(c * ks[j][i] for j, c in enumerate(_DP_E) if c)
                sc = cfg.atol + cfg.rtol * max(abs(y[i]), abs(ynew[i]))
                err2 += (e / sc) ** 2
            err = math.sqrt(err2 / len(y))
            if err <= 1.0:
                t = target if target - t - h <= 1e-13 else t + h
                y = ynew
                k1 = ks[6]  # FSAL
                _postprocess_step(t, y, n_state, cfg.atol, clamps)
                ts.append(t)
                ys.append(list(y))
                h *= min(5.0, max(0.2, 0.9 * err ** -0.2 if err > 0 else 5.0))
            else:
                h *= max(0.2, 0.9 * err ** -0.2)
    return ts, ys, clamps


def integrate(spec, y0, cfg, sample_times=None, tracked_counts=None):
    """Integrate a model from StateVec y0 over the configured window."""
    f = flat_rhs_factory(spec, tracked_counts=tracked_counts)
    ts, ys, clamps = integrate_flat(f, y0.to_flat(), cfg, n_state=2 * spec.n,
                                    sample_times=sample_times)
    return Trajectory(times=np.array(ts), states=np.array(ys),
                      labels=spec.labels, clamp_events=clamps)


def annual_series(traj):
    """Per calendar year, per group new infections: differences of the
    cumulative accumulators at year boundaries.

    Requires the trajectory to span whole years; the yearly rows sum exactly
    (telescoping) to C(t_end) - C(t0).
    """
    t0, t1 = traj.times[0], traj.times[-1]
    if abs(t0 - round(t0)) > 1e-9 or abs(t1 - round(t1)) > 1e-9:
        raise PartialYear(f"span [{t0}, {t1}] is not aligned to whole years")
    years = list(range(int(round(t0)), int(round(t1))))
    if not years:
        raise PartialYear("span shorter than one year")
    n = traj.n_groups
    out = np.empty((len(years), n))
    for r, y in enumerate(years):
        i0 = traj.index_of(float(y))
        i1 = traj.index_of(float(y + 1))
        if i0 is None or i1 is None:
            raise PartialYear(f"year boundary {y} missing from trajectory grid")
        out[r] = traj.states[i1, 2 * n:3 * n] - traj.states[i0, 2 * n:3 * n]
    return years, out
