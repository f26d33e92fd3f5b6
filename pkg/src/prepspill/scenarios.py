"""Config-driven scenario batches, golden-table validation, and file outputs.

A scenario config names the model variant, optional parameter overrides,
a burn-in/intervention/report window, and a list of interventions, each
adding a person count to one group's PrEP coverage at the intervention year:
eps_k <- eps_k0 + dE_k / S_k(start).  Coverage is set once at the start and
held (``fixed-fraction``); ``tracked-count`` instead re-derives eps from the
running susceptible pool at every step.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (MissingSeries, ParseError, SchemaViolation, UnknownGroup)
from .integrators import IntegratorConfig, annual_series, integrate
from .mixing import BasicMixing, RiskMixing
from .model import StateVec
from .presets import (BASIC_ARMS, INTERVENTION_START, REPORT_END, RISK_ARMS,
                      SIM_START, TABLE_BASIC_BASELINE,
                      TABLE_BASIC_INTERVENTIONS, TABLE_RISK_BASELINE,
                      TABLE_RISK_INTERVENTIONS, combine_reported,
                      default_integrator, georgia_spec, reported_groups)
from .spillover import integrate_with_spillover, nnt
from .sobol import UncertainInput, sobol_timeseries

SCHEMA_VERSION = 1
NNT_DISPLAY_CAP = 1e5  # person-years; larger values are suppressed in plot data


@dataclass(frozen=True)
class Intervention:
    group: str
    additional_persons: float
    start_year: float


@dataclass(frozen=True)
class ScenarioConfig:
    variant: str
    start: float
    intervention_year: float
    end: float
    interventions: tuple
    intervention_mode: str = "fixed-fraction"
    integrator: IntegratorConfig = None
    overrides: dict = field(default_factory=dict)
    initial_conditions: dict = None
    raw: dict = field(default_factory=dict)

    def content_hash(self):
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def default_config(variant="basic", arms=None):
    """Config reproducing the published study for a variant."""
    arms = (BASIC_ARMS if variant == "basic" else RISK_ARMS) if arms is None else arms
    raw = {
        "schema_version": SCHEMA_VERSION,
        "model": variant,
        "horizon": {"start": SIM_START, "intervention": INTERVENTION_START,
                    "end": REPORT_END},
        "interventions": [
            {"group": g, "additional_persons": d, "start_year": INTERVENTION_START}
            for g, d in arms],
    }
    return _config_from_raw(raw)


def load_config(path):
    """Parse and validate a JSON scenario config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ParseError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"config {path} is not valid JSON: {e}") from e
    return _config_from_raw(raw)


def _config_from_raw(raw):
    if not isinstance(raw, dict):
        raise SchemaViolation("config root must be an object", key="<root>")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaViolation(f"unsupported schema_version {version}",
                              key="schema_version")
    variant = raw.get("model", "basic")
    if variant not in ("basic", "risk"):
        raise SchemaViolation(f"model must be 'basic' or 'risk', got {variant!r}",
                              key="model")
    labels = ("msm", "hetf", "hetm") if variant == "basic" \
        else ("msm", "hetf_h", "hetf_l", "hetm")

    hor = raw.get("horizon", {})
    start = float(hor.get("start", SIM_START))
    inter = float(hor.get("intervention", INTERVENTION_START))
    end = float(hor.get("end", REPORT_END))
    if not (start <= inter < end):
        raise SchemaViolation(
            f"horizon must satisfy start <= intervention < end, got {start}, {inter}, {end}",
            key="horizon")

    arms = []
    for i, item in enumerate(raw.get("interventions", [])):
        key = f"interventions[{i}]"
        if not isinstance(item, dict):
            raise SchemaViolation("intervention must be an object", key=key)
        g = item.get("group")
        if g not in labels:
            raise UnknownGroup(f"{key}.group: no group {g!r} in variant {variant!r}")
        dE = item.get("additional_persons")
        if not isinstance(dE, (int, float)) or dE < 0:
            raise SchemaViolation(
                f"{key}.additional_persons must be a nonnegative number, got {dE!r}",
                key=f"{key}.additional_persons")
        sy = float(item.get("start_year", inter))
        if not (start <= sy < end):
            raise SchemaViolation(f"{key}.start_year {sy} outside horizon",
                                  key=f"{key}.start_year")
        arms.append(Intervention(group=g, additional_persons=float(dE), start_year=sy))

    mode = raw.get("intervention_mode", "fixed-fraction")
    if mode not in ("fixed-fraction", "tracked-count"):
        raise SchemaViolation(f"unknown intervention_mode {mode!r}",
                              key="intervention_mode")

    icfg_raw = raw.get("integrator", {})
    allowed = {"method", "dt", "rtol", "atol", "dt_min", "dt_max"}
    bad = set(icfg_raw) - allowed
    if bad:
        raise SchemaViolation(f"unknown integrator keys {sorted(bad)}",
                              key="integrator")
    try:
        icfg = IntegratorConfig(t0=start, t_end=end, **icfg_raw)
    except (TypeError, ValueError) as e:
        raise SchemaViolation(f"bad integrator settings: {e}", key="integrator") from e

    overrides = raw.get("overrides", {})
    if not isinstance(overrides, dict):
        raise SchemaViolation("overrides must be an object", key="overrides")
    for g in overrides.get("groups", {}):
        if g not in labels:
            raise UnknownGroup(f"overrides.groups: no group {g!r} in variant {variant!r}")

    ics = raw.get("initial_conditions")
    if ics is not None:
        for g in ics:
            if g not in labels:
                raise UnknownGroup(
                    f"initial_conditions: no group {g!r} in variant {variant!r}")
            for field_name in ("S", "I"):
                if field_name not in ics[g]:
                    raise SchemaViolation(
                        f"initial_conditions.{g} needs S and I",
                        key=f"initial_conditions.{g}")

    return ScenarioConfig(variant=variant, start=start, intervention_year=inter,
                          end=end, interventions=tuple(arms),
                          intervention_mode=mode, integrator=icfg,
                          overrides=overrides, initial_conditions=ics, raw=raw)


def build_model(config):
    """Spec and initial state for a config: Georgia preset plus overrides."""
    spec, y0 = georgia_spec(config.variant)
    ov = config.overrides
    if "mu" in ov:
        spec = replace(spec, mu=float(ov["mu"]))
    if "probs" in ov:
        p = spec.probs
        vals = {k: float(v) for k, v in ov["probs"].items()}
        spec = replace(spec, probs=type(p)(**{**p.__dict__, **vals}))
    if "mixing_priors" in ov:
        cls = BasicMixing if config.variant == "basic" else RiskMixing
        cur = spec.mixing_priors.__dict__
        spec = replace(spec, mixing_priors=cls(**{**cur, **{
            k: float(v) for k, v in ov["mixing_priors"].items()}}))
    if "groups" in ov:
        groups = []
        for gid, params in spec.groups:
            upd = ov["groups"].get(gid.label, {})
            kw = {k: float(v) for k, v in upd.items()}
            groups.append((gid, replace(params, **kw)))
        spec = replace(spec, groups=tuple(groups))
    if config.initial_conditions is not None:
        S = list(y0.S)
        I = list(y0.I)
        for g, vals in config.initial_conditions.items():
            i = spec.group_index(g)
            S[i] = float(vals["S"])
            I[i] = float(vals["I"])
        y0 = StateVec.make(S, I)
    return spec, y0


@dataclass
class ScenarioResult:
    name: str
    group: str
    additional_persons: float
    incidence: dict       # reported columns -> window incidence
    prevented: dict       # reported columns -> infections prevented vs baseline


@dataclass
class RunReport:
    variant: str
    window: tuple
    baseline: ScenarioResult
    scenarios: list
    config_hash: str
    config_echo: dict
    csv_paths: list = field(default_factory=list)


def _window_incidence(traj, spec, t0, t1):
    n = spec.n
    c0 = traj.row_at(t0)[2 * n:3 * n]
    c1 = traj.row_at(t1)[2 * n:3 * n]
    return c1 - c0


def run_scenarios(config):
    """Baseline plus every configured intervention arm.

    Interventions raise group coverage at their start year by
    additional_persons / S_k(start); incidence is aggregated over
    [intervention_year, end] per reported group.
    """
    spec, y0 = build_model(config)
    cfg = config.integrator or default_integrator(config.start, config.end)
    cfg = cfg.over(config.start, config.end)
    t_int, t_end = config.intervention_year, config.end
    labels = spec.labels

    base_traj = integrate(spec, y0, cfg, sample_times=[t_int])
    base_inc = _window_incidence(base_traj, spec, t_int, t_end)
    base_cols = combine_reported(config.variant, labels, base_inc)
    base_cols["total"] = float(np.sum(base_inc))
    baseline = ScenarioResult(name="baseline", group="", additional_persons=0.0,
                              incidence=base_cols,
                              prevented={k: 0.0 for k in base_cols})

    results = []
    for arm in config.interventions:
        k = spec.group_index(arm.group)
        seg_cfg = cfg.over(arm.start_year, t_end)
        start_state = base_traj.state_at(arm.start_year)
        if config.intervention_mode == "fixed-fraction":
            eps_k = spec.groups[k][1].epsilon + arm.additional_persons / start_state.S[k]
            arm_spec = spec.with_epsilon({arm.group: min(eps_k, 1.0)})
            traj = integrate(arm_spec, start_state, seg_cfg)
        else:
            counts = [0.0] * spec.n
            counts[k] = (spec.groups[k][1].epsilon * start_state.S[k]
                         + arm.additional_persons)
            traj = integrate(spec, start_state, seg_cfg, tracked_counts=counts)
        inc = _window_incidence(traj, spec, max(arm.start_year, t_int), t_end)
        if arm.start_year > t_int:
            # add the pre-intervention part of the window from baseline
            inc = inc + _window_incidence(base_traj, spec, t_int, arm.start_year)
        cols = combine_reported(config.variant, labels, inc)
        cols["total"] = float(np.sum(inc))
        prevented = {key: base_cols[key] - cols[key] for key in cols}
        results.append(ScenarioResult(
            name=f"prep_{arm.group}_{int(arm.additional_persons)}",
            group=arm.group, additional_persons=arm.additional_persons,
            incidence=cols, prevented=prevented))

    return RunReport(variant=config.variant, window=(t_int, t_end),
                     baseline=baseline, scenarios=results,
                     config_hash=config.content_hash(),
                     config_echo=config.raw)


def report_to_csv(report, path_or_file):
    cols = list(reported_groups(report.variant)) + ["total"]
    header = ["scenario", "group", "additional_persons"]
    for c in cols:
        header += [f"incidence_{c}", f"prevented_{c}"]

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in [report.baseline] + report.scenarios:
            row = [r.name, r.group, int(r.additional_persons)]
            for c in cols:
                row += [f"{r.incidence[c]:.3f}", f"{r.prevented[c]:.3f}"]
            w.writerow(row)

    if hasattr(path_or_file, "write"):
        write(path_or_file)
    else:
        with open(path_or_file, "w", encoding="utf-8", newline="") as fh:
            write(fh)


@dataclass
class CellCheck:
    table: str
    row: str
    cell: str
    expected: float
    actual: float
    tolerance: float
    ok: bool


@dataclass
class ValidationReport:
    cells: list

    @property
    def all_pass(self):
        return all(c.ok for c in self.cells)

    def failures(self):
        return [c for c in self.cells if not c.ok]

    def to_csv(self, path_or_file):
        def write(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["table", "row", "cell", "expected", "actual",
                        "tolerance", "status"])
            for c in self.cells:
                w.writerow([c.table, c.row, c.cell, f"{c.expected:.3f}",
                            f"{c.actual:.3f}", f"{c.tolerance:.3f}",
                            "ok" if c.ok else "FAIL"])

        if hasattr(path_or_file, "write"):
            write(path_or_file)
        else:
            with open(path_or_file, "w", encoding="utf-8", newline="") as fh:
                write(fh)


def validate_tables(variants=("basic", "risk")):
    """Run the published intervention studies and diff against the golden tables.

    Baseline cells are held to +/-2 percent; each intervention row's
    "infections prevented" to +/-5 percent or +/-25 persons, whichever is
    larger.  Returns a per-cell report; nothing is raised on failure.
    """
    cells = []
    for variant in variants:
        config = default_config(variant)
        report = run_scenarios(config)
        golden_base = TABLE_BASIC_BASELINE if variant == "basic" else TABLE_RISK_BASELINE
        golden_rows = TABLE_BASIC_INTERVENTIONS if variant == "basic" \
            else TABLE_RISK_INTERVENTIONS
        table = f"table_{variant}"
        base_cells = ("total", "msm", "hetf", "hetm") if variant == "basic" \
            else ("total",)
        for cell in base_cells:
            exp = golden_base[cell]
            act = report.baseline.incidence[cell]
            tol = 0.02 * exp
            cells.append(CellCheck(table=table, row="baseline", cell=cell,
                                   expected=exp, actual=act, tolerance=tol,
                                   ok=abs(act - exp) <= tol))
        for r in report.scenarios:
            key = (r.group, int(r.additional_persons))
            exp = golden_rows[key]["prevented"]
            act = r.prevented["total"]
            tol = max(0.05 * exp, 25.0)
            cells.append(CellCheck(table=table, row=f"{key[0]}+{key[1]}",
                                   cell="prevented_total", expected=exp,
                                   actual=act, tolerance=tol,
                                   ok=abs(act - exp) <= tol))
    return ValidationReport(cells=cells)


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def emit_plot_data(out_dir, variant="basic", series=("baseline", "effects",
                                                     "nnt", "table"),
                   config=None, sobol_level=3):
    """Write the figure-analog CSV bundle for one variant.

    Series names: baseline (prevalence and annual incidence), effects
    (per-person incidence effects over time), nnt (NNT curves; undefined or
    excessive values are left empty, with a sidecar note), table (scenario
    incidence table), sobol (index time series).  Unknown names raise
    MissingSeries.  Outputs are deterministic: rerunning produces identical
    bytes.
    """
    import os

    known = {"baseline", "effects", "nnt", "table", "sobol"}
    unknown = set(series) - known
    if unknown:
        raise MissingSeries(f"unknown series {sorted(unknown)}; known: {sorted(known)}")
    os.makedirs(out_dir, exist_ok=True)
    config = config or default_config(variant)
    spec, y0 = build_model(config)
    cfg = (config.integrator or default_integrator()).over(config.start, config.end)
    labels = spec.labels
    paths = []

    need_spill = {"effects", "nnt"} & set(series)
    if "baseline" in series or need_spill:
        base_traj = integrate(spec, y0, cfg, sample_times=[config.intervention_year])
    if need_spill:
        start_state = base_traj.state_at(config.intervention_year)
        traj, sens = integrate_with_spillover(
            spec, start_state, sources=labels,
            cfg=cfg.over(config.intervention_year, config.end))

    if "baseline" in series:
        years, inc = annual_series(base_traj)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["year"] + [f"prevalence_{l}" for l in labels]
                   + [f"annual_incidence_{l}" for l in labels])
        for r, y in enumerate(years):
            st = base_traj.state_at(float(y))
            w.writerow([y] + [f"{v:.6f}" for v in st.I]
                       + [f"{v:.6f}" for v in inc[r]])
        p = os.path.join(out_dir, f"baseline_series_{variant}.csv")
        _write(p, buf.getvalue())
        paths.append(p)

    if "effects" in series:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = [(j, k) for k in labels for j in range(len(labels))]
        w.writerow(["t"] + [f"per_person_{labels[j]}__{k}" for j, k in cols])
        for i, t in enumerate(traj.times):
            row = [f"{t:.6f}"]
            for j, k in cols:
                st = sens[k]
                Sk = traj.states[i, 2 * st.source_index]
                row.append(f"{st.gamma[i, j] / Sk:.10e}")
            w.writerow(row)
        p = os.path.join(out_dir, f"per_person_effects_{variant}.csv")
        _write(p, buf.getvalue())
        paths.append(p)

    if "nnt" in series:
        suppressed = []
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        pairs = [(jl, k) for k in labels for jl in labels]
        w.writerow(["T"] + [f"nnt_{jl}__{k}" for jl, k in pairs])
        horizons = [0.5 * i for i in range(1, int(2 * (config.end - config.intervention_year)) + 1)]
        for T in horizons:
            row = [f"{T:.2f}"]
            for jl, k in pairs:
                res = nnt(sens[k], traj, jl, k, T, spec.mu)
                if not res.defined or res.nnt_simple > NNT_DISPLAY_CAP:
                    row.append("")
                    suppressed.append({"T": T, "j": jl, "k": k,
                                       "reason": "undefined" if not res.defined
                                       else "excessive"})
                else:
                    row.append(f"{res.nnt_simple:.3f}")
            w.writerow(row)
        p = os.path.join(out_dir, f"nnt_{variant}.csv")
        _write(p, buf.getvalue())
        paths.append(p)
        side = os.path.join(out_dir, f"nnt_{variant}_suppressed.json")
        _write(side, json.dumps({"display_cap": NNT_DISPLAY_CAP,
                                 "suppressed": suppressed}, indent=1,
                                sort_keys=True))
        paths.append(side)

    if "table" in series:
        report = run_scenarios(config)
        p = os.path.join(out_dir, f"table_{variant}.csv")
        report_to_csv(report, p)
        paths.append(p)

    if "sobol" in series:
        inputs = tuple(UncertainInput(group=l, lo=-0.5, hi=4.0) for l in labels)
        study = sobol_timeseries(spec, y0, inputs, level=sobol_level,
                                 total_degree=min(sobol_level - 1, 4))
        p = os.path.join(out_dir, f"sobol_{variant}.csv")
        write_sobol_csv(study, p)
        paths.append(p)
        man = os.path.join(out_dir, f"sobol_{variant}_manifest.json")
        _write(man, json.dumps(sobol_manifest(study), indent=1, sort_keys=True))
        paths.append(man)

    return paths


def write_sobol_csv(study, path_or_file):
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "output_group", "input", "first_order", "total",
                    "mean", "variance"])
        for (year, lbl), si in sorted(study.indices.items()):
            for d, u in enumerate(study.inputs):
                name = u.group if u.group is not None else f"null_{d}"
                w.writerow([year, lbl, name,
                            f"{si.first_order[d]:.10f}" if si.defined else "",
                            f"{si.total[d]:.10f}" if si.defined else "",
                            f"{si.mean:.6f}", f"{si.variance:.6f}"])

    if hasattr(path_or_file, "write"):
        write(path_or_file)
    else:
        with open(path_or_file, "w", encoding="utf-8", newline="") as fh:
            write(fh)


def sobol_manifest(study):
    return {
        "rule": study.grid_rule,
        "level": study.grid_level,
        "node_count": study.n_nodes,
        "clamp_count": study.clamp_count,
        "boundary_affected": study.boundary_affected,
        "inputs": [
            {"group": u.group, "lo": u.lo, "hi": u.hi, "domain": u.domain}
            for u in study.inputs],
    }
