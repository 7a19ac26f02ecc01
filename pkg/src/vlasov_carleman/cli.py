"""Command-line pipeline: configure, diagnose, embed, evolve, compare.

Subcommands
-----------
analyze       convergence certificate (and plan, when feasible)
feasibility   grid-size bounds from the collision-rate model
run-carleman  embedded linear evolution, extracted back to the grid
run-reference nonlinear fixed-step integration (ground truth)
compare       both routes plus error metrics
sweep         one variable swept, merged into a table

Configuration is an INI file with sections mirroring the library
modules ([grid], [plasma], [initial], [system], [time], [solver],
[reference], [sweep], [output]).  The only environment override is the
output directory (VLASOV_CARLEMAN_OUT); the --out flag beats both.

Exit codes: 0 success, 2 infeasible-convergence verdict (a successful
scientific outcome, distinct from failure), 1 error.

Reports are versioned JSON (schema tag "report_v1"); with
output.canonical = true the report omits wall-clock timings and two
runs with the same config and seed produce byte-identical files.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, carleman, integrator, qode, reference
from .grid import GridSpec
from .physics import (
    BOLTZMANN,
    ELECTRON_MASS,
    BeamSpec,
    PlasmaParams,
    load_initial_csv,
    quadratic_collision_variation,
)

__all__ = ["ConfigError", "RunConfig", "parse_config", "run", "main"]

SCHEMA_VERSION = "report_v1"

MODES = ("analyze", "feasibility", "run-carleman", "run-reference", "compare", "sweep")

_AMPERE_BLOCKED = ("run-carleman", "run-reference", "compare", "sweep")


class ConfigError(Exception):
    """Invalid configuration; carries every violation found."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run description (validated)."""

    mode: str
    grid: GridSpec
    params: PlasmaParams
    coupling: str
    initial_kind: str
    j_beam: int
    initial_csv: str | None
    maxwellian_normalization: str
    t_final: float
    eps_q: float
    eps_c: float
    n_c_override: int | None
    k_override: int | None
    norm_u_t_override: float | None
    use_computed_a_norm: bool
    use_l1_f1: bool
    g_u_estimate: str
    reference_steps: int
    reference_order: int
    solver_method: str
    solver_route: str
    nnz_budget: int
    sweep_variable: str | None
    sweep_values: tuple
    out_dir: Path
    formats: tuple
    canonical: bool
    seed: int
    normalized_units: bool
    echo: dict = field(default_factory=dict, compare=False)


# ----------------------------------------------------------------------
# config parsing


def _get(cp, section, key, fallback=None):
    if cp.has_option(section, key):
        return cp.get(section, key)
    return fallback


def _get_typed(cp, section, key, cast, fallback, problems, what):
    raw = _get(cp, section, key)
    if raw is None:
        return fallback
    try:
        if cast is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return cast(raw)
    except (TypeError, ValueError):
        problems.append(f"[{section}] {key}: cannot parse {raw!r} as {what}")
        return fallback


def parse_config(
    path,
    mode: str,
    out_override: str | None = None,
    seed: int = 0,
    normalized: bool | None = None,
    canonical: bool | None = None,
) -> RunConfig:
    """Read, validate, and resolve an INI configuration.

    Collects every violation before raising, so one round trip shows
    all problems.  Mode/coupling combinations that cannot work (the
    ampere route has no convergent embedding or full nonlinear rate)
    are configuration errors, reported here.
    """
    if mode not in MODES:
        raise ConfigError([f"unknown mode {mode!r}"])
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError([f"config syntax: {exc}"]) from exc

    problems: list[str] = []

    # ---- units
    if normalized is None:
        normalized = _get_typed(cp, "plasma", "normalized", bool, False, problems, "bool")

    # ---- grid
    n_x = _get_typed(cp, "grid", "n_x", int, 4, problems, "int")
    n_v = _get_typed(cp, "grid", "n_v", int, 4, problems, "int")
    x_max = _get_typed(cp, "grid", "x_max", float, 1.0, problems, "float")
    v_max_raw = _get(cp, "grid", "v_max", "1.0")
    v_max_factor = _get_typed(cp, "grid", "thermal_factor", float, 10.0, problems, "float")

    # ---- plasma
    ncal = _get_typed(cp, "plasma", "ncal", float, 1.0, problems, "float")
    nu0 = _get_typed(cp, "plasma", "nu0", float, None, problems, "float")
    nu0_model = _get(cp, "plasma", "nu0_model", "explicit").strip().lower()
    temperature = _get_typed(cp, "plasma", "temperature", float, None, problems, "float")
    b_val = _get_typed(cp, "plasma", "b", float, None, problems, "float")
    nbar = _get_typed(cp, "plasma", "nbar", float, None, problems, "float")
    log_lambda = _get_typed(cp, "plasma", "log_lambda", float, 10.0, problems, "float")
    h_kind = _get(cp, "plasma", "h_coll", "quadratic").strip().lower()
    h_eps = _get_typed(cp, "plasma", "h_eps", float, 1.0e-3, problems, "float")
    maxw = _get(cp, "system", "maxwellian_normalization", "paper").strip().lower()

    # ---- system
    coupling = _get(cp, "system", "coupling", "gauss").strip().lower()

    # ---- initial
    init_kind = _get(cp, "initial", "kind", "two_beam").strip().lower()
    j_beam = _get_typed(cp, "initial", "j_beam", int, 1, problems, "int")
    csv_path = _get(cp, "initial", "csv_path", None)

    # ---- time / plan
    t_final = _get_typed(cp, "time", "t_final", float, 0.1, problems, "float")
    eps_q = _get_typed(cp, "time", "eps_q", float, 0.1, problems, "float")
    eps_c = _get_typed(cp, "time", "eps_c", float, 0.01, problems, "float")
    n_c_override = _get_typed(cp, "time", "n_c", int, None, problems, "int")
    k_override = _get_typed(cp, "time", "k", int, None, problems, "int")
    norm_u_t = _get_typed(cp, "time", "norm_u_t", float, None, problems, "float")
    use_computed = _get_typed(
        cp, "time", "use_computed_a_norm", bool, False, problems, "bool"
    )
    use_l1 = _get_typed(cp, "time", "use_l1_f1", bool, False, problems, "bool")
    g_u_estimate = _get(cp, "time", "g_u_estimate", "measured").strip().lower()

    # ---- solver
    solver_method = _get(cp, "solver", "method", "auto").strip().lower()
    solver_route = _get(cp, "solver", "route", "auto").strip().lower()
    nnz_budget = _get_typed(cp, "solver", "nnz_budget", int, 1_000_000, problems, "int")

    # ---- reference
    ref_steps = _get_typed(cp, "reference", "steps", int, 400, problems, "int")
    ref_order = _get_typed(cp, "reference", "order", int, 4, problems, "int")

    # ---- sweep
    sweep_variable = _get(cp, "sweep", "variable", None)
    sweep_values_raw = _get(cp, "sweep", "values", "")
    sweep_values: tuple = ()
    if sweep_variable is not None:
        sweep_variable = sweep_variable.strip().lower()
        try:
            sweep_values = tuple(
                int(tok) for tok in sweep_values_raw.replace(",", " ").split()
            )
        except ValueError:
            problems.append(f"[sweep] values: cannot parse {sweep_values_raw!r} as ints")

    # ---- output
    out_dir = _get(cp, "output", "directory", "out")
    formats_raw = _get(cp, "output", "formats", "json,csv")
    formats = tuple(
        tok.strip().lower() for tok in formats_raw.replace(",", " ").split()
    )
    if canonical is None:
        canonical = _get_typed(cp, "output", "canonical", bool, False, problems, "bool")

    # ---- validation
    if n_x < 1:
        problems.append(f"[grid] n_x must be >= 1, got {n_x}")
    if n_v < 2 or n_v % 2 != 0:
        problems.append(f"[grid] n_v must be even and >= 2, got {n_v}")
    if x_max <= 0:
        problems.append(f"[grid] x_max must be positive, got {x_max}")
    if coupling not in ("gauss", "ampere"):
        problems.append(f"[system] coupling must be gauss or ampere, got {coupling!r}")
    if coupling == "ampere" and mode in _AMPERE_BLOCKED:
        problems.append(
            f"[system] coupling=ampere cannot run mode={mode}: its linear part "
            "is non-dissipative (zero field columns force log-norm >= 0), so "
            "the embedding never converges; use mode=analyze for the diagnosis"
        )
    if maxw not in ("paper", "unit_mass"):
        problems.append(
            f"[system] maxwellian_normalization must be paper or unit_mass, got {maxw!r}"
        )
    if init_kind not in ("two_beam", "csv"):
        problems.append(f"[initial] kind must be two_beam or csv, got {init_kind!r}")
    if init_kind == "two_beam" and n_v >= 2 and not 1 <= j_beam <= n_v // 2:
        problems.append(
            f"[initial] j_beam must lie in 1..{n_v // 2} (negative-velocity half), "
            f"got {j_beam}"
        )
    if init_kind == "csv":
        if csv_path is None:
            problems.append("[initial] kind=csv needs csv_path")
        else:
            resolved = (path.parent / csv_path).resolve()
            if not resolved.is_file():
                problems.append(f"[initial] csv not found: {resolved}")
            csv_path = str(resolved)
    if t_final <= 0:
        problems.append(f"[time] t_final must be positive, got {t_final}")
    if not 0 < eps_q < 2:
        problems.append(f"[time] eps_q must lie in (0, 2), got {eps_q}")
    if eps_c <= 0:
        problems.append(f"[time] eps_c must be positive, got {eps_c}")
    if n_c_override is not None and n_c_override < 1:
        problems.append(f"[time] n_c must be >= 1, got {n_c_override}")
    if k_override is not None and k_override < 1:
        problems.append(f"[time] k must be >= 1, got {k_override}")
    if g_u_estimate not in ("measured", "maxwellian"):
        problems.append(
            f"[time] g_u_estimate must be measured or maxwellian, got {g_u_estimate!r}"
        )
    if solver_method not in ("auto", "direct", "iterative"):
        problems.append(f"[solver] method must be auto/direct/iterative, got {solver_method!r}")
    if solver_route not in ("auto", "stepping", "encoding", "both"):
        problems.append(
            f"[solver] route must be auto/stepping/encoding/both, got {solver_route!r}"
        )
    if ref_order not in (1, 2, 4):
        problems.append(f"[reference] order must be 1, 2, or 4, got {ref_order}")
    if ref_steps < 1:
        problems.append(f"[reference] steps must be >= 1, got {ref_steps}")
    if h_kind not in ("none", "quadratic"):
        problems.append(f"[plasma] h_coll must be none or quadratic, got {h_kind!r}")
    if h_eps < 0:
        problems.append(f"[plasma] h_eps must be >= 0, got {h_eps}")
    if nu0_model not in ("explicit", "coulomb"):
        problems.append(f"[plasma] nu0_model must be explicit or coulomb, got {nu0_model!r}")
    bad_formats = [f for f in formats if f not in ("json", "csv", "txt")]
    if bad_formats:
        problems.append(f"[output] unknown formats: {bad_formats}")
    if mode == "sweep":
        if sweep_variable not in ("n_c", "n_x", "n_v"):
            problems.append(
                f"[sweep] variable must be n_c, n_x, or n_v, got {sweep_variable!r}"
            )
        if not sweep_values:
            problems.append("[sweep] values must be a nonempty int list")
        elif sweep_variable == "n_c" and any(v < 1 for v in sweep_values):
            problems.append("[sweep] n_c values must be >= 1")
        elif sweep_variable == "n_v" and any(v < 2 or v % 2 for v in sweep_values):
            problems.append("[sweep] n_v values must be even and >= 2")
        elif sweep_variable == "n_x" and any(v < 1 for v in sweep_values):
            problems.append("[sweep] n_x values must be >= 1")

    # ---- resolve params
    params = None
    b_resolved = b_val
    if b_resolved is None and temperature is not None and temperature > 0:
        m_e = 1.0 if normalized else ELECTRON_MASS
        k_b = 1.0 if normalized else BOLTZMANN
        b_resolved = m_e / (2.0 * k_b * temperature)
    if temperature is not None and temperature <= 0:
        problems.append(f"[plasma] temperature must be positive, got {temperature}")
    if b_resolved is None:
        b_resolved = 1.0
    if b_resolved <= 0:
        problems.append(f"[plasma] decay factor b must be positive, got {b_resolved}")

    # ---- v_max policy
    v_max = None
    if isinstance(v_max_raw, str) and v_max_raw.strip().lower() == "thermal":
        if b_resolved > 0:
            v_max = v_max_factor / math.sqrt(b_resolved)
    else:
        try:
            v_max = float(v_max_raw)
        except (TypeError, ValueError):
            problems.append(f"[grid] v_max: cannot parse {v_max_raw!r} (number or 'thermal')")
    if v_max is not None and v_max <= 0:
        problems.append(f"[grid] v_max must be positive, got {v_max}")

    nu0_resolved = nu0
    if nu0_model == "coulomb":
        if nbar is None or temperature is None:
            problems.append("[plasma] nu0_model=coulomb needs nbar and temperature")
    elif nu0_resolved is None:
        nu0_resolved = 0.0
    if nu0_resolved is not None and nu0_resolved < 0:
        problems.append(f"[plasma] nu0 must be >= 0, got {nu0_resolved}")

    grid_obj = None
    if not problems:
        try:
            grid_obj = GridSpec(n_x=n_x, n_v=n_v, x_max=x_max, v_max=v_max)
        except ValueError as exc:
            problems.append(f"[grid] {exc}")
    if not problems:
        try:
            base = dict(
                ncal=ncal,
                b=b_resolved,
                nbar=nbar,
                log_lambda=log_lambda,
                nu0=0.0 if nu0_resolved is None else nu0_resolved,
            )
            params = (
                PlasmaParams.normalized(**base) if normalized else PlasmaParams(**base)
            )
            if nu0_model == "coulomb":
                params = _replace_params(params, nu0=params.collision_frequency_model())
            if h_kind == "quadratic" and params.nu0 > 0:
                h = quadratic_collision_variation(params.nu0, grid_obj.v_max, h_eps)
                params = _replace_params(params, h_coll=h)
        except ValueError as exc:
            problems.append(f"[plasma] {exc}")

    if problems:
        raise ConfigError(problems)

    env_out = os.environ.get("VLASOV_CARLEMAN_OUT")
    resolved_out = Path(out_override or env_out or out_dir)

    echo = {
        "grid": {"n_x": n_x, "n_v": n_v, "x_max": x_max, "v_max": v_max},
        "plasma": {
            "normalized": bool(normalized),
            "ncal": ncal,
            "b": b_resolved,
            "nu0": params.nu0,
            "nu0_model": nu0_model,
            "nbar": nbar,
            "log_lambda": log_lambda,
            "h_coll": h_kind,
            "h_eps": h_eps,
            "temperature_config": temperature,
        },
        "system": {"coupling": coupling, "maxwellian_normalization": maxw},
        "initial": {"kind": init_kind, "j_beam": j_beam, "csv_path": csv_path},
        "time": {
            "t_final": t_final,
            "eps_q": eps_q,
            "eps_c": eps_c,
            "n_c": n_c_override,
            "k": k_override,
            "norm_u_t": norm_u_t,
            "use_computed_a_norm": use_computed,
            "use_l1_f1": use_l1,
            "g_u_estimate": g_u_estimate,
        },
        "solver": {
            "method": solver_method,
            "route": solver_route,
            "nnz_budget": nnz_budget,
        },
        "reference": {"steps": ref_steps, "order": ref_order},
        "sweep": {
            "variable": sweep_variable,
            "values": list(sweep_values),
        },
        "output": {"formats": list(formats), "canonical": bool(canonical)},
    }

    return RunConfig(
        mode=mode,
        grid=grid_obj,
        params=params,
        coupling=coupling,
        initial_kind=init_kind,
        j_beam=j_beam,
        initial_csv=csv_path,
        maxwellian_normalization=maxw,
        t_final=t_final,
        eps_q=eps_q,
        eps_c=eps_c,
        n_c_override=n_c_override,
        k_override=k_override,
        norm_u_t_override=norm_u_t,
        use_computed_a_norm=use_computed,
        use_l1_f1=use_l1,
        g_u_estimate=g_u_estimate,
        reference_steps=ref_steps,
        reference_order=ref_order,
        solver_method=solver_method,
        solver_route=solver_route,
        nnz_budget=nnz_budget,
        sweep_variable=sweep_variable,
        sweep_values=sweep_values,
        out_dir=resolved_out,
        formats=formats,
        canonical=bool(canonical),
        seed=seed,
        normalized_units=bool(normalized),
        echo=echo,
    )


def _replace_params(params: PlasmaParams, **changes) -> PlasmaParams:
    fields = dict(
        q=params.q,
        m_e=params.m_e,
        eps0=params.eps0,
        k_b=params.k_b,
        ncal=params.ncal,
        b=params.b,
        nu0=params.nu0,
        h_coll=params.h_coll,
        nbar=params.nbar,
        log_lambda=params.log_lambda,
    )
    fields.update(changes)
    return PlasmaParams(**fields)


# ----------------------------------------------------------------------
# shared pipeline pieces


def _initial_state(cfg: RunConfig) -> np.ndarray:
    if cfg.initial_kind == "csv":
        return load_initial_csv(cfg.initial_csv, cfg.grid)
    return cfg.params.two_beam_initial(cfg.grid, BeamSpec(j_beam=cfg.j_beam))


def _maxwellian_state_norm(cfg: RunConfig) -> float:
    fm = cfg.params.maxwellian_vector(
        cfg.grid, normalization=cfg.maxwellian_normalization
    )
    return math.sqrt(cfg.grid.n_x) * float(np.linalg.norm(fm))


def _estimate_norm_u_t(cfg: RunConfig, ode, u_in) -> tuple[float, str]:
    """Solution norm at T for the plan: override, measured, or estimated."""
    if cfg.norm_u_t_override is not None:
        return cfg.norm_u_t_override, "override"
    if cfg.g_u_estimate == "maxwellian":
        return _maxwellian_state_norm(cfg), "maxwellian_estimate"
    run = reference.integrate_nonlinear(
        ode, u_in, cfg.t_final, steps=cfg.reference_steps, order=cfg.reference_order
    )
    return float(np.linalg.norm(run.u_final)), "measured"


def _analysis_block(
    report: analysis.ConvergenceReport,
    norm_f1: float | None,
    plan: analysis.TruncationPlan | None,
    accounting: dict | None,
) -> dict:
    """The stable JSON block shared by every mode (schema report_v1)."""
    block = {
        "mu": report.mu_f1,
        "norms": {
            "F2": report.norm_f2,
            "F1": norm_f1,
            "F0": report.norm_f0,
            "u_in": report.norm_u_in,
        },
        "R": None if math.isinf(report.r_value) else report.r_value,
        "R_asymptotic": (
            None
            if report.r_asymptotic is None or math.isinf(report.r_asymptotic)
            else report.r_asymptotic
        ),
        "gamma": report.gamma,
        "g_u": report.g_u,
        "eta": report.eta,
        "feasible": report.feasible,
        "verdict": report.verdict,
        "N_C": plan.n_c if plan else None,
        "k": plan.k if plan else None,
        "Omega": plan.omega if plan else None,
        "m": plan.m if plan else None,
        "tau": plan.tau if plan else None,
        "d_A": accounting["d_A"] if accounting else None,
        "s": accounting["s"] if accounting else None,
        "s_A": accounting["s_A"] if accounting else None,
        "kappaL_bound": accounting["kappaL_bound"] if accounting else None,
    }
    return block


def _gauss_pipeline(cfg: RunConfig, need_plan: bool) -> dict:
    """Build, certify, and (when feasible and wanted) plan the embedding."""
    t0 = time.perf_counter()
    ode = qode.gauss_ode(
        cfg.params, cfg.grid, normalization=cfg.maxwellian_normalization
    )
    u_in = _initial_state(cfg)
    report = analysis.convergence_report(ode, u_in, seed=cfg.seed)
    norm_f1 = (
        analysis.f1_norm_l1_bound(ode)
        if cfg.use_l1_f1
        else analysis.spectral_norm(ode.f1, seed=cfg.seed)
    )
    out = {
        "ode": ode,
        "u_in": u_in,
        "report": report,
        "norm_f1": norm_f1,
        "plan": None,
        "accounting": None,
        "rescaled": None,
        "timing_build": time.perf_counter() - t0,
    }
    report.eta = cfg.t_final / (cfg.eps_q * cfg.eps_c)
    if not (report.feasible and need_plan):
        return out
    ode_bar, u_bar, gamma = analysis.rescale(ode, u_in, report=report, seed=cfg.seed)
    norm_u_t, source = _estimate_norm_u_t(cfg, ode, u_in)
    report.g_u = report.norm_u_in / norm_u_t if norm_u_t > 0 else None
    norm_a = None
    plan = analysis.make_plan(
        ode_bar,
        u_bar,
        cfg.t_final,
        cfg.eps_q,
        eps_c=cfg.eps_c,
        norm_u_t_bar=norm_u_t / gamma,
        n_c=cfg.n_c_override,
        k=cfg.k_override,
        norm_a=norm_a,
        use_l1_f1=cfg.use_l1_f1,
        seed=cfg.seed,
    )
    if cfg.use_computed_a_norm:
        system = carleman.build_carleman(ode_bar, plan.n_c, nnz_budget=cfg.nnz_budget)
        norm_a = analysis.spectral_norm(system.a, seed=cfg.seed)
        plan = analysis.make_plan(
            ode_bar,
            u_bar,
            cfg.t_final,
            cfg.eps_q,
            eps_c=cfg.eps_c,
            norm_u_t_bar=norm_u_t / gamma,
            n_c=plan.n_c,
            k=cfg.k_override,
            norm_a=norm_a,
            use_l1_f1=cfg.use_l1_f1,
            seed=cfg.seed,
        )
        out["system"] = system
    out["plan"] = plan
    out["accounting"] = analysis.complexity_accounting(ode, plan)
    out["rescaled"] = (ode_bar, u_bar, gamma)
    out["norm_u_t"] = norm_u_t
    out["norm_u_t_source"] = source
    return out


# ----------------------------------------------------------------------
# mode runners


def run_feasibility(cfg: RunConfig) -> tuple[dict, int]:
    p = cfg.params
    temperature = p.temperature
    nv_bound = p.nv_feasibility_bound(cfg.grid.x_max, temperature)
    xt_bound = p.xmax_temperature_bound(cfg.grid.n_v)
    feasible = cfg.grid.n_v <= nv_bound
    results = {
        "temperature_K": temperature,
        "x_max": cfg.grid.x_max,
        "n_v_configured": cfg.grid.n_v,
        "n_v_bound": nv_bound,
        "xmax_temperature_bound": xt_bound,
        "feasible": feasible,
        "verdict": (
            "feasible: configured n_v within the convergence bound"
            if feasible
            else "infeasible: configured n_v exceeds the convergence bound"
        ),
    }
    if p.nbar is not None:
        results["nu0_model"] = p.collision_frequency_model()
    report = {
        "analysis": _analysis_block_empty(results["verdict"], feasible),
        "results": results,
    }
    return report, 0 if feasible else 2


def _analysis_block_empty(verdict: str, feasible: bool) -> dict:
    return {
        "mu": None,
        "norms": {"F2": None, "F1": None, "F0": None, "u_in": None},
        "R": None,
        "R_asymptotic": None,
        "gamma": None,
        "g_u": None,
        "eta": None,
        "feasible": feasible,
        "verdict": verdict,
        "N_C": None,
        "k": None,
        "Omega": None,
        "m": None,
        "tau": None,
        "d_A": None,
        "s": None,
        "s_A": None,
        "kappaL_bound": None,
    }


def run_analyze(cfg: RunConfig) -> tuple[dict, int]:
    if cfg.coupling == "ampere":
        ode = qode.ampere_ode(cfg.params, cfg.grid)
        diag = analysis.ampere_diagnosis(ode, seed=cfg.seed)
        block = _analysis_block_empty(diag.verdict, False)
        block["mu"] = diag.mu_f1
        block["norms"]["F1"] = analysis.spectral_norm(ode.f1, seed=cfg.seed)
        block["norms"]["F0"] = float(np.linalg.norm(ode.f0))
        report = {"analysis": block, "results": {"ampere_diagnosis": diag.as_dict()}}
        return report, 2
    pipe = _gauss_pipeline(cfg, need_plan=True)
    rep = pipe["report"]
    block = _analysis_block(rep, pipe["norm_f1"], pipe["plan"], pipe["accounting"])
    results = {}
    if pipe["plan"] is not None:
        results["plan"] = pipe["plan"].as_dict()
        results["norm_u_T"] = pipe["norm_u_t"]
        results["norm_u_T_source"] = pipe["norm_u_t_source"]
        results["classical_ops"] = pipe["accounting"]["classical_ops"]
    report = {"analysis": block, "results": results}
    return report, 0 if rep.feasible else 2


def _write_state_csv(path: Path, f: np.ndarray) -> None:
    np.savetxt(path, f, delimiter=",", fmt="%.17e")


def run_carleman_mode(cfg: RunConfig):
    pipe = _gauss_pipeline(cfg, need_plan=True)
    rep = pipe["report"]
    if not rep.feasible:
        block = _analysis_block(rep, pipe["norm_f1"], None, None)
        return {"analysis": block, "results": {}}, 2
    ode_bar, u_bar, gamma = pipe["rescaled"]
    plan = pipe["plan"]
    system = pipe.get("system")
    if system is None:
        system = carleman.build_carleman(ode_bar, plan.n_c, nnz_budget=cfg.nnz_budget)
    z0 = carleman.build_z0(u_bar, plan.n_c).z

    t0 = time.perf_counter()
    route = cfg.solver_route
    enc_dim = (plan.m + plan.p + 1) * (plan.k + 1) * system.d_a
    if route == "auto":
        route = "both" if enc_dim <= 50_000 else "stepping"
    results: dict = {"route": route, "encoding_dim": enc_dim}
    stepping = None
    encoded = None
    if route in ("stepping", "both"):
        stepping = integrator.evolve_iterative(
            system, z0, plan, store_trajectory=False
        )
    if route in ("encoding", "both"):
        enc = integrator.build_linear_encoding(system, z0, plan)
        encoded = integrator.solve_encoding(enc, method=cfg.solver_method)
        results["solve_diagnostics"] = encoded.diagnostics
    final = encoded if encoded is not None else stepping
    if stepping is not None and encoded is not None:
        denom = max(float(np.linalg.norm(stepping.y_final)), 1e-300)
        results["stepping_vs_encoding_rel"] = float(
            np.linalg.norm(stepping.y_final - encoded.y_final) / denom
        )
    f_t, info = integrator.extract_solution(final, gamma, cfg.grid)
    results.update(info)
    results["final_norm"] = float(np.linalg.norm(f_t.reshape(-1)))
    results["timing_solve"] = time.perf_counter() - t0
    results["plan"] = plan.as_dict()
    results["norm_u_T_source"] = pipe["norm_u_t_source"]

    block = _analysis_block(rep, pipe["norm_f1"], plan, pipe["accounting"])
    report = {"analysis": block, "results": results}
    artifacts = {"state_carleman.csv": f_t}
    return report, 0, artifacts


def run_reference_mode(cfg: RunConfig):
    ode = qode.gauss_ode(
        cfg.params, cfg.grid, normalization=cfg.maxwellian_normalization
    )
    u_in = _initial_state(cfg)
    t0 = time.perf_counter()
    run = reference.integrate_nonlinear(
        ode,
        u_in,
        cfg.t_final,
        steps=cfg.reference_steps,
        order=cfg.reference_order,
    )
    f_t = run.u_final.reshape(cfg.grid.n_x, cfg.grid.n_v)
    results = {
        "steps": run.steps,
        "order": run.order,
        "rhs_evals": run.rhs_evals,
        "final_norm": float(np.linalg.norm(run.u_final)),
        "initial_norm": float(np.linalg.norm(u_in)),
        "timing_solve": time.perf_counter() - t0,
    }
    block = _analysis_block_empty("reference run (no embedding)", True)
    report = {"analysis": block, "results": results}
    return report, 0, {"state_reference.csv": f_t}


def run_compare(cfg: RunConfig):
    out = run_carleman_mode(cfg)
    if out[1] != 0:
        return out[0], out[1]
    report, _, artifacts = out
    ode = qode.gauss_ode(
        cfg.params, cfg.grid, normalization=cfg.maxwellian_normalization
    )
    u_in = _initial_state(cfg)
    run = reference.integrate_nonlinear(
        ode,
        u_in,
        cfg.t_final,
        steps=cfg.reference_steps,
        order=cfg.reference_order,
    )
    f_ref = run.u_final.reshape(cfg.grid.n_x, cfg.grid.n_v)
    f_carl = artifacts["state_carleman.csv"]
    errors = reference.compare_solutions(f_ref.reshape(-1), f_carl.reshape(-1))
    plan = report["results"]["plan"]
    errors["classical_ops"] = reference.classical_cost(
        plan["k"], plan["m"], cfg.grid.n_points
    )
    errors["reference_rhs_evals"] = run.rhs_evals
    report["results"]["comparison"] = errors
    artifacts["state_reference.csv"] = f_ref
    return report, 0, artifacts


def run_sweep(cfg: RunConfig):
    rows: list[dict] = []
    if cfg.sweep_variable == "n_c":
        for val in sorted(cfg.sweep_values):
            point_cfg = _with_overrides(cfg, n_c_override=val, mode="compare")
            rep, code = run_compare(point_cfg)[:2]
            comp = rep["results"].get("comparison", {})
            rows.append(
                {
                    "n_c": val,
                    "exit": code,
                    "rel_l2": comp.get("rel_l2"),
                    "normalized_state_error": comp.get("normalized_state_error"),
                    "d_A": rep["analysis"]["d_A"],
                    "k": rep["analysis"]["k"],
                    "m": rep["analysis"]["m"],
                }
            )
        key = "n_c"
    else:
        key = cfg.sweep_variable
        for val in sorted(cfg.sweep_values):
            g = cfg.grid
            try:
                new_grid = GridSpec(
                    n_x=val if key == "n_x" else g.n_x,
                    n_v=val if key == "n_v" else g.n_v,
                    x_max=g.x_max,
                    v_max=g.v_max,
                )
            except ValueError as exc:
                rows.append({key: val, "error": str(exc)})
                continue
            point_cfg = _with_overrides(cfg, grid=new_grid, mode="analyze")
            ode = qode.gauss_ode(
                point_cfg.params,
                new_grid,
                normalization=point_cfg.maxwellian_normalization,
            )
            u_in = _initial_state(point_cfg)
            rep = analysis.convergence_report(ode, u_in, seed=cfg.seed)
            rows.append(
                {
                    key: val,
                    "R": None if math.isinf(rep.r_value) else rep.r_value,
                    "mu": rep.mu_f1,
                    "norm_F2": rep.norm_f2,
                    "feasible": rep.feasible,
                }
            )
    block = _analysis_block_empty(f"sweep over {key}", True)
    report = {"analysis": block, "results": {"variable": key, "rows": rows}}
    return report, 0, {"sweep.csv": rows}


def _with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    from dataclasses import replace

    return replace(cfg, **changes)


# ----------------------------------------------------------------------
# emission


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _strip_timings(obj):
    """Drop every timing key so canonical reports are byte-stable."""
    if isinstance(obj, dict):
        return {
            k: _strip_timings(v)
            for k, v in obj.items()
            if not k.startswith("timing")
        }
    if isinstance(obj, list):
        return [_strip_timings(v) for v in obj]
    return obj


def _sanitize(obj):
    """Make a report strictly JSON-safe: non-finite floats become strings."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        if math.isfinite(val):
            return val
        return "inf" if val > 0 else ("-inf" if val < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    return obj


def _write_sweep_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    keys: list[str] = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join("" if row.get(k) is None else repr(row.get(k)) for k in keys))
    path.write_text("\n".join(lines) + "\n")


def _summary_text(report: dict) -> str:
    block = report["analysis"]
    lines = [
        f"mode: {report['mode']}",
        f"verdict: {block['verdict']}",
        f"feasible: {block['feasible']}",
    ]
    if block["R"] is not None:
        lines.append(f"R = {block['R']:.6g}")
    if block["mu"] is not None:
        lines.append(f"mu(F1) = {block['mu']:.6g}")
    if block["gamma"] is not None:
        lines.append(f"gamma = {block['gamma']:.6g}")
    if block["N_C"] is not None:
        lines.append(
            f"N_C = {block['N_C']}, k = {block['k']}, m = {block['m']}, "
            f"tau = {block['tau']:.6g}, d_A = {block['d_A']}"
        )
    return "\n".join(lines) + "\n"


def emit(report: dict, cfg: RunConfig, artifacts: dict | None = None) -> Path:
    """Write the report and per-mode artifacts to the output directory."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    if "json" in cfg.formats:
        path = cfg.out_dir / "report.json"
        with open(path, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
    if "txt" in cfg.formats:
        (cfg.out_dir / "summary.txt").write_text(_summary_text(report))
    if artifacts and "csv" in cfg.formats:
        for name, payload in artifacts.items():
            path = cfg.out_dir / name
            if isinstance(payload, list):
                _write_sweep_csv(path, payload)
            else:
                _write_state_csv(path, np.asarray(payload))
    return cfg.out_dir


# ----------------------------------------------------------------------
# entry point


_RUNNERS = {
    "analyze": run_analyze,
    "feasibility": run_feasibility,
    "run-carleman": run_carleman_mode,
    "run-reference": run_reference_mode,
    "compare": run_compare,
    "sweep": run_sweep,
}


def run(cfg: RunConfig) -> tuple[dict, int]:
    """Dispatch a validated config; returns (report, exit_code)."""
    t0 = time.perf_counter()
    out = _RUNNERS[cfg.mode](cfg)
    if len(out) == 2:
        report, code = out
        artifacts = None
    else:
        report, code, artifacts = out
    report["schema"] = SCHEMA_VERSION
    report["mode"] = cfg.mode
    report["coupling"] = cfg.coupling
    report["seed"] = cfg.seed
    report["config"] = cfg.echo
    report["exit_code"] = code
    if cfg.canonical:
        report = _strip_timings(report)
    else:
        report["timings"] = {"total_s": time.perf_counter() - t0}
    report = _sanitize(report)
    emit(report, cfg, artifacts)
    return report, code


def _build_argparser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vlasov-carleman",
        description=(
            "Embed a collisional phase-space model into a truncated linear "
            "system, evolve it, and compare against direct integration."
        ),
    )
    sub = ap.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sp = sub.add_parser(mode)
        sp.add_argument("--config", required=True, help="INI configuration file")
        sp.add_argument("--out", default=None, help="output directory override")
        sp.add_argument("--seed", type=int, default=0, help="iteration seed")
        sp.add_argument(
            "--normalized",
            action="store_true",
            default=None,
            help="force all physical constants to 1",
        )
        sp.add_argument(
            "--canonical",
            action="store_true",
            default=None,
            help="byte-stable report (no timings)",
        )
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _build_argparser().parse_args(argv)
    try:
        cfg = parse_config(
            args.config,
            args.mode,
            out_override=args.out,
            seed=args.seed,
            normalized=args.normalized,
            canonical=args.canonical,
        )
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 1
    try:
        _, code = run(cfg)
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
