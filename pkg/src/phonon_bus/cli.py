"""
Batch front-end: ``phonon-bus <scheme> --config FILE``.

Every run validates the whole config (including every sweep point) first,
computes everything in memory, and only then writes CSV tables (and SVG
figures with ``--svg``). Exit codes: 0 success, 2 configuration error (no
files written), 3 numerical-contract violation.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from . import chain as ch
from . import dynamics as dy
from . import hilbert as hs
from . import output, plotting
from . import schemes as sc
from .config import SCHEMES, ExperimentConfig, point_seed
from .errors import ConvergenceError, NumericalContractError, TruncationLeakageError
from .schemes import heating, ms, sjm
from .schemes.kick import kick_gate

REFERENCE_OMEGA = 2 * np.pi * 1e6   # SI anchor for natural-unit heating runs


class ConfigError(Exception):
    pass


def _check_leakage(report, what):
    if report.leakage > hs.LEAKAGE_LIMIT:
        raise TruncationLeakageError(
            f"{what}: truncation leakage {report.leakage:.3g} exceeds {hs.LEAKAGE_LIMIT:g}; "
            "raise the cutoff")


def _chain(p, units):
    omega = p.omega_x if units == "si" else REFERENCE_OMEGA
    return ch.IonChain(p.N, p.mass_amu * ch.AMU, omega)


# ---------------------------------------------------------------- runners
# each returns (tables, figures): tables name -> (columns, rows);
# figures name -> (kind, kwargs) for plotting

def run_modes(p, units, num, seed):
    chain = _chain(p, units)
    modes = chain.modes()
    u = ch.equilibrium_positions(p.N)
    scale = 1.0 if units == "natural" else chain.omega_x
    rows = [[m.p, m.ratio, m.omega_p / chain.omega_x * scale] for m in modes]
    vec = [[m.p, n + 1, float(m.b[n])] for m in modes for n in range(p.N)]
    pos = [[n + 1, float(u[n]), float(u[n] * chain.length_scale) if units == "si" else None]
           for n in range(p.N)]
    tables = {"modes": (["p", "omega_ratio", "omega"], rows),
              "mode_vectors": (["p", "ion", "b"], vec),
              "positions": (["ion", "u", "x_m"], pos)}
    figs = {"modes": ("bar", dict(labels=[m.p for m in modes], values=[m.ratio for m in modes],
                                  ylabel="omega_p / omega_x", title=f"axial modes, N = {p.N}"))}
    return tables, figs


def _noise(p, units):
    if units == "si":
        return p.e_rms, p.coherence_time, p.duration, 1.0
    # natural units: M = hbar = omega_x = e = 1, mapped onto an SI reference chain
    M = p.mass_amu * ch.AMU
    E0 = np.sqrt(M * ch.HBAR * REFERENCE_OMEGA ** 3) / ch.E_CHARGE
    t0 = 1 / REFERENCE_OMEGA
    return p.e_rms * E0, p.coherence_time * t0, p.duration * t0, t0


def run_heat(p, units, num, seed):
    chain = _chain(p, units)
    e_rms, T, duration, t_unit = _noise(p, units)
    noise = dy.NoiseField(e_rms, T, "ou" if p.model == "ou" else "piecewise", seed=seed)
    modes = p.modes or list(range(1, p.N + 1))
    initial = {}
    for k, st in p.initial.items():
        initial[int(k)] = ("fock", st.fock) if st.fock is not None else \
            ("coherent", complex(*st.coherent))
    dt = None if num.dt is None else num.dt * t_unit
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = heating.simulate_heating(chain, noise, duration, modes, num.trials, dt=dt,
                                       initial=initial, method=p.method,
                                       cutoff=num.cutoff or 30, n_samples=p.n_samples,
                                       master_seed=seed, threads=num.threads)
    times = res.times / t_unit
    occ = [[float(t), m, float(res.mean[k, i]), float(res.stderr[k, i])]
           for k, m in enumerate(res.modes) for i, t in enumerate(times)]
    inv_tau = 0.0 if np.isinf(res.tau) else t_unit / res.tau
    rate = [[m, float(res.rate[k] * t_unit), float(res.rate_stderr[k] * t_unit),
             float(res.exact_rate[k] * t_unit), inv_tau] for k, m in enumerate(res.modes)]
    tables = {"heat_occupation": (["t", "mode", "n_mean", "n_stderr"], occ),
              "heat_rate": (["mode", "rate_fit", "rate_stderr", "rate_exact", "inv_tau_N"], rate)}
    figs = {"heat": ("line", dict(x=times, series={f"mode {m}": res.mean[k]
                                                   for k, m in enumerate(res.modes)},
                                  xlabel="t", ylabel="<n>", title="uniform-field heating"))}
    return tables, figs


def run_kick(p, units, num, seed):
    chain = _chain(p, units)
    r = kick_gate(chain, p.eta0, p.n_modes, flip_time=p.flip_time, wait=p.wait,
                  cutoff=num.cutoff or 12, max_periods=p.max_periods,
                  resolution=p.resolution)
    _check_leakage(r, "kick gate")
    d = r.diagnostics
    summary = [[p.n_modes, r.fidelity, d["revival_time"], d["revival_found"],
                d["fidelity_at_one_period"], d["residual_excitation"], d["separation_at_flip"][1]]]
    truth = [[k, v] for k, v in r.sector_fidelities.items()]
    tables = {"kick_gate": (["n_modes", "fidelity", "revival_time", "revival_found",
                             "fidelity_one_period", "residual_excitation",
                             "separation_ion2_m"], summary),
              "kick_truth_table": (["input", "fidelity"], truth)}
    figs = {}
    if d["search_curve"] is not None:
        t, f = d["search_curve"]
        tables["kick_revival"] = (["t", "fidelity"], [[float(a), float(b)] for a, b in zip(t, f)])
        figs["kick_revival"] = ("line", dict(x=t / (2 * np.pi), series={"truth table": f},
                                             xlabel="t / trap period", ylabel="fidelity"))
    return tables, figs


def run_ms(p, units, num, seed):
    w = p.omega_x if units == "si" else 1.0
    delta, rabi = p.delta / w, p.rabi / w
    chi = p.chi / w
    if p.eta is None:
        drive = ms.ms_drive_for_chi(chi, delta, rabi)
    else:
        drive = sc.LaserDrive(rabi=rabi, detuning=delta, eta=p.eta, kind="bichromatic")
    duration = "auto" if p.duration is None else p.duration * w
    r = ms.ms_gate(drive, duration=duration, sectors=tuple(p.sectors),
                   cutoff=num.cutoff or max(p.sectors) + 6, exact=p.exact)
    _check_leakage(r, "MS gate")
    d = r.diagnostics
    sectors = [[n, r.sector_fidelities[n], d["effective_sector_fidelities"][n],
                d["mutual_fidelity"].get(n)] for n in p.sectors]
    summary = [[p.delta, d["chi"] * w, r.duration / w, d["gap"], d["coefficient"] * w,
                drive.eta]]
    tables = {"ms_sectors": (["n", "fidelity_exact", "fidelity_effective", "mutual_fidelity"],
                             sectors),
              "ms_summary": (["delta", "chi", "duration", "gap", "jy2_diag", "eta"], summary)}
    figs = {"ms_sectors": ("bar", dict(labels=p.sectors, values=[1 - s[1] for s in sectors],
                                       ylabel="1 - fidelity (exact)", title="MS gate"))}
    return tables, figs


def run_dhm(p, units, num, seed):
    w = p.omega_x if units == "si" else 1.0
    drive = sc.LaserDrive(rabi=p.rabi / w, detuning=p.detuning / w, eta=p.eta,
                          kind="standing_wave")
    S, r = sjm.dhm_phase_gate(drive, p.mode, sectors=p.sectors, cutoff=num.cutoff)
    _check_leakage(r, "S_t gate")
    sp = S.space
    phases = [[n, lev, float(S.matrix[sp.index((lev, n)), sp.index((lev, n))].real)]
              for n in range(sp.dims[1]) for lev in (hs.EXCITED, hs.GROUND)]
    sectors = [[n, f] for n, f in r.sector_fidelities.items()]
    tables = {"dhm_sectors": (["n", "fidelity"], sectors),
              "dhm_summary": (["mode", "detuning", "duration", "fidelity"],
                              [[p.mode, p.detuning, r.duration / w, r.fidelity]]),
              "dhm_phases": (["n", "level", "s_t_diagonal"], phases)}
    figs = {"dhm_sectors": ("bar", dict(labels=list(r.sector_fidelities),
                                        values=list(r.sector_fidelities.values()),
                                        ylabel="sector fidelity", ylim=(0.9, 1.0)))}
    return tables, figs


def run_stirap(p, units, num, seed):
    w = p.omega_x if units == "si" else 1.0
    pump, stokes = sjm.stirap_pulses(p.T * w, p.peak / w, p.direction,
                                     None if p.stokes_peak is None else p.stokes_peak / w,
                                     p.shape, p.window)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = sjm.stirap_transfer(pump, stokes, p.direction, sectors=p.sectors,
                                cutoff=num.cutoff, detuning=p.detuning / w)
    _check_leakage(r, "adiabatic passage")
    d = r.diagnostics
    sectors = [[n, r.sector_fidelities[n], d["p3_max"][n]] for n in p.sectors]
    spread = max(r.sector_fidelities.values()) - min(r.sector_fidelities.values())
    tables = {"stirap_sectors": (["n", "fidelity", "p3_max"], sectors),
              "stirap_summary": (["T", "peak", "direction", "fidelity", "spread",
                                  "idle_deviation"],
                                 [[p.T, p.peak, p.direction, r.fidelity, spread,
                                   d["idle_deviation"]]])}
    figs = {"stirap_sectors": ("bar", dict(labels=p.sectors, values=[s[1] for s in sectors],
                                           ylabel="transfer fidelity", ylim=(0.9, 1.0)))}
    return tables, figs


def run_crot(p, units, num, seed):
    w = p.omega_x if units == "si" else 1.0
    dhm_drive = sc.LaserDrive(rabi=p.dhm_rabi / w, detuning=p.dhm_detuning / w, eta=p.dhm_eta,
                              kind="standing_wave")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = sjm.crot_sequence(tuple(p.program), sectors=p.sectors, cutoff=num.cutoff,
                              integrated=set(p.integrated), dhm_drive=dhm_drive,
                              stirap_T=p.stirap_T * w, stirap_peak=p.stirap_peak / w)
    d = r.diagnostics
    sectors = [[n, r.sector_fidelities[n], d["sector_deviation"][n], d["bus_return"][n]]
               for n in p.sectors]
    blocks = []
    for n in p.sectors:
        M = d["sector_unitaries"][n]
        blocks += [[n, i, j, float(M[i, j].real), float(M[i, j].imag)]
                   for i in range(4) for j in range(4)]
    tables = {"crot_sectors": (["n", "fidelity_cz", "max_deviation", "bus_return"], sectors),
              "crot_unitaries": (["n", "row", "col", "re", "im"], blocks)}
    figs = {"crot_sectors": ("bar", dict(labels=p.sectors, values=[s[1] for s in sectors],
                                         ylabel="overlap with controlled-Z", ylim=(0, 1.05),
                                         title=" ".join(p.program)))}
    return tables, figs


def run_spectator(p, units, num, seed):
    chain = _chain(p, units)
    pops = {int(k): n for k, n in p.populations.items()}
    r = sjm.spectator_phase_error(chain, p.bus_mode, pops, p.ion)
    terms = [[k, pops[k], r["terms"][k]] for k in sorted(pops)]
    tables = {"spectator_terms": (["mode", "n", "delta_phi"], terms),
              "spectator_summary": (["bus_mode", "delta_phi", "fidelity_loss", "gate_fidelity"],
                                    [[p.bus_mode, r["delta_phi"], r["fidelity_loss"],
                                      r["gate_fidelity"]]])}
    figs = {"spectator": ("bar", dict(labels=[t[0] for t in terms], values=[t[2] for t in terms],
                                      ylabel="phase error (rad)"))}
    return tables, figs


RUNNERS = {"modes": run_modes, "heat": run_heat, "kick": run_kick, "ms": run_ms,
           "dhm": run_dhm, "stirap": run_stirap, "crot": run_crot,
           "spectator": run_spectator}


# ---------------------------------------------------------------- driver

def load_config(args) -> tuple[ExperimentConfig, str]:
    raw = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    if raw.get("scheme", args.scheme) != args.scheme:
        raise ConfigError(f"config is for scheme {raw['scheme']!r}, command line asks for "
                          f"{args.scheme!r}")
    raw["scheme"] = args.scheme
    if args.seed is not None:
        raw["seed"] = args.seed
    numerics = dict(raw.get("numerics") or {})
    if args.trials is not None:
        numerics["trials"] = args.trials
    if args.cutoff is not None:
        numerics["cutoff"] = args.cutoff
    if args.threads is not None:
        numerics["threads"] = args.threads
    raw["numerics"] = numerics
    out = dict(raw.get("output") or {})
    if args.out is not None:
        out["dir"] = args.out
    if args.svg:
        out["svg"] = True
    raw["output"] = out
    if args.n is not None:
        params = dict(raw.get("params") or {})
        params["N"] = args.n
        raw["params"] = params
    try:
        cfg = ExperimentConfig(**raw)
    except ValidationError as e:
        raise ConfigError(str(e)) from e
    return cfg, json.dumps(provenance(cfg), indent=1, sort_keys=True)


def provenance(cfg: ExperimentConfig) -> dict:
    """The config minus settings that cannot change results (paths, thread count)."""
    d = cfg.model_dump(mode="json")
    d.pop("output")
    d["numerics"].pop("threads")
    return d


def execute(cfg: ExperimentConfig):
    """Run every grid point; returns aggregated tables and per-point figures."""
    runner = RUNNERS[cfg.scheme]
    grid = cfg.grid()
    keys = sorted(cfg.sweep) if cfg.sweep else []
    tables, figures = {}, {}
    for i, point in enumerate(grid):
        params = cfg.point_params(point)
        t, f = runner(params, cfg.units, cfg.numerics, point_seed(cfg.seed, i))
        for name, (cols, rows) in t.items():
            extra = [k for k in keys if k not in cols]
            if name not in tables:
                tables[name] = (extra + cols, [])
            tables[name][1].extend([[point[k] for k in extra] + r for r in rows])
        suffix = f"_{i:04d}" if len(grid) > 1 else ""
        figures.update({name + suffix: spec for name, spec in f.items()})
    if len(grid) > 1 and cfg.scheme == "ms":
        cols, rows = tables["ms_summary"]
        x = [r[cols.index("delta")] for r in rows]
        figures["ms_gap_sweep"] = ("line", dict(x=x, series={"gap": [r[cols.index("gap")]
                                                                      for r in rows]},
                                               xlabel="delta / omega_x", ylabel="1 - F",
                                               logy=True, marker="o"))
    return tables, figures


def render_figures(out_dir: Path, prefix: str, figures: dict) -> list[Path]:
    paths = []
    for name, (kind, kw) in figures.items():
        path = out_dir / f"{prefix}{name}.svg"
        if kind == "line":
            plotting.line_plot(path, **kw)
        else:
            plotting.bar_plot(path, **kw)
        paths.append(path)
    return paths


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phonon-bus",
                                 description="Trapped-ion phonon-bus experiments.")
    ap.add_argument("scheme", choices=SCHEMES)
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--trials", type=int, help="Monte Carlo trajectories")
    ap.add_argument("--cutoff", type=int, help="Fock cutoff")
    ap.add_argument("--threads", type=int, help="worker threads (default PHONON_BUS_THREADS)")
    ap.add_argument("--n", type=int, help="number of ions (chain schemes)")
    ap.add_argument("--svg", action="store_true", help="also write SVG figures")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, echo = load_config(args)
        tables, figures = execute(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (NumericalContractError, ConvergenceError) as e:
        print(f"numerical contract violated: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        # parameter guards raised by the physics layer (e.g. detuning too small)
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out_dir = Path(cfg.output.dir)
    header = {"hash": output.config_hash(provenance(cfg)), "seed": cfg.seed,
              "echo": echo}
    paths = output.write_tables(out_dir, cfg.output.prefix, tables, header)
    if cfg.output.svg:
        paths += render_figures(out_dir, cfg.output.prefix, figures)
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
