"""Command-line driver: simulate -> estimate -> discriminate -> tomography.

Subcommands: ``run``, ``fisher-scan``, ``qcrb-check``, ``tomo``, ``report``.
Angles in config files and on the command line are degrees; everything
inside the library is radians.

Exit codes: 0 success, 2 configuration error, 3 runtime or statistical
failure, 4 I/O error.
"""

import argparse
import copy
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import estimation, kernels, linalg, measurement, simulator, states, tomography
from .errors import ConfigError, EntcrbError

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4
_U64_MAX = (1 << 64) - 1

# reference campaign: waveplate angle (deg) and mixing for seven configurations
REFERENCE_CONFIGS = [(10, 0.85), (15, 0.88), (20, 0.88), (28, 0.85), (40, 0.92), (45, 0.93), (45, 0.97)]


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "coherent"
    phi_degrees: float = 45.0
    p: float = 1.0
    seed: int = 0
    mean_total: float = 1e4
    runs: int = 30
    window_seconds: float = 10.0
    main_setting_deg: tuple = (-45.0, 45.0)
    diagonal_setting_deg: tuple = (0.0, 0.0)
    shuffle: bool = True
    shuffle_mode: str = "per-outcome"
    multinomial: bool = False
    werner_compare: bool = True
    tomography: bool = False
    tomo_counts: float = 1e5
    tomo_linear: bool = False
    name: str = ""
    out: str = ""

    @property
    def params(self):
        return states.StateParams(self.model, math.radians(self.phi_degrees), self.p)

    @property
    def main_setting(self):
        return measurement.MeasurementSetting.degrees(*self.main_setting_deg)

    @property
    def diagonal_setting(self):
        return measurement.MeasurementSetting.degrees(*self.diagonal_setting_deg)

    def to_json(self):
        d = asdict(self)
        d["main_setting_deg"] = list(self.main_setting_deg)
        d["diagonal_setting_deg"] = list(self.diagonal_setting_deg)
        d.pop("out")
        return d


_FIELDS = set(ExperimentConfig.__dataclass_fields__)


def _number(doc, key, lo=None, hi=None, integer=False):
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    if integer and (not float(value).is_integer()):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    if not math.isfinite(value) or (lo is not None and value < lo) or (hi is not None and value > hi):
        raise ConfigError(f"{key} = {value!r} out of range [{lo}, {hi}]")
    return int(value) if integer else float(value)


def _validate(doc):
    if not isinstance(doc, dict):
        raise ConfigError(f"configuration entry must be an object, got {type(doc).__name__}")
    unknown = sorted(set(doc) - _FIELDS - {"schema_version"})
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    out = {}
    if "model" in doc:
        if str(doc["model"]).lower() not in ("coherent", "werner"):
            raise ConfigError(f"model must be 'coherent' or 'werner', got {doc['model']!r}")
        out["model"] = str(doc["model"]).lower()
    if "phi_degrees" in doc:
        out["phi_degrees"] = _number(doc, "phi_degrees", 0.0, 45.0)
    if "p" in doc:
        out["p"] = _number(doc, "p", 0.0, 1.0)
    if "seed" in doc:
        out["seed"] = _number(doc, "seed", 0, _U64_MAX, integer=True)
    if "mean_total" in doc:
        out["mean_total"] = _number(doc, "mean_total", 1e-12)
    if "runs" in doc:
        out["runs"] = _number(doc, "runs", 2, 10**8, integer=True)
    if "window_seconds" in doc:
        out["window_seconds"] = _number(doc, "window_seconds", 1e-12)
    if "tomo_counts" in doc:
        out["tomo_counts"] = _number(doc, "tomo_counts", 1.0)
    for key in ("main_setting_deg", "diagonal_setting_deg"):
        if key in doc:
            v = doc[key]
            if not (isinstance(v, (list, tuple)) and len(v) == 2
                    and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
                raise ConfigError(f"{key} must be a pair of angles in degrees, got {v!r}")
            out[key] = (float(v[0]), float(v[1]))
    for key in ("shuffle", "multinomial", "werner_compare", "tomography", "tomo_linear"):
        if key in doc:
            if not isinstance(doc[key], bool):
                raise ConfigError(f"{key} must be true or false, got {doc[key]!r}")
            out[key] = doc[key]
    if "shuffle_mode" in doc:
        if doc["shuffle_mode"] not in ("per-outcome", "whole-vector"):
            raise ConfigError(f"shuffle_mode must be 'per-outcome' or 'whole-vector', got {doc['shuffle_mode']!r}")
        out["shuffle_mode"] = doc["shuffle_mode"]
    for key in ("name", "out"):
        if key in doc:
            out[key] = str(doc[key])
    return ExperimentConfig(**out)


def _load(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from None
    if isinstance(doc, dict) and "schema_version" in doc and doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {doc['schema_version']!r} (expected {SCHEMA_VERSION})")
    return doc


def parse_config(text):
    """One experiment configuration from a JSON object, defaults applied."""
    doc = _load(text)
    if isinstance(doc, dict) and "configs" in doc:
        raise ConfigError("document is a campaign; use parse_campaign")
    return _validate(doc)


def parse_campaign(text):
    """A list of configurations: either a single object or ``{"configs": [...]}``.

    Keys in a top-level ``defaults`` object apply to every entry.
    """
    doc = _load(text)
    if not (isinstance(doc, dict) and "configs" in doc):
        return [_validate(doc)]
    unknown = sorted(set(doc) - {"schema_version", "configs", "defaults"})
    if unknown:
        raise ConfigError(f"unknown campaign keys: {', '.join(unknown)}")
    defaults = doc.get("defaults", {})
    if not isinstance(defaults, dict) or not isinstance(doc["configs"], list):
        raise ConfigError("campaign needs a list 'configs' and an optional object 'defaults'")
    return [_validate({**defaults, **entry}) for entry in doc["configs"]]


def reference_campaign(seed=101):
    """The seven reference configurations, seeds ``seed + index``."""
    return [ExperimentConfig(phi_degrees=float(phi), p=p, seed=seed + i) for i, (phi, p) in enumerate(REFERENCE_CONFIGS)]


def reference_campaign_json(seed=101):
    entries = [{"phi_degrees": c.phi_degrees, "p": c.p, "seed": c.seed} for c in reference_campaign(seed)]
    return json.dumps({"schema_version": SCHEMA_VERSION, "defaults": {"model": "coherent"},
                       "configs": entries}, indent=2) + "\n"


def config_name(cfg, index):
    if cfg.name:
        return cfg.name
    return f"cfg{index:02d}_{cfg.model}_phi{cfg.phi_degrees:g}_p{cfg.p:g}"


# --------------------------------------------------------------------------
# output helpers


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(x) for x in row) + "\n")


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.9g}" if math.isfinite(x) else ""
    return str(x)


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def fisher_scan_rows(scan):
    rows = []
    for i, a in enumerate(scan.alphas):
        for j, b in enumerate(scan.betas):
            rows.append((math.degrees(a), math.degrees(b), float(scan.f_map[i, j])))
    return rows


def write_fisher_scan(scan, path):
    _write_rows(path, ["alpha_deg", "beta_deg", "fisher"], fisher_scan_rows(scan))


def simulate_config(cfg):
    """Main and diagonal run records for one configuration, shuffled if requested."""
    params = cfg.params
    common = dict(mean_total=cfg.mean_total, window_seconds=cfg.window_seconds, runs=cfg.runs,
                  seed=cfg.seed, multinomial=cfg.multinomial)
    main = simulator.run_experiment(simulator.RunConfig(params, cfg.main_setting, stream=0, **common))
    diag = simulator.run_experiment(simulator.RunConfig(params, cfg.diagonal_setting, stream=1, **common))
    if cfg.shuffle:
        main = simulator.shuffle_composition(main, cfg.seed, cfg.shuffle_mode, stream=0)
        diag = simulator.shuffle_composition(diag, cfg.seed, cfg.shuffle_mode, stream=1)
    return main, diag


def analyze(main, diag, phi):
    coherent = estimation.estimate_report(main, diag, phi, states.Model.COHERENT)
    werner = estimation.estimate_report(main, diag, phi, states.Model.WERNER)
    return coherent, werner


def tomography_outputs(cfg, outdir):
    params = cfg.params
    rho = states.make_state(params)
    settings = tomography.linear_settings() if cfg.tomo_linear else tomography.canonical_settings()
    rates = tomography.simulate_rates(rho, settings, cfg.tomo_counts, cfg.seed)
    data = list(zip(settings, rates))
    tomography.write_dataset_csv(data, os.path.join(outdir, "tomo_dataset.csv"))
    return reconstruct_report(data, params, cfg.tomo_linear)


def reconstruct_report(data, params, real_family=False):
    raw = tomography.linear_inversion(data, real_family=real_family)
    w, _ = linalg.eig_hermitian(raw)
    rho = tomography.project_to_physical(raw)
    cmp = tomography.compare_to_model(rho, params)
    return {
        "settings": "linear-9 (real-family)" if real_family else "canonical-16 HVDL products (stand-in set)",
        "raw_min_eigenvalue": float(w[0]),
        "raw_physical": bool(w[0] >= linalg.PSD_SLACK),
        "rho_real": np.round(rho.real, 12).tolist(),
        "rho_imag": np.round(rho.imag, 12).tolist(),
        "fidelity": cmp.fidelity,
        "trace_distance": cmp.trace_distance,
        "negativity_rec": linalg.negativity(rho),
        "negativity_model": states.negativity_closed_form(params),
        "negativity_gap": cmp.negativity_gap,
    }


def run_config(cfg, outdir, fisher_scan=False):
    """Execute one configuration and write its files; returns the index entry."""
    os.makedirs(outdir, exist_ok=True)
    main, diag = simulate_config(cfg)
    simulator.write_runs_csv(main, os.path.join(outdir, "runs_main.csv"))
    simulator.write_runs_csv(diag, os.path.join(outdir, "runs_diag.csv"))
    coherent, werner = analyze(main, diag, cfg.params.phi)

    meta = {"schema_version": SCHEMA_VERSION, "rng": kernels.RNG_ID, "config": cfg.to_json()}
    _write_json(os.path.join(outdir, "report.json"), {**meta, **coherent.to_json()})
    estimation.write_saturation_csv([coherent], os.path.join(outdir, "saturation.csv"))
    fano_diag = estimation.fano_factors(diag)
    _write_rows(os.path.join(outdir, "fano.csv"), ["outcome", "fano_main", "fano_diag"],
                [(t, coherent.fano[t], fano_diag[t]) for t in range(4)])
    entry = {
        "name": os.path.basename(outdir),
        "phi_degrees": cfg.phi_degrees,
        "p": cfg.p,
        "model": cfg.model,
        "eps_true": _clean(coherent.eps_true),
        "eps_hat_mean": _clean(coherent.eps_hat.mean),
        "consistent_3sigma": coherent.consistent_3sigma,
    }
    if cfg.werner_compare:
        verdict = estimation.model_discrimination(coherent, werner)
        _write_json(os.path.join(outdir, "werner.json"),
                    {**meta, "werner_report": werner.to_json(), "verdict": verdict})
        entry["verdict"] = verdict
    if cfg.tomography:
        tomo = tomography_outputs(cfg, outdir)
        _write_json(os.path.join(outdir, "tomo.json"), {**meta, **tomo})
        entry["tomo_fidelity"] = tomo["fidelity"]
    if fisher_scan:
        try:
            scan = measurement.optimal_setting_scan(cfg.params)
        except states.DerivativeSingularity as exc:
            entry["fisher_scan"] = {"skipped": str(exc)}
        else:
            write_fisher_scan(scan, os.path.join(outdir, "fisher_scan.csv"))
            entry["fisher_scan"] = {"best_alpha_deg": math.degrees(scan.best.alpha),
                                    "best_beta_deg": math.degrees(scan.best.beta),
                                    "best_fisher": scan.best_value, "qfi": scan.qfi}
    return entry, coherent


def _run_one(job):
    cfg, outdir, fisher_scan = job
    return run_config(cfg, outdir, fisher_scan)


def cmd_run(configs, out, fisher_scan=False, workers=1):
    os.makedirs(out, exist_ok=True)
    jobs = [(cfg, os.path.join(out, config_name(cfg, i)), fisher_scan) for i, cfg in enumerate(configs)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    estimation.write_saturation_csv([rep for _, rep in results], os.path.join(out, "saturation_table.csv"))
    _write_json(os.path.join(out, "index.json"),
                {"schema_version": SCHEMA_VERSION, "rng": kernels.RNG_ID,
                 "configs": [entry for entry, _ in results]})
    return [entry for entry, _ in results]


def qcrb_check(d_eps=states.DEFAULT_D_EPS):
    """Fisher and QFI optimality over epsilon in {0.05..0.95} and p in {0.8, 1.0}."""
    rows = []
    for p in (0.8, 1.0):
        for eps in np.round(np.arange(0.05, 0.951, 0.05), 2):
            if eps > p - measurement.BOUNDARY_MARGIN:
                continue
            params = states.StateParams.coherent(states.phi_from_negativity(float(eps), p), p)
            h = states.qfi_closed_form(float(eps))
            F = measurement.fisher_information(params, measurement.OPTIMAL, d_eps)
            q = states.qfi(params, d_eps)
            rows.append({
                "p": p, "epsilon": float(eps), "qfi_closed_form": h,
                "fisher": F, "fisher_rel_err": abs(F - h) / h,
                "qfi_numeric": q.h_numeric, "qfi_rel_err": abs(q.h_numeric - h) / h,
                "qfi_fixed_p": q.h_fixed_p, "sld_residual": q.residual,
            })
    ok = all(r["fisher_rel_err"] <= 1e-5 and r["qfi_rel_err"] <= 1e-4 and r["sld_residual"] <= 1e-6 for r in rows)
    return ok, rows


# --------------------------------------------------------------------------
# argument handling


def _apply_overrides(configs, args):
    out = []
    for i, cfg in enumerate(configs):
        changes = {}
        if getattr(args, "seed", None) is not None:
            changes["seed"] = args.seed + i
        if getattr(args, "runs", None) is not None:
            changes["runs"] = args.runs
        if getattr(args, "mean_total", None) is not None:
            changes["mean_total"] = args.mean_total
        if getattr(args, "no_shuffle", False):
            changes["shuffle"] = False
        if getattr(args, "multinomial", False):
            changes["multinomial"] = True
        if getattr(args, "model", None) is not None:
            changes["model"] = args.model
        if getattr(args, "tomography", False):
            changes["tomography"] = True
        out.append(_validate({**cfg.to_json(), **changes, "out": cfg.out}))
    return out


def _configs_from_args(args):
    if getattr(args, "reference", False):
        configs = reference_campaign()
    elif args.config:
        with open(args.config, encoding="utf-8") as fh:
            configs = parse_campaign(fh.read())
    elif getattr(args, "phi_deg", None) is not None:
        configs = [_validate({"phi_degrees": args.phi_deg, "p": args.p if args.p is not None else 1.0})]
    else:
        raise ConfigError("give --config, --reference, or --phi-deg/--p")
    if getattr(args, "phi_deg", None) is not None and (args.config or getattr(args, "reference", False)):
        raise ConfigError("--phi-deg cannot be combined with --config/--reference")
    return _apply_overrides(configs, args)


def _u64(text):
    value = int(text)
    if not 0 <= value <= _U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="entcrb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sim=True):
        p.add_argument("--config", help="JSON configuration or campaign file")
        p.add_argument("--out", default="entcrb-out", help="output directory")
        p.add_argument("--reference", action="store_true", help="use the seven built-in reference configurations")
        p.add_argument("--phi-deg", type=float, help="waveplate angle in degrees (instead of --config)")
        p.add_argument("--p", type=float, help="mixing parameter (with --phi-deg)")
        p.add_argument("--model", choices=["coherent", "werner"])
        if sim:
            p.add_argument("--seed", type=_u64)
            p.add_argument("--runs", type=int)
            p.add_argument("--mean-total", type=float)
            p.add_argument("--no-shuffle", action="store_true")
            p.add_argument("--multinomial", action="store_true")

    p_run = sub.add_parser("run", help="simulate and analyze configurations")
    common(p_run)
    p_run.add_argument("--fisher-scan", action="store_true", help="also write a Fisher-information grid per config")
    p_run.add_argument("--tomography", action="store_true", help="also run sampled tomography per config")
    p_run.add_argument("--workers", type=int, default=1)

    p_scan = sub.add_parser("fisher-scan", help="Fisher-information map over polarizer angles")
    common(p_scan, sim=False)
    p_scan.add_argument("--step-deg", type=float, default=2.5)
    p_scan.add_argument("--fixed-p", action="store_true", help="treat the mixing as known instead of a nuisance")

    p_q = sub.add_parser("qcrb-check", help="Fisher/QFI optimality table")
    p_q.add_argument("--out", help="optional JSON output path")

    p_tomo = sub.add_parser("tomo", help="sampled tomography, or reconstruction of a dataset CSV")
    common(p_tomo)
    p_tomo.add_argument("--data", help="existing dataset CSV to reconstruct")
    p_tomo.add_argument("--counts", type=float, help="coincidences per setting (default 1e5)")
    p_tomo.add_argument("--linear", action="store_true", help="9 linear-polarizer settings (real-family mode)")

    p_rep = sub.add_parser("report", help="estimate from existing runs CSV files")
    p_rep.add_argument("--runs-main", required=True)
    p_rep.add_argument("--runs-diag", required=True)
    p_rep.add_argument("--phi-deg", type=float, required=True)
    p_rep.add_argument("--model", choices=["coherent", "werner"], default="coherent")
    p_rep.add_argument("--out", help="output directory for report.json and werner.json")
    return parser


def _dispatch(args):
    if args.command == "run":
        entries = cmd_run(_configs_from_args(args), args.out, args.fisher_scan, args.workers)
        for e in entries:
            print(json.dumps(e))
        return EXIT_OK

    if args.command == "fisher-scan":
        if not 0 < args.step_deg <= 22.5:
            raise ConfigError("--step-deg must lie in (0, 22.5]")
        os.makedirs(args.out, exist_ok=True)
        for i, cfg in enumerate(_configs_from_args(args)):
            scan = measurement.optimal_setting_scan(cfg.params, math.radians(args.step_deg),
                                                    nuisance=not args.fixed_p)
            path = os.path.join(args.out, f"fisher_scan_{config_name(cfg, i)}.csv")
            write_fisher_scan(scan, path)
            print(json.dumps({"config": config_name(cfg, i), "best_alpha_deg": math.degrees(scan.best.alpha),
                              "best_beta_deg": math.degrees(scan.best.beta), "best_fisher": scan.best_value,
                              "qfi": scan.qfi, "csv": path}))
        return EXIT_OK

    if args.command == "qcrb-check":
        ok, rows = qcrb_check()
        for r in rows:
            print(f"p={r['p']:.2f} eps={r['epsilon']:.2f} H={r['qfi_closed_form']:.6f} "
                  f"F={r['fisher']:.6f} H_num={r['qfi_numeric']:.6f} H_fixed_p={r['qfi_fixed_p']:.6f}")
        print("PASS" if ok else "FAIL")
        if args.out:
            _write_json(args.out, {"schema_version": SCHEMA_VERSION, "pass": ok, "rows": rows})
        return EXIT_OK if ok else EXIT_RUNTIME

    if args.command == "tomo":
        os.makedirs(args.out, exist_ok=True)
        cfgs = _configs_from_args(args)
        if args.data:
            if len(cfgs) != 1:
                raise ConfigError("--data needs exactly one model configuration to compare against")
            data = tomography.read_dataset_csv(args.data)
            doc = reconstruct_report(data, cfgs[0].params, real_family=args.linear)
            _write_json(os.path.join(args.out, "tomo.json"), {"schema_version": SCHEMA_VERSION, **doc})
            print(json.dumps({"fidelity": doc["fidelity"], "trace_distance": doc["trace_distance"]}))
            return EXIT_OK
        for i, cfg in enumerate(cfgs):
            cfg = replace(cfg, tomo_linear=args.linear or cfg.tomo_linear,
                          tomo_counts=args.counts if args.counts else cfg.tomo_counts)
            outdir = os.path.join(args.out, config_name(cfg, i))
            os.makedirs(outdir, exist_ok=True)
            doc = tomography_outputs(cfg, outdir)
            _write_json(os.path.join(outdir, "tomo.json"),
                        {"schema_version": SCHEMA_VERSION, "rng": kernels.RNG_ID, "config": cfg.to_json(), **doc})
            print(json.dumps({"config": config_name(cfg, i), "fidelity": doc["fidelity"]}))
        return EXIT_OK

    if args.command == "report":
        main = simulator.read_runs_csv(args.runs_main)
        diag = simulator.read_runs_csv(args.runs_diag)
        if not 0.0 <= args.phi_deg <= 45.0:
            raise ConfigError(f"--phi-deg = {args.phi_deg} out of range [0, 45]")
        phi = math.radians(args.phi_deg)
        coherent, werner = analyze(main, diag, phi)
        primary = coherent if args.model == "coherent" else werner
        doc = {"schema_version": SCHEMA_VERSION, **primary.to_json()}
        verdict = estimation.model_discrimination(coherent, werner)
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            _write_json(os.path.join(args.out, "report.json"), doc)
            _write_json(os.path.join(args.out, "werner.json"),
                        {"schema_version": SCHEMA_VERSION, "werner_report": werner.to_json(), "verdict": verdict})
        print(json.dumps({**doc, "verdict": verdict}))
        return EXIT_OK
    raise ConfigError(f"unknown command {args.command!r}")  # pragma: no cover


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EntcrbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
