"""Command-line experiment runner.

``lphodge <command> [--config FILE] [--set key=value ...] [--out DIR]``
with commands ``lp``, ``norms``, ``approx``, ``hodge`` and ``probe``.  Every
run writes ``report.json`` (deterministic), ``run_meta.json`` (timestamps and
versions) and ``diagnostics.csv``.  Exit status is 0 when every assertion
holds, 1 when one fails and 2 for configuration or input errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .approx import approx_diagnostics, approximate, select_parameters
from .control import control_diagnostics
from .grid import DataError, GridFunction, GridSpec, ParameterError, get_threads, set_threads
from .hodge import Form, bounded_solve, exterior_derivative, min_norm_solve, multi_indices
from .io import ensure_writable, export_filter_bank, write_form, write_gfn
from .littlewood_paley import bernstein_ratio, build_filter_bank, decompose, reconstruct
from .norms import TLParams, hl_maximal, log_bound_probe, seminorm_equivalence_report, tl_norm, zo_kernel_check

__all__ = ["SCHEMA", "CSV_COLUMNS", "ConfigError", "default_config", "load_config", "apply_override",
           "generate_input", "generate_form", "run", "main"]

SCHEMA = "lp-hodge/1"
CSV_COLUMNS = ["probe", "r", "p", "q", "measured", "bound", "pass"]
COMMANDS = ("lp", "norms", "approx", "hodge", "probe")
GENERATORS = ("random-bandlimited", "gaussian-bump", "single-mode", "spike")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def default_config() -> dict:
    return {
        "command": "approx",
        "grid": {"d": 2, "n": 64, "period": 2 * math.pi},
        "tl": {"alpha": 1.0, "p": 2.0, "q": 2.0},
        "approx": {"delta": 0.1, "sigma": None, "sigmas": None, "good_dirs": None, "eta_margin": 0.5},
        "hodge": {"degree": 1, "tol": 1e-6, "max_iter": 40, "force": False, "sigma_escalation": True},
        "probe": {"kind": "log-bound", "shifts": [4, 16, 64], "slack": 2.0},
        "input": {"generator": "random-bandlimited", "seed": 0, "bands": [0, 3], "amplitude": 1.0,
                  "mode": None, "width": 0.5},
        "output": {"dir": "lphodge-out", "dump_fields": False},
        "threads": None,
    }


def _merge(base: dict, extra: dict, path: str = "") -> None:
    for k, v in extra.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            _merge(base[k], v, path + k + ".")
        else:
            base[k] = v


def apply_override(cfg: dict, item: str) -> None:
    """Apply ``a.b=value``; the value is parsed as JSON, falling back to a string."""
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config key {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = value


def load_config(path=None, overrides=(), command=None) -> dict:
    cfg = default_config()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        _merge(cfg, data)
    for item in overrides:
        apply_override(cfg, item)
    if command is not None:
        cfg["command"] = command
    if cfg["command"] not in COMMANDS:
        raise ConfigError(f"unknown command {cfg['command']!r}; choose from {', '.join(COMMANDS)}")
    if cfg["input"]["generator"] not in GENERATORS:
        raise ConfigError(f"unknown generator {cfg['input']['generator']!r}; choose from {', '.join(GENERATORS)}")
    return cfg


def _spec(cfg: dict) -> GridSpec:
    g = cfg["grid"]
    return GridSpec(int(g["d"]), int(g["n"]), float(g["period"]))


def _band_mask(spec: GridSpec, bands) -> np.ndarray:
    k = spec.wavenumber_norm()
    mask = np.zeros(spec.shape, dtype=bool)
    for j in bands:
        mask |= (k >= 2.0**j) & (k < 2.0 ** (j + 1))
    return mask


def _draw(spec: GridSpec, inp: dict, rng: np.random.Generator) -> np.ndarray:
    gen = inp["generator"]
    amp = float(inp["amplitude"])
    if gen == "random-bandlimited":
        c = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
        c[~_band_mask(spec, inp["bands"])] = 0.0
        # the real part has spectrum (c(xi) + conj c(-xi)) / 2, on the same annuli
        a = np.fft.ifftn(c).real
        top = float(np.max(np.abs(a)))
        return a * (amp / top) if top > 0 else a
    if gen == "gaussian-bump":
        w = float(inp["width"])
        r2 = sum(x**2 for x in spec.min_image())
        return amp * np.exp(-r2 / (2 * w * w))
    if gen == "single-mode":
        mode = inp["mode"] if inp["mode"] is not None else [1] + [0] * (spec.d - 1)
        if len(mode) != spec.d:
            raise ConfigError(f"mode {mode} does not match d = {spec.d}")
        phase = sum(spec.unit * m * x for m, x in zip(mode, spec.coordinates()))
        return amp * np.exp(1j * phase)
    a = np.zeros(spec.shape)
    a[(0,) * spec.d] = amp
    return a


def generate_input(cfg: dict) -> GridFunction:
    """Deterministic scalar field from the ``input`` section."""
    spec = _spec(cfg)
    inp = cfg["input"]
    if inp["generator"] not in GENERATORS:
        raise ConfigError(f"unknown generator {inp['generator']!r}")
    return GridFunction(spec, _draw(spec, inp, np.random.default_rng(int(inp["seed"]))))


def generate_form(cfg: dict, degree: int) -> Form:
    """Form whose components are drawn in index order from one seeded stream."""
    spec = _spec(cfg)
    inp = cfg["input"]
    rng = np.random.default_rng(int(inp["seed"]))
    return Form(spec, degree, {I: GridFunction(spec, _draw(spec, inp, rng))
                               for I in multi_indices(spec.d, degree)})


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    if isinstance(x, complex):
        return [_clean(x.real), _clean(x.imag)]
    return x


def _tl(cfg: dict) -> TLParams:
    t = cfg["tl"]
    return TLParams(float(t["alpha"]), float(t["p"]), float(t["q"]))


def _approx_params(cfg: dict, spec: GridSpec, sigma=None):
    t, a = cfg["tl"], cfg["approx"]
    s = sigma if sigma is not None else a["sigma"]
    return select_parameters(float(t["alpha"]), float(t["p"]), float(t["q"]), spec.d, float(a["delta"]),
                             sigma_override=s, n=spec.n, good_dirs=a["good_dirs"],
                             eta_margin=float(a["eta_margin"]))


def _cmd_lp(cfg, out, dump_control):
    f = generate_input(cfg)
    bank = build_filter_bank(f.spec)
    dec = decompose(bank, f)
    cov = bank.covered_mask()
    part = float(np.max(np.abs(bank.total()[cov] - 1.0)))
    rec = (f - reconstruct(dec) - dec.mean).max_abs()
    ref = max(f.max_abs(), 1e-300)
    tl = _tl(cfg)
    res = {"bands": list(bank.bands), "empty_bands": sorted(dec.empty),
           "partition_error": part, "reconstruction_error": rec / ref,
           "band_sup": {j: dec[j].max_abs() for j in dec.indices},
           "bernstein": bernstein_ratio(bank, dec, tl.alpha, tl.p).to_dict()}
    if cfg["output"]["dump_fields"]:
        export_filter_bank(out / "filter_bank", bank)
    return res, {"partition_of_unity": part <= 1e-12}, []


def _cmd_norms(cfg, out, dump_control):
    f = generate_input(cfg)
    bank = build_filter_bank(f.spec)
    tl = _tl(cfg)
    dec = decompose(bank, f)
    sem = seminorm_equivalence_report(f, bank, tl)
    M = hl_maximal(f)
    res = {"tl_norm": tl_norm(dec, tl), "critical": tl.is_critical(f.spec.d),
           "seminorm": sem.to_dict(), "sup_f": f.max_abs(), "sup_maximal": M.max_abs()}
    ok = {"finite": all(math.isfinite(v) for v in (res["tl_norm"], res["sup_maximal"])),
          "maximal_dominates": bool(np.all(M.samples.real >= np.abs(f.samples) * (1 - 1e-12)))}
    return res, ok, []


def _approx_once(cfg, f, bank, params, out, dump_control):
    r = approximate(f, params, bank, keep_state=True)
    diag = approx_diagnostics(r, params, bank)
    res = {"approximation": r.report, "diagnostics": diag}
    ok = {"h_budget": r.report["budgets"]["h_ok"], "g_budget": r.report["budgets"]["g_ok"]}
    if not r.report["zero_input"]:
        ctl = r.state.control
        cd = control_diagnostics(ctl, r.state.decomp, ctl.params)
        res["control"] = cd
        ok.update({"identities": max(diag["identity_residuals"].values()) <= 1e-12,
                   "V_bound": diag["V_ok"], "H_bound": diag["H_ok"],
                   "domination": cd["domination_ok"], "dominant_sum": cd["dominant_sum_ok"]})
        if dump_control:
            d = out / f"control_sigma{params.sigma}"
            d.mkdir(parents=True, exist_ok=True)
            for name, fam in (("omega", ctl.omega), ("zeta", ctl.zeta), ("U", ctl.U), ("G", ctl.G)):
                for j, g in fam.items():
                    write_gfn(d / f"{name}_{j}.gfn", g)
    if cfg["output"]["dump_fields"]:
        write_gfn(out / f"F_sigma{params.sigma}.gfn", r.F)
    return res, ok


def _cmd_approx(cfg, out, dump_control):
    f = generate_input(cfg)
    bank = build_filter_bank(f.spec)
    if cfg["output"]["dump_fields"]:
        write_gfn(out / "input.gfn", f)
    sigmas = cfg["approx"]["sigmas"]
    if not sigmas:
        params = _approx_params(cfg, f.spec)
        res, ok = _approx_once(cfg, f, bank, params, out, dump_control)
        res["params"] = params.to_dict()
        return res, ok, []
    runs, ok, table = {}, {}, []
    for s in sigmas:
        params = _approx_params(cfg, f.spec, int(s))
        r, o = _approx_once(cfg, f, bank, params, out, dump_control)
        runs[str(s)] = dict(r, params=params.to_dict())
        ok.update({f"{k}_sigma{s}": v for k, v in o.items()})
        table.append({"sigma": int(s), "R": params.R, "good_error": r["approximation"]["good_error"],
                      "all_error": r["approximation"]["all_error"]})
    errs = [row["good_error"] for row in table]
    ok["sweep_monotone"] = all(b <= a * 1.05 for a, b in zip(errs, errs[1:]))
    return {"sweep": table, "runs": runs}, ok, []


def _cmd_hodge(cfg, out, dump_control):
    spec = _spec(cfg)
    h = cfg["hodge"]
    phi = generate_form(cfg, int(h["degree"]))
    params = _approx_params(cfg, spec)
    bank = build_filter_bank(spec)
    psi, rep = bounded_solve(phi, params, tol=float(h["tol"]), max_iter=int(h["max_iter"]), bank=bank,
                             sigma_escalation=bool(h["sigma_escalation"]), force=bool(h["force"]))
    dphi = exterior_derivative(phi)
    scale = max(dphi.max_abs(), 1e-300)
    final = (exterior_derivative(psi) - dphi).max_abs() / scale
    lam = min_norm_solve(dphi) if dphi.max_abs() > 0 else None
    res = {"params": params.to_dict(), "report": rep.to_dict(), "final_sup_residual": final,
           "sup_phi": phi.max_abs(), "sup_min_norm": lam.max_abs() if lam is not None else 0.0}
    ok = {"converged": rep.converged, "contracting": not rep.non_contraction,
          "min_norm_exact": rep.min_norm_residual is None or rep.min_norm_residual <= 1e-10,
          "bookkeeping": rep.bookkeeping_error <= 1e-12 * max(rep.norm_dphi, 1.0)}
    if cfg["output"]["dump_fields"]:
        write_form(out / "phi", phi)
        write_form(out / "psi", psi)
    return res, ok, []


def _cmd_probe(cfg, out, dump_control):
    pr = cfg["probe"]
    kind = pr["kind"]
    if kind == "log-bound":
        f = generate_input(cfg)
        bank = build_filter_bank(f.spec)
        rows = log_bound_probe(decompose(bank, f), _tl(cfg), [float(s) for s in pr["shifts"]],
                               slack=float(pr["slack"]))
        res = {"rows": [r.as_csv() for r in rows]}
        return res, {"log_bound": all(r.passed is not False for r in rows)}, rows
    if kind == "zo":
        rep = zo_kernel_check(d=int(cfg["grid"]["d"]), shifts=[0.0] + [float(s) for s in pr["shifts"]])
        return {"zo": rep.to_dict()}, {"finite": rep.finite, "A_bound": rep.A_bound_ok}, []
    raise ConfigError(f"unknown probe kind {kind!r}; choose log-bound or zo")


_HANDLERS = {"lp": _cmd_lp, "norms": _cmd_norms, "approx": _cmd_approx, "hodge": _cmd_hodge, "probe": _cmd_probe}


def _write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow(r.as_csv())


def run(cfg: dict, out=None, threads: int | None = None, dump_control: bool = False) -> int:
    """Execute one configured experiment and write its artifacts.

    Returns the process exit status.  Configuration and input errors raise.
    """
    out = ensure_writable(out if out is not None else cfg["output"]["dir"])
    if threads is None:
        threads = cfg["threads"] or int(os.environ.get("LP_HODGE_THREADS", "1"))
    set_threads(int(threads))
    t0 = time.time()
    results, checks, rows = _HANDLERS[cfg["command"]](cfg, out, dump_control)
    passed = all(bool(v) for v in checks.values())
    report = {"schema": SCHEMA, "command": cfg["command"], "config": cfg, "threads": get_threads(),
              "version": __version__, "results": results, "assertions": checks, "passed": passed}
    (out / "report.json").write_text(json.dumps(_clean(report), indent=2, sort_keys=True) + "\n")
    _write_csv(out / "diagnostics.csv", rows)
    meta = {"started": t0, "finished": time.time(), "elapsed_s": time.time() - t0, "argv": sys.argv,
            "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}
    (out / "run_meta.json").write_text(json.dumps(_clean(meta), indent=2, sort_keys=True) + "\n")
    return 0 if passed else 1


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lphodge", description="Littlewood-Paley / bounded Hodge experiments")
    ap.add_argument("command", nargs="?", choices=COMMANDS, help="experiment to run (default: from config)")
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry, e.g. grid.n=32 (repeatable)")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--threads", type=int, help="FFT worker threads (env LP_HODGE_THREADS)")
    ap.add_argument("--dump-control", action="store_true", help="write control-function fields (approx)")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set, args.command)
        if args.threads is not None:
            cfg["threads"] = args.threads
        return run(cfg, args.out, cfg["threads"], args.dump_control)
    except (ConfigError, ParameterError, DataError) as exc:
        print(f"lphodge: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"lphodge: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
