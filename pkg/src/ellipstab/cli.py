"""Command-line front end.

Every subcommand writes ``<command>.json`` (plus CSV sidecars where useful)
into ``--out`` and prints the JSON summary.  Exit status: 0 success, 1 input
could not be parsed, 2 domain error, 3 a hypothesis needed by the algorithm
failed (resonance, refuted steepness, violated threshold).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from . import __version__
from ._validation import ConfigError, jsonable, parse_number, parse_vector, read_json
from .errors import (ConsistencyError, DimensionError, DomainError, EllipstabError, HypothesisViolation,
                     NormalizationError, ResonanceError, StepSizeError)

SCHEMA_DIR = Path(__file__).resolve().parents[2] / "schemas"


# ---------------------------------------------------------------------------
# input helpers
# ---------------------------------------------------------------------------

def _alpha(spec):
    from .diophantine import FrequencyVector

    if spec is None:
        raise ConfigError("missing --alpha")
    if spec == "golden":
        return FrequencyVector.golden()
    if Path(spec).suffix == ".json" or Path(spec).is_file():
        data = read_json(spec, "alpha")
        try:
            return FrequencyVector.from_json_dict(data)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"bad frequency vector ({exc})", spec) from None
    return FrequencyVector.from_values(parse_vector(spec))


def _poly(path, what):
    from .poly import Polynomial

    if path is None:
        raise ConfigError(f"missing {what} file")
    data = read_json(path, what)
    if isinstance(data, dict) and "polynomial" in data:
        data = data["polynomial"]
    try:
        return Polynomial.from_json_dict(data)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc), path) from None


def _schema_check(name, doc):
    path = SCHEMA_DIR / f"{name}.schema.json"
    if not path.is_file():
        return
    import jsonschema

    try:
        jsonschema.validate(doc, json.loads(path.read_text()))
    except jsonschema.ValidationError as exc:
        raise ConsistencyError(f"{name} output does not match its schema: {exc.message}") from None


class Writer:
    """Single writer for all artifacts of one invocation.

    ``out`` is a directory, or a ``.json`` file path whose sidecars are written
    next to it with the file stem as prefix.
    """

    def __init__(self, out):
        self.dir, self.main, self.prefix = None, None, ""
        if out:
            p = Path(out)
            if p.suffix == ".json":
                self.dir, self.main, self.prefix = p.parent, p, p.stem + "_"
            else:
                self.dir = p
            self.dir.mkdir(parents=True, exist_ok=True)

    def _path(self, name, ext):
        return self.dir / f"{self.prefix}{name}.{ext}"

    def json(self, name, doc):
        doc = jsonable(doc)
        _schema_check(name, doc)
        text = json.dumps(doc, indent=2, allow_nan=False)
        if self.dir:
            (self.main or self._path(name, "json")).write_text(text + "\n")
        return doc

    def csv(self, name, header, rows):
        if not self.dir:
            return
        with open(self._path(name, "csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    def lines(self, name, docs):
        if not self.dir:
            return
        with open(self._path(name, "jsonl"), "w") as fh:
            for d in docs:
                fh.write(json.dumps(jsonable(d), allow_nan=False) + "\n")


def _envelope(command, **body):
    return {"command": command, "version": __version__, **body}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_psi(a, w):
    from .diophantine import psi

    al = _alpha(a.alpha)
    rows = []
    for K in range(1, a.K + 1):
        p = psi(al, K)
        rows.append({"K": K, "Psi": float(p), "K_Psi": K * float(p), "exact": str(p) if al.is_exact else None})
    w.csv("psi", ["K", "Psi", "K*Psi"], [[r["K"], repr(r["Psi"]), repr(r["K_Psi"])] for r in rows])
    for r in rows:
        print(f"{r['K']:>4d}  {r['Psi']:.12g}  {r['K_Psi']:.12g}")
    return w.json("psi", _envelope("psi", alpha=al.to_json_dict(), rows=rows)), 0


def cmd_delta(a, w):
    from .diophantine import delta

    al = _alpha(a.alpha)
    x = parse_number(a.x)
    K, trunc = delta(al, x, return_info=True)
    return w.json("delta", _envelope("delta", alpha=al.to_json_dict(), x=str(x), Delta=K, truncated=trunc)), 0


def cmd_dirichlet(a, w):
    from .diophantine import dirichlet_approx

    v = parse_vector(a.v, exact=not a.float)
    Q = parse_number(a.Q) if not a.float else float(a.Q)
    pv = dirichlet_approx(v, Q)
    return w.json("dirichlet", _envelope("dirichlet", v=[str(x) for x in v], Q=str(Q), periodic=pv.to_json_dict())), 0


def cmd_resonance(a, w):
    from .diophantine import find_resonance

    al = _alpha(a.alpha)
    k = find_resonance(al, a.K)
    return w.json("resonance", _envelope("resonance", alpha=al.to_json_dict(), K=a.K,
                                         witness=list(k) if k is not None else None)), 0


def _bnf_input(H, al, coords):
    from .bnf import _weights
    from .poly import action_form, complexify

    if H.nvars != 2 * al.n:
        raise DimensionError("Hamiltonian and alpha dimensions differ")
    Hc = H if coords == "complex" else complexify(H)
    if not Hc.homogeneous(2).is_zero:
        return Hc
    # only the higher-order part was given: add alpha.I
    mode = Hc.mode if al.kind == "rational" else "float"
    Hc = Hc if mode == Hc.mode else Hc.to_float()
    return action_form(_weights(al, mode), mode) + Hc


def cmd_bnf(a, w):
    from .bnf import birkhoff_normal_form, constants_for, verify_dg_bounds

    if a.order < 4:
        raise DomainError("K must be ≥ 4")
    al = _alpha(a.alpha)
    H = _bnf_input(_poly(a.input, "Hamiltonian"), al, a.coords)
    res = birkhoff_normal_form(H, al, a.order, a.degree)
    doc = res.to_json_dict()
    if a.R:
        consts = constants_for(res, R=float(a.R))
        doc["constants"] = consts.to_json_dict()
        doc["dg_report"] = verify_dg_bounds(res, consts)
    return w.json("bnf", _envelope("bnf", result=doc)), 0


def _xi_grid(a):
    from .steepness import default_xi_grid

    return default_xi_grid(a.delta, a.decades, a.per_decade)


def cmd_steep(a, w):
    from .steepness import certify_stably_expanding, certify_stably_steep, certify_steep

    P = _poly(a.poly, "polynomial")
    grid = _xi_grid(a)
    if a.mode == "steep":
        cert = certify_steep(P, grid, a.samples, a.seed)
    elif a.mode == "stably-steep":
        cert = certify_stably_steep(P, a.radius, a.perturbations, grid, a.samples, a.seed, a.jobs)
    else:
        cert = certify_stably_expanding(P, a.radius, a.perturbations, grid, a.seed, a.jobs)
    doc = cert.to_json_dict()
    rows = []
    for i, xi in enumerate(cert.xi_grid):
        rows.append([repr(float(xi))] + [repr(float(e.margins[i])) for e in cert.evidence])
    w.csv("steep_margins", ["xi"] + [f"{e.source}_l{e.l}_{k}" for k, e in enumerate(cert.evidence)], rows)
    out = w.json("steep", _envelope("steep", mode=a.mode, certificate=doc))
    if cert.verdict == "refuted":
        return _envelope("steep", reason="steepness refuted", witness=cert.witness), 3
    return out, 0


def cmd_average(a, w):
    from .averaging import NormalFormDatum, normalize
    from .diophantine import PeriodicVector

    d = read_json(a.datum, "datum")
    o = read_json(a.omega, "omega")
    try:
        datum = NormalFormDatum.from_json_dict(d)
        omega = PeriodicVector.from_json_dict(o)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed input ({exc})") from None
    res = normalize(datum, omega, a.iters, a.degree, enforce_thresholds=not a.no_thresholds)
    w.lines("average_log", [l.to_json_dict() for l in res.logs])
    return w.json("average", _envelope("average", result=res.to_json_dict())), 0


def _steep_params(a):
    from .nekho import SteepParams
    from .steepness import SteepnessCertificate

    d = read_json(a.steep, "steepness")
    if "certificate" in d:
        d = d["certificate"]
    if "verdict" in d:
        cert = SteepnessCertificate.from_json_dict(d)
        if cert.verdict != "certified":
            raise HypothesisViolation(f"steepness certificate verdict is {cert.verdict}")
        if a.E is None or a.F is None:
            raise ConfigError("--E and --F are required with a certificate")
        return SteepParams.from_certificate(cert, a.E, a.F, a.kappa)
    try:
        return SteepParams.from_json_dict(d)
    except KeyError as exc:
        raise ConfigError(f"missing field {exc}", a.steep) from None


def cmd_constants(a, w):
    from .nekho import choose_Q_m, compute_constants

    sp = _steep_params(a)
    consts = compute_constants(sp.n, sp)
    doc = {"constants": consts.to_json_dict()}
    if a.r is not None and a.eps is not None:
        doc["schedule"] = choose_Q_m(a.r, a.eps, consts).to_json_dict()
    return w.json("constants", _envelope("constants", **doc)), 0


def _write_traj(w, name, traj):
    n = traj.actions.shape[1]
    rows = [[repr(float(t))] + [repr(float(v)) for v in I] + [repr(float(e))]
            for t, I, e in zip(traj.times, traj.actions, traj.energy)]
    w.csv(name, ["t"] + [f"I{j + 1}" for j in range(n)] + ["energy"], rows)


def cmd_simulate(a, w):
    from .nekho import integrate, measure_drift

    H = _poly(a.ham, "Hamiltonian")
    z0 = parse_vector(a.z0, exact=False)
    stride = a.stride or max(1, a.steps // 5000)
    traj = integrate(H, z0, a.dt, a.steps, stride=stride, escape=a.escape)
    rep = measure_drift(traj, a.escape)
    _write_traj(w, "trajectory", traj)
    return w.json("simulate", _envelope("simulate", trajectory=traj.summary(), drift=rep.to_json_dict())), 0


def cmd_confine(a, w):
    from .nekho import run_confinement_algorithm

    H = _poly(a.ham, "Hamiltonian")
    h = _poly(a.h, "integrable part")
    sp = _steep_params(a)
    z0 = parse_vector(a.z0, exact=False)
    log = run_confinement_algorithm(H, h, z0, a.Q, a.m, a.degree, steep=sp, r=a.r, eps=a.eps,
                                    dt=a.dt, max_steps=a.max_steps, strict=a.strict)
    return w.json("confine", _envelope("confine", log=log.to_json_dict())), 0


def cmd_pipeline(a, w):
    from .averaging import gradient_bound, hessian_bound
    from .bnf import birkhoff_normal_form
    from .nekho import SteepParams, choose_Q_m, compute_constants, integrate, measure_drift
    from .poly import Polynomial, vector_field_norm
    from .steepness import certify_stably_steep, jet_bound, taylor_steepness_constants

    al = _alpha(a.alpha)
    Hreal = _poly(a.ham, "Hamiltonian")
    H = _bnf_input(Hreal, al, "real")
    res = birkhoff_normal_form(H, al, a.order)
    hm = res.hm.real_part()
    n = al.n
    m0 = hm.degree
    cert = certify_stably_steep(hm.to_float(), a.radius, a.perturbations, _xi_grid(a), a.samples, a.seed, a.jobs)
    bundle = {"bnf": res.to_json_dict(), "certificate": cert.to_json_dict()}
    if cert.verdict != "certified":
        w.json("pipeline", _envelope("pipeline", **bundle, halted="steepness " + cert.verdict))
        return _envelope("pipeline", reason=f"steepness {cert.verdict}", witness=cert.witness), 3
    lin = Polynomial(n, {tuple(int(i == j) for i in range(n)): float(x) for j, x in enumerate(al.floats())}, "float")
    h = lin + hm.to_float()
    r = a.r
    varpi = al.norm()
    p = m0 + 1
    M = jet_bound(h, p, 3 * r)
    ts = taylor_steepness_constants(h, varpi, M, p, cert, rho=3 * r)
    sp = SteepParams(ts.kappa, ts.C, ts.delta, (ts.index,) * (n - 1), gradient_bound(h, r), hessian_bound(h, r))
    consts = compute_constants(n, sp)
    rem = res.remainder()
    eps = a.eps if a.eps is not None else max(vector_field_norm(rem, r), 1e-300)
    sched = choose_Q_m(r, eps, consts)
    z0 = parse_vector(a.z0, exact=False) if a.z0 else [r / (2 * math.sqrt(2 * n))] * n + [0.0] * n
    dt = a.dt or (r / 100) / varpi
    traj = integrate(Hreal.to_float(), z0, dt, a.steps, stride=max(1, a.steps // 5000), escape=2 * r)
    rep = measure_drift(traj, 2 * r)
    _write_traj(w, "trajectory", traj)
    bundle.update({"taylor": ts.to_json_dict(), "steep_params": sp.to_json_dict(),
                   "constants": consts.to_json_dict(), "schedule": sched.to_json_dict(), "eps": eps,
                   "trajectory": traj.summary(), "drift": rep.to_json_dict(),
                   "drift_below_envelope": bool(rep.max_drift <= sched.drift_bound)})
    return w.json("pipeline", _envelope("pipeline", **bundle)), 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _grid_args(p):
    p.add_argument("--delta", type=float, default=0.1, help="largest radius of the xi grid")
    p.add_argument("--decades", type=float, default=2.0)
    p.add_argument("--per-decade", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ellipstab", description="Normal forms, steepness and confinement "
                                 "experiments near elliptic equilibria.")
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory for JSON and CSV artifacts")
    common.add_argument("--seed", type=int, default=0, help="64-bit seed for all sampling")
    common.add_argument("--jobs", type=int, default=1, help="maximum parallel workers")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("psi", parents=[common], help="small-divisor function table")
    p.add_argument("--alpha", required=True)
    p.add_argument("--K", type=int, required=True)
    p.set_defaults(fn=cmd_psi)

    p = sub.add_parser("delta", parents=[common], help="generalized inverse of K psi(K)")
    p.add_argument("--alpha", required=True)
    p.add_argument("--x", required=True)
    p.set_defaults(fn=cmd_delta)

    p = sub.add_parser("dirichlet", parents=[common], help="periodic approximation of a vector")
    p.add_argument("--v", required=True, help="comma separated components")
    p.add_argument("--Q", required=True)
    p.add_argument("--float", action="store_true", help="float arithmetic")
    p.set_defaults(fn=cmd_dirichlet)

    p = sub.add_parser("resonance", parents=[common], help="smallest resonance up to an order")
    p.add_argument("--alpha", required=True)
    p.add_argument("--K", type=int, required=True)
    p.set_defaults(fn=cmd_resonance)

    p = sub.add_parser("bnf", parents=[common], help="Birkhoff normal form")
    p.add_argument("--input")
    p.add_argument("--alpha")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--degree", type=int, default=None, help="working truncation degree")
    p.add_argument("--coords", choices=["real", "complex"], default="real")
    p.add_argument("--R", default=None, help="radius for the estimate constants and bound report")
    p.set_defaults(fn=cmd_bnf)

    p = sub.add_parser("steep", parents=[common], help="steepness certificate")
    p.add_argument("--poly", required=True)
    p.add_argument("--mode", choices=["steep", "stably-steep", "expanding"], default="steep")
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--perturbations", type=int, default=8)
    p.add_argument("--radius", type=float, default=1e-3)
    _grid_args(p)
    p.set_defaults(fn=cmd_steep)

    p = sub.add_parser("average", parents=[common], help="resonant averaging of a normal-form datum")
    p.add_argument("--datum", required=True)
    p.add_argument("--omega", required=True)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--degree", type=int, default=8)
    p.add_argument("--no-thresholds", action="store_true", help="log threshold checks without enforcing them")
    p.set_defaults(fn=cmd_average)

    for name, fn, hlp in (("constants", cmd_constants, "confinement constants and (Q, m) schedule"),
                          ("confine", cmd_confine, "staged confinement algorithm")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("--steep", required=True, help="certificate or steepness parameter JSON")
        p.add_argument("--E", type=float, default=None)
        p.add_argument("--F", type=float, default=None)
        p.add_argument("--kappa", type=float, default=None)
        p.add_argument("--r", type=float, default=None)
        p.add_argument("--eps", type=float, default=None)
        p.set_defaults(fn=fn)
        if name == "confine":
            p.add_argument("--ham", required=True)
            p.add_argument("--h", required=True, help="integrable part as a polynomial in the actions")
            p.add_argument("--z0", required=True)
            p.add_argument("--Q", type=float, required=True)
            p.add_argument("--m", type=int, required=True)
            p.add_argument("--degree", type=int, default=6)
            p.add_argument("--dt", type=float, default=None)
            p.add_argument("--max-steps", type=int, default=200_000)
            p.add_argument("--strict", action="store_true")

    p = sub.add_parser("simulate", parents=[common], help="implicit midpoint integration")
    p.add_argument("--ham", required=True)
    p.add_argument("--z0", required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--escape", type=float, default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("pipeline", parents=[common], help="normal form, steepness, constants and simulation")
    p.add_argument("--ham", required=True, help="Hamiltonian in real coordinates")
    p.add_argument("--alpha", required=True)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--r", type=float, default=0.1)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--z0", default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--samples", type=int, default=4)
    p.add_argument("--perturbations", type=int, default=4)
    p.add_argument("--radius", type=float, default=1e-3)
    _grid_args(p)
    p.set_defaults(fn=cmd_pipeline)
    return ap


def _fail(code, kind, message, **extra):
    doc = {"status": "error", "exit_code": code, "kind": kind, "reason": message, **extra}
    print(json.dumps(jsonable(doc)), file=sys.stderr)
    return code


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 1
    try:
        w = Writer(a.out)
        doc, code = a.fn(a, w)
    except ConfigError as exc:
        return _fail(1, "config", str(exc), location=exc.location)
    except ResonanceError as exc:
        return _fail(3, "resonance", str(exc), witness=list(exc.witness))
    except HypothesisViolation as exc:
        return _fail(3, "hypothesis", str(exc), details=exc.details)
    except (DomainError, DimensionError, NormalizationError) as exc:
        return _fail(2, "domain", str(exc))
    except StepSizeError as exc:
        return _fail(2, "step_size", str(exc), diagnostics=exc.diagnostics)
    except EllipstabError as exc:
        return _fail(2, type(exc).__name__, str(exc))
    if code:
        return _fail(code, "hypothesis", doc.get("reason", ""), **{k: v for k, v in doc.items() if k != "reason"})
    if a.command != "psi":
        print(json.dumps(doc, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
