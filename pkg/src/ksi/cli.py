"""Command line entry point.

Exit codes: 0 success, 2 precondition violation, 3 numerical failure,
64 usage error.  JSON goes to stdout with floats at 17 significant digits
and the effective run configuration embedded under "config".
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_PRECONDITION, EXIT_NUMERICAL, EXIT_USAGE = 0, 2, 3, 64


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str = ""
    n: int = 5
    alpha: float = 1.0
    lam: float = 0.0
    mu: float = 1.0
    lambda_bar: float = 0.1
    k: int = 1
    target: str = "alpha-bar"
    tol: float | None = None
    rmax: float | None = None
    mode: str = "free"
    rho_max: float = 30.0
    points: int = 1201
    dt: float | None = None
    tau0: float = 0.0
    tau_end: float = 1.0
    epsilon: float = 1e-3
    truncation_radius: float = 10.0
    snapshot_every: int = 20
    direction: str = "A"
    norm: str | None = None
    inp: str | None = None
    out: str | None = None
    phase_out: str | None = None
    out_dir: str | None = None
    jobs: int = 1
    timing: bool = True

    def validate(self):
        if not isinstance(self.n, int) or self.n < 3:
            raise ValueError("n must be an integer >= 3")
        if self.command == "window" and self.n > 12:
            raise ValueError("window needs 3 <= n <= 12")
        if self.command in ("search", "report") and self.n > 9:
            raise ValueError("instability searches need 3 <= n <= 9")
        if not (self.alpha > 0):
            raise ValueError("alpha must be positive")
        if math.isinf(self.alpha) and self.command not in ("asymptotics",):
            raise ValueError("alpha = inf is only meaningful for asymptotics")
        if self.tol is not None and not 0 < self.tol <= 1e-3:
            raise ValueError("tol must lie in (0, 1e-3]")
        if self.rmax is not None and not self.rmax > 0:
            raise ValueError("rmax must be positive")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        if self.command == "search" and self.target == "alpha-bar" and not self.lambda_bar > 0:
            raise ValueError("lambda_bar must be positive")
        if self.command == "simulate":
            if self.rho_max < 30 or self.rho_max / (self.points - 1) > 0.05:
                raise ValueError("simulation grid needs rho_max >= 30 and 20 points per unit")
            if not self.tau_end > self.tau0:
                raise ValueError("tau_end must exceed tau0")
            if not self.epsilon > 0:
                raise ValueError("epsilon must be positive")
        if self.command == "transform" and not self.inp:
            raise ValueError("transform needs --in")


# ---------------------------------------------------------------- output

def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


def dumps(obj, indent=0) -> str:
    """Deterministic JSON: sorted keys, floats as %.17g, non-finite floats as strings."""
    obj = _plain(obj)
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if math.isfinite(obj):
            return format(obj, ".17g")
        return json.dumps("nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf"))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (pad + json.dumps(k) + ": " + dumps(obj[k], indent + 1) for k in sorted(obj))
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _emit(cfg: RunConfig, payload: dict):
    body = dict(payload)
    if not cfg.timing:
        body = _strip_timing(body)
    body["config"] = {k: v for k, v in asdict(cfg).items()}
    sys.stdout.write(dumps(body) + "\n")


def _strip_timing(x):
    if isinstance(x, dict):
        return {k: _strip_timing(v) for k, v in x.items() if k != "wall_time"}
    if isinstance(x, list):
        return [_strip_timing(v) for v in x]
    return x


def _write_csv(path, header, rows, footer=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format(float(v), ".17g") for v in row])
        if footer is not None:
            fh.write("# " + json.dumps(_plain(footer), sort_keys=True) + "\n")


def _read_csv(path):
    rho, val = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                r, v = float(row[0]), float(row[1])
            except ValueError:
                continue  # header
            rho.append(r)
            val.append(v)
    if len(rho) < 5:
        raise ValueError(f"{path}: need at least 5 data rows")
    return np.array(rho), np.array(val)


# ---------------------------------------------------------------- commands

def cmd_profile(cfg):
    from .profile import estimate_tail, solve_profile
    sol = solve_profile(cfg.n, cfg.alpha, cfg.rmax or 50.0, cfg.tol or 1e-10)
    diag = estimate_tail(sol)
    if cfg.out:
        r = sol.grid
        rows = zip(r, sol.u, sol.du, sol.G, sol.energy, sol.J, r ** 2 * sol.u)
        _write_csv(cfg.out, ["rho", "u", "du", "G", "E", "J", "rho2u"], rows)
    return {"n": sol.n, "alpha": sol.alpha, "ell": diag.ell_alpha, "ell_ci": diag.ell_ci,
            "ell_direct": diag.ell_direct, "tail_ratio": diag.tail_ratio,
            "nodes": int(sol.grid.size), "invariants": "ok", "rmax": sol.rmax}


def cmd_eig_probe(cfg):
    from .linearized import probe
    p = probe(cfg.n, cfg.alpha, cfg.lam, cfg.mu, cfg.rmax or 50.0, cfg.tol or 1e-10)
    footer = {"zeros": list(p.zeros), "count": p.count}
    if cfg.out:
        _write_csv(cfg.out, ["rho", "f", "df"], zip(p.grid, p.f, p.df), footer)
    return {"n": p.n, "alpha": p.alpha, "lambda": p.lam, "mu": p.mu, **footer}


def cmd_asymptotics(cfg):
    from .asymptotics import emden_trajectory, solve_rescaled
    rs = solve_rescaled(cfg.n, cfg.alpha, cfg.rmax or 100.0, cfg.tol or 1e-10)
    if cfg.out:
        _write_csv(cfg.out, ["rho", "u_tilde", "f_tilde", "rho2u", "rho3du"],
                   zip(rs.grid, rs.u_tilde, rs.f_tilde, rs.rho2u, rs.rho3du))
    out = {"n": cfg.n, "alpha": cfg.alpha, "rmax": float(rs.grid[-1]),
           "rho2u_end": float(rs.rho2u[-1]), "rho3du_end": float(rs.rho3du[-1]),
           "zeros": rs.zeros()}
    if math.isinf(cfg.alpha):
        tr = emden_trajectory(cfg.n, terminal_tol=None)
        if cfg.phase_out:
            _write_csv(cfg.phase_out, ["t", "z", "zdot", "E"],
                       zip(tr.t_grid, tr.z, tr.zdot, tr.energy))
        out["emden_terminal"] = [float(tr.z[-1]), float(tr.zdot[-1])]
        out["emden_terminal_distance"] = tr.terminal_distance
    return out


def cmd_window(cfg):
    from .asymptotics import verify_zero_window
    return verify_zero_window(cfg.n, cfg.rmax or 1e3)


def cmd_search(cfg):
    from .profile import solve_profile
    from .spectral_search import find_alpha_bar, find_alpha_with_k_zeros, find_lambda_max
    tol = cfg.tol or 1e-6
    if cfg.target == "alpha-k":
        res = find_alpha_with_k_zeros(cfg.n, cfg.k, tol)
    elif cfg.target == "alpha-bar":
        res = find_alpha_bar(cfg.n, cfg.lambda_bar, tol)
    else:
        res = find_lambda_max(solve_profile(cfg.n, cfg.alpha), tol)
    return res.as_dict()


def cmd_transform(cfg):
    from .transform import (Ambient, NormSpec, RadialField, apply_A, apply_A_inverse,
                            norm_detail)
    rho, val = _read_csv(cfg.inp)
    if cfg.direction == "A":
        src = RadialField(Ambient.PHYSICAL, cfg.n, rho, val)
        dst = apply_A(src)
    else:
        src = RadialField(Ambient.REDUCED, cfg.n, rho, val)
        dst = apply_A_inverse(src)
    if cfg.out:
        _write_csv(cfg.out, ["rho", "value"], zip(dst.grid, dst.values))
    out = {"n": cfg.n, "direction": cfg.direction, "points": int(rho.size)}
    if cfg.norm:
        spec = NormSpec.parse(cfg.norm)
        for name, fld in (("input", src), ("output", dst)):
            if fld.ambient is spec.ambient:
                nv = norm_detail(fld, spec)
                out[f"norm_{name}"] = {"spec": spec.key, "value": nv.value,
                                       "tail_fraction": nv.tail_fraction}
    return out


def _write_states(cfg, states, n):
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    for k, s in enumerate(states):
        if k % cfg.snapshot_every and k != len(states) - 1:
            continue
        _write_csv(d / f"snapshot_{k:06d}.csv", ["rho", "value"], zip(s.field.grid, s.values))
    from .similarity_pde import timeline
    (d / "timeline.json").write_text(dumps(timeline(states)) + "\n")


def cmd_simulate(cfg):
    from . import similarity_pde as sp
    n = cfg.n
    states: list = []
    mode = {"free": "free", "lin": "linearized", "nonlin": "nonlinear",
            "physical": "physical_w"}[cfg.mode]
    base = sp.EvolutionConfig(n, mode, cfg.alpha, cfg.rho_max, cfg.points,
                              cfg.dt or (1e-2 if mode == "physical_w" else 5e-3),
                              perturbative=(mode == "nonlinear"))
    if mode == "free":
        g = base.grid
        states = sp.evolve(base, sp.state_from(base, np.exp(-g ** 2 / 4), cfg.tau0), cfg.tau_end)
        ref = sp.free_step_reference(states[0].field, cfg.tau_end - cfg.tau0)
        err = sp.y_norm(n, g, states[-1].values - ref.values) / sp.y_norm(n, g, ref.values)
        out = {"mode": mode, "reference_relative_error_Y2": err}
    elif mode == "linearized":
        out = sp.eigen_growth_check(n, cfg.alpha, base, window=cfg.tau_end - cfg.tau0,
                                    states_out=states)
    elif mode == "nonlinear":
        tau0 = cfg.tau0 if cfg.tau0 < cfg.tau_end - 1 else cfg.tau_end - 2
        out = sp.ancient_dichotomy_demo(n, cfg.alpha, cfg.epsilon, tau0, cfg.tau_end, base,
                                        states_out=states)
    else:
        t0 = cfg.tau0 if cfg.tau0 > 0 else 0.02
        out = sp.localized_run(n, cfg.alpha, cfg.truncation_radius, cfg.tau_end, t0, base,
                               states_out=states)
    if cfg.out_dir:
        _write_states(cfg, states, n)
    out["timeline"] = sp.timeline(states[:: max(1, cfg.snapshot_every)] + states[-1:])
    return out


# report stages run in worker processes, so they are module-level functions

def _stage_window(n):
    from .asymptotics import verify_zero_window
    return verify_zero_window(n)


def _stage_profile(n):
    from .profile import estimate_tail, solve_profile
    sol = solve_profile(n, 1.0)
    d = estimate_tail(sol)
    return {"alpha": 1.0, "ell": d.ell_alpha, "ell_ci": d.ell_ci, "invariants": "ok"}


def _stage_alpha_bar(n, lambda_bar, tol):
    from .spectral_search import find_alpha_bar, verify_certificate
    r = find_alpha_bar(n, lambda_bar, tol)
    return {**r.as_dict(), "certificate_valid": verify_certificate(r)}


def _stage_lambda_max(n, alpha):
    from .profile import solve_profile
    from .spectral_search import find_lambda_max
    return find_lambda_max(solve_profile(n, alpha), 1e-8).as_dict()


def _stage_pde(n, alpha):
    from .similarity_pde import EvolutionConfig, eigen_growth_check
    h = min(0.02, 0.06 / math.sqrt(alpha))
    cfg = EvolutionConfig(n, "linearized", alpha, 30.0, int(math.ceil(30.0 / h)) + 1, 2e-3)
    return eigen_growth_check(n, alpha, cfg)


def cmd_report(cfg):
    n, lb, tol = cfg.n, cfg.lambda_bar, cfg.tol or 1e-6
    if cfg.jobs == 1:
        window, profile, abar = _stage_window(n), _stage_profile(n), _stage_alpha_bar(n, lb, tol)
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            fw = ex.submit(_stage_window, n)
            fp = ex.submit(_stage_profile, n)
            fa = ex.submit(_stage_alpha_bar, n, lb, tol)
            window, profile, abar = fw.result(), fp.result(), fa.result()
    alpha = abar["value"]
    if cfg.jobs == 1:
        lmax, pde = _stage_lambda_max(n, alpha), _stage_pde(n, alpha)
    else:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, 2)) as ex:
            fl = ex.submit(_stage_lambda_max, n, alpha)
            fd = ex.submit(_stage_pde, n, alpha)
            lmax, pde = fl.result(), fd.result()
    return {"n": n, "profile": profile, "window": window, "alpha_bar": abar,
            "lambda_max": lmax, "pde_crosscheck": pde}


COMMANDS = {"profile": cmd_profile, "eig-probe": cmd_eig_probe, "asymptotics": cmd_asymptotics,
            "window": cmd_window, "search": cmd_search, "transform": cmd_transform,
            "simulate": cmd_simulate, "report": cmd_report}


# ---------------------------------------------------------------- parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"ksi: error code={EXIT_USAGE} kind=usage msg={message}\n")
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ksi", description="Keller-Segel expander profiles and spectra")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    def common(sp):
        sp.add_argument("--config", default=S, help="key=value or JSON file; flags override it")
        sp.add_argument("--n", type=int, default=S)
        sp.add_argument("--tol", type=float, default=S)
        sp.add_argument("--no-timing", dest="timing", action="store_false", default=S,
                        help="drop wall-clock fields so output is byte-reproducible")

    sp = sub.add_parser("profile")
    common(sp)
    sp.add_argument("--alpha", type=float, default=S)
    sp.add_argument("--rmax", type=float, default=S)
    sp.add_argument("--out", default=S)

    sp = sub.add_parser("eig-probe")
    common(sp)
    sp.add_argument("--alpha", type=float, default=S)
    sp.add_argument("--lambda", dest="lam", type=float, default=S)
    sp.add_argument("--mu", type=float, default=S)
    sp.add_argument("--rmax", type=float, default=S)
    sp.add_argument("--out", default=S)

    sp = sub.add_parser("asymptotics")
    common(sp)
    sp.add_argument("--alpha", type=float, default=S, help="default inf (limit system)")
    sp.add_argument("--rmax", type=float, default=S)
    sp.add_argument("--out", default=S)
    sp.add_argument("--phase-out", dest="phase_out", default=S)

    sp = sub.add_parser("window")
    common(sp)
    sp.add_argument("--rmax", type=float, default=S)

    sp = sub.add_parser("search")
    common(sp)
    sp.add_argument("--target", choices=["alpha-k", "alpha-bar", "lambda-max"], default=S)
    sp.add_argument("--k", type=int, default=S)
    sp.add_argument("--lambda-bar", dest="lambda_bar", type=float, default=S)
    sp.add_argument("--alpha", type=float, default=S)

    sp = sub.add_parser("transform")
    common(sp)
    sp.add_argument("--direction", choices=["A", "Ainv"], default=S)
    sp.add_argument("--in", dest="inp", default=S)
    sp.add_argument("--out", default=S)
    sp.add_argument("--norm", default=S)

    sp = sub.add_parser("simulate")
    common(sp)
    sp.add_argument("--mode", choices=["free", "lin", "nonlin", "physical"], default=S)
    sp.add_argument("--alpha", type=float, default=S)
    sp.add_argument("--rho-max", dest="rho_max", type=float, default=S)
    sp.add_argument("--points", type=int, default=S)
    sp.add_argument("--dt", type=float, default=S)
    sp.add_argument("--tau0", type=float, default=S)
    sp.add_argument("--tau-end", dest="tau_end", type=float, default=S)
    sp.add_argument("--epsilon", type=float, default=S)
    sp.add_argument("--truncation-radius", dest="truncation_radius", type=float, default=S)
    sp.add_argument("--snapshot-every", dest="snapshot_every", type=int, default=S)
    sp.add_argument("--out-dir", dest="out_dir", default=S)

    sp = sub.add_parser("report")
    common(sp)
    sp.add_argument("--lambda-bar", dest="lambda_bar", type=float, default=S)
    sp.add_argument("--jobs", type=int, default=S)
    return p


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = str(_FIELD_TYPES[key])
    if isinstance(value, str):
        if "bool" in kind:
            return value.strip().lower() in ("1", "true", "yes")
        if "int" in kind and "float" not in kind:
            return int(value)
        if "float" in kind:
            return float(value)
    return value


def load_config_file(path) -> dict:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("config JSON must be an object")
    except json.JSONDecodeError:
        data = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line without '=': {line!r}")
            k, v = line.split("=", 1)
            data[k.strip()] = v.strip()
    out = {}
    for k, v in data.items():
        key = k.replace("-", "_")
        key = {"lambda": "lam", "in": "inp"}.get(key, key)
        if key not in _FIELD_TYPES or key == "command":
            raise ValueError(f"unknown config key {k!r}")
        out[key] = _coerce(key, v)
    return out


def make_config(ns: argparse.Namespace) -> RunConfig:
    flags = vars(ns).copy()
    command = flags.pop("command")
    merged = {}
    if "config" in flags:
        merged.update(load_config_file(flags.pop("config")))
    merged.update(flags)
    if command == "asymptotics" and "alpha" not in merged:
        merged["alpha"] = math.inf
    if command == "simulate":
        # the physical run resolves the expander core √(t₀/α) on a finer grid
        physical = merged.get("mode") == "physical"
        merged.setdefault("alpha", 1.0 if physical else 10.0)
        if physical:
            merged.setdefault("points", 3001)
    cfg = RunConfig(command=command, **merged)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)
    try:
        cfg = make_config(ns)
        payload = COMMANDS[cfg.command](cfg)
    except (ValueError, TypeError, FileNotFoundError) as e:
        msg = str(e).replace("\n", " ")
        sys.stderr.write(f"ksi: error code={EXIT_PRECONDITION} kind=precondition msg={msg}\n")
        return EXIT_PRECONDITION
    except ArithmeticError as e:
        msg = str(e).replace("\n", " ")
        sys.stderr.write(f"ksi: error code={EXIT_NUMERICAL} kind=numerical "
                         f"type={type(e).__name__} msg={msg}\n")
        return EXIT_NUMERICAL
    _emit(cfg, payload)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
