"""Command-line interface: ``dfsphere run | converge | render | diagnose``.

Options can also be read from a flat ``key = value`` config file given with
``--config``; command-line flags take precedence.  Nonlinearities and initial
conditions may be given as small pointwise expressions, e.g.
``--nonlinearity "u - (1+1.5i)*u*abs(u)**2"`` and ``--initial "cos(40*x)"``.
"""

from __future__ import annotations

import argparse
import ast
import csv
import hashlib
import json
import logging
import math
import operator
import re
import struct
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .dfs import SphereFunction, pole_residual, restrict, symmetry_residual
from .fourier_core import GridSpec, coeffs_to_vals
from .laplacian import assemble, spectral_diagnostics
from .linsolve import FactorizationBreakdown
from .problems import ProblemSpec, builtin, convergence_study, relative_error
from .timesteppers import (
    SCHEMES,
    IncompatibleSchemeError,
    InstabilityError,
    SchemeConfig,
    integrate,
)

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"DFSSNAP\0"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<8sIIIId16sB7x")

EXIT_OK, EXIT_CONFIG, EXIT_UNSTABLE = 0, 2, 3


class ConfigError(ValueError):
    """Invalid run configuration."""


# ---------------------------------------------------------------- expressions

_BINOPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {
    "abs": np.abs, "conj": np.conj, "real": np.real, "imag": np.imag,
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
    "sin": np.sin, "cos": np.cos, "tan": np.tan,
    "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
}
_CONSTS = {"pi": math.pi, "e": math.e, "i": 1j, "j": 1j}


def compile_expression(text: str, variables: Sequence[str]) -> Callable[..., np.ndarray]:
    """Compile a pointwise arithmetic expression into a function of ``variables``.

    Only numbers, the named variables, ``pi``, ``e``, ``i``, the operators
    ``+ - * / **`` (``^`` is read as ``**``) and the functions in ``_FUNCS``
    are accepted.  Complex literals may be written ``1.5i``.
    """
    src = _imaginary_literals(text).replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    allowed = set(variables)

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return check(node.left) and check(node.right)
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return check(node.operand)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
            return True
        if isinstance(node, ast.Name):
            if node.id in allowed or node.id in _CONSTS:
                return True
            raise ConfigError(f"unknown name {node.id!r} in expression {text!r}")
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            if node.func.id not in _FUNCS:
                raise ConfigError(f"unknown function {node.func.id!r} in expression {text!r}")
            return all(check(a) for a in node.args)
        raise ConfigError(f"unsupported syntax in expression {text!r}")

    check(tree)

    def evaluate(node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](evaluate(node.left, env), evaluate(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](evaluate(node.operand, env))
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTS[node.id]
        return _FUNCS[node.func.id](*(evaluate(a, env) for a in node.args))

    names = list(variables)

    def func(*args):
        out = evaluate(tree.body, dict(zip(names, args)))
        shape = np.broadcast_shapes(*(np.shape(a) for a in args))
        return np.array(np.broadcast_to(out, shape))

    return func


def _imaginary_literals(text: str) -> str:
    """Rewrite ``1.5i`` as ``1.5j`` so Python's tokenizer accepts it."""
    return re.sub(r"(\d(?:[\d.]*)(?:[eE][+-]?\d+)?)i\b", r"\1j", text)


# ---------------------------------------------------------------- config

_RUN_KEYS = {
    "problem": str, "l": int, "order": int, "m": int, "n": int, "h": "number",
    "tspan": str, "scheme": str, "snapshots": str, "out": str, "alpha": complex,
    "nonlinearity": str, "initial": str, "reaction": complex,
    "schemes": str, "hs": str, "reference": str,
}


def read_config(path: str) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    cfg = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _RUN_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        cfg[key] = value
    return cfg


def _merge(args: argparse.Namespace) -> dict:
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    for key in _RUN_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = " ".join(map(str, val)) if isinstance(val, list) else val
    out = {}
    for key, val in cfg.items():
        typ = _RUN_KEYS[key]
        try:
            if typ == "number":
                out[key] = eval_number(str(val))
            elif typ is complex:
                out[key] = complex(_imaginary_literals(str(val)).replace(" ", ""))
            else:
                out[key] = typ(val)
        except (TypeError, ValueError):
            raise ConfigError(f"invalid value {val!r} for {key}") from None
    return out


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(eval_number(t)) for t in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"invalid number list for {what}: {text!r}") from None


def eval_number(token: str) -> float:
    """A float, or a simple fraction such as ``1/25``."""
    if "/" in token:
        num, den = token.split("/", 1)
        return float(num) / float(den)
    return float(token)


def build_problem(cfg: dict) -> ProblemSpec:
    """Built-in problem, optionally overridden by inline alpha/nonlinearity/initial."""
    name = cfg.get("problem")
    if name:
        params = {}
        if name == "heat":
            for key in ("l", "order", "alpha", "reaction"):
                if key in cfg:
                    params[key] = cfg[key]
        try:
            prob = builtin(name, **params)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if name == "heat":
            return prob
    elif not {"alpha", "initial"} <= cfg.keys():
        raise ConfigError("give --problem, or --alpha and --initial for an inline problem")
    else:
        prob = None
    alpha = cfg.get("alpha", prob.alpha if prob else None)
    g = prob.nonlinearity if prob else None
    if "nonlinearity" in cfg:
        g = compile_expression(cfg["nonlinearity"], ["u"])
    init = prob.initial if prob else None
    if "initial" in cfg:
        f = compile_expression(cfg["initial"], ["x", "y", "z", "lam", "theta"])

        def ev(lam, theta):
            st = np.sin(theta)
            return f(np.cos(lam) * st, np.sin(lam) * st, np.cos(theta), lam, theta)

        init = SphereFunction(evaluator=ev)
    desc = {k: str(cfg[k]) for k in ("problem", "alpha", "nonlinearity", "initial") if k in cfg}
    return ProblemSpec(name or "inline", complex(alpha), g, init, None, params=desc)


def _grid(cfg: dict) -> GridSpec:
    n = cfg.get("n", cfg.get("m"))
    if n is None:
        raise ConfigError("grid size missing: give --n (and optionally --m)")
    return GridSpec(cfg.get("m", n), n)


def _tspan(cfg: dict) -> tuple[float, float]:
    ts = _floats(cfg.get("tspan", "0 1"), "tspan")
    if len(ts) != 2:
        raise ConfigError("tspan needs two values: t0 T")
    return ts[0], ts[1]


# ---------------------------------------------------------------- snapshots

def problem_hash(desc: dict) -> bytes:
    return hashlib.sha256(json.dumps(desc, sort_keys=True, default=str).encode()).digest()[:16]


def write_snapshot(path: Path, values: np.ndarray, m: int, t: float, phash: bytes) -> None:
    """Write restricted values: header, then row-major little-endian float64 data."""
    values = np.asarray(values)
    is_complex = bool(np.iscomplexobj(values) and np.any(values.imag != 0))
    rows, n = values.shape
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, rows, n, m, float(t), phash,
                          int(is_complex))
    data = values if is_complex else values.real
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data, dtype="<c16" if is_complex else "<f8").tobytes())


def read_snapshot(path) -> dict:
    """Read a snapshot written by :func:`write_snapshot`."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read snapshot {path}: {exc.strerror}") from None
    if len(raw) < _HEADER.size:
        raise ConfigError(f"{path} is too short to be a snapshot")
    magic, version, rows, n, m, t, phash, is_complex = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC or version != SNAPSHOT_VERSION:
        raise ConfigError(f"{path} is not a version-{SNAPSHOT_VERSION} snapshot")
    dtype = np.dtype("<c16" if is_complex else "<f8")
    if len(raw) - _HEADER.size != rows * n * dtype.itemsize:
        raise ConfigError(f"{path} is truncated or has trailing data")
    data = np.frombuffer(raw, dtype=dtype, offset=_HEADER.size)
    return {"values": data.reshape(rows, n), "m": m, "n": n, "t": t,
            "problem_hash": phash.hex(), "complex": bool(is_complex)}


# ---------------------------------------------------------------- rendering

_CMAP = np.array([[33, 102, 172], [247, 247, 247], [178, 24, 43]], dtype=float)


def colorize(values: np.ndarray) -> np.ndarray:
    """Map real values to RGB with a blue-white-red scale symmetric about zero."""
    v = np.real(values)
    vmax = float(np.max(np.abs(v))) if v.size else 0.0
    s = np.zeros_like(v) if vmax == 0 else v / vmax
    lo = np.clip(-s, 0, 1)[..., None]
    hi = np.clip(s, 0, 1)[..., None]
    rgb = np.where(s[..., None] < 0,
                   _CMAP[1] + lo * (_CMAP[0] - _CMAP[1]),
                   _CMAP[1] + hi * (_CMAP[2] - _CMAP[1]))
    return np.round(rgb).astype(np.uint8)


def write_ppm(path: Path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)


# ---------------------------------------------------------------- commands

def cmd_run(args) -> int:
    cfg = _merge(args)
    prob = build_problem(cfg)
    spec = _grid(cfg)
    t0, T = _tspan(cfg)
    if "h" not in cfg:
        raise ConfigError("time step missing: give --h")
    snaps = tuple(_floats(cfg["snapshots"], "snapshots")) if "snapshots" in cfg else ()
    if T not in snaps:
        snaps = snaps + (T,)
    scheme = SchemeConfig(cfg.get("scheme", "lirk4"), cfg["h"], (t0, T), snaps)
    out = Path(cfg.get("out", "dfsphere-run"))
    out.mkdir(parents=True, exist_ok=True)

    res = integrate(prob, scheme, spec)
    desc = {"problem": prob.name, "alpha": str(prob.alpha), **{k: str(v) for k, v in prob.params.items()}}
    phash = problem_hash(desc)
    entries = []
    for k, (ts, coeffs) in enumerate(sorted(res.snapshots.items())):
        vals = restrict(coeffs_to_vals(coeffs))
        fname = f"snapshot_{k:04d}.dfs"
        write_snapshot(out / fname, vals, spec.m, ts, phash)
        entry = {"t": ts, "file": fname, "max_abs": float(np.max(np.abs(vals))),
                 "pole_residual": pole_residual(coeffs), "symmetry_residual": symmetry_residual(coeffs)}
        if prob.exact is not None:
            entry["error"] = relative_error(coeffs, prob.exact(ts, spec))
        entries.append(entry)
    manifest = {
        "version": __version__,
        "config": {k: str(v) for k, v in cfg.items()},
        "problem": desc,
        "problem_hash": phash.hex(),
        "grid": {"m": spec.m, "n": spec.n},
        "scheme": scheme.scheme,
        "h": scheme.h,
        "t_span": [t0, T],
        "steps": res.steps,
        "wall_seconds": res.wall_time,
        "precompute_seconds": res.precompute_time,
        "fft_count": res.fft_count,
        "snapshots": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    final = entries[-1]
    msg = f"{res.steps} steps, max|u| = {final['max_abs']:.6g}"
    if "error" in final:
        msg += f", error = {final['error']:.3e}"
    print(f"{msg}; wrote {out}")
    return EXIT_OK


def cmd_converge(args) -> int:
    cfg = _merge(args)
    prob = build_problem(cfg)
    spec = _grid(cfg)
    t_span = _tspan(cfg)
    schemes = cfg.get("schemes", " ".join(SCHEMES)).replace(",", " ").split()
    hs = _floats(cfg.get("hs", "1/25 1/50 1/100 1/200"), "hs")
    use_exact = cfg.get("reference", "eig") == "exact"
    rows, slopes = convergence_study(prob, schemes, hs, spec, t_span, use_exact=use_exact)
    fh = open(cfg["out"], "w", newline="") if "out" in cfg else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "h", "h/T", "E", "wall_seconds", "precompute_seconds"])
        for r in rows:
            w.writerow([r.scheme, repr(r.h), repr(r.h_over_T), f"{r.error:.12e}",
                        f"{r.wall_seconds:.6f}", f"{r.precompute_seconds:.6f}"])
    finally:
        if fh is not sys.stdout:
            fh.close()
    for name, s in slopes.items():
        print(f"# {name}: slope {s:.3f}", file=sys.stderr)
    return EXIT_OK


def cmd_render(args) -> int:
    snap = read_snapshot(args.snapshot)
    rgb = colorize(snap["values"])
    if args.scale > 1:
        rgb = np.repeat(np.repeat(rgb, args.scale, axis=0), args.scale, axis=1)
    out = Path(args.out) if args.out else Path(args.snapshot).with_suffix(".ppm")
    write_ppm(out, rgb)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = _merge(args)
    spec = _grid(cfg)
    rep = spectral_diagnostics(assemble(spec, cfg.get("alpha", 1.0)))
    info = {"m": spec.m, "n": spec.n, "max_abs_eig": rep.max_abs_eig, "max_imag": rep.max_imag,
            "max_positive_real": rep.max_positive_real, "all_real": bool(rep.all_real),
            "all_nonpositive": bool(rep.all_nonpositive), "condV": rep.condV}
    text = json.dumps(info, indent=2)
    if "out" in cfg:
        Path(cfg["out"]).write_text(text)
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfsphere", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--problem", help="allen-cahn, nls, ginzburg-landau or heat")
        p.add_argument("--l", type=int, help="degree for the heat problem")
        p.add_argument("--order", type=int, help="order of the heat initial harmonic")
        p.add_argument("--alpha", help="diffusion coefficient, e.g. 0.01 or 1i")
        p.add_argument("--reaction", help="linear reaction rate for the heat problem")
        p.add_argument("--nonlinearity", help="pointwise expression in u")
        p.add_argument("--initial", help="initial condition in x, y, z, lam, theta")
        p.add_argument("--m", type=int, help="latitudinal grid size (default: n)")
        p.add_argument("--n", type=int, help="longitudinal grid size")
        p.add_argument("--tspan", nargs=2, help="start and final time")
        p.add_argument("--out", help="output directory or file")

    p = sub.add_parser("run", help="integrate a PDE and write snapshots")
    common(p)
    p.add_argument("--h", type=eval_number, help="time step")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--snapshots", nargs="+", help="snapshot times")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("converge", help="error and timing table as CSV")
    common(p)
    p.add_argument("--schemes", nargs="+", help="schemes to compare")
    p.add_argument("--hs", nargs="+", help="time steps (fractions allowed)")
    p.add_argument("--reference", choices=("eig", "exact"),
                   help="reference solution: ETDRK4-EIG at h_min/2 or the exact solution")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("render", help="render a snapshot as a PPM image")
    p.add_argument("snapshot")
    p.add_argument("--out")
    p.add_argument("--scale", type=int, default=1, help="integer pixel upscale")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("diagnose", help="eigenvalue and cond(V) diagnostics of the Laplacian")
    p.add_argument("--config")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--alpha")
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InstabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (ConfigError, IncompatibleSchemeError, FactorizationBreakdown, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
