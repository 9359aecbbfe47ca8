"""Command line front end: config parsing, experiment orchestration, CSV and
16-bit graymap output.

    pucci-logistic <eigen|solve|sweep|blowup|annulus|selftest> --config run.cfg [--out DIR]
                   [--trace] [--workers N] [--heatmaps] [key=value ...]
"""

from __future__ import annotations

import argparse
import ast
import concurrent.futures
import csv
import dataclasses
import hashlib
import io
import logging
import math
import platform
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, PucciLogisticError
from .geometry import Difference, Disk, DomainSpec, Grid2D, Rect
from .operators import Kind, OperatorSpec

log = logging.getLogger("pucci_logistic")

SUBCOMMANDS = ("eigen", "solve", "sweep", "blowup", "annulus", "selftest")
EXIT_OK, EXIT_ERROR, EXIT_UNRESOLVED = 0, 1, 2
MIN_RES, MAX_RES = 17, 513


# -- config -------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    domain: DomainSpec
    n: int = 65
    box: tuple = (0.0, 0.0, 1.0, 1.0)
    oasis: DomainSpec | None = None
    operator: str = "laplacian"
    lam: float = 1.0
    Lam: float = 1.0
    directions: int = 16
    mu: float | None = None
    mu_grid: tuple = ()
    p: float = 2.0
    k_kind: str | None = None
    k0: float = 1.0
    k1: float = 1.0
    ramp: float | None = None
    eps_seq: tuple = ()
    n_seq: tuple = ()
    inflation_seq: tuple = ()
    delta_seq: tuple = (1e-1, 1e-2, 1e-3, 0.0)
    phi_inner: float = 1.0
    d_probe: float | None = None
    sat_tol: float = 1e-2
    tol_bracket: float = 1e-8
    tol_cmp: float = 1e-8
    # run plumbing, excluded from the hash
    out: str = "out"
    trace: bool = False
    workers: int = 1
    heatmaps: bool = False

    PLUMBING = ("out", "trace", "workers", "heatmaps")

    @property
    def kind(self):
        return self.k_kind or ("K2" if self.oasis is not None else "K1")

    def grid(self):
        x0, y0, x1, y1 = self.box
        return Grid2D.box(self.n, (x0, y0), (x1, y1))

    def op_spec(self):
        return OperatorSpec(Kind(self.operator), lam=self.lam, Lam=self.Lam, directions=self.directions)

    def reaction(self, mu=None):
        from .logistic import ReactionSpec

        mu = self.mu if mu is None else mu
        return ReactionSpec(mu=0.0 if mu is None else mu, p=self.p, k_kind=self.kind, k0=self.k0, k1=self.k1,
                            oasis=self.oasis, ramp=self.ramp)

    def canonical(self):
        items = []
        for f in dataclasses.fields(self):
            if f.name not in self.PLUMBING:
                items.append(f"{f.name}={getattr(self, f.name)!r}")
        return "\n".join(items)

    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_ALIASES = {"lambda": "lam", "Lambda": "Lam", "resolution": "n"}
_SEQUENCES = {"box", "mu_grid", "eps_seq", "n_seq", "inflation_seq", "delta_seq"}
_DOMAINS = {"domain", "oasis"}
_SHAPE = re.compile(r"^(rect|disk)\s*\(([^()]*)\)$")


def parse_domain(text, line=None):
    """``rect(x0,y0,x1,y1)``, ``disk(cx,cy,r)`` or ``A - B`` of those."""
    parts = [t.strip() for t in re.split(r"\)\s*-\s*", text.strip())]
    parts = [p if p.endswith(")") else p + ")" for p in parts]
    shapes = []
    for part in parts:
        m = _SHAPE.match(part)
        if not m:
            raise ConfigError("PARSE_ERROR", f"line {line}: bad shape {part!r}", line=line)
        try:
            args = [float(a) for a in m.group(2).split(",")]
        except ValueError:
            raise ConfigError("PARSE_ERROR", f"line {line}: bad number in {part!r}", line=line) from None
        if m.group(1) == "rect":
            if len(args) != 4:
                raise ConfigError("PARSE_ERROR", f"line {line}: rect takes 4 numbers", line=line)
            shapes.append(Rect.from_corners(*args))
        else:
            if len(args) != 3:
                raise ConfigError("PARSE_ERROR", f"line {line}: disk takes 3 numbers", line=line)
            shapes.append(Disk(*args))
    dom = shapes[0]
    for s in shapes[1:]:
        dom = Difference(dom, s)
    return dom


def _parse_value(key, text, line):
    text = text.strip()
    if key in _DOMAINS:
        return None if text.lower() in ("none", "") else parse_domain(text, line)
    if key in _SEQUENCES:
        body = text.strip("[]() ")
        if not body:
            return ()
        try:
            return tuple(float(v) for v in body.split(","))
        except ValueError:
            raise ConfigError("PARSE_ERROR", f"line {line}: bad list for {key}", line=line) from None
    ftype = str(_FIELDS[key].type)
    if "bool" in ftype:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError("PARSE_ERROR", f"line {line}: bad boolean for {key}", line=line)
    if key in ("operator", "k_kind", "out"):
        return None if key == "k_kind" and text.lower() == "none" else text
    if text.lower() == "none" and "None" in ftype:
        return None
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        raise ConfigError("PARSE_ERROR", f"line {line}: bad value for {key}: {text!r}", line=line) from None
    if "int" in ftype and not isinstance(value, int):
        raise ConfigError("PARSE_ERROR", f"line {line}: {key} must be an integer", line=line)
    return float(value) if "float" in ftype else value


def parse_text(text, overrides=()):
    values = {}
    lines = [(i, l) for i, l in enumerate(text.splitlines(), 1)]
    lines += [(f"override {j}", o) for j, o in enumerate(overrides, 1)]
    for line, raw in lines:
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("PARSE_ERROR", f"line {line}: expected key = value", line=line)
        key, value = (s.strip() for s in body.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _FIELDS or key == "PLUMBING":
            raise ConfigError("PARSE_ERROR", f"line {line}: unknown key {key!r}", line=line)
        values[key] = _parse_value(key, value, line)
    return values


def parse_config(path=None, overrides=(), **flags) -> RunConfig:
    """Config file plus ``key=value`` overrides plus keyword flags, validated."""
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("IO_ERROR", f"cannot read {path}: {exc}") from None
    values = parse_text(text, overrides)
    values.update({k: v for k, v in flags.items() if v is not None})
    if "domain" not in values or values["domain"] is None:
        raise ConfigError("VALIDATION_ERROR", "domain is required", field="domain")
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def _bad(field_name, message):
    raise ConfigError("VALIDATION_ERROR", f"{field_name}: {message}", field=field_name)


def validate(cfg: RunConfig):
    if not MIN_RES <= cfg.n <= MAX_RES:
        _bad("n", f"resolution must lie in [{MIN_RES}, {MAX_RES}]")
    if cfg.operator not in {k.value for k in Kind} or cfg.operator == Kind.BELLMAN_SUP.value:
        _bad("operator", "one of laplacian, pucci_plus, pucci_minus")
    if cfg.lam <= 0:
        _bad("lambda", "must be positive")
    if cfg.Lam < cfg.lam:
        _bad("Lambda", "must not be below lambda")
    if cfg.operator == "laplacian" and not cfg.lam == cfg.Lam == 1.0:
        _bad("operator", "the Laplacian has lambda = Lambda = 1")
    if cfg.k_kind not in (None, "K1", "K2"):
        _bad("k_kind", "K1 or K2")
    if cfg.kind == "K2" and cfg.oasis is None:
        _bad("oasis", "K2 needs an oasis")
    if cfg.p <= 1:
        _bad("p", "must exceed 1")
    for name in ("tol_bracket", "tol_cmp", "sat_tol", "k1"):
        if not getattr(cfg, name) > 0:
            _bad(name, "must be positive")
    if not 0 < cfg.k0 <= cfg.k1:
        _bad("k0", "need 0 < k0 <= k1")
    if cfg.workers < 1:
        _bad("workers", "at least 1")
    if len(cfg.box) != 4:
        _bad("box", "four numbers x0, y0, x1, y1")
    for name in ("mu_grid", "n_seq"):
        seq = getattr(cfg, name)
        if any(b <= a for a, b in zip(seq, seq[1:])):
            _bad(name, "must be strictly increasing")
    for name in ("eps_seq", "inflation_seq", "delta_seq"):
        seq = getattr(cfg, name)
        if any(b >= a for a, b in zip(seq, seq[1:])):
            _bad(name, "must be strictly decreasing")
    try:
        cfg.op_spec()
    except PucciLogisticError as exc:
        _bad("operator", str(exc))


# -- output -------------------------------------------------------------------

def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    try:
        Path(path).write_text(buf.getvalue())
    except OSError as exc:
        raise ConfigError("IO_ERROR", f"cannot write {path}: {exc}") from None


def emit_heatmap(field_values, path, mask=None):
    """Binary 16-bit PGM; values mapped affinely [min, max] -> [0, 65535].

    ``field_values`` is a grid array (NaN outside the domain) or, with
    ``mask``, a vector over its unknowns.  Exterior pixels are 0.  The top
    image row is the largest y.  min/max sit in a header comment.
    """
    arr = mask.to_grid(field_values) if mask is not None else np.asarray(field_values, dtype=float)
    inside = ~np.isnan(arr)
    vals = arr[inside]
    if vals.size == 0 or not np.all(np.isfinite(vals)):
        raise ConfigError("IO_ERROR", "heatmap field must be finite and nonempty")
    lo, hi = float(vals.min()), float(vals.max())
    if hi > lo:
        scaled = np.rint((np.where(inside, arr, lo) - lo) / (hi - lo) * 65535.0)
    else:
        scaled = np.full(arr.shape, 32768.0)
    pix = np.where(inside, scaled, 0).astype(">u2")
    img = pix.T[::-1]  # rows = y descending, columns = x
    header = f"P5\n# pucci_logistic min={lo!r} max={hi!r}\n{img.shape[1]} {img.shape[0]}\n65535\n".encode()
    try:
        with open(path, "wb") as fh:
            fh.write(header + img.tobytes())
    except OSError as exc:
        raise ConfigError("IO_ERROR", f"cannot write {path}: {exc}") from None
    return Path(path)


def read_heatmap(path):
    """Inverse of emit_heatmap: (grid array indexed [i, j], min, max)."""
    data = Path(path).read_bytes()
    fields_, pos = [], 0
    comment = ""
    while len(fields_) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            end = data.index(b"\n", pos)
            comment += data[pos:end].decode()
            pos = end + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields_.append(data[pos:end].decode())
        pos = end
    pos += 1
    w, hgt = int(fields_[1]), int(fields_[2])
    lo = float(re.search(r"min=(\S+)", comment).group(1))
    hi = float(re.search(r"max=(\S+)", comment).group(1))
    img = np.frombuffer(data[pos:pos + 2 * w * hgt], dtype=">u2").reshape(hgt, w)
    pix = img[::-1].T.astype(float)
    vals = lo + pix / 65535.0 * (hi - lo) if hi > lo else np.full(pix.shape, lo)
    return vals, lo, hi


# -- subcommands ----------------------------------------------------------------

def _model(cfg, mu=None):
    from .logistic import LogisticModel

    return LogisticModel(cfg.grid(), cfg.domain, cfg.op_spec(), cfg.reaction(mu), tol_bracket=cfg.tol_bracket)


def cmd_eigen(cfg, out, meta):
    from .eigen import principal_eigen
    from .operators import discretize
    from .geometry import build_mask

    grid = cfg.grid()
    mask = build_mask(grid, cfg.domain)
    res = principal_eigen(discretize(cfg.op_spec(), grid, mask), tol_bracket=cfg.tol_bracket)
    rows = [(cfg.hash(), "domain", res.lambda_lo, res.lambda_hi, res.lambda_est, res.iterations, res.residual)]
    meta["lambda_domain"] = (res.lambda_lo, res.lambda_hi)
    fields_out = {"phi": (res.phi, mask)}
    if cfg.kind == "K2":
        model = _model(cfg)
        ez = model.eigen_oasis
        rows.append((cfg.hash(), "oasis", ez.lambda_lo, ez.lambda_hi, ez.lambda_est, ez.iterations, ez.residual))
        meta["lambda_oasis"] = (ez.lambda_lo, ez.lambda_hi)
    write_csv(out / "results.csv", ["config_hash", "target", "lambda_lo", "lambda_hi", "lambda_est", "iterations", "residual"], rows)
    return EXIT_OK, fields_out


SOLVE_HEADER = ["config_hash", "mu", "status", "pipeline", "sup_norm", "sup_norm_oasis", "iterations", "residual",
                "C_boundary_fit"]


def _solve_point(cfg, model, mu):
    from .logistic import MuClass, classify_mu

    c = classify_mu(model, mu)
    rep = c.report
    sup = sup_oasis = resid = cfit = float("nan")
    its = rep.iterations if rep is not None else 0
    if c.label is MuClass.EXISTS and c.agrees:
        sup = float(rep.u.max())
        resid = rep.info["residual_nl"]
        cfit = rep.info.get("C_boundary_fit", float("nan"))
        if cfg.kind == "K2":
            sup_oasis = float(rep.u[model.oasis_nodes].max())
    elif c.label is MuClass.NO_SOLUTION_LOW:
        sup = sup_oasis = 0.0
    elif c.label is MuClass.NO_SOLUTION_HIGH:
        sup = sup_oasis = float("inf")
    row = (cfg.hash(), mu, c.label.value, c.pipeline, sup, sup_oasis, its, resid, cfit)
    field_u = rep.u if (rep is not None and c.label is MuClass.EXISTS and c.agrees) else None
    return row, c, field_u


_WORKER = {}


def _init_worker(cfg):
    _WORKER["cfg"] = cfg
    _WORKER["model"] = _model(cfg)


def _worker_point(mu):
    row, c, u = _solve_point(_WORKER["cfg"], _WORKER["model"], mu)
    return row, c.label.value, c.agrees, u


def _run_points(cfg, mus):
    """Classify and solve each mu; results come back in the order of ``mus``."""
    if cfg.workers > 1 and len(mus) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers, initializer=_init_worker,
                                                    initargs=(cfg,)) as ex:
            return list(ex.map(_worker_point, mus))
    _init_worker(cfg)
    return [_worker_point(mu) for mu in mus]


def _points_result(cfg, out, meta, mus, names):
    from .logistic import MuClass

    results = _run_points(cfg, mus)
    write_csv(out / "results.csv", SOLVE_HEADER, [r[0] for r in results])
    model = _WORKER.get("model")
    if model is not None and "eigen_omega" in model.__dict__:
        meta["lambda_domain"] = (model.eigen_omega.lambda_lo, model.eigen_omega.lambda_hi)
    if model is not None and "eigen_oasis" in model.__dict__:
        meta["lambda_oasis"] = (model.eigen_oasis.lambda_lo, model.eigen_oasis.lambda_hi)
    fields_out = {}
    for (row, label, agrees, u), name in zip(results, names):
        if u is not None:
            fields_out[name] = (u, _model_mask(cfg))
    if any(label == MuClass.UNRESOLVED.value for _, label, _, _ in results):
        return EXIT_UNRESOLVED, fields_out
    if any(agrees is False for _, _, agrees, _ in results):
        return EXIT_ERROR, fields_out
    return EXIT_OK, fields_out


def _model_mask(cfg):
    from .geometry import build_mask

    return build_mask(cfg.grid(), cfg.domain)


def cmd_solve(cfg, out, meta):
    if cfg.mu is None:
        _bad("mu", "solve needs mu")
    return _points_result(cfg, out, meta, [cfg.mu], ["u"])


def cmd_sweep(cfg, out, meta):
    if not cfg.mu_grid:
        _bad("mu_grid", "sweep needs a nonempty mu grid")
    mus = list(cfg.mu_grid)
    return _points_result(cfg, out, meta, mus, [f"u_{i:03d}" for i in range(len(mus))])


def _default_mu(model):
    if model.reaction.k_kind.value == "K2":
        return 0.5 * (model.eigen_omega.lambda_hi + model.eigen_oasis.lambda_lo)
    return 2 * model.eigen_omega.lambda_est


def cmd_blowup(cfg, out, meta):
    from .blowup import blowup_pair

    if cfg.kind != "K2":
        _bad("oasis", "blowup needs an oasis")
    model = _model(cfg)
    mu = _default_mu(model) if cfg.mu is None else cfg.mu
    mn, mx = blowup_pair(model, mu, n_seq=list(cfg.n_seq) or None, inflation_seq=list(cfg.inflation_seq) or None,
                         d_probe=cfg.d_probe, sat_tol=cfg.sat_tol)
    rows = [(cfg.hash(),) + r for r in mn.rows + mx.rows]
    write_csv(out / "results.csv", ["config_hash", "side", "parameter", "sup_probe", "saturation"], rows)
    meta["mu"] = mu
    meta["saturated"] = mn.saturated
    if not mn.saturated:
        log.warning("blowup.NOT_SATURATED: saturation %.3g above %.3g", mn.saturation, cfg.sat_tol)
    finite = np.where(np.isfinite(mx.maximal_candidate), mx.maximal_candidate, np.nan)
    return EXIT_OK, {"minimal": (mn.minimal_candidate, mn.mask), "maximal": (finite, mx.mask)}


def cmd_annulus(cfg, out, meta):
    from .logistic import solve_annulus

    if cfg.kind != "K2":
        _bad("oasis", "annulus needs an oasis")
    model = _model(cfg)
    mu = _default_mu(model) if cfg.mu is None else cfg.mu
    sol = solve_annulus(model, mu, phi_inner=cfg.phi_inner, delta_seq=cfg.delta_seq)
    rows = []
    for delta, u in sol.u_by_delta.items():
        rows.append((cfg.hash(), mu, delta, float(u.max()), float(u[sol.outer_distance > 0].min())))
    write_csv(out / "results.csv", ["config_hash", "mu", "delta", "sup_norm", "min_norm"], rows)
    meta["mu"] = mu
    meta["C_boundary_fit"] = sol.C_boundary_fit
    meta["iterations"] = sol.report.iterations
    meta["residual"] = sol.report.info["residual_nl"]
    return EXIT_OK, {"u": (sol.u, sol.mask)}


def cmd_selftest(cfg, out, meta):
    """Quick self-checks that do not depend on the config's physics."""
    from .eigen import eigen_on_domain
    from .operators import SymMat2, pucci_minus, pucci_plus

    rows = []
    res = eigen_on_domain(OperatorSpec(Kind.LAPLACIAN), Grid2D.unit_square(33), Rect.from_corners(0, 0, 1, 1),
                          tol_bracket=1e-6)
    ref = 2 * math.pi**2
    rows.append(("square_eigenvalue", res.lambda_est, ref, abs(res.lambda_est / ref - 1) < 0.02))
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(200):
        M = SymMat2(*rng.normal(size=3))
        N = SymMat2(*rng.normal(size=3))
        lam, Lam = sorted(rng.uniform(0.1, 3.0, size=2))
        lo = pucci_minus(N, lam, Lam)
        hi = pucci_plus(N, lam, Lam)
        d = pucci_plus(M + N, lam, Lam) - pucci_plus(M, lam, Lam)
        worst = max(worst, lo - d, d - hi, abs(pucci_minus(M, lam, Lam) + pucci_plus(-M, lam, Lam)))
    rows.append(("pucci_sandwich_duality", worst, 0.0, worst <= 1e-12))
    write_csv(out / "results.csv", ["check", "value", "reference", "passed"], rows)
    return (EXIT_OK if all(r[3] for r in rows) else EXIT_ERROR), {}


COMMANDS = {"eigen": cmd_eigen, "solve": cmd_solve, "sweep": cmd_sweep, "blowup": cmd_blowup,
            "annulus": cmd_annulus, "selftest": cmd_selftest}


def run(command, cfg: RunConfig):
    """Execute ``command``; returns the exit code.  Artifacts go to cfg.out."""
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("IO_ERROR", f"cannot create {out}: {exc}") from None
    meta = {}
    t0 = time.perf_counter()
    code, fields_out = COMMANDS[command](cfg, out, meta)
    wall = time.perf_counter() - t0
    if cfg.heatmaps:
        for name, (values, mask) in fields_out.items():
            emit_heatmap(values, out / f"{name}.pgm", mask)
    write_meta(out / "meta.csv", command, cfg, meta, wall)
    return code


def write_meta(path, command, cfg, meta, wall):
    import scipy

    grid = cfg.grid()
    rows = [("config_hash", cfg.hash()), ("command", command), ("grid", f"{grid.nx}x{grid.ny}"), ("h", grid.h),
            ("tol_bracket", cfg.tol_bracket), ("tol_cmp", cfg.tol_cmp), ("sat_tol", cfg.sat_tol),
            ("version", __version__), ("python", platform.python_version()), ("numpy", np.__version__),
            ("scipy", scipy.__version__), ("workers", cfg.workers), ("wall_time_s", wall)]
    for k, v in meta.items():
        if isinstance(v, tuple):
            rows.append((f"{k}_lo", v[0]))
            rows.append((f"{k}_hi", v[1]))
        else:
            rows.append((k, v))
    write_csv(path, ["key", "value"], rows)


def build_parser():
    ap = argparse.ArgumentParser(prog="pucci-logistic", description="Solve and sweep the steady logistic problem for Pucci-type operators.")
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("overrides", nargs="*", help="key=value settings applied after the config file")
    ap.add_argument("--config", help="key = value config file")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--trace", action="store_true", help="log solver iterations to stderr")
    ap.add_argument("--workers", type=int, help="worker processes for independent mu points")
    ap.add_argument("--heatmaps", action="store_true", help="write 16-bit PGM heatmaps")
    return ap


def main(argv=None):
    args = build_parser().parse_intermixed_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.trace else logging.WARNING, format="%(name)s: %(message)s")
    try:
        overrides = list(args.overrides)
        if args.command == "selftest" and args.config is None and not any(o.startswith("domain") for o in overrides):
            overrides.append("domain = rect(0,0,1,1)")
        cfg = parse_config(args.config, overrides, out=args.out, workers=args.workers,
                           trace=args.trace or None, heatmaps=args.heatmaps or None)
        return run(args.command, cfg)
    except PucciLogisticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
