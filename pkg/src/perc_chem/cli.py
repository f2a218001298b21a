"""``perc-chem``: configuration-driven experiment runner.

Each run writes CSV tables and a JSON manifest into ``<out>/<command>-<hash>``
where the hash covers every setting that can change the output. The worker
count is excluded, so changing it maps to the same directory. An existing
directory is checked for byte-identical contents and never overwritten.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import shutil
import sys
import tempfile
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, estimators as est
from .errors import ConfigError, GeometryError, InvariantViolation, PercChemError, ResourceError

UNHASHED = {"workers", "config", "out", "command", "func"}


# --- value parsing -----------------------------------------------------------


def parse_grid(text: str, kind=float) -> list:
    """``"a:b:step"`` (inclusive) or a comma list."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid {text!r} must look like start:stop:step")
        try:
            a, b, s = (Decimal(x) for x in parts)
        except ArithmeticError:
            raise ConfigError(f"cannot parse grid {text!r}") from None
        if s <= 0 or b < a:
            raise ConfigError(f"grid {text!r} needs step > 0 and start <= stop")
        out = []
        v = a
        while v <= b:
            out.append(kind(v))
            v += s
        return out
    try:
        out = [kind(Decimal(x)) for x in text.split(",") if x.strip()]
    except (ArithmeticError, ValueError):
        raise ConfigError(f"cannot parse grid {text!r}") from None
    if not out:
        raise ConfigError("empty grid")
    return out



# --- configuration -----------------------------------------------------------


def load_config(path: str, section: str) -> dict:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep L, K, R, N, C distinct from their lowercase neighbours
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"config {path}: {exc}") from None
    out = {}
    for sec in ("common", section):
        if cp.has_section(sec):
            for k, v in cp.items(sec):
                out[k.replace("-", "_")] = (v, sec)
    return out


def config_hash(command: str, cfg: dict) -> str:
    payload = {k: v for k, v in sorted(cfg.items()) if k not in UNHASHED}
    blob = json.dumps({"command": command, "config": payload}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --- output ------------------------------------------------------------------


def _same_tree(a: Path, b: Path) -> bool:
    fa = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    fb = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    return fa == fb and all((a / f).read_bytes() == (b / f).read_bytes() for f in fa)


def commit_run(out_root: str, command: str, cfg: dict, files: dict) -> Path:
    """Write ``files`` (name -> text) plus a manifest into a content-addressed directory."""
    h = config_hash(command, cfg)
    root = Path(out_root)
    root.mkdir(parents=True, exist_ok=True)
    target = root / f"{command}-{h}"
    manifest = {
        "command": command,
        "config": {k: v for k, v in sorted(cfg.items()) if k not in UNHASHED},
        "version": __version__,
        "hash": h,
        "files": sorted(files),
    }
    tmp = Path(tempfile.mkdtemp(prefix=f".{command}-", dir=root))
    try:
        for name, text in files.items():
            (tmp / name).write_text(text)
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
        if target.exists():
            if not _same_tree(tmp, target):
                raise InvariantViolation(f"{target} exists with different contents; outputs are not reproducible")
        else:
            os.replace(tmp, target)
            return target
    finally:
        if tmp.exists():
            shutil.rmtree(tmp)
    return target


def _csv(rows: list, header: list) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in r))
    return "\n".join(lines) + "\n"


# --- commands ----------------------------------------------------------------


def _auto_t_grid(cfg, region, dist) -> list:
    x, _ = est.endpoints(region, dist)
    depth = int(region.base_dist[x])
    # largest K*t with every shorter path inside the region
    t_max = int(((region.radius - depth) * 2 - dist) // cfg["K"])
    t_min = max(1, math.ceil(dist / cfg["K"]))
    if t_max < t_min:
        raise GeometryError(f"L = {region.radius} leaves no room for K*t >= d(x, y)")
    step = max(1, (t_max - t_min) // 8)
    return list(range(t_min, t_max + 1, step))


def cmd_tail(cfg: dict) -> dict:
    region = est.cached_region(cfg["family"], cfg["L"], cfg["dim"])
    ps = parse_grid(cfg["p"])
    t_grid = _auto_t_grid(cfg, region, cfg["dist"]) if cfg["t_grid"] == "auto" else parse_grid(cfg["t_grid"], int)
    table = est.tail_estimate(cfg["family"], cfg["L"], cfg["dim"], ps, cfg["K"], t_grid, cfg["dist"], cfg["n"], cfg["seed"], cfg["workers"])
    slopes = []
    for p in ps:
        for variant in ("joint", "conditional"):
            fit = est.tail_slope(table, p, variant)
            if fit is None:
                slopes.append((p, variant, "nan", "nan", "nan", 0))
            else:
                slopes.append((p, variant, fit.slope, fit.stderr, fit.z, fit.n_points))
    return {"tail.csv": table.to_csv(), "slope.csv": _csv(slopes, ["p", "variant", "slope", "stderr", "z", "points"])}


def cmd_bypass(cfg: dict) -> dict:
    table = est.bypass_tail(cfg["family"], cfg["L"], cfg["dim"], parse_grid(cfg["p"]), parse_grid(cfg["t_grid"], int), cfg["n"], cfg["seed"], cfg["workers"])
    slopes = []
    for p in parse_grid(cfg["p"]):
        sub = table.select(p=p)
        fit = est.log_slope(sub.column("t"), [round(f * cfg["n"]) for f in sub.column("estimate")], cfg["n"])
        slopes.append((p, "nan", "nan", "nan", 0) if fit is None else (p, fit.slope, fit.stderr, fit.z, fit.n_points))
    return {"bypass.csv": table.to_csv(), "slope.csv": _csv(slopes, ["p", "slope", "stderr", "z", "points"])}


def cmd_timeconst(cfg: dict) -> dict:
    table = est.time_constant(
        cfg["family"], cfg["L"], cfg["dim"], float(cfg["p"]), parse_grid(cfg["n_grid"], int), cfg["n"], cfg["seed"], cfg["axis"], cfg["workers"]
    )
    return {"timeconst.csv": table.to_csv()}


def cmd_lipschitz(cfg: dict) -> dict:
    rep = est.lipschitz_sweep(cfg["family"], cfg["L"], cfg["dim"], parse_grid(cfg["p_grid"]), cfg["dist"], cfg["n"], cfg["seed"], cfg["workers"])
    summary = _csv([(rep.max_ratio, rep.max_ratio_se)], ["max_ratio", "stderr"])
    return {"lipschitz.csv": rep.table.to_csv(), "differences.csv": rep.diffs.to_csv(), "summary.csv": summary}


def cmd_coarse_check(cfg: dict) -> dict:
    from .coarse import coarse_contraction_bound, coarse_graph, degree_bound, sandwich_violations, star_violations

    region = est.cached_region(cfg["family"], cfg["L"], cfg["dim"])
    rows = []
    bad = []
    for R in parse_grid(cfg["scales"], int):
        cg = coarse_graph(region, R)
        sv, st = sandwich_violations(cg), star_violations(cg)
        bound = degree_bound(region, R)
        try:
            ratio = float(coarse_contraction_bound(cg, cfg["pairs"], cfg["seed"]))
        except PercChemError:
            ratio = float("nan")
        rows.append((R, cg.n_sites, cg.max_degree, float(bound), sv, st, ratio))
        if sv or st or cg.max_degree > bound:
            bad.append(R)
    files = {
        "coarse.csv": _csv(
            rows, ["scale", "net_size", "max_degree", "degree_bound", "sandwich_violations", "star_violations", "contraction_ratio"]
        )
    }
    if bad:
        raise InvariantViolation(f"coarse-graining certificate failed at scales {bad}")
    return files


def _chain_line(name, ids) -> str:
    return name + " " + " ".join(str(int(i)) for i in ids) + "\n"


def cmd_surgery_demo(cfg: dict) -> dict:
    """Straight geodesic through a square block of forbidden vertices, rerouted around it."""
    from .graph import build_lattice
    from .homology import Chain1, reroute_path

    h, block, delta = cfg["half_width"], cfg["block"], cfg["delta"]
    if block >= h:
        raise ConfigError("block must be narrower than the half width")
    g = build_lattice(2, 2 * h + 2)
    V = g.vertex
    r = block // 2
    F = [V((a, b)) for a in range(-r, r + 1) for b in range(-r, r + 1)]
    beta = [V((i, 0)) for i in range(-h, h + 1)]
    up = r + 2
    gamma = [V((-h, j)) for j in range(0, up + 1)] + [V((i, up)) for i in range(-h + 1, h + 1)] + [V((h, j)) for j in range(up - 1, -1, -1)]
    res = reroute_path(g, beta, gamma, F, delta)
    text = "".join(
        [
            _chain_line("beta", Chain1.from_path(g, beta).edges()),
            _chain_line("gamma", Chain1.from_path(g, gamma).edges()),
            _chain_line("F", F),
            _chain_line("selection", res.selection),
            _chain_line("touching", res.touching),
            _chain_line("gamma2", res.gamma2.edges()),
            _chain_line("gamma_prime", res.chain.edges()),
            _chain_line("gamma_prime_vertices", res.path),
        ]
    )
    coords = _csv([(v, *g.coord(v)) for v in res.path], ["vertex", "x", "y"])
    return {"trace.txt": text, "path.csv": coords}


OBSERVABLES = {
    "capped": lambda cfg: est.capped_distance(cfg["cap"]),
    "disconnected": lambda cfg: est.disconnected(),
    "clusters": lambda cfg: est.cluster_count,
}


def _host(spec: str):
    from .graph import build_box, build_region

    kind, _, rest = spec.partition(":")
    if kind == "box":
        return build_box(tuple(int(s) for s in rest.split("x")))
    if kind in ("zd", "heisenberg"):
        parts = rest.split(",") if rest else []
        L = int(parts[0]) if parts else 1
        dim = int(parts[1]) if len(parts) > 1 else 2
        return build_region(kind, L, dim)
    raise ConfigError(f"unknown host {spec!r}; use box:3x3, zd:L[,dim] or heisenberg:L")


def cmd_russo(cfg: dict) -> dict:
    host = _host(cfg["host"])
    try:
        obs = OBSERVABLES[cfg["observable"]](cfg)
    except KeyError:
        raise ConfigError(f"unknown observable {cfg['observable']!r}; choose from {sorted(OBSERVABLES)}") from None
    grid = [Fraction(str(x)) for x in parse_grid(cfg["p_grid"], str)]
    rows = est.russo_check(host, obs, grid)
    out = [(str(r.p), str(r.lhs), str(r.rhs), float(r.lhs), r.error) for r in rows]
    bad = [r for r in rows if r.error > 1e-12]
    files = {"russo.csv": _csv(out, ["p", "derivative", "influence_sum", "derivative_float", "abs_error"])}
    if bad:
        raise InvariantViolation(f"derivative identity failed at p = {[str(r.p) for r in bad]}")
    return files


def cmd_goodapprox(cfg: dict) -> dict:
    table = est.goodapprox_check(
        cfg["family"], cfg["L"], cfg["dim"], float(cfg["p"]), parse_grid(cfg["dists"], int), cfg["n"], cfg["seed"], cfg["C"], cfg["workers"]
    )
    ring = est.ring_distance_tail(cfg["family"], cfg["L"], cfg["dim"], float(cfg["p"]), list(range(0, 21)), cfg["n"], cfg["seed"], cfg["workers"])
    return {"goodapprox.csv": table.to_csv(), "ring_tail.csv": ring.to_csv()}


def cmd_animal(cfg: dict) -> dict:
    from . import rng
    from .graph import build_lattice

    g = build_lattice(2, cfg["L"])
    ind = (rng.uniforms(cfg["seed"], g.n_edges) < cfg["density"]).astype(np.float64)
    best = est.greedy_animal(g, ind, cfg["L"])
    count, _ = est.coloring_bound(g, cfg["N"])
    return {"animal.csv": _csv([(cfg["L"], cfg["N"], cfg["density"], best, count, est.coloring_limit(g, cfg["N"]))], ["L", "N", "density", "max_sum", "colors", "color_limit"])}


def cmd_precluster(cfg: dict) -> dict:
    table = est.precluster_tail(cfg["family"], cfg["L"], cfg["dim"], cfg["R"], cfg["delta"], cfg["rho"], cfg["k_max"], cfg["n"], cfg["seed"], cfg["workers"])
    return {"precluster.csv": table.to_csv()}


def cmd_export_graph(cfg: dict) -> dict:
    import io

    from .graph import write_region

    buf = io.StringIO()
    write_region(est.cached_region(cfg["family"], cfg["L"], cfg["dim"]), buf)
    return {"region.txt": buf.getvalue()}


# --- parser ------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, region: bool = True, seeds: bool = True) -> None:
    p.add_argument("--config", help="INI file; [common] and [<command>] sections are read")
    p.add_argument("--out", help="output root (default: runs)")
    p.add_argument("--workers", type=int, help="worker processes (default: available CPUs)")
    if region:
        p.add_argument("--family", choices=["zd", "heisenberg"])
        p.add_argument("--dim", type=int)
        p.add_argument("--L", type=int)
    if seeds:
        p.add_argument("--seed", type=int)
        p.add_argument("--n", type=int, help="number of samples")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="perc-chem", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = {}

    def add(name, func, region=True, seeds=True, **dflt):
        sp = sub.add_parser(name)
        _common(sp, region, seeds)
        base = {"out": "runs", "workers": est.default_workers()}
        if region:
            base.update(family="zd", dim=2)
        if seeds:
            base.update(seed=0, n=1000)
        base.update(dflt)
        sp.set_defaults(func=func)
        defaults[name] = base
        return sp

    sp = add("tail", cmd_tail, L=120, p="0.65", K=4.0, dist=40, t_grid="auto")
    sp.add_argument("--p", help="probability or comma list (coupled seeds)")
    sp.add_argument("--K", type=float)
    sp.add_argument("--dist", type=int)
    sp.add_argument("--t-grid", dest="t_grid")

    sp = add("bypass", cmd_bypass, L=60, p="0.65,0.8", t_grid="3:41:2")
    sp.add_argument("--p")
    sp.add_argument("--t-grid", dest="t_grid")

    sp = add("timeconst", cmd_timeconst, L=120, p="0.7", n_grid="10,20,40,60", axis=0)
    sp.add_argument("--p")
    sp.add_argument("--n-grid", dest="n_grid")
    sp.add_argument("--axis", type=int)

    sp = add("lipschitz", cmd_lipschitz, L=120, p_grid="0.60:1.00:0.05", dist=60)
    sp.add_argument("--p-grid", dest="p_grid")
    sp.add_argument("--dist", type=int)

    sp = add("coarse-check", cmd_coarse_check, L=150, scales="60,90,120", pairs=200)
    sp.add_argument("--scales")
    sp.add_argument("--pairs", type=int)

    sp = add("surgery-demo", cmd_surgery_demo, region=False, seeds=False, half_width=6, block=3, delta=2)
    sp.add_argument("--half-width", dest="half_width", type=int)
    sp.add_argument("--block", type=int)
    sp.add_argument("--delta", type=int)

    sp = add("russo", cmd_russo, region=False, seeds=False, host="box:3x3", observable="capped", cap=8, p_grid="0.1,0.3,0.5,0.7,0.9")
    sp.add_argument("--host")
    sp.add_argument("--observable")
    sp.add_argument("--cap", type=int)
    sp.add_argument("--p-grid", dest="p_grid")

    sp = add("goodapprox", cmd_goodapprox, L=160, p="0.7", dists="20,40,80", C=5.0, n=200)
    sp.add_argument("--p")
    sp.add_argument("--dists")
    sp.add_argument("--C", type=float)

    sp = add("animal", cmd_animal, region=False, L=8, N=1, density=0.2)
    sp.add_argument("--L", type=int)
    sp.add_argument("--N", type=int)
    sp.add_argument("--density", type=float)

    sp = add("precluster", cmd_precluster, L=150, R=60, delta=2, rho=0.99, k_max=6, n=100000)
    sp.add_argument("--R", type=int)
    sp.add_argument("--delta", type=int)
    sp.add_argument("--rho", type=float)
    sp.add_argument("--k-max", dest="k_max", type=int)

    add("export-graph", cmd_export_graph, seeds=False, L=10)
    return parser, defaults


def resolve(argv=None) -> tuple[str, dict, object]:
    parser, defaults = build_parser()
    args = parser.parse_args(argv)
    sp = parser._subparsers._group_actions[0].choices[args.command]
    given = {k: v for k, v in vars(args).items() if v is not None}
    cfg = dict(defaults[args.command])
    if args.config:
        fields = load_config(args.config, args.command)
        types = {a.dest: a.type for a in sp._actions}
        anywhere = set().union(*defaults.values())
        for k, (v, sec) in fields.items():
            if sec == "common" and k in anywhere and k not in types:
                continue  # shared field this command does not take
            if k not in types or k in ("config", "help"):
                raise ConfigError(f"config {args.config}: unknown field {k!r} for {args.command}")
            conv = types[k]
            try:
                cfg[k] = conv(v) if conv else v
            except (ValueError, ArithmeticError) as exc:
                raise ConfigError(f"config {args.config}: field {k!r}: {exc}") from None
    cfg.update({k: v for k, v in given.items() if k not in ("func", "command", "config")})
    if cfg.get("workers", 1) < 1:
        raise ConfigError("--workers must be >= 1")
    if "n" in cfg and cfg["n"] < 1:
        raise ConfigError("--n must be >= 1")
    return args.command, cfg, args.func


def main(argv=None) -> int:
    try:
        command, cfg, func = resolve(argv)
        files = func(cfg)
        target = commit_run(cfg["out"], command, cfg, files)
    except PercChemError as exc:
        print(f"perc-chem: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except MemoryError as exc:
        print(f"perc-chem: error: out of memory: {exc}", file=sys.stderr)
        return ResourceError.exit_code
    print(target)
    return 0


if __name__ == "__main__":
    sys.exit(main())
