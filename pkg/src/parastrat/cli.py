"""Command-line driver: configuration ingestion, command dispatch, and
bit-stable report/CSV emission.

Config files are versioned JSON; complex numbers are [re, im] pairs.  See
the README for the full schema.  Numeric output uses the shortest
round-trip decimal representation, timestamps appear only in the report
header line, and all files are UTF-8 with LF line endings.
"""

import argparse
import hashlib
import json
import math
import sys
import time

import numpy as np

from .laurent import LaurentMatrix, OneForm
from .parahoric import ParahoricContext
from .strata import FormalType
from .moduli import (LocalPoint, ModuliPoint, moment_residue, validate_point)
from . import moduli as _moduli
from .isoflow import (FlowState, PathSpec, balanced_flow_state,
                      deformation_residuals, integrate_flow, iwahori_rhs,
                      pfaffian_rank_check, subdiag_nilpotent, upper_corner)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

CONFIG_VERSION = 1
TOOL_VERSION = "0.1.0"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# JSON (de)serialization of complex data


def to_complex(v):
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 \
            and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    raise ConfigError(f"expected a number or [re, im] pair, got {v!r}")


def to_matrix(rows, n):
    m = np.array([[to_complex(c) for c in row] for row in rows], dtype=complex)
    if m.shape != (n, n):
        raise ConfigError(f"expected a {n}x{n} matrix, got shape {m.shape}")
    return m


def fmt(x):
    """Shortest round-trip decimal of a float."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# configuration


class Config:
    """Parsed and validated run configuration."""

    def __init__(self, raw, raw_bytes):
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        if raw.get("version") != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {raw.get('version')!r}")
        self.raw = raw
        self.sha256 = hashlib.sha256(raw_bytes).hexdigest()
        self.n = int(raw.get("n", 0))
        if self.n < 1:
            raise ConfigError("field 'n' must be a positive integer")
        nu = raw.get("nu", "dz")
        if nu not in ("dz", "dz/z"):
            raise ConfigError("field 'nu' must be 'dz' or 'dz/z'")
        self.nu_name = nu
        self.seed = int(raw.get("seed", 0))
        self.depth = int(raw.get("depth", 12))
        self.tol = float(raw.get("tol", 1e-10))
        self.points = raw.get("points", [])
        if not self.points:
            raise ConfigError("at least one point is required")
        xs = []
        for k, p in enumerate(self.points):
            try:
                xi = to_complex(p["xi"])
                e = int(p["e"])
                r = int(p["r"])
            except KeyError as exc:
                raise ConfigError(f"point {k}: missing field {exc}")
            if self.n % e != 0:
                raise ConfigError(f"point {k}: period {e} does not divide n={self.n}")
            if math.gcd(r, e) != 1:
                raise ConfigError(f"point {k}: gcd(r={r}, e={e}) != 1")
            xs.append(xi)
        for i in range(len(xs)):
            for j in range(i + 1, len(xs)):
                if abs(xs[i] - xs[j]) < 1e-9:
                    raise ConfigError("point positions must be pairwise distinct")
        self.flow = raw.get("flow", {})

    def one_form(self):
        return OneForm.dz() if self.nu_name == "dz" else OneForm.dz_over_z()

    def local_point(self, k):
        p = self.points[k]
        ctx = ParahoricContext(self.n, int(p["e"]))
        framing = to_matrix(p.get("framing") or np.eye(self.n).tolist(), self.n)
        if "alpha_principal_part" in p:
            items = {int(exp): to_matrix(mat, self.n)
                     for exp, mat in p["alpha_principal_part"].items()}
            alpha = LaurentMatrix(self.n, items)
        elif "formal_type" in p:
            ftd = p["formal_type"]
            coeffs = [[to_complex(c) for c in vec] for vec in ftd["coeffs"]]
            ft = FormalType(ctx, int(p["r"]), coeffs,
                            normalized=bool(ftd.get("normalized", True)))
            alpha = ft.realize(OneForm.dz())
        else:
            raise ConfigError(f"point {k}: need 'alpha_principal_part' or 'formal_type'")
        return LocalPoint(to_complex(p["xi"]), ctx, int(p["r"]), framing, alpha)

    def moduli_point(self):
        return ModuliPoint([self.local_point(k) for k in range(len(self.points))],
                           OneForm.dz())

    def flow_state(self):
        mp = self.moduli_point()
        ctx = mp.points[0].ctx
        if any(p.ctx.e != self.n or p.r != 1 for p in mp.points):
            raise ConfigError("flow requires all points Iwahori (e = n) with r = 1")
        xi, a, gs, rs = [], [], [], []
        ec = upper_corner(self.n)
        for p in mp.points:
            lead = (p.framed_alpha()).coeff(-2)
            c = lead[0, self.n - 1]
            xi.append(p.xi)
            a.append(-self.n * c)
            gs.append(np.asarray(p.framing))
            rs.append(p.alpha.coeff(-1))
        return FlowState(ctx, xi, a, gs, rs)

    def path_spec(self):
        wps = self.flow.get("waypoints")
        if not wps:
            raise ConfigError("flow.waypoints is required for this command")
        return PathSpec([[to_complex(c) for c in row] for row in wps])


def load_config(path):
    try:
        with open(path, "rb") as fh:
            raw_bytes = fh.read()
        raw = json.loads(raw_bytes.decode("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON (line {exc.lineno}, col {exc.colno})")
    return Config(raw, raw_bytes)


# ---------------------------------------------------------------------------
# report emission


class Report:
    def __init__(self, command, cfg):
        self.command = command
        self.cfg = cfg
        self.lines = []
        self.checks = []

    def line(self, text=""):
        self.lines.append(text)

    def check(self, name, ok, value=None):
        self.checks.append((name, bool(ok)))
        tag = "PASS" if ok else "FAIL"
        extra = "" if value is None else f"  ({value})"
        self.lines.append(f"[{tag}] {name}{extra}")

    @property
    def passed(self):
        return all(ok for _, ok in self.checks)

    def render(self):
        head = [f"# parastrat report generated {time.strftime('%Y-%m-%dT%H:%M:%S%z')}"]
        body = [f"command: {self.command}",
                f"config_sha256: {self.cfg.sha256}",
                f"seed: {self.cfg.seed}",
                f"version: {TOOL_VERSION}",
                ""]
        body += self.lines
        body.append("")
        body.append(f"RESULT: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(head + body) + "\n"


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# trajectory CSV


def csv_header(n, m):
    cols = ["s"]
    for i in range(m):
        cols += [f"a{i}_re", f"a{i}_im"]
    for i in range(m):
        for r in range(n):
            for c in range(n):
                cols += [f"g{i}_{r}{c}_re", f"g{i}_{r}{c}_im"]
    for i in range(m):
        for k in range(n):
            cols += [f"D{i}_{k}_re", f"D{i}_{k}_im"]
        for r in range(n):
            for c in range(r + 1, n):
                cols += [f"X{i}_{r}{c}_re", f"X{i}_{r}{c}_im"]
    cols += ["res_framing", "res_curvature", "res_two_form"]
    return cols


def sample_row(sample, n, m):
    vals = [sample.s]
    for i in range(m):
        vals += [sample.a[i].real, sample.a[i].imag]
    for i in range(m):
        for r in range(n):
            for c in range(n):
                vals += [sample.g[i][r, c].real, sample.g[i][r, c].imag]
    for i in range(m):
        for k in range(n):
            vals += [sample.D[i][k, k].real, sample.D[i][k, k].imag]
        for r in range(n):
            for c in range(r + 1, n):
                vals += [sample.X[i][r, c].real, sample.X[i][r, c].imag]
    vals += list(sample.residuals)
    return vals


def write_trajectory_csv(path, traj, n, m):
    lines = [",".join(csv_header(n, m))]
    for sample in traj.samples:
        lines.append(",".join(fmt(v) for v in sample_row(sample, n, m)))
    write_text(path, "\n".join(lines) + "\n")


def read_trajectory_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        rows = [line.strip().split(",") for line in fh if line.strip()]
    header, data = rows[0], rows[1:]
    return header, [[float(v) for v in row] for row in data]


# ---------------------------------------------------------------------------
# commands


def cmd_reduce(cfg, rpt, out_dir):
    for k in range(len(cfg.points)):
        p = cfg.local_point(k)
        ft = _moduli.local_normalized_type(p, depth=cfg.depth, tol=cfg.tol)
        rpt.line(f"point {k} (xi={p.xi}): normalized formal type, depth r={ft.r}")
        for j in range(-ft.r, 1):
            gam = ft.series_coeff(j)
            gs = ", ".join(f"[{fmt(c.real)}, {fmt(c.imag)}]" for c in gam)
            ts = ", ".join(f"[{fmt(c.real)}, {fmt(c.imag)}]" for c in ft.t(j))
            rpt.line(f"  series coeff gamma_{j}: {gs}   (t_{j}: {ts})")
        rpt.check(f"point {k} reduced", True)
    return EXIT_PASS if rpt.passed else EXIT_FAIL


def cmd_check(cfg, rpt, out_dir):
    mp = cfg.moduli_point()
    vr = validate_point(mp, tol=cfg.tol)
    res = moment_residue(mp)
    rpt.line(f"moment-map residual: {fmt(float(np.max(np.abs(res))))}")
    for key in sorted(vr.metrics):
        rpt.line(f"{key}: {fmt(vr.metrics[key])}")
    for where, reason, value in vr.failures:
        loc = "global" if where is None else f"point {where}"
        rpt.line(f"failure at {loc}: {reason}" + ("" if value is None else f" ({value})"))
    rpt.check("moduli point valid", vr.passed)
    return EXIT_PASS if rpt.passed else EXIT_FAIL


def cmd_flow(cfg, rpt, out_dir):
    state = cfg.flow_state()
    path = cfg.path_spec()
    steps = int(cfg.flow.get("steps", 100))
    ceiling = cfg.flow.get("residual_ceiling")
    cond3 = cfg.flow.get("record_two_form", True)
    traj = integrate_flow(state, path, steps,
                          residual_ceiling=None if ceiling is None else float(ceiling),
                          cond3_pairs=None if cond3 else (), tol=cfg.tol)
    csv_path = f"{out_dir}/trajectory.csv"
    write_trajectory_csv(csv_path, traj, cfg.n, state.m)
    r1, r2, r3 = traj.max_residuals()
    rpt.line(f"steps: {steps}")
    rpt.line(f"samples: {len(traj.samples)}")
    rpt.line(f"max framing-condition residual: {fmt(r1)}")
    rpt.line(f"max curvature-condition residual: {fmt(r2)}")
    rpt.line(f"max two-form residual: {fmt(r3)}")
    rpt.line(f"t0 drift: {fmt(traj.t0_drift())}")
    rpt.line(f"max moment residual: {fmt(traj.max_moment_residual())}")
    if ceiling is not None:
        rpt.check("residuals below ceiling", max(r1, r2, r3) <= float(ceiling),
                  fmt(max(r1, r2, r3)))
    rpt.check("t0 conserved (1e-8)", traj.t0_drift() < 1e-8, fmt(traj.t0_drift()))
    rpt.check("moment map conserved (1e-8)", traj.max_moment_residual() < 1e-8,
              fmt(traj.max_moment_residual()))
    return EXIT_PASS if rpt.passed else EXIT_FAIL


def _state_from_row(cfg, header, row, t0_ref, ctx):
    n = cfg.n
    m = len(cfg.points)
    idx = {name: k for k, name in enumerate(header)}
    s = row[idx["s"]]
    a = np.array([row[idx[f"a{i}_re"]] + 1j * row[idx[f"a{i}_im"]] for i in range(m)])
    gs = []
    for i in range(m):
        g = np.zeros((n, n), dtype=complex)
        for r in range(n):
            for c in range(n):
                g[r, c] = row[idx[f"g{i}_{r}{c}_re"]] + 1j * row[idx[f"g{i}_{r}{c}_im"]]
        gs.append(g)
    rs = []
    h = ctx.norm_shift()
    npr = subdiag_nilpotent(n)
    for i in range(m):
        d = np.zeros((n, n), dtype=complex)
        for k in range(n):
            d[k, k] = row[idx[f"D{i}_{k}_re"]] + 1j * row[idx[f"D{i}_{k}_im"]]
        x = np.zeros((n, n), dtype=complex)
        for r in range(n):
            for c in range(r + 1, n):
                x[r, c] = row[idx[f"X{i}_{r}{c}_re"]] + 1j * row[idx[f"X{i}_{r}{c}_im"]]
        framed = -(a[i] / n) * npr - (d + x) / n + t0_ref[i] * np.eye(n) + h
        rs.append(np.linalg.solve(gs[i], framed @ gs[i]))
    res = (row[idx["res_framing"]], row[idx["res_curvature"]], row[idx["res_two_form"]])
    return s, FlowState(ctx, [to_complex(p["xi"]) for p in cfg.points], a, gs, rs,
                        t0_ref=t0_ref), res


def cmd_verify(cfg, rpt, out_dir, trajectory_path=None):
    state0 = cfg.flow_state()
    path = cfg.path_spec()
    ctx = state0.ctx
    traj_file = trajectory_path or f"{out_dir}/trajectory.csv"
    header, rows = read_trajectory_csv(traj_file)
    cond3 = cfg.flow.get("record_two_form", True)
    worst_dev = 0.0
    worst_res = [0.0, 0.0, 0.0]
    for row in rows:
        s, state, stored = _state_from_row(cfg, header, row, state0.t0_ref, ctx)
        da = path.velocity(s)
        L, dR = iwahori_rhs(state, da)
        res = deformation_residuals(state, da, L, dR,
                                    cond3_pairs=None if cond3 else (), tol=cfg.tol)
        for k in range(3):
            worst_dev = max(worst_dev, abs(res[k] - stored[k]))
            worst_res[k] = max(worst_res[k], res[k])
    rpt.line(f"sweep over {len(rows)} samples of {traj_file}")
    rpt.line(f"max residual reproduction deviation: {fmt(worst_dev)}")
    rpt.line(f"max recomputed residuals: {fmt(worst_res[0])}, "
             f"{fmt(worst_res[1])}, {fmt(worst_res[2])}")
    rpt.check("residuals reproduced (1e-12)", worst_dev <= 1e-12, fmt(worst_dev))
    ceiling = cfg.flow.get("residual_ceiling")
    if ceiling is not None:
        rpt.check("residuals below ceiling", max(worst_res) <= float(ceiling),
                  fmt(max(worst_res)))
    return EXIT_PASS if rpt.passed else EXIT_FAIL


def cmd_rank(cfg, rpt, out_dir):
    mp = cfg.moduli_point()
    rep = pfaffian_rank_check(mp, tol=cfg.tol)
    rpt.line(f"observed generator rank: {rep.observed}")
    rpt.line(f"expected generator rank: {rep.expected}")
    rpt.line(f"moment-differential span residual: {fmt(rep.dmu_residual)}")
    sv = ", ".join(fmt(v) for v in rep.singular_values[:12])
    rpt.line(f"leading singular values: {sv}")
    rpt.check("rank matches dimension count", rep.observed == rep.expected)
    rpt.check("moment differential in generator span (1e-8)",
              rep.dmu_residual < 1e-8, fmt(rep.dmu_residual))
    extra = int(cfg.raw.get("rank", {}).get("random_states", 0))
    if extra:
        rng = np.random.default_rng(cfg.seed)
        ctx = mp.points[0].ctx
        xi = [p.xi for p in mp.points]
        stable = True
        for _ in range(extra):
            a = rng.standard_normal(len(xi)) + 1j * rng.standard_normal(len(xi))
            st = balanced_flow_state(ctx, xi, a, rng)
            rr = pfaffian_rank_check(st.to_moduli_point(), tol=cfg.tol)
            stable = stable and rr.observed == rep.expected and rr.dmu_residual < 1e-8
        rpt.check(f"rank stable across {extra} random regular states", stable)
    return EXIT_PASS if rpt.passed else EXIT_FAIL


COMMANDS = {
    "reduce": cmd_reduce,
    "check": cmd_check,
    "flow": cmd_flow,
    "verify": cmd_verify,
    "rank": cmd_rank,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="parastrat",
        description="Connections with parahoric irregular singularities: "
                    "formal types, moduli checks, isomonodromy flows.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--depth", type=int, default=None, help="override truncation depth")
    parser.add_argument("--tol", type=float, default=None, help="override tolerance")
    parser.add_argument("--trajectory", default=None,
                        help="trajectory CSV for 'verify' (default: <out>/trajectory.csv)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0,) else 0

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.depth is not None:
            cfg.depth = args.depth
        if args.tol is not None:
            cfg.tol = args.tol
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    rpt = Report(args.command, cfg)
    try:
        if args.command == "verify":
            code = cmd_verify(cfg, rpt, args.out, args.trajectory)
        else:
            code = COMMANDS[args.command](cfg, rpt, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # numeric/validation failures carry their kind
        rpt.line(f"error: {type(exc).__name__}: {exc}")
        rpt.check("command completed", False)
        code = EXIT_FAIL

    write_text(f"{args.out}/report.txt", rpt.render())
    print(rpt.render(), end="")
    return code


if __name__ == "__main__":
    sys.exit(main())
