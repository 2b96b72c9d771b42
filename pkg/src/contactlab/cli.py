"""Benchmark command line.

Subcommands reproduce the three reference experiments (``dho``, ``vdp``,
``double-well``) and expose the generic tools (``convergence``,
``bracket-check``, ``decompose``, ``universal``).  Options may come from a
TOML file (one table per subcommand) with flags taking precedence.

Exit codes: 0 success, 1 a declared pass/fail gate failed, 2 bad
configuration, 3 runtime blow-up with no partial output.

Scheme specifications use the substep catalog, e.g.::

    strang(drift:T=1/2*p^2, kick:V=1/2*x^2+3/10*u)
    yoshida4(strang(harmonic, reeb:gamma=0.3))

with substeps  drift:T=<poly(p)>, kick:V=<poly(x)[+c*u]>, reeb:gamma=,
quadu:c=, bernoulliB:sigma=, bernoulliT:sigma=, harmonic, udrift:c=,
linu:a=<poly(x)>, forcing:amp=,omega=.  Initial states are given in the
experiment-table order x,p,u.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .algebra import depth_one_decompose, format_poly, parse_poly
from .composition import build_universal_scheme, lie_trotter, run_trajectory, \
    strang, yoshida4
from .core import Hamiltonian, JetPoint
from .errors import BlowupError, ConfigError, ContactLabError, StiffnessError
from .lifting import contact_rhs, reference_solve
from .scenarios import (DHO_SWEEP, DOUBLE_WELL_SWEEP,
                        ExperimentConfig, bracket_check, convergence_study,
                        dho_reference_functions, gadget_generators, run_dho,
                        run_double_well, run_vdp)
from .subflows import bernoulli_B_flow, step_from_label

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


def parse_sweep(text: str) -> list:
    """Either an explicit comma list or ``log:a:b:n`` for 10^linspace."""
    if text.startswith("log:"):
        _, a, b, count = text.split(":")
        return list(10.0 ** np.linspace(float(a), float(b), int(count)))
    return [float(v) for v in text.split(",")]


def parse_state(text: str) -> tuple:
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 3:
        raise ConfigError("state must be x,p,u (three values)")
    return tuple(vals)


def _split_top(text: str) -> list:
    parts, depth, buf = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
    if buf:
        parts.append("".join(buf).strip())
    return parts


def parse_scheme_spec(spec: str):
    """Resolve the composition mini-language against the substep catalog."""
    spec = spec.strip()
    for name, builder in (("strang", strang), ("lie-trotter", lie_trotter),
                          ("lietrotter", lie_trotter)):
        if spec.startswith(name + "(") and spec.endswith(")"):
            inner = spec[len(name) + 1:-1]
            return builder([_part(s) for s in _split_top(inner)])
    if spec.startswith("yoshida4(") and spec.endswith(")"):
        return yoshida4(parse_scheme_spec(spec[len("yoshida4("):-1]))
    return lie_trotter([step_from_label(spec)])


def _part(piece: str):
    if "(" in piece:
        return parse_scheme_spec(piece).as_step()
    return step_from_label(piece)


def _load_config(args, section: str) -> dict:
    if not getattr(args, "config", None):
        return {}
    with open(args.config, "rb") as fh:
        data = tomllib.load(fh)
    return data.get(section, {})


def _experiment_config(args, section: str) -> ExperimentConfig:
    base = _load_config(args, section)
    cfg = ExperimentConfig(scenario=section)
    for key, val in base.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, val)
    for key in ("scheme", "splitting", "gamma", "eps", "amp", "omega",
                "sigma", "h", "T", "seed", "out", "svg", "m_gadget"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "z0", None):
        cfg.z0 = parse_state(args.z0)
    if getattr(args, "h_sweep", None):
        cfg.h_sweep = parse_sweep(args.h_sweep)
    if isinstance(cfg.h_sweep, str):
        cfg.h_sweep = parse_sweep(cfg.h_sweep)
    return cfg


def _emit(records, tables, cfg, reference=None, projection=("x", "u")):
    if cfg.out:
        from .reporting import emit_outputs
        written = emit_outputs(records, tables, cfg.out, svg=cfg.svg,
                               reference=reference, projection=projection)
        for path in written:
            print(f"wrote {path}")


def _cmd_dho(args) -> int:
    cfg = _experiment_config(args, "dho")
    if args.paper_sweep:
        cfg.h_sweep = list(DHO_SWEEP)
    record, table = run_dho(cfg)
    ref = dho_reference_functions(cfg.gamma, cfg.jet0())
    print(f"dho splitting={cfg.splitting} scheme={cfg.scheme} "
          f"gamma={cfg.gamma} h={cfg.h} T={cfg.T}")
    print(f"  final H = {record.H_values[-1]:.6e}, "
          f"sigma_cum = {record.sigma_cum[-1]:.6f} "
          f"(exact decay rate {-cfg.gamma * record.times[-1]:.6f})")
    status = 0
    tables = {}
    if table is not None:
        tables[record.label] = table
        declared = {"lie-trotter": 1, "strang": 2, "yoshida4": 4,
                    "lifted-rk4": 4}.get(cfg.scheme)
        print(f"  fitted order = {table.fitted_slope:.3f} "
              f"(R^2 {table.fit_r2:.4f})")
        if declared is not None:
            tol = 0.2 if declared <= 2 else 0.3
            if abs(table.fitted_slope - declared) > tol:
                print(f"  FAIL: slope off declared order {declared} "
                      f"by more than {tol}")
                status = 1
    _emit({record.label: record}, tables, cfg, reference=ref,
          projection=("x", "p"))
    return status


def _cmd_vdp(args) -> int:
    cfg = _experiment_config(args, "vdp")
    cfg.T = cfg.T if cfg.T != 20.0 else 200.0
    if args.regular:
        cfg.omega, cfg.h, cfg.T = 2.466, 0.02, 200.0
    if args.chaotic:
        cfg.omega, cfg.h, cfg.T = 2.463, 0.01, 500.0
    records, residuals = run_vdp(cfg)
    status = 0
    for name, rec in records.items():
        supx = float(np.max(np.abs(rec.x)))
        print(f"vdp {name}: sup|x| = {supx:.3f}, samples = {len(rec.times)}, "
              f"contact residual (rel) = {residuals[name]:.3e}")
        if supx >= 10.0:
            print(f"  FAIL: {name} trajectory left the attractor box")
            status = 1
        if name.startswith("lifted") and residuals[name] > 1e-9:
            print(f"  FAIL: {name} contactness above 1e-9")
            status = 1
    _emit(records, {}, cfg, projection=("x", "u"))
    if cfg.out and cfg.svg:
        from .reporting import plot_trajectories
        from .scenarios import drop_transient
        import os
        post = [drop_transient(rec) for rec in records.values()]
        print("wrote", plot_trajectories(
            post, os.path.join(cfg.out, "attractor_xp.svg"),
            projection=("x", "p")))
    return status


def _cmd_double_well(args) -> int:
    cfg = _experiment_config(args, "double_well")
    cfg.z0 = cfg.z0 if cfg.z0 != (1.0, 0.0, 0.0) else (0.5, 1.0, 0.0)
    if args.paper_sweep:
        cfg.h_sweep = list(DOUBLE_WELL_SWEEP)
        cfg.T = min(cfg.T, 2.0)
    records, tables = run_double_well(cfg)
    status = 0
    nominal = {"tv": 2.0, "csc": 2.0, "gadget-basic": 0.5,
               "gadget-symmetric": 1.0, "gadget-yoshida": 1.0}
    for name, rec in records.items():
        line = f"double-well {name} sigma={cfg.sigma}: final H = " \
               f"{rec.H_values[-1]:.6e}"
        if rec.blowup_time is not None:
            line += f" (blow-up at t={rec.blowup_time})"
        print(line)
        if name in tables:
            tab = tables[name]
            tol = 0.2
            print(f"  fitted order = {tab.fitted_slope:.3f} "
                  f"(nominal {nominal[name]})")
            if abs(tab.fitted_slope - nominal[name]) > tol:
                print("  FAIL: slope outside tolerance")
                status = 1
    if args.attractors:
        from .scenarios import double_well_attractors
        for name in list(records):
            records.update(double_well_attractors(cfg, name))
    _emit(records, tables, cfg, projection=("x", "p"))
    return status


def _cmd_convergence(args) -> int:
    scheme = parse_scheme_spec(args.scheme_spec)
    poly = parse_poly(args.hamiltonian)
    H = Hamiltonian(poly, label=format_poly(poly))
    x, p, u = parse_state(args.z0)
    z0 = JetPoint.of([x], u, [p])
    sweep = parse_sweep(args.h_sweep)
    sol = reference_solve(contact_rhs(H), [z0.x[0], z0.u, z0.p[0]],
                          (0.0, args.T), n=1)
    table = convergence_study(scheme, z0, 0.0, args.T, sweep, sol.jet,
                              error_norm=args.error_norm,
                              label=args.scheme_spec)
    print(f"convergence of {args.scheme_spec} on H = {H.label}")
    for k in range(len(table.h)):
        print(f"  h = {table.h[k]:.6e}  endpoint = "
              f"{table.endpoint_error[k]:.6e}  sup = {table.sup_error[k]:.6e}")
    print(f"fitted slope = {table.fitted_slope:.3f} (R^2 {table.fit_r2:.4f})")
    if args.out:
        from .reporting import (plot_convergence, write_convergence_csv)
        import os
        os.makedirs(args.out, exist_ok=True)
        print("wrote", write_convergence_csv(
            table, os.path.join(args.out, "convergence.csv")))
        if args.svg:
            print("wrote", plot_convergence(
                [table], os.path.join(args.out, "convergence.svg")))
    return 0


def _cmd_bracket_check(args) -> int:
    A, B = gadget_generators()
    ref = bernoulli_B_flow(1.0)
    eps_list = parse_sweep(args.eps_sweep)
    rate, table = bracket_check(
        A, B, lambda z, tc: ref.apply(z, 0.0, tc), args.gadget, eps_list,
        m=args.m_gadget, seed=args.seed)
    nominal, tol = {"basic": (3.0, 0.3), "symmetric": (4.0, 0.1),
                    "yoshida": (4.0, 0.1)}[args.gadget]
    print(f"bracket check ({args.gadget}, m={args.m_gadget}): "
          f"fitted eps-rate = {rate:.3f} (nominal {nominal} +/- {tol})")
    if args.out:
        from .reporting import write_convergence_csv
        import os
        os.makedirs(args.out, exist_ok=True)
        print("wrote", write_convergence_csv(
            table, os.path.join(args.out, f"bracket_{args.gadget}.csv")))
    return 0 if abs(rate - nominal) <= tol else 1


def _cmd_decompose(args) -> int:
    poly = parse_poly(args.hamiltonian)
    rep = depth_one_decompose(poly)
    print(f"H  = {format_poly(poly)}")
    print(f"s0 = {format_poly(rep.s0)}")
    print(f"d0 = {format_poly(rep.d0)}")
    for i, (s, d) in enumerate(rep.pairs):
        print(f"pair {i + 1}: [{format_poly(s)}, {format_poly(d)}]")
    ok = rep.reconstruct() == poly
    print(f"reconstruction exact: {ok}")
    return 0 if ok else 1


def _cmd_universal(args) -> int:
    poly = parse_poly(args.hamiltonian)
    rep = depth_one_decompose(poly)
    scheme = build_universal_scheme(rep, outer_order=args.outer,
                                    gadget=args.gadget, m=args.m_gadget)
    H = Hamiltonian(poly, label=format_poly(poly))
    x, p, u = parse_state(args.z0)
    z0 = JetPoint.of([x], u, [p])
    record = run_trajectory(scheme, z0, 0.0, args.h, args.T, H_diag=H)
    sol = reference_solve(contact_rhs(H), [x, u, p], (0.0, args.T), n=1)
    from .scenarios import state_error
    err = state_error(record.endpoint(), sol.jet(record.times[-1]))
    print(f"universal scheme for H = {H.label}: parts = "
          f"{[s.label for s, _ in scheme.factors]}")
    print(f"endpoint error vs reference at T={args.T}, h={args.h}: {err:.6e}")
    if record.blowup_time is not None:
        print(f"blow-up at t = {record.blowup_time}")
        return 3 if len(record.states) <= 1 else 0
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contactlab", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, defaults=True):
        sp.add_argument("--config", help="TOML config file")
        sp.add_argument("--out", help="output directory for CSV/SVG")
        sp.add_argument("--svg", action="store_true", default=None,
                        help="also render SVG figures")
        sp.add_argument("--seed", type=int, default=None)
        if defaults:
            sp.add_argument("--h", type=float, default=None)
            sp.add_argument("--T", type=float, default=None)
            sp.add_argument("--z0", help="initial state x,p,u")
            sp.add_argument("--h-sweep", dest="h_sweep",
                            help="comma list or log:a:b:n")

    sp = sub.add_parser("dho", help="damped harmonic oscillator")
    common(sp)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--splitting", type=int, default=None, choices=(1, 2, 3))
    sp.add_argument("--scheme", default=None,
                    choices=("lie-trotter", "strang", "yoshida4", "rk4",
                             "lifted-rk4"))
    sp.add_argument("--paper-sweep", action="store_true",
                    help="use the reference sweep 10^linspace(-1,-2.5,15)")
    sp.set_defaults(fn=_cmd_dho)

    sp = sub.add_parser("vdp", help="forced Lienard-type oscillator")
    common(sp)
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--amp", type=float, default=None)
    sp.add_argument("--omega", type=float, default=None)
    sp.add_argument("--regular", action="store_true",
                    help="omega=2.466, h=0.02, T=200")
    sp.add_argument("--chaotic", action="store_true",
                    help="omega=2.463, h=0.01, T=500")
    sp.set_defaults(fn=_cmd_vdp)

    sp = sub.add_parser("double-well", help="dissipative double well")
    common(sp)
    sp.add_argument("--sigma", type=float, default=None)
    sp.add_argument("--splitting", default=None,
                    choices=("tv", "csc", "gadget-basic", "gadget-symmetric",
                             "gadget-yoshida"))
    sp.add_argument("--m-gadget", dest="m_gadget", type=int, default=None)
    sp.add_argument("--paper-sweep", action="store_true")
    sp.add_argument("--attractors", action="store_true",
                    help="also run the four stock seeds, transient dropped")
    sp.set_defaults(fn=_cmd_double_well)

    sp = sub.add_parser("convergence", help="order study for a scheme spec")
    sp.add_argument("--scheme-spec", required=True)
    sp.add_argument("--hamiltonian", required=True,
                    help="polynomial, e.g. 1/2*p^2+1/2*x^2+3/10*u")
    sp.add_argument("--z0", default="1,0,0")
    sp.add_argument("--T", type=float, default=5.0)
    sp.add_argument("--h-sweep", dest="h_sweep", default="log:-1:-2.5:10")
    sp.add_argument("--error-norm", default="endpoint",
                    choices=("endpoint", "sup"))
    sp.add_argument("--out")
    sp.add_argument("--svg", action="store_true")
    sp.set_defaults(fn=_cmd_convergence)

    sp = sub.add_parser("bracket-check", help="gadget vs exact bracket flow")
    sp.add_argument("--gadget", default="basic",
                    choices=("basic", "symmetric", "yoshida"))
    sp.add_argument("--m-gadget", dest="m_gadget", type=int, default=4)
    sp.add_argument("--eps-sweep", dest="eps_sweep",
                    default="log:-1:-2:9")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(fn=_cmd_bracket_check)

    sp = sub.add_parser("decompose",
                        help="depth-one representation of a polynomial")
    sp.add_argument("hamiltonian")
    sp.set_defaults(fn=_cmd_decompose)

    sp = sub.add_parser("universal",
                        help="build and run the universal scheme for H")
    sp.add_argument("hamiltonian")
    sp.add_argument("--outer", type=int, default=2, choices=(1, 2))
    sp.add_argument("--gadget", default="symmetric",
                    choices=("basic", "symmetric", "yoshida"))
    sp.add_argument("--m-gadget", dest="m_gadget", type=int, default=4)
    sp.add_argument("--z0", default="0.5,0.7,0.3")
    sp.add_argument("--h", type=float, default=0.01)
    sp.add_argument("--T", type=float, default=2.0)
    sp.set_defaults(fn=_cmd_universal)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (BlowupError, StiffnessError) as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return 3
    except ContactLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
