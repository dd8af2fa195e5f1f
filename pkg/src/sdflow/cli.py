"""Command line interface: ``sdflow run | stability | sweep | validate``.

Exit codes: 0 ok, 2 configuration error, 3 geometric breakdown,
4 Picard non-contraction, 5 validation failure.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import hashlib
import json
import logging
import math
from pathlib import Path
import sys

import numpy as np

from . import flow, stability
from .config import ConfigError, load_config
from .diagnostics import interpolation_suite

log = logging.getLogger("sdflow")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BREAKDOWN = 3
EXIT_NONCONTRACTION = 4
EXIT_VALIDATION = 5


def _header(kind, chash):
    return f"sdflow {kind}\nconfig_hash: {chash}"


def _write_json(path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_snapshots(outdir, snapshots, chash):
    """One JSON file ``{config_hash, t, h}`` per snapshot, numbered in time order."""
    snapdir = outdir / "snapshots"
    snapdir.mkdir(exist_ok=True)
    for k, (t, h) in enumerate(snapshots):
        h = np.asarray(h)
        values = h[0].tolist() if h.shape[0] == 1 else h.tolist()
        _write_json(snapdir / f"snapshot_{k:05d}.json", {"config_hash": chash, "t": float(t), "h": values})


def _svg_setup():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "sdflow"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def _save_svg(fig, path, chash):
    fig.savefig(path, format="svg", metadata={"Date": None, "Description": f"config_hash: {chash}"})


def _run_svg(outdir, record, snapshots, curve, chash):
    plt = _svg_setup()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    x = curve.s[0]
    for k, (t, h) in enumerate(snapshots):
        ax1.plot(x, np.asarray(h)[0], lw=0.8, color=plt.cm.viridis(k / max(1, len(snapshots) - 1)))
    ax1.set_xlabel("parameter")
    ax1.set_ylabel("h")
    ax2.plot(record.t, record.energy)
    ax2.set_xlabel("t")
    ax2.set_ylabel("energy")
    fig.tight_layout()
    _save_svg(fig, outdir / "run.svg", chash)
    plt.close(fig)


def cmd_run(args, cfg):
    outdir = Path(args.out or cfg.output.dir)
    outdir.mkdir(parents=True, exist_ok=True)
    chash = cfg.hash()
    curve = cfg.reference(base_dir=Path(args.config).parent)
    h0 = cfg.initial_height(curve)
    try:
        h0.check_admissible()
    except ValueError as exc:
        raise ConfigError([("geometry.initial", str(exc))]) from None
    model = cfg.model()
    fcfg = cfg.flow.forcing
    if fcfg.kind == "elastic":
        forcing = flow.ForcingSpec.coupled(cfg.elastic_setup(), cfg.elasticity.resolve_every)
    elif fcfg.kind == "prescribed":
        field = np.full((curve.m, curve.N), fcfg.constant)
        for m in fcfg.modes:
            field = field + m.amp * np.cos(2 * np.pi * m.n * curve.s / curve.length[:, None] + m.phase)
        forcing = flow.ForcingSpec.prescribed(lambda s, t, n, f=field: f)
    else:
        forcing = flow.ForcingSpec.none()

    if cfg.flow.picard.enabled:
        pc = cfg.flow.picard
        state = flow.FlowState(h0, model)
        dt = cfg.flow.dt.fixed or flow.DtPolicy(c_dt=cfg.flow.dt.C_dt).propose(state, forcing)
        try:
            traj, report = flow.picard_solve(h0, model, cfg.elastic_setup(), cfg.flow.T, dt,
                                             tol=pc.tol, max_iter=pc.max_iter, snapshot_every=pc.K)
        except flow.NonContractionError as exc:
            doc = {"config_hash": chash, "status": "non-contraction", "message": str(exc)}
            if exc.report is not None:
                doc.update(exc.report.to_dict())
            _write_json(outdir / "picard.json", doc)
            log.error("%s", exc)
            return EXIT_NONCONTRACTION
        doc = {"config_hash": chash, "status": "completed"}
        doc.update(report.to_dict())
        _write_json(outdir / "picard.json", doc)
        stride = cfg.output.snapshot_stride or pc.K
        snaps = [(i * report.dt, traj[i]) for i in range(0, len(traj), stride)]
        _write_snapshots(outdir, snaps, chash)
        return EXIT_OK

    policy = flow.DtPolicy(c_dt=cfg.flow.dt.C_dt, fixed=cfg.flow.dt.fixed, max_halvings=cfg.flow.dt.max_halvings)
    state = flow.FlowState(h0, model)
    result = flow.run(state, forcing, cfg.flow.T, policy, record_every=cfg.output.csv_stride,
                      snapshot_every=cfg.output.snapshot_stride, max_steps=cfg.flow.max_steps)
    header = _header("run", chash) + f"\nstatus: {result.status}"
    (outdir / "trajectory.csv").write_text(result.record.to_csv(header), encoding="utf-8")
    if result.snapshots:
        _write_snapshots(outdir, result.snapshots, chash)
    if cfg.output.svg:
        _run_svg(outdir, result.record, result.snapshots or [(state.t, state.h.values)], curve, chash)
    if not result.completed:
        log.error("geometric breakdown at t=%.6g: %s", state.t, result.message)
        return EXIT_BREAKDOWN
    return EXIT_OK


def _stability_svg(path, report, cfg, setup, model, chash):
    plt = _svg_setup()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    s = np.linspace(0.0, 6.0, 241)
    ax1.plot(s, stability.grinfeld_K(s, report.nu_p), label="K")
    ax1.plot(s, stability.grinfeld_H(s, report.nu_p), "--", label="H")
    ax1.set_xlabel("s")
    ax1.legend()
    ref = report.a_stable if math.isfinite(report.a_stable) else report.a
    avals = np.linspace(0.5 * ref, 1.5 * ref, 9)
    d2 = [stability.second_variation_fd(a, report.ell, 1, model, setup, eps=cfg.stability.eps_rel * a,
                                        N=cfg.geometry.N) for a in avals]
    ax2.plot(avals, d2, "o-")
    ax2.axhline(0.0, color="k", lw=0.5)
    if math.isfinite(report.a_stable):
        ax2.axvline(report.a_stable, color="r", lw=0.8)
    ax2.set_xlabel("a")
    ax2.set_ylabel("d2 (mode 1)")
    fig.tight_layout()
    _save_svg(fig, path, chash)
    plt.close(fig)


def cmd_stability(args, cfg):
    if cfg.geometry.mode != "graph":
        raise ConfigError([("geometry.mode", "stability analysis needs graph mode")])
    chash = cfg.hash()
    model = cfg.model()
    setup = cfg.elastic_setup()
    a = cfg.stability.a or cfg.geometry.initial.a
    report = stability.stability_report(cfg.geometry.ell, a, model, setup, n_max=cfg.stability.n_max,
                                        eps_rel=cfg.stability.eps_rel, N=cfg.geometry.N)
    doc = {"config_hash": chash}
    doc.update(report.to_dict())
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    outdir = Path(args.out or cfg.output.dir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "stability.json").write_text(text + "\n", encoding="utf-8")
    if cfg.output.svg:
        _stability_svg(outdir / "stability.svg", report, cfg, setup, model, chash)
    return EXIT_OK


def _grid(spec):
    try:
        lo, hi, n = spec.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError([("<args>", f"grid spec {spec!r} must be lo:hi:n")]) from None
    if n < 1 or not (lo > 0 and hi >= lo):
        raise ConfigError([("<args>", f"grid spec {spec!r} needs 0 < lo <= hi and n >= 1")])
    return np.linspace(lo, hi, n) if n > 1 else np.array([lo])


def _sweep_point(job):
    """Minimum over modes of the finite-difference second variation at (a, ell)."""
    a, ell, model, setup, n_max, eps_rel, N = job
    d2 = [stability.second_variation_fd(a, ell, n, model, setup, eps=eps_rel * a, N=N)
          for n in range(1, n_max + 1)]
    k = int(np.argmin(d2))
    return float(d2[k]), k + 1


def cmd_sweep(args, cfg):
    if cfg.geometry.mode != "graph":
        raise ConfigError([("geometry.mode", "sweep needs graph mode")])
    chash = cfg.hash()
    avals, lvals = _grid(args.a), _grid(args.ell)
    model, setup = cfg.model(), cfg.elastic_setup()
    mat, e0 = setup.material, setup.e0
    jobs = [(a, ell, model, setup, cfg.stability.n_max, cfg.stability.eps_rel, cfg.geometry.N)
            for ell in lvals for a in avals]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    lines = ["# " + line for line in _header("sweep", chash).splitlines()]
    lines.append("a,ell,a_stable,d2_min,n_min,stable_fd,stable_analytic")
    for (a, ell, *_), (d2, n) in zip(jobs, results):
        ast = stability.a_stable(ell, mat, e0, model)
        lines.append(",".join([repr(float(a)), repr(float(ell)), "inf" if math.isinf(ast) else repr(float(ast)),
                               repr(float(d2)), str(n), str(int(d2 > 0)), str(int(a < ast))]))
    outdir = Path(args.out or cfg.output.dir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_validate(args):
    params = {"trials": args.trials, "seed": args.seed}
    chash = hashlib.sha256(json.dumps(params, sort_keys=True).encode()).hexdigest()[:16]
    report = interpolation_suite(seed=args.seed, trials=args.trials)
    doc = {"config_hash": chash}
    doc.update(report)
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "validate.json").write_text(text + "\n", encoding="utf-8")
    return EXIT_OK if report["pass"] else EXIT_VALIDATION


def build_parser():
    p = argparse.ArgumentParser(prog="sdflow", description="Surface diffusion of normal graphs, optionally coupled to film elasticity.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="integrate the flow and write trajectory outputs")
    r.add_argument("-c", "--config", required=True)
    r.add_argument("--out")
    s = sub.add_parser("stability", help="Grinfeld threshold and second variations of a flat film")
    s.add_argument("-c", "--config", required=True)
    s.add_argument("--out")
    w = sub.add_parser("sweep", help="stability phase map over (a, ell)")
    w.add_argument("-c", "--config", required=True)
    w.add_argument("--a", required=True, help="lo:hi:n")
    w.add_argument("--ell", required=True, help="lo:hi:n")
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--out")
    v = sub.add_parser("validate", help="interpolation inequality property suite")
    v.add_argument("--trials", type=int, default=1000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            return cmd_validate(args)
        cfg = load_config(args.config)
        handler = {"run": cmd_run, "stability": cmd_stability, "sweep": cmd_sweep}[args.command]
        return handler(args, cfg)
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
