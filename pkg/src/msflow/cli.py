"""Command-line orchestration: run one simulation, validate a config, or
compare multiscale methods against the fine reference."""

import argparse
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from . import fields_io, mesh, metrics, transport


def _error_report(kind, message, **extra):
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)


def _load(args):
    cfg, diags = cfgmod.load_config(args.config)
    diags += cfgmod.validate_config(cfg)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg, diags


def _write_run_outputs(outdir, cfg, grid, partition, result):
    header, rows = result.series_rows()
    fields_io.write_series(os.path.join(outdir, "water_cut.csv"), rows, header)
    with open(os.path.join(outdir, "timing.json"), "w") as fh:
        json.dump(
            {
                "method": result.method,
                "setup_seconds": result.setup_seconds,
                "sim_seconds": result.sim_seconds,
                "steps": len(result.times),
                "pressure_solves": result.pressure_solves,
                "dt": result.dt,
            },
            fh,
            indent=2,
        )
    with open(os.path.join(outdir, "dof.json"), "w") as fh:
        json.dump(
            {
                "method": result.method,
                "dof": result.dof,
                "coarse_blocks": partition.num_blocks,
                "coarse_edges": partition.num_edges,
                "fine_dof": mesh.fine_dof(grid),
            },
            fh,
            indent=2,
        )
    for step, sat in result.checkpoints.items():
        fields_io.write_volume(
            os.path.join(outdir, f"saturation_{result.method}_{step}.vtk"),
            sat,
            grid.dims,
            grid.spacing,
            name="saturation",
        )


def _run_one(cfg, mcfg, grid, partition, kappa, wells, mobility, dt,
             record_saturation):
    stepper = cfgmod.build_stepper(cfg, mcfg, grid, partition, kappa, wells,
                                   mobility)
    return transport.impes_run(
        grid,
        stepper,
        wells,
        mobility,
        cfg.steps,
        pressure_interval=cfg.pressure_interval,
        dt=dt,
        cfl_safety=cfg.cfl_safety,
        max_dt=cfg.max_dt,
        record_saturation=record_saturation,
        checkpoint_instants=cfg.snapshot_instants,
    )


def cmd_validate(args):
    cfg, diags = _load(args)
    print(json.dumps({"diagnostics": diags}, indent=2))
    return 0


def cmd_run(args):
    cfg, diags = _load(args)
    if diags:
        _error_report("config", "configuration is not runnable", diagnostics=diags)
        return 2
    os.makedirs(args.out, exist_ok=True)
    grid = cfgmod.build_grid(cfg)
    partition = cfgmod.build_partition(cfg, grid)
    kappa = cfgmod.build_field(cfg)
    wells = cfgmod.build_wells(cfg, grid)
    mobility = cfgmod.build_mobility(cfg)
    result = _run_one(cfg, cfg.method, grid, partition, kappa, wells, mobility,
                      cfg.dt, record_saturation=False)
    _write_run_outputs(args.out, cfg, grid, partition, result)
    print(
        f"{result.method}: {len(result.times)} steps, dof {result.dof}, "
        f"setup {result.setup_seconds:.2f}s, sim {result.sim_seconds:.2f}s"
    )
    return 0


def _aligned_dt(cfg, grid, partition, kappa, wells, mobility):
    """Fixed step shared by every run of a comparison, from the reference
    method's initial velocity and the CFL bound."""
    if cfg.dt is not None:
        return cfg.dt
    stepper = cfgmod.build_stepper(
        cfg, cfgmod.MethodConfig(name="reference"), grid, partition, kappa,
        wells, mobility,
    )
    lam0 = mobility.total(np.zeros(grid.num_cells))
    v0, _ = stepper.solve_pressure(lam0)
    return transport.cfl_dt(
        grid, v0, mobility, wells.total_rates(grid.num_cells),
        cfg.cfl_safety, cfg.max_dt,
    )


def cmd_compare(args):
    cfg, diags = _load(args)
    if diags:
        _error_report("config", "configuration is not runnable", diagnostics=diags)
        return 2
    if not cfg.compare_methods:
        _error_report("config", "compare mode needs compare.methods entries")
        return 2
    os.makedirs(args.out, exist_ok=True)
    grid = cfgmod.build_grid(cfg)
    partition = cfgmod.build_partition(cfg, grid)
    kappa = cfgmod.build_field(cfg)
    wells = cfgmod.build_wells(cfg, grid)
    mobility = cfgmod.build_mobility(cfg)
    dt = _aligned_dt(cfg, grid, partition, kappa, wells, mobility)

    ref_cfg = cfgmod.MethodConfig(name="reference")
    reference = _run_one(cfg, ref_cfg, grid, partition, kappa, wells, mobility,
                         dt, record_saturation=True)
    wc_header, wc_rows = reference.series_rows()
    n_coarse = cfg.coarsening[0]
    table = [
        {
            "method": reference.method,
            "n": "",
            "dof": reference.dof,
            "t_setup": round(reference.setup_seconds, 3),
            "t_sim": round(reference.sim_seconds, 3),
            "e_s": "",
        }
    ]
    error_rows = []
    for mcfg in cfg.compare_methods:
        res = _run_one(cfg, mcfg, grid, partition, kappa, wells, mobility, dt,
                       record_saturation=True)
        per_instant, avg, _ = metrics.saturation_error(
            reference.times, reference.saturations, res.times, res.saturations,
            grid.cell_volume,
        )
        table.append(
            {
                "method": res.method,
                "n": n_coarse,
                "dof": res.dof,
                "t_setup": round(res.setup_seconds, 3),
                "t_sim": round(res.sim_seconds, 3),
                "e_s": avg,
            }
        )
        for i, (t, e) in enumerate(zip(res.times, per_instant)):
            if np.isfinite(e):
                error_rows.append([res.method, i + 1, t, e])
        wc_rows += res.series_rows()[1]
    fields_io.write_series(
        os.path.join(args.out, "table.csv"),
        [[r["method"], r["n"], r["dof"], r["t_setup"], r["t_sim"], r["e_s"]]
         for r in table],
        ["method", "n", "dof", "t_setup", "t_sim", "e_s"],
    )
    fields_io.write_series(
        os.path.join(args.out, "error.csv"), error_rows,
        ["method", "step", "t", "e_si"],
    )
    fields_io.write_series(
        os.path.join(args.out, "water_cut.csv"), wc_rows, wc_header
    )
    widths = (22, 4, 9, 10, 10, 10)
    cols = ("method", "n", "dof", "t_setup", "t_sim", "e_s")
    print("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
    for r in table:
        cells = [str(r[c]) if not isinstance(r[c], float) else f"{r[c]:.4f}"
                 for c in cols]
        print("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="msflow",
        description="Two-phase flow with mixed multiscale finite elements",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("validate", cmd_validate),
                     ("compare", cmd_compare)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=".")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as err:
        _error_report("missing-input", str(err))
        return 2
    except Exception as err:  # noqa: BLE001 - CLI boundary
        _error_report(type(err).__name__, str(err))
        return 1


if __name__ == "__main__":
    sys.exit(main())
