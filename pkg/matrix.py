# matrix.py
from flask import Blueprint, current_app
import click
import numpy as np

from control import (MODELS, ConstraintScales, DimensionStudyConfig, annual_power,
                     build_power_matrix, dimension_sweep)
from datafiles import write_json, write_power_matrix_csv, write_sweep_csv
from errors import DomainError
from plots import plot_power_matrix, plot_sweep
from runconfig import (build_device, executor_for, load_scatter, recorded_run, run_options,
                       simulation_settings)

matrix = Blueprint('matrix', __name__, cli_group=None)


def _heatmap(pm):
    """Plot data for a power-matrix heatmap: axes plus the power grid (rows follow Hs)."""
    return {'model': pm.model, 'hs': pm.hs.tolist(), 'te': pm.te.tolist(),
            'power': pm.power_grid().tolist(),
            'flagged': [[i, j] for (i, j), cell in sorted(pm.cells.items()) if cell.flags]}


@matrix.cli.command('power-matrix')
@run_options
def power_matrix(config_path, out_dir, seeds, model, png):
    """Optimised-control power matrix over the [MATRIX] Hs x Te grid.

    [MATRIX] models = ["linear", "nonlinear"] emits both variants; otherwise --model is used.
    """
    with recorded_run('power-matrix', config_path, out_dir, seeds, model, png) as run:
        device = build_device(run)
        models = run.value('MATRIX', 'models', [model])
        unknown = set(models) - set(MODELS)
        if unknown:
            raise DomainError(f"[MATRIX] models: unknown model(s) {sorted(unknown)}")
        sim = simulation_settings(run)
        hs = run.value('MATRIX', 'hs')
        te = run.value('MATRIX', 'te')
        scatter = load_scatter(run, 'MATRIX') if 'scatter' in run.table('MATRIX') else None
        summary = {}
        with executor_for(run.value('MATRIX', 'workers', 1)) as executor:
            for name in models:
                current_app.logger.info("power matrix %dx%d, %s model", len(hs), len(te), name)
                pm = build_power_matrix(hs, te, device, name, sim, executor)
                write_power_matrix_csv(run.output(f'power_matrix_{name}.csv'), pm)
                write_json(run.output(f'power_matrix_{name}_heatmap.json'), _heatmap(pm))
                if run.png:
                    plot_power_matrix(pm, run.output(f'power_matrix_{name}.png'))
                flagged = sum(1 for cell in pm.cells.values() if cell.flags)
                entry = {'cells': len(pm.cells), 'flagged_cells': flagged}
                if scatter is not None:
                    entry['annual_power'] = annual_power(pm, scatter)
                    click.echo(f"{name}: occurrence-weighted mean power {entry['annual_power']:.6g} W")
                click.echo(f"{name}: {len(pm.cells)} cells, {flagged} flagged")
                summary[name] = entry
        write_json(run.output('power_matrix_summary.json'), summary)


def _study_config(run):
    sweep = run.table('SWEEP')
    scales = ConstraintScales(**sweep['scales']) if 'scales' in sweep else ConstraintScales()
    return DimensionStudyConfig(tuple(run.value('SWEEP', 'radii')), tuple(run.value('SWEEP', 'drafts')),
                                float(sweep.get('turbine_fraction', 0.6)), float(sweep.get('top', 3.0)),
                                float(sweep.get('mu0', 1.0)), float(sweep.get('mu_factor', 2.0)),
                                float(sweep.get('tolerance', 1e-3)), scales)


@matrix.cli.command('dim-sweep')
@run_options
def dim_sweep(config_path, out_dir, seeds, model, png):
    """Annual power over the [SWEEP] radius x draft grid, with and without constraints."""
    with recorded_run('dim-sweep', config_path, out_dir, seeds, model, png) as run:
        if model != 'linear':
            raise DomainError("the dimension sweep uses the linear model only")
        template = build_device(run)
        config = _study_config(run)
        scatter = load_scatter(run, 'SWEEP')
        results = {}
        with executor_for(run.value('SWEEP', 'workers', 1)) as executor:
            for variant, constrained in (('unconstrained', False), ('constrained', True)):
                points = dimension_sweep(config, scatter, template, constrained, executor)
                write_sweep_csv(run.output(f'sweep_{variant}.csv'), points, variant)
                if run.png:
                    plot_sweep(points, run.output(f'sweep_{variant}.png'),
                               f'Annual mean power ({variant})')
                results[variant] = points
        active = sum(1 for p in results['constrained'] if 'constrained' in p.flags)
        best = max(results['unconstrained'], key=lambda p: np.nan_to_num(p.annual_power, nan=-np.inf))
        click.echo(f"{len(results['unconstrained'])} points; constraints active at {active}")
        click.echo(f"best unconstrained r={best.radius:g} m d={best.draft:g} m: "
                   f"{best.annual_power:.6g} W")
