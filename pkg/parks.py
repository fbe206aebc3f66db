# parks.py
"""Park commands: layout optimisation, nonlinear re-evaluation and power maps."""
import functools
import math
from dataclasses import dataclass
from pathlib import Path

from flask import Blueprint, current_app
import click
import numpy as np

from datafiles import (coupling_to_json, load_body_json, load_coupling_json, load_layout_json,
                       save_body_json, write_json, write_power_map_csv, write_random_csv,
                       write_trace_csv, write_verify_csv)
from device import OWCDevice
from errors import DomainError
from extensions import db
from layout import (LayoutDomain, OptimizerConfig, best_random_layout, build_truncated_triangle,
                    equilateral_triangle, evaluate_layout, optimize_layout, triangle_domain)
from models import LayoutRecord
from park import (BodyHydro, ParkBuilder, coupling_response, effective_coupling, interaction_factor,
                  make_pile, park_power, park_power_map, solve_park, timedomain_verify)
from plots import plot_histograms, plot_layout, plot_power_map
from runconfig import (RunConfig, build_device, executor_for, recorded_run, run_options,
                       turbine_speed, wave_depth)
from turbine import MeanPowerSeries
from waves import MonochromaticWave, SeaState, equivalent_monochromatic

parks = Blueprint('parks', __name__, cli_group=None)

HISTOGRAM_BINS = 12


@dataclass
class ParkSetup:
    device: OWCDevice
    state: SeaState
    wave: MonochromaticWave
    omega_t: float
    body: BodyHydro
    series: MeanPowerSeries
    pile: BodyHydro | None
    pile_positions: np.ndarray
    domain: LayoutDomain

    def builder(self, pile_positions=None) -> ParkBuilder:
        piles = self.pile_positions if pile_positions is None else pile_positions
        return ParkBuilder(self.body, self.wave, self.pile, piles, self.device.const)

    def isolated_power(self) -> float:
        return park_power(solve_park(self.builder().isolated()), self.series).total


def park_setup(run: RunConfig) -> ParkSetup:
    """Device, wave, bodies and admissible domain from the [PARK] table."""
    device = build_device(run)
    const = device.const
    state = SeaState(float(run.value('PARK', 'hs')), float(run.value('PARK', 'te')))
    direction = float(run.value('PARK', 'direction', 0.0))
    depth = wave_depth(run)
    wave = equivalent_monochromatic(state, direction, depth)
    body_file = run.value('PARK', 'body', None)
    if body_file is not None:
        body = _configured_body(run.resolve(body_file), wave)
        if body.omega_t is not None:
            omega_t = float(body.omega_t)
        else:
            omega_t = turbine_speed(run, 'PARK', device, state, direction)
        order = body.order
    else:
        omega_t = turbine_speed(run, 'PARK', device, state, direction)
        order = int(run.value('PARK', 'order', 6))
        body = BodyHydro.from_device(device, wave.omega, omega_t, order, depth)
    edge = float(run.value('PARK', 'edge'))
    d_min = float(run.value('PARK', 'd_min'))
    radius = device.geometry.max_radius
    pile = None
    pile_positions = np.zeros((0, 2))
    pile_radius = float(run.value('PARK', 'pile_radius', 0.0))
    if pile_radius > 0:
        pile = make_pile(pile_radius, wave.omega, order, const=const, depth=depth)
    if run.value('PARK', 'piles', False):
        if pile is None:
            raise DomainError("[PARK] piles = true needs a positive pile_radius")
        pile_positions = equilateral_triangle(edge)
        domain = build_truncated_triangle(pile_positions, pile_radius, radius, d_min)
    else:
        domain = triangle_domain(edge, d_min, radius)
    current_app.logger.info("park wave H=%.4g m T=%.4g s, omega_t=%.5g rad/s, %d pile(s)",
                            wave.height, wave.period, omega_t, len(pile_positions))
    return ParkSetup(device, state, wave, omega_t, body, device.series(omega_t), pile,
                     pile_positions, domain)


def _configured_body(path, wave: MonochromaticWave) -> BodyHydro:
    body = load_body_json(path)
    if body.is_pile:
        raise DomainError(f"{path}: [PARK] body must describe a device, not a pile")
    if not math.isclose(body.omega, wave.omega, rel_tol=1e-10):
        raise DomainError(f"{path}: body data at omega={body.omega:g} rad/s, "
                          f"the park wave has omega={wave.omega:g} rad/s")
    current_app.logger.info("device body data from %s (order %d)", path, body.order)
    return body


def _layout_power(builder, series, positions):
    return -evaluate_layout(positions, builder, series)[1]


def _histograms(powers_by_label, bins=HISTOGRAM_BINS):
    """Counts of per-device powers on bins shared by every layout."""
    every = np.concatenate([np.asarray(p, dtype=float) for p in powers_by_label.values()])
    lo, hi = float(every.min()), float(every.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    counts = {label: np.histogram(p, bins=edges)[0].tolist() for label, p in powers_by_label.items()}
    return {'edges': edges.tolist(), 'counts': counts}


def _layout_document(label, seed, positions, setup, state, isolated, **extra):
    result = park_power(state, setup.series)
    doc = {'label': label, 'seed': seed,
           'positions': np.asarray(positions, dtype=float).tolist(),
           'piles': np.asarray(setup.pile_positions, dtype=float).tolist(),
           'domain': {'vertices': setup.domain.vertices.tolist(), 'd_min': setup.domain.d_min,
                      'metadata': setup.domain.metadata},
           'wave': {'hs': setup.state.hs, 'te': setup.state.te, 'height': setup.wave.height,
                    'period': setup.wave.period, 'direction': setup.wave.direction},
           'omega_t': setup.omega_t,
           'per_device_power': result.per_device.tolist(),
           'total_power': result.total,
           'q': interaction_factor(result.total, isolated, len(positions)),
           'out_of_model': list(result.out_of_model)}
    doc.update(extra)
    return doc


@parks.cli.command('park-opt')
@run_options
def park_opt(config_path, out_dir, seeds, model, png):
    """Random layouts, then projected-gradient optimisation from the best of them."""
    with recorded_run('park-opt', config_path, out_dir, seeds, model, png) as run:
        if model != 'linear':
            raise DomainError("layouts are optimised with the linear park model")
        setup = park_setup(run)
        count = int(run.value('PARK', 'devices'))
        if not run.seeds:
            run.seeds = tuple(range(int(run.value('PARK', 'random_layouts', 10))))
            run.record.seeds = list(run.seeds)
        save_body_json(run.output('body.json'), setup.body)
        builder = setup.builder()
        isolated = setup.isolated_power()
        click.echo(f"isolated device power {isolated:.6g} W")
        with executor_for(run.value('PARK', 'workers', 1)) as executor:
            study = best_random_layout(setup.domain, count, run.seeds,
                                       functools.partial(_layout_power, builder, setup.series), executor)
        write_random_csv(run.output('random_layouts.csv'), study, isolated)
        click.echo(f"{len(run.seeds)} random layouts: best {study.powers[study.best]:.6g} W, "
                   f"worst {study.powers[study.worst]:.6g} W, spread {study.spread:.4g} W")

        config = OptimizerConfig(**run.table('OPTIMIZER'))
        result = optimize_layout(study.layouts[study.best], builder, setup.domain, setup.series, config)
        write_trace_csv(run.output('trace.csv'), result.trace)

        documents = {}
        for label, index in (('worst', study.worst), ('best', study.best)):
            state, _ = evaluate_layout(study.layouts[index], builder, setup.series)
            documents[label] = _layout_document(label, study.seeds[index], study.layouts[index],
                                                setup, state, isolated)
        documents['optimized'] = _layout_document(
            'optimized', study.seeds[study.best], result.positions, setup, result.state, isolated,
            status=result.status, iterations=result.iterations, step=result.step, trace='trace.csv')
        for label, doc in documents.items():
            write_json(run.output(f'layout_{label}.json'), doc)
            db.session.add(LayoutRecord(run=run.record, label=label, seed=doc['seed'],
                                        total_power=doc['total_power'],
                                        positions=doc["positions"]))
        db.session.commit()

        powers = {label: doc['per_device_power'] for label, doc in documents.items()}
        write_json(run.output('histograms.json'), _histograms(powers))
        if run.png:
            plot_histograms(powers, run.output('histograms.png'), HISTOGRAM_BINS)
            for label, doc in documents.items():
                plot_layout(doc['positions'], setup.domain, run.output(f'layout_{label}.png'),
                            setup.pile_positions, doc['per_device_power'], f'{label} layout')
        gain = documents['optimized']['total_power'] - documents['best']['total_power']
        click.echo(f"optimized {documents['optimized']['total_power']:.6g} W after "
                   f"{result.iterations} iteration(s) ({result.status}), gain {gain:.6g} W")


def _verify_layouts(run: RunConfig):
    names = run.value('PARK', 'layouts', None)
    if names is not None:
        return [run.resolve(name) for name in names]
    return sorted(Path(run.out_dir).glob('layout_*.json'))


def _verify_couplings(run: RunConfig):
    names = run.value('PARK', 'coupling', None)
    if names is None:
        return []
    if isinstance(names, str):
        names = [names]
    return [run.resolve(name) for name in names]


def _verify_row(label, seed, coupling, linear, setup, periods, average, samples):
    ts = timedomain_verify(coupling, setup.device, setup.omega_t, periods, average, samples)
    nonlinear = float(np.sum(ts.mean_power()))
    current_app.logger.info("%s: linear %.6g W, nonlinear %.6g W", label, linear, nonlinear)
    return {'label': label, 'seed': '' if seed is None else seed,
            'linear_power': linear, 'nonlinear_power': nonlinear,
            'ratio': nonlinear / linear if linear else float('nan')}


@parks.cli.command('park-verify')
@run_options
def park_verify(config_path, out_dir, seeds, model, png):
    """Linear and nonlinear park power of stored layouts.

    Layouts come from [PARK] layouts, or every layout_*.json in the output
    directory; [PARK] coupling adds precomputed device interaction matrices.
    """
    with recorded_run('park-verify', config_path, out_dir, seeds, model, png) as run:
        paths = _verify_layouts(run)
        couplings = _verify_couplings(run)
        rows = []
        if paths or couplings:
            setup = park_setup(run)
            periods = int(run.value('PARK', 'verify_periods', 8))
            average = int(run.value('PARK', 'verify_average', 4))
            samples = int(run.value('SIMULATION', 'samples_per_period', 128))
        for path in paths:
            positions, kinds, doc = load_layout_json(path)
            meta = doc if isinstance(doc, dict) else {}
            piles = np.asarray(meta.get('piles', []), dtype=float).reshape(-1, 2)
            devices = positions[[k == 'device' for k in kinds]]
            piles = np.vstack([piles, positions[[k == 'pile' for k in kinds]]])
            if len(piles) and setup.pile is None:
                raise DomainError(f"{path}: layout has piles but [PARK] pile_radius is not set")
            problem = setup.builder(piles)(devices)
            linear = park_power(solve_park(problem), setup.series).total
            coupling = effective_coupling(problem)
            label = meta.get('label', path.stem)
            write_json(run.output(f'coupling_{label}.json'), coupling_to_json(coupling))
            rows.append(_verify_row(label, meta.get('seed'), coupling, linear, setup,
                                    periods, average, samples))
        for path in couplings:
            coupling = load_coupling_json(path)
            zeta = coupling_response(coupling, setup.device, setup.omega_t)
            linear = math.fsum(float(setup.series.power(coupling.omega, z)) for z in zeta)
            rows.append(_verify_row(path.stem, None, coupling, linear, setup,
                                    periods, average, samples))
        reference = next((r for r in rows if r['label'] == 'best'), None)
        for row in rows:
            row['linear_gain'] = row['linear_power'] - reference['linear_power'] if reference else float('nan')
            row['nonlinear_gain'] = (row['nonlinear_power'] - reference['nonlinear_power']
                                     if reference else float('nan'))
        write_verify_csv(run.output('verify.csv'), rows)
        for row in rows:
            click.echo(f"{row['label']}: linear {row['linear_power']:.6g} W, "
                       f"nonlinear {row['nonlinear_power']:.6g} W (ratio {row['ratio']:.4f})")
        if not rows:
            click.echo("no layouts to verify")


@parks.cli.command('park-map')
@run_options
@click.option('--around', type=click.Choice(['device', 'piles']), default='device', show_default=True,
              help='Fixed bodies: one device at the origin, or the three piles.')
def park_map(config_path, out_dir, seeds, model, png, around):
    """Power of one movable device over a grid next to fixed bodies."""
    with recorded_run('park-map', config_path, out_dir, seeds, model, png) as run:
        if model != 'linear':
            raise DomainError("power maps use the linear park model")
        setup = park_setup(run)
        extent = float(run.value('PARK', 'map_extent', 40.0))
        points = int(run.value('PARK', 'map_points', 41))
        xs = ys = np.linspace(-extent, extent, points)
        isolated = setup.isolated_power()
        if around == 'device':
            fixed, bodies, reference = np.zeros((1, 2)), (setup.body,), 2 * isolated
        else:
            if setup.pile is None:
                raise DomainError("a pile map needs [PARK] pile_radius")
            fixed = equilateral_triangle(float(run.value('PARK', 'edge')))
            bodies, reference = (setup.pile,) * 3, isolated
        own, total = park_power_map(fixed, bodies, setup.body, xs, ys, setup.wave, setup.series,
                                    const=setup.device.const)
        write_power_map_csv(run.output(f'power_map_{around}.csv'), xs, ys, own, total, reference,
                            [f"isolated_power: {isolated!r}"])
        if run.png:
            plot_power_map(xs, ys, own, run.output(f'power_map_{around}.png'), fixed,
                           f'Device power next to fixed {around}')
        click.echo(f"{points}x{points} map around fixed {around}: device power "
                   f"[{np.nanmin(own):.6g}, {np.nanmax(own):.6g}] W, isolated {isolated:.6g} W")
