# simulate.py
from flask import Blueprint, current_app
import click

from datafiles import write_json, write_timeseries_csv
from device import simulate_device
from plots import plot_timeseries
from runconfig import (build_device, recorded_run, run_options, sea_state, simulation_settings,
                       turbine_speed, wave_depth)
from waves import equivalent_monochromatic

simulate = Blueprint('simulate', __name__, cli_group=None)


@simulate.cli.command('device-sim')
@run_options
def device_sim(config_path, out_dir, seeds, model, png):
    """Nonlinear time-domain run of one device in the [WAVE] sea state.

    The run always uses the nonlinear column model; --model is ignored.
    """
    with recorded_run('device-sim', config_path, out_dir, seeds, 'nonlinear', png) as run:
        device = build_device(run)
        state = sea_state(run)
        direction = float(run.value('WAVE', 'direction', 0.0))
        wave = equivalent_monochromatic(state, direction, wave_depth(run))
        omega_t = turbine_speed(run, 'SIMULATION', device, state, direction)
        sim = simulation_settings(run)
        current_app.logger.info("simulating Hs=%g Te=%g at omega_t=%.6g rad/s", state.hs, state.te, omega_t)
        ts = simulate_device(device, wave, omega_t, periods=sim.periods,
                             samples_per_period=sim.samples_per_period, rtol=sim.rtol, atol=sim.atol)
        summary = ts.summary()
        summary.update({'hs': state.hs, 'te': state.te, 'omega_t': omega_t,
                        'wave_height': wave.height, 'period': wave.period})
        write_timeseries_csv(run.output('timeseries.csv'), ts)
        write_json(run.output('summary.json'), summary)
        if run.png:
            plot_timeseries(ts, run.output('timeseries.png'))
        click.echo(f"mean power {summary['mean_power']:.6g} W, level "
                   f"[{summary['zeta_min']:.4g}, {summary['zeta_max']:.4g}] m, "
                   f"min blade pressure {summary['p_min']:.6g} Pa")
        for flag in summary['flags']:
            click.echo(f"flag: {flag}")
