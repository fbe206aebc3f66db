# registry.py
from flask import Blueprint
import click

from models import RunRecord

registry = Blueprint('registry', __name__, cli_group=None)


@registry.cli.command('runs')
@click.option('--command', 'command_name', default=None, help='Only runs of this command.')
@click.option('--limit', default=20, show_default=True, type=click.IntRange(min=1))
def list_runs(command_name, limit):
    """List recorded runs, newest first."""
    query = RunRecord.query
    if command_name:
        query = query.filter_by(command=command_name)
    records = query.order_by(RunRecord.started_at.desc(), RunRecord.id.desc()).limit(limit).all()
    if not records:
        click.echo("no runs recorded")
        return
    for r in records:
        started = r.started_at.strftime('%Y-%m-%d %H:%M:%S') if r.started_at else '-'
        seeds = ','.join(str(s) for s in r.seeds or []) or '-'
        click.echo(f"{r.id:5d}  {started}  {r.command:<13} {r.status:<8} {r.model:<10} "
                   f"seeds={seeds}  {r.out_dir}  {r.config_hash[:12]}")
        for layout in r.layouts:
            click.echo(f"       {layout.label:<10} P={layout.total_power:.6g} W")
