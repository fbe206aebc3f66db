# plots.py
"""PNG figures rendered from the data the commands already wrote."""
import logging

import numpy as np
import matplotlib
matplotlib.use('Agg')  # no display on batch runs
import matplotlib.pyplot as plt

log = logging.getLogger(__name__)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format='png', dpi=120)
    plt.close(fig)
    log.info("wrote %s", path)
    return path


def plot_timeseries(ts, path):
    """Water level, shaft power and minimum blade pressure over the whole run.

    The averaging window is shaded.
    """
    fig, axes = plt.subplots(3, 1, figsize=(8, 8), sharex=True)
    axes[0].plot(ts.t, ts.zeta, color='#1abc9c', linewidth=1.5)
    axes[0].set_ylabel('water level [m]')
    axes[1].plot(ts.t, ts.power / 1e3, color='#2c3e50', linewidth=1.5)
    axes[1].set_ylabel('shaft power [kW]')
    axes[2].plot(ts.t, ts.pmin / 1e3, color='#c0392b', linewidth=1.5)
    axes[2].set_ylabel('min blade pressure [kPa]')
    axes[2].set_xlabel('t [s]')
    for ax in axes:
        ax.grid(True, linestyle='--', alpha=0.6)
        ax.axvspan(ts.window_start, ts.t[-1], color='#bdc3c7', alpha=0.3)
    return _save(fig, path)


def plot_power_matrix(matrix, path):
    grid = matrix.power_grid() / 1e3
    fig, ax = plt.subplots(figsize=(8, 6))
    mesh = ax.pcolormesh(matrix.te, matrix.hs, grid, shading='nearest', cmap='viridis')
    fig.colorbar(mesh, ax=ax, label='mean power [kW]')
    for (i, j), cell in matrix.cells.items():
        if cell.flags:
            ax.plot(matrix.te[j], matrix.hs[i], marker='x', color='white', markersize=6)
    ax.set_title(f'Power matrix ({matrix.model} model)', fontsize=14)
    ax.set_xlabel('Te [s]')
    ax.set_ylabel('Hs [m]')
    return _save(fig, path)


def plot_sweep(points, path, title='Annual mean power'):
    """Three maps over (radius, draft): power, power per width, power per area."""
    radii = np.array(sorted({p.radius for p in points}))
    drafts = np.array(sorted({p.draft for p in points}))
    maps = {name: np.full((drafts.size, radii.size), np.nan)
            for name in ('annual_power', 'linear_density', 'surface_density')}
    for p in points:
        j = int(np.searchsorted(radii, p.radius))
        i = int(np.searchsorted(drafts, p.draft))
        for name, grid in maps.items():
            grid[i, j] = getattr(p, name) / 1e3
    labels = {'annual_power': 'P [kW]', 'linear_density': 'P / 2r [kW/m]',
              'surface_density': 'P / area [kW/m²]'}
    fig, axes = plt.subplots(1, 3, figsize=(15, 4.5))
    for ax, (name, grid) in zip(axes, maps.items()):
        mesh = ax.pcolormesh(radii, drafts, grid, shading='nearest', cmap='viridis')
        fig.colorbar(mesh, ax=ax, label=labels[name])
        ax.set_xlabel('r [m]')
        ax.set_ylabel('d [m]')
    fig.suptitle(title, fontsize=14)
    return _save(fig, path)


def plot_histograms(powers_by_label, path, bins=12):
    """Per-device power histograms on shared bins, one panel per layout."""
    every = np.concatenate([np.asarray(v, dtype=float) for v in powers_by_label.values()]) / 1e3
    lo, hi = (every.min(), every.max()) if every.size else (0.0, 1.0)
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    fig, axes = plt.subplots(1, len(powers_by_label), figsize=(5 * len(powers_by_label), 4),
                             sharey=True, squeeze=False)
    for ax, (label, powers) in zip(axes[0], powers_by_label.items()):
        powers = np.asarray(powers, dtype=float) / 1e3
        ax.hist(powers, bins=edges, color='#1abc9c', edgecolor='#2c3e50')
        ax.axvline(powers.mean(), color='#c0392b', linewidth=1.5)
        ax.set_title(f'{label}: total {powers.sum():.4g} kW')
        ax.set_xlabel('device power [kW]')
        ax.grid(True, linestyle='--', alpha=0.6)
    axes[0][0].set_ylabel('devices')
    return _save(fig, path)


def plot_layout(positions, domain, path, piles=None, per_device_power=None, title='Layout'):
    fig, ax = plt.subplots(figsize=(7, 7))
    poly = np.vstack([domain.vertices, domain.vertices[:1]])
    ax.plot(poly[:, 0], poly[:, 1], color='black', linewidth=1)
    positions = np.asarray(positions, dtype=float)
    colour = None if per_device_power is None else np.asarray(per_device_power) / 1e3
    sc = ax.scatter(positions[:, 0], positions[:, 1], c=colour, s=30, cmap='viridis', zorder=3)
    if colour is not None:
        fig.colorbar(sc, ax=ax, label='device power [kW]')
    if piles is not None and len(piles):
        piles = np.asarray(piles, dtype=float)
        ax.scatter(piles[:, 0], piles[:, 1], marker='s', color='#7f8c8d', s=80, zorder=2)
    ax.set_aspect('equal')
    ax.set_title(title, fontsize=14)
    ax.set_xlabel('x [m]')
    ax.set_ylabel('y [m]')
    ax.grid(True, linestyle='--', alpha=0.6)
    return _save(fig, path)


def plot_power_map(xs, ys, grid, path, fixed=None, title='Device power map'):
    fig, ax = plt.subplots(figsize=(8, 6))
    mesh = ax.pcolormesh(xs, ys, np.asarray(grid) / 1e3, shading='nearest', cmap='viridis')
    fig.colorbar(mesh, ax=ax, label='power [kW]')
    if fixed is not None and len(fixed):
        fixed = np.asarray(fixed, dtype=float)
        ax.scatter(fixed[:, 0], fixed[:, 1], marker='o', color='white', edgecolor='black')
    ax.set_aspect('equal')
    ax.set_title(title, fontsize=14)
    ax.set_xlabel('x [m]')
    ax.set_ylabel('y [m]')
    return _save(fig, path)
