"""Command line entry points.

Two kinds of commands share one executable: scenario runners (moran,
percolate-dim, ...) that read a JSON config and write a pass/fail report,
and utility commands (percolate, sections, fourier, ...) that expose single
operations as CSV emitters.

Exit codes: 0 all thresholds pass, 1 some threshold failed, 2 validation
or I/O error.
"""

from __future__ import annotations

import json
import math
import sys

import click
import numpy as np

from . import rng
from .catalog import load_ifs
from .errors import DimlabError
from .exceptional import AlignmentParams, scan_directions
from .experiments import (
    _csv_cell,
    load_config,
    parse_ladder,
    parse_scales,
    report_to_csv,
    report_to_json,
    run_scenario,
    scenario_names,
)
from .geometry import DEFAULT_BUDGET, iterate_system
from .measures import forced_pair_law, fourier_decay, measure_dimension, sample_measure
from .percolation import (
    batch_generation_counts,
    sample_tree,
    standard_law,
    table_law,
    uniform_law,
    mandelbrot_config,
)
from .sections import Direction, conservation_profile, probe_sections

_SCENARIO_HELP = {
    "moran": "Check the similarity-dimension solver against analytic cases.",
    "percolate-dim": "Box-count slopes of surviving Mandelbrot samples vs theory.",
    "projection-positivity": "Projection lengths of surviving samples, all directions.",
    "sections-conservation": "Slice-dimension profile of a deterministic attractor.",
    "mandelbrot-slices": "Slice-dimension profiles of percolation samples.",
    "probe": "Random-section probing dichotomy (also a utility, see --alpha).",
    "exceptional-scan": "Phase-alignment membership scan over directions.",
    "fourier-decay": "Decay of the sparse Fourier factor product along a ladder.",
}


def _emit_rows(out, columns, rows):
    lines = [",".join(columns)]
    lines += [",".join(_csv_cell(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _run_guarded(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except DimlabError as exc:
        click.echo(f"error: {exc}", err=True)
        raise SystemExit(2) from None
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        raise SystemExit(2) from None


@click.group()
def main():
    """Numerical experiments on self-similar sets, percolation, and slices."""


# ---------------------------------------------------------------------------
# scenario commands


def _finish_scenario(name, config, seed, out, fmt):
    cfg = load_config(config) if config else {}
    if seed is None:
        seed = cfg.get("seed")
    report = run_scenario(
        name, params=cfg.get("params"), seed=seed, thresholds=cfg.get("thresholds")
    )
    text = report_to_json(report) if fmt == "json" else report_to_csv(report)
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)
    for tname in sorted(report["passes"]):
        ok = report["passes"][tname]
        click.echo(
            f"{name}: {tname} = {report['metrics'].get(tname)} "
            f"[{'pass' if ok else 'FAIL'}]",
            err=True,
        )
    return 0 if report["all_pass"] else 1


_SCENARIO_OPTIONS = [
    click.Option(["--config"], default=None, help="JSON config with params/thresholds/seed."),
    click.Option(["--seed"], type=int, default=None, help="Seed (required here or in the config)."),
    click.Option(["--out"], default=None, help="Report path (stdout when omitted)."),
    click.Option(
        ["--format", "fmt"],
        type=click.Choice(["json", "csv"]),
        default="json",
        help="Report format.",
    ),
]


def _scenario_command(name):
    def callback(config, seed, out, fmt):
        raise SystemExit(_run_guarded(_finish_scenario, name, config, seed, out, fmt))

    return click.Command(
        name,
        params=[opt for opt in _SCENARIO_OPTIONS],
        callback=callback,
        help=_SCENARIO_HELP[name],
    )


for _name in scenario_names():
    if _name != "probe":
        main.add_command(_scenario_command(_name))


@main.command("probe")
@click.option("--config", default=None, help="JSON config (scenario mode).")
@click.option("--seed", type=int, default=None)
@click.option("--out", default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
@click.option("--alpha", type=float, default=None, help="Utility mode: survival exponent.")
@click.option("--ifs", "ifs_name", default="sierpinski_carpet", help="Utility mode system.")
@click.option("--trials", type=int, default=200)
@click.option("--depth", type=int, default=8)
@click.option("--beta", type=float, default=0.0)
@click.option("--grid", type=int, default=512)
def probe_command(config, seed, out, fmt, alpha, ifs_name, trials, depth, beta, grid):
    """Random-section probing: scenario report, or x/hit_frequency CSV with --alpha."""

    def go():
        if alpha is None:
            return _finish_scenario("probe", config, seed, out, fmt)
        if seed is None:
            raise DimlabError("probe --alpha needs --seed")
        ifs = load_ifs(ifs_name)
        result = probe_sections(
            ifs, alpha, Direction.from_angle(beta), depth, trials, seed, grid=grid
        )
        rows = [
            [float(x), float(f)]
            for x, f in zip(result.x_grid, result.frequency)
        ]
        _emit_rows(out, ["x", "hit_frequency"], rows)
        return 0

    raise SystemExit(_run_guarded(go))


# ---------------------------------------------------------------------------
# utility commands


def _parse_law(text, ifs):
    kind, _, arg = text.partition(":")
    if kind == "standard":
        return standard_law(ifs, float(arg))
    if kind == "uniform":
        return uniform_law(ifs.m, float(arg))
    if kind == "table":
        with open(arg, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        law = table_law(doc["masks"], doc["probs"])
        if law.m != ifs.m:
            raise DimlabError(f"table arity {law.m} does not match the system ({ifs.m})")
        return law
    raise DimlabError(f"law {text!r}: want standard:A, uniform:P, or table:FILE")


def _percolate_rows(law, depth, n_seeds, seed, budget):
    seeds = rng.derive_seed(np.uint64(seed), np.arange(n_seeds, dtype=np.uint64))
    n_nodes = sum(law.m ** k for k in range(depth + 1))
    rows = []
    if n_nodes * n_seeds <= budget:
        counts = batch_generation_counts(law, depth, seeds, budget=budget)
        for i in range(n_seeds):
            gen = counts[i]
            rows.append(
                [int(seeds[i]), bool(gen[-1] > 0), int(gen[-1]),
                 "|".join(str(int(c)) for c in gen)]
            )
    else:
        for i in range(n_seeds):
            sample = sample_tree(law, depth, int(seeds[i]), budget=budget)
            gen = sample.counts()
            rows.append(
                [int(seeds[i]), not sample.extinct, int(gen[-1]),
                 "|".join(str(int(c)) for c in gen)]
            )
    return rows


@main.command("percolate")
@click.option("--ifs", "ifs_path", required=True, help="System file or catalog name.")
@click.option("--law", "law_spec", required=True, help="standard:A | uniform:P | table:FILE")
@click.option("--depth", type=int, default=8)
@click.option("--seeds", "n_seeds", type=int, default=1000, help="Number of independent trees.")
@click.option("--seed", type=int, required=True, help="Base seed for the tree streams.")
@click.option("--out", default=None)
@click.option("--budget", type=int, default=DEFAULT_BUDGET)
def percolate_command(ifs_path, law_spec, depth, n_seeds, seed, out, budget):
    """Sample percolation trees and tabulate per-generation survival counts."""

    def go():
        ifs = load_ifs(ifs_path)
        law = _parse_law(law_spec, ifs)
        rows = _percolate_rows(law, depth, n_seeds, seed, budget)
        _emit_rows(out, ["seed", "survived", "count_at_depth", "generation_counts"], rows)
        survived = sum(1 for r in rows if r[1])
        click.echo(f"{survived}/{n_seeds} trees survive to depth {depth}", err=True)
        return 0

    raise SystemExit(_run_guarded(go))


@main.command("mandelbrot")
@click.option("--M", "m_grid", type=int, required=True, help="Subdivisions per axis.")
@click.option("--d", type=int, default=2, help="Ambient dimension.")
@click.option("--p", type=float, required=True, help="Retention probability.")
@click.option("--depth", type=int, default=8)
@click.option("--seeds", "n_seeds", type=int, default=1000)
@click.option("--seed", type=int, required=True)
@click.option("--out", default=None)
@click.option("--budget", type=int, default=DEFAULT_BUDGET)
def mandelbrot_command(m_grid, d, p, depth, n_seeds, seed, out, budget):
    """Mandelbrot percolation: M^d-adic cubes, uniform retention."""

    def go():
        cfg = mandelbrot_config(m_grid, d, p)
        if cfg.supercritical:
            click.echo(f"supercritical, a.s. dimension {cfg.dimension:.6f}", err=True)
        else:
            click.echo("subcritical: dies out almost surely", err=True)
        rows = _percolate_rows(cfg.law, depth, n_seeds, seed, budget)
        _emit_rows(out, ["seed", "survived", "count_at_depth", "generation_counts"], rows)
        return 0

    raise SystemExit(_run_guarded(go))


@main.command("sections")
@click.option("--ifs", "ifs_path", required=True)
@click.option("--beta", type=float, default=0.0, help="Projection direction angle.")
@click.option("--eps", type=float, default=0.1, help="Dimension-drop tolerance.")
@click.option("--scales", default="3:-2:-7", help="base:hi:lo geometric scale ladder.")
@click.option("--grid", type=int, default=512)
@click.option("--out", default=None)
@click.option("--budget", type=int, default=DEFAULT_BUDGET)
def sections_command(ifs_path, beta, eps, scales, grid, out, budget):
    """Slice-count profile of a deterministic attractor over an offset grid."""

    def go():
        ifs = load_ifs(ifs_path)
        ladder = parse_scales(scales)
        profile = conservation_profile(
            ifs, Direction.from_angle(beta), eps, ladder, grid=grid, budget=budget
        )
        rows = []
        for j, x in enumerate(profile.x_grid):
            slope = float(profile.slopes[j]) if profile.valid[j] else None
            r2 = float(profile.r2[j]) if profile.valid[j] else None
            for si, scale in enumerate(ladder):
                rows.append(
                    [float(x), float(scale), int(profile.counts[si, j]),
                     slope, r2, bool(profile.qualifying[j])]
                )
        _emit_rows(out, ["x", "scale", "count", "slope", "r2", "qualifies"], rows)
        click.echo(
            f"qualifying fraction {profile.qualifying_fraction:.4f} "
            f"(threshold slope {profile.threshold:.4f})",
            err=True,
        )
        return 0

    raise SystemExit(_run_guarded(go))


@main.command("fourier")
@click.option("--ifs", "ifs_path", default="rotational_m3")
@click.option("--q", type=int, default=None, help="Block size (auto-selected if omitted).")
@click.option("--k", type=int, default=3, help="Sparse-factor stride.")
@click.option("--eps", type=float, default=0.3, help="Dimension-drop parameter of the law.")
@click.option("--beta", type=float, default=0.7)
@click.option("--ladder", default="2:6", help="lo:hi range of ladder exponents N.")
@click.option("--tau", type=float, default=1.0)
@click.option("--seed", type=int, required=True)
@click.option("--out", default=None)
def fourier_command(ifs_path, q, k, eps, beta, ladder, tau, seed, out):
    """Sparse Fourier product |eta| along the t-ladder for one direction."""

    def go():
        base = load_ifs(ifs_path)
        selection = forced_pair_law(base, eps, q=q)
        system = iterate_system(base, selection.q)
        ns = parse_ladder(ladder)
        depth = k * (max(ns) + 2)
        sample = sample_measure(selection.law, depth, seed)
        est = fourier_decay(sample, system, 1, k, beta, ns, tau=tau)
        rows = [
            [float(t), float(v.real), float(v.imag), float(mod), float(tb)]
            for t, v, mod, tb in zip(est.ts, est.values, est.moduli, est.tail_bounds)
        ]
        _emit_rows(out, ["t", "re", "im", "modulus", "tail_bound"], rows)
        slope = est.slope if math.isfinite(est.slope) else float("nan")
        click.echo(
            f"q = {selection.q}, decay slope {slope:.6f}, exact zeros {est.exact_zeros}",
            err=True,
        )
        return 0

    raise SystemExit(_run_guarded(go))


@main.command("measure-dim")
@click.option("--ifs", "ifs_path", default="rotational_m3")
@click.option("--eps", type=float, default=0.3)
@click.option("--q", type=int, default=None)
@click.option("--trials", type=int, default=100000)
@click.option("--seed", type=int, required=True)
def measure_dim_command(ifs_path, eps, q, trials, seed):
    """Monte Carlo dimension of the random-subset measure."""

    def go():
        base = load_ifs(ifs_path)
        selection = forced_pair_law(base, eps, q=q)
        est, se = measure_dimension(selection.law, trials, seed)
        click.echo(
            f"q = {selection.q}  p_q = {selection.p_q:.6g}  "
            f"retention = {selection.per_symbol_retention:.6g}"
        )
        click.echo(f"dimension = {est:.6f} +/- {se:.6f}  ({trials} draws)")
        return 0

    raise SystemExit(_run_guarded(go))


@main.command("exceptional")
@click.option("--r", type=float, default=0.5)
@click.option("--gamma", type=float, default=0.0)
@click.option("--b", type=float, default=1.0)
@click.option("--theta", type=float, default=1.0)
@click.option("--q", type=int, default=2)
@click.option("--k", type=int, default=2)
@click.option("--delta", type=float, default=1.0 / 3.0)
@click.option("--N", "big_n", type=int, default=100)
@click.option("--beta-grid", type=int, default=2048)
@click.option("--tau-grid", type=int, default=4096)
@click.option("--out", default=None)
def exceptional_command(r, gamma, b, theta, q, k, delta, big_n, beta_grid, tau_grid, out):
    """Scan directions for persistent phase alignment."""

    def go():
        params = AlignmentParams(
            r=r, theta=theta, b=b, gamma=gamma, q=q, k=k,
            delta=delta, big_n=big_n, tau_grid=tau_grid,
        )
        betas = np.linspace(0.0, math.pi, beta_grid, endpoint=False)
        res = scan_directions(params, betas)
        rows = [
            [float(bb), float(f), float(w), bool(mem)]
            for bb, f, w, mem in zip(
                res.betas, res.max_fractions, res.witness_taus, res.members
            )
        ]
        _emit_rows(out, ["beta", "max_fraction", "witness_tau", "member"], rows)
        click.echo(f"member fraction {res.member_fraction:.6f}", err=True)
        return 0

    raise SystemExit(_run_guarded(go))


if __name__ == "__main__":
    sys.exit(main())
