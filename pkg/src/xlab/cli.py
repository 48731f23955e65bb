"""Command line entry point: ``xlab list``, ``xlab run`` and ``xlab exact``."""

from __future__ import annotations

import json
import sys

import click

from .harness import list_presets, parse_config, run_preset, spec_from_config
from .params import PARAM_KEYS, BoundaryParams, classify_phase


def _param_options(fn):
    for key in reversed(PARAM_KEYS):
        fn = click.option(f"--{key}", type=float, default=None, help=f"boundary parameter {key}")(fn)
    return fn


def _collect_params(kw) -> dict | None:
    values = {k: kw.pop(k) for k in PARAM_KEYS}
    values = {k: v for k, v in values.items() if v is not None}
    return values or None


@click.group()
def main():
    """Simulation and exact analysis of the open-boundary exclusion process."""


@main.command("list")
@click.option("--json", "as_json", is_flag=True, help="print the catalog as JSON")
def list_cmd(as_json):
    """List the experiment presets and the criteria they feed."""
    catalog = list_presets()
    if as_json:
        click.echo(json.dumps(catalog, indent=2))
        return
    for entry in catalog:
        tag = " (exploratory)" if entry["exploratory"] else ""
        crit = ",".join(str(c) for c in entry["criteria"])
        click.echo(f"{entry['name']:<26} [{crit}] {entry['description']}{tag}")


@main.command("run")
@click.option("--preset", default=None, help="preset name (see xlab list)")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="key=value config file")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="master seed")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="output directory")
@click.option("--replicas", type=int, default=None)
@click.option("--sizes", default=None, help="comma separated sizes")
@click.option("--horizon", type=float, default=None)
@click.option("--workers", type=int, default=None, help="parallel worker processes")
@_param_options
def run_cmd(preset, config_path, seed, out, replicas, sizes, horizon, workers, **kw):
    """Run one preset and write summary.json plus CSV series."""
    values = parse_config(open(config_path).read()) if config_path else {}
    params = _collect_params(kw)
    if params:
        values.update({k: str(v) for k, v in params.items()})
    if sizes is not None:
        values["sizes"] = sizes
    try:
        spec = spec_from_config(values, preset=preset, seed=seed, out=out, replicas=replicas,
                                horizon=horizon, workers=workers)
        record = run_preset(spec)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    for m in record.metrics:
        flag = "" if m.passed is None else ("PASS" if m.passed else "FAIL")
        click.echo(f"[{m.criterion}] {m.name} = {m.value:.6g} {flag}")
    if out:
        click.echo(f"wrote {out}")
    if not record.exploratory and not record.passed:
        sys.exit(1)


@main.command("exact")
@click.option("--n", "n", type=int, required=True, help="number of sites (at most 14)")
@click.option("--task", type=click.Choice(["stationary", "mixing", "kac", "phase"]), default="stationary")
@click.option("--epsilon", type=float, default=0.25, help="TV threshold for --task mixing")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV file for --task stationary")
@_param_options
def exact_cmd(n, task, epsilon, out, **kw):
    """Exact small-N computations."""
    from .exact.generator import build_generator, stationary_exact, write_distribution_csv
    from .exact.kac import expected_return_time, kac_return_time
    from .exact.mixing import mixing_time_exact

    values = _collect_params(kw)
    if not values or "p" not in values:
        raise click.ClickException("--p is required")
    try:
        params = BoundaryParams(**values)
        G = build_generator(params, n)
        if task == "phase":
            click.echo(json.dumps(classify_phase(params).to_dict()))
        elif task == "stationary":
            pi = stationary_exact(G)
            if out:
                write_distribution_csv(out, pi, n)
                click.echo(f"wrote {out}")
            else:
                for i, w in enumerate(pi):
                    click.echo(f"{format(i, f'0{n}b')[::-1]},{w:.17g}")
        elif task == "mixing":
            click.echo(f"{mixing_time_exact(G, epsilon):.10g}")
        else:
            click.echo(json.dumps({"first_step": expected_return_time(G, 0), "kac": kac_return_time(G, 0)}))
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None


if __name__ == "__main__":
    main()
