"""Command-line entry point: ``catauth verify | convert | simulate | sweep | search``.

Exit codes: 0 success, 1 verification failure, 2 invalid configuration or
input, 3 I/O error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .protocol import ConfigError
from .schmidt import SchmidtError, convert as convert_states, make_schmidt

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _fail(code: int, msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def parse_vector(text: str):
    """Inline ``0.5,0.3,0.2``, or ``FILE`` / ``FILE:N`` naming line N (default 1) of a file."""
    head, _, line_no = text.rpartition(":") if ":" in text else (text, "", "")
    path = Path(head) if line_no.isdigit() else Path(text)
    line = int(line_no) if line_no.isdigit() else 1
    if path.is_file():
        try:
            lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
        except OSError as exc:
            _fail(EXIT_IO, str(exc))
        if not 1 <= line <= len(lines):
            _fail(EXIT_CONFIG, f"{path} has no line {line}")
        text = lines[line - 1]
    try:
        vals = [float(v) for v in text.replace(" ", ",").split(",") if v.strip()]
        return make_schmidt(vals)
    except (ValueError, SchmidtError) as exc:
        _fail(EXIT_CONFIG, f"bad vector {text!r}: {exc}")


def _emit(text: str, out: str | None):
    if out is None:
        click.echo(text, nl=False)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        _fail(EXIT_IO, str(exc))


def common_options(f):
    f = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None, help="report format")(f)
    f = click.option("--out", type=click.Path(dir_okay=False), default=None, help="report file (default stdout)")(f)
    f = click.option("--trials", type=int, default=None)(f)
    f = click.option("--seed", type=int, default=None, help="master seed")(f)
    return f


def experiment_options(f):
    f = click.option("--workers", type=int, default=None)(f)
    f = click.option("--rounds", "rounds_per_trial", type=int, default=None, help="rounds per trial")(f)
    f = click.option("--L", "L", type=int, default=None, help="attack budget")(f)
    f = click.option("--strategy", default=None, help="e.g. impersonation:target=alice, type2:case=1")(f)
    f = click.option("--k-prime", "K_prime", type=int, default=None)(f)
    f = click.option("--K", "K", type=int, default=None)(f)
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)(f)
    return f


def build_config(config_path, **flags):
    from .experiment import ExperimentConfig, parse_config_text

    items: dict = {}
    if config_path:
        try:
            text = Path(config_path).read_text()
        except OSError as exc:
            _fail(EXIT_IO, str(exc))
        try:
            items = parse_config_text(text)
        except ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
    renames = {"seed": "master_seed", "out": "output_path", "fmt": "output_format"}
    for k, v in flags.items():
        if v is not None:
            items[renames.get(k, k)] = str(v)
    try:
        return ExperimentConfig.from_mapping(items)
    except (ConfigError, ValueError) as exc:
        _fail(EXIT_CONFIG, str(exc))


@click.group()
def main():
    """Catalysis-based authentication simulator."""


@main.command()
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
def verify(out, fmt):
    """Check the reference states' conversion constants."""
    from .experiment import verify_reference_constants

    checks = verify_reference_constants()
    if fmt == "json":
        text = json.dumps([c.__dict__ for c in checks], indent=2) + "\n"
    else:
        text = "".join(
            f"{'PASS' if c.passed else 'FAIL'}  {c.name:<22} {c.value!s:<22} expected {c.expected}\n"
            for c in checks
        )
    _emit(text, out)
    sys.exit(EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY)


@main.command()
@click.option("--from", "source", required=True, help="initial Schmidt vector")
@click.option("--to", "target", required=True, help="target Schmidt vector")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def convert(source, target, out):
    """Report how well one state converts into another by LOCC."""
    b, c = parse_vector(source), parse_vector(target)
    r = convert_states(b, c)
    doc = {
        "from": b.tolist(),
        "to": c.tolist(),
        "deterministic": r.deterministic,
        "probability": r.probability,
        "fidelity": r.fidelity,
        "optimal_target": r.optimal_target.tolist(),
    }
    _emit(json.dumps(doc, indent=2) + "\n", out)


@main.command()
@experiment_options
@common_options
def simulate(config_path, seed, trials, out, fmt, **flags):
    """Run a Monte Carlo experiment."""
    from .experiment import render_report, run_experiment

    cfg = build_config(config_path, seed=seed, trials=trials, out=out, fmt=fmt, **flags)
    stats = run_experiment(cfg, write=False)
    _emit(render_report([stats], cfg.output_format, cfg), cfg.output_path)


@main.command()
@click.option("--axis", type=click.Choice(["K_prime", "L", "K"]), required=True)
@click.option("--values", required=True, help="comma-separated integers")
@experiment_options
@common_options
def sweep(axis, values, config_path, seed, trials, out, fmt, **flags):
    """Repeat an experiment over values of one parameter."""
    from .experiment import render_report, sweep as run_sweep

    try:
        vals = [int(v) for v in values.split(",") if v.strip()]
    except ValueError:
        _fail(EXIT_CONFIG, f"bad --values {values!r}")
    cfg = build_config(config_path, seed=seed, trials=trials, out=out, fmt=fmt, **flags)
    try:
        res = run_sweep(cfg, axis, vals, write=False)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    extra = {"sweep_axis": axis, "sweep_values": vals, "monotone": res.monotone}
    _emit(render_report(res.rows, cfg.output_format, cfg, extra), cfg.output_path)


@main.command()
@click.option("--dim", type=int, required=True)
@click.option("--iters", type=int, required=True)
@click.option("--step", type=float, default=0.05, show_default=True)
@common_options
def search(dim, iters, step, seed, trials, out, fmt):
    """Look for state pairs with a lower unassisted fidelity."""
    from .experiment import search_states

    try:
        r = search_states(dim, iters, seed=seed or 0, step=step)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    doc = {"b": r.b.tolist(), "c": r.c.tolist(), "p0": r.p0, "iterations": r.iterations,
           "accepted": r.accepted, "seed": seed or 0}
    if fmt == "csv":
        text = "b,c,p0\n" + f"\"{','.join(map(repr, doc['b']))}\",\"{','.join(map(repr, doc['c']))}\",{r.p0!r}\n"
    else:
        text = json.dumps(doc, indent=2) + "\n"
    _emit(text, out)


if __name__ == "__main__":
    main()
