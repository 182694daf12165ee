"""Command-line front door.

Subcommands: fit | bias | anova | orthogonality | lan-sweep | suite.
Experiments come from a TOML or JSON config file (sections [posterior],
[family], [functional], [sweep]) or from presets selected by flags; the
config file wins only where flags are absent.

Exit codes: 0 success, 1 input error, 2 non-convergence (result still
written), 3 suite failure. With --json-errors, failures print a
machine-readable {"code", "message"} object on standard error.

Set VIBIAS_THREADS to cap worker threads for independent sweep points;
computation is otherwise single-threaded and output writing is serialized.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .bias import bias_report
from .blocks import BlockStructure
from .errors import ConfigError, VibiasError
from .fit import fit_meanfield_cavi, fit_meanfield_gaussian, residual
from .functional import Polynomial, parse_functional, serialize_functional
from .lan import run_sweep, tangent_functional_audit
from .measures import GaussianMeasure, GridMeasure
from .presets import gaussian2d, gaussian3, grid_bimodal, lan_default
from .reporting import dump_json, fmt_value, render_csv
from .suite import SUITE_SEED, run_suite, write_suite_outputs
from .tangent import anova_decompose, orthogonality_report, score_basis

PRESETS = ("gaussian2d", "gaussian3", "grid-bimodal")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if p.suffix.lower() == ".toml":
        try:
            return tomllib.loads(raw.decode())
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError(f"malformed TOML config: {exc}") from exc
    try:
        obj = json.loads(raw.decode())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"malformed JSON config: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a table/object")
    return obj


def _resolve_posterior(cfg, preset, rho, grid_points):
    """Posterior + block structure from flags and the [posterior] section."""
    sect = cfg.get("posterior", {})
    preset = preset or sect.get("preset")
    if preset is not None:
        if preset == "gaussian2d":
            r = rho if rho is not None else float(sect.get("rho", 0.5))
            post, blocks = gaussian2d(r)
        elif preset == "gaussian3":
            if "cov" not in sect:
                raise ConfigError("gaussian3 preset needs [posterior] cov")
            post, blocks = gaussian3(
                np.asarray(sect["cov"], dtype=float), mean=sect.get("mean")
            )
        elif preset == "grid-bimodal":
            post, blocks = grid_bimodal(points=grid_points or 41)
        else:
            raise ConfigError(f"unknown preset {preset!r}")
    else:
        kind = sect.get("type")
        if kind == "gaussian":
            post = GaussianMeasure.from_json_dict(sect)
        elif kind == "grid":
            post = GridMeasure.from_json_dict(sect)
        else:
            raise ConfigError("config needs a posterior preset or type")
        blocks = BlockStructure.fully_factorized(post.dims)
    fam = cfg.get("family", {})
    if "blocks" in fam:
        blocks = BlockStructure(post.dims, tuple(tuple(b) for b in fam["blocks"]))
    return post, blocks


def _resolve_functional(cfg, text, dims):
    """Functional from --functional (inline JSON or @file) or [functional]."""
    if text is not None:
        if text.startswith("@"):
            try:
                text = Path(text[1:]).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read functional file: {exc}") from exc
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed functional JSON: {exc}") from exc
    else:
        obj = cfg.get("functional")
        if obj is None:
            raise ConfigError("no functional given (flag or [functional] section)")
    return parse_functional(obj, dims)


def _make_fit(post, blocks, tol):
    if isinstance(post, GaussianMeasure):
        return fit_meanfield_gaussian(post, blocks)
    return fit_meanfield_cavi(post, blocks, tol=tol)


def _fail(exc: Exception, json_errors: bool) -> None:
    if json_errors:
        payload = {"code": type(exc).__name__, "message": str(exc)}
        click.echo(json.dumps(payload, sort_keys=True), err=True)
    else:
        click.echo(f"error [{type(exc).__name__}]: {exc}", err=True)
    sys.exit(1)


def _write(out: str | None, text: str) -> None:
    if out is not None:
        Path(out).write_text(text)


def common_options(f):
    f = click.option("--config", "config_path", type=str, default=None,
                     help="TOML or JSON experiment file.")(f)
    f = click.option("--out", type=str, default=None,
                     help="Output file (CSV or JSON depending on command).")(f)
    f = click.option("--json-errors", is_flag=True,
                     help="Machine-readable errors on stderr.")(f)
    f = click.option("--grid-points", type=int, default=None,
                     help="Grid resolution for discretized posteriors.")(f)
    f = click.option("--tol", type=float, default=1e-10,
                     help="Convergence tolerance for iterative fits.")(f)
    f = click.option("--seed", type=int, default=SUITE_SEED,
                     help="Probe seed for randomized checks.")(f)
    return f


@click.group()
@click.version_option(package_name="vibias")
def main():
    """Mean-field variational bias diagnostics."""


@main.command("fit")
@common_options
@click.option("--preset", type=click.Choice(PRESETS), default=None)
@click.option("--rho", type=float, default=None, help="Correlation for gaussian2d.")
def cmd_fit(config_path, out, json_errors, grid_points, tol, seed, preset, rho):
    """Fit the KL projection and report KL, stationarity, convergence."""
    try:
        cfg = _load_config(config_path)
        post, blocks = _resolve_posterior(cfg, preset, rho, grid_points)
        fit = _make_fit(post, blocks, tol)
    except VibiasError as exc:
        _fail(exc, json_errors)
    _write(out, dump_json(fit.to_json_dict()))
    click.echo(f"kl = {fmt_value(fit.kl_trace[-1])}")
    click.echo(f"stationarity_residual = {fmt_value(fit.stationarity_residual)}")
    click.echo(f"converged = {fmt_value(fit.converged)}")
    if not fit.converged:
        sys.exit(2)


@main.command("bias")
@common_options
@click.option("--preset", type=click.Choice(PRESETS), default=None)
@click.option("--rho", type=float, default=None)
@click.option("--functional", "functional_text", type=str, default=None,
              help='Inline JSON (e.g. \'{"poly":[[1,[1,1]]]}\') or @file.')
@click.option("--functional-id", type=str, default="h")
def cmd_bias(config_path, out, json_errors, grid_points, tol, seed, preset, rho,
             functional_text, functional_id):
    """One-row bias decomposition report for a functional."""
    try:
        cfg = _load_config(config_path)
        post, blocks = _resolve_posterior(cfg, preset, rho, grid_points)
        h = _resolve_functional(cfg, functional_text, post.dims)
        fit = _make_fit(post, blocks, tol)
        gp = grid_points or 201
        rep = bias_report(h, post, fit, functional_id=functional_id, grid_points=gp)
    except VibiasError as exc:
        _fail(exc, json_errors)
    csv_text = render_csv(rep.CSV_COLUMNS, [rep.csv_row()])
    _write(out, csv_text)
    if out is not None:
        payload = rep.to_json_dict()
        payload["functional"] = serialize_functional(h)
        payload["grid_points"] = gp
        Path(out).with_suffix(".json").write_text(dump_json(payload))
    else:
        click.echo(csv_text, nl=False)
    click.echo(f"identity_residual = {fmt_value(rep.identity_residual)}")
    click.echo(f"transfer_residual = {fmt_value(rep.transfer_residual)}")
    if not fit.converged:
        sys.exit(2)


@main.command("anova")
@common_options
@click.option("--preset", type=click.Choice(PRESETS), default=None)
@click.option("--rho", type=float, default=None)
@click.option("--functional", "functional_text", type=str, default=None)
def cmd_anova(config_path, out, json_errors, grid_points, tol, seed, preset, rho,
              functional_text):
    """Block-additive plus interaction split of a functional under q*."""
    try:
        cfg = _load_config(config_path)
        post, blocks = _resolve_posterior(cfg, preset, rho, grid_points)
        h = _resolve_functional(cfg, functional_text, post.dims)
        fit = _make_fit(post, blocks, tol)
        q = fit.qstar
        if isinstance(q, GaussianMeasure) and not isinstance(h, Polynomial):
            from .measures import discretize_gaussian

            q = discretize_gaussian(q, points=grid_points or 121)
        dec = anova_decompose(h, q, blocks)
    except VibiasError as exc:
        _fail(exc, json_errors)
    _write(out, dump_json(dec.to_json_dict()))
    click.echo(f"mean = {fmt_value(dec.mean)}")
    click.echo(f"block_components = {len(dec.block_components)}")
    if not fit.converged:
        sys.exit(2)


@main.command("orthogonality")
@common_options
@click.option("--preset", type=click.Choice(PRESETS), default=None)
@click.option("--rho", type=float, default=None)
@click.option("--probes", type=int, default=10, show_default=True,
              help="Random block-additive probes.")
def cmd_orthogonality(config_path, out, json_errors, grid_points, tol, seed,
                      preset, rho, probes):
    """Worst score/probe inner product with the residual log(q*/pi)."""
    try:
        cfg = _load_config(config_path)
        post, blocks = _resolve_posterior(cfg, preset, rho, grid_points)
        fit = _make_fit(post, blocks, tol)
        res = residual(fit, post)
        worst = orthogonality_report(
            res, score_basis(fit), fit.qstar, seed=seed, n_probes=probes
        )
    except VibiasError as exc:
        _fail(exc, json_errors)
    payload = {
        "worst_inner_product": worst,
        "seed": seed,
        "n_probes": probes,
        "change_of_measure_residual": res.change_of_measure_residual,
        "kl_match_residual": res.kl_match_residual,
    }
    _write(out, dump_json(payload))
    click.echo(f"worst_inner_product = {fmt_value(worst)}")
    click.echo(f"seed = {seed}")
    if not fit.converged:
        sys.exit(2)


@main.command("lan-sweep")
@common_options
@click.option("--rho", type=float, default=None)
@click.option("--n", "n_text", type=str, default=None,
              help="Comma-separated sample sizes, at least 3.")
@click.option("--mu", "mu_text", type=str, default=None,
              help="Comma-separated center, default zeros.")
@click.option("--functional", "functional_text", type=str, default=None)
def cmd_lan_sweep(config_path, out, json_errors, grid_points, tol, seed, rho,
                  n_text, mu_text, functional_text):
    """Measured vs predicted bias along a N(mu, Sigma/n) sequence."""
    try:
        cfg = _load_config(config_path)
        sweep = cfg.get("sweep", {})
        r = rho if rho is not None else float(sweep.get("rho", 0.3))
        if n_text is not None:
            n_grid = tuple(int(s) for s in n_text.split(","))
        else:
            n_grid = tuple(int(n) for n in sweep.get("n", (10, 100, 1000)))
        if len(n_grid) < 3 or any(n < 1 for n in n_grid):
            raise ConfigError("sweep needs at least 3 positive sample sizes")
        if mu_text is not None:
            mu = tuple(float(s) for s in mu_text.split(","))
        else:
            mu = tuple(float(x) for x in sweep.get("mu", (0.0, 0.0)))
        exp = lan_default(rho=r, n_grid=n_grid, mu=mu)
        if functional_text is None and "functional" not in cfg:
            g = Polynomial.monomial(2, 1.0, [1, 1])
        else:
            g = _resolve_functional(cfg, functional_text, len(mu))
        sw = run_sweep(exp, g)
    except VibiasError as exc:
        _fail(exc, json_errors)
    degenerate = all(m == 0.0 for m in sw.measured)
    payload = sw.to_json_dict()
    payload["marker"] = "DegenerateFit" if degenerate else ""
    if isinstance(g, Polynomial) and g.is_block_additive(exp.blocks):
        aud = tangent_functional_audit(exp, g)
        payload["theorem4_consistent"] = aud.theorem4_consistent
        payload["trace_coeff"] = aud.trace_coeff
        click.echo(f"theorem4_consistent = {fmt_value(aud.theorem4_consistent)}")
    _write(out, render_csv(sw.CSV_COLUMNS, sw.csv_rows()))
    if out is not None:
        Path(out).with_suffix(".json").write_text(dump_json(payload))
    click.echo(f"slope = {fmt_value(sw.slope)}")
    click.echo(f"n_bias_limit = {fmt_value(sw.n_bias_limit)}")
    if degenerate:
        click.echo("marker = DegenerateFit")


@main.command("suite")
@common_options
@click.option("--inject-fault", type=click.Choice(["v-perturb"]), default=None,
              hidden=True, help="Test hook: perturb the fitted covariance.")
def cmd_suite(config_path, out, json_errors, grid_points, tol, seed, inject_fault):
    """Run the acceptance battery and write the summary table."""
    outdir = Path(out) if out is not None else Path("suite-output")
    try:
        results = run_suite(inject_v_perturbation=inject_fault == "v-perturb")
        write_suite_outputs(results, outdir)
    except VibiasError as exc:
        _fail(exc, json_errors)
    for r in results:
        click.echo(f"[{'PASS' if r.passed else 'FAIL'}] C{r.cid} {r.description}")
    click.echo(f"summary written to {outdir / 'summary.csv'}")
    if not all(r.passed for r in results):
        sys.exit(3)


if __name__ == "__main__":
    main()
