"""Command line interface: ``cclinf <subcommand>``.

Every subcommand accepts ``--config run.json``; keys of that JSON object
fill any option not given on the command line. Reports are written
atomically. Exit codes: 0 success, 1 invalid input, 2 numerical failure.
Set ``CCLINF_THREADS`` to cap BLAS threads and suite workers.
"""

from __future__ import annotations

import os

_THREADS = os.environ.get("CCLINF_THREADS")
if _THREADS:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _THREADS)

import functools  # noqa: E402
import json  # noqa: E402
import sys  # noqa: E402
import tempfile  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402

import click  # noqa: E402
import numpy as np  # noqa: E402

from . import __version__  # noqa: E402

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class NumericalFailure(click.ClickException):
    exit_code = EXIT_NUMERICAL


class InvalidInput(click.ClickException):
    exit_code = EXIT_INVALID


class _Group(click.Group):
    """Click group whose usage errors exit with 1, leaving 2 for numerical failures."""

    def main(self, *args, **kwargs):
        kwargs.pop("standalone_mode", None)
        try:
            rv = super().main(*args, standalone_mode=False, **kwargs)
        except click.exceptions.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(EXIT_INVALID)
        except click.UsageError as exc:
            exc.show()
            sys.exit(EXIT_INVALID)
        except click.ClickException as exc:
            exc.show()
            sys.exit(exc.exit_code)
        sys.exit(rv if isinstance(rv, int) else EXIT_OK)


# ---------------------------------------------------------------------------
# plumbing


def atomic_write(path, text: str) -> None:
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def vector(text) -> np.ndarray:
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    try:
        return np.array([float(t) for t in str(text).split(",") if t.strip()])
    except ValueError as exc:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from exc


def _with_config(fn):
    """Fill options left at their defaults from the JSON object given by ``--config``."""

    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                  help="JSON file with option values; explicit flags win.")
    @functools.wraps(fn)
    def wrapper(config_path, **kwargs):
        ctx = click.get_current_context()
        if config_path:
            try:
                cfg = json.loads(Path(config_path).read_text())
            except json.JSONDecodeError as exc:
                raise click.BadParameter(f"config is not valid JSON: {exc}") from exc
            if not isinstance(cfg, dict):
                raise click.BadParameter("config must be a JSON object")
            names = {}
            for param in ctx.command.params:
                names[param.name] = param.name
                for opt in param.opts:
                    names[opt.lstrip("-").replace("-", "_")] = param.name
            unknown = set(cfg) - set(names) - {"subcommand", "config"}
            if unknown:
                raise click.BadParameter(f"unknown config keys: {sorted(unknown)}")
            for key, value in cfg.items():
                if key not in names or names[key] == "config_path":
                    continue
                target = names[key]
                src = ctx.get_parameter_source(target)
                if src is None or src.name in ("DEFAULT", "DEFAULT_MAP"):
                    kwargs[target] = value
        return fn(**kwargs)

    return wrapper


def _run(subcommand: str, config: dict, body, out: str | None) -> dict:
    """Time ``body()``, wrap it in a run report and emit it."""
    from .calculus import JetError
    from .ccgeometry import CurveError
    from .flow import DegenerateDirectionError
    from .frames import FrameError
    from .grid import GridError
    from .operators import OperatorError
    from .psolve import PSolveError
    from .variational import VariationalError

    t0 = time.perf_counter()
    try:
        results = body()
    except (DegenerateDirectionError, PSolveError, OperatorError, np.linalg.LinAlgError, FloatingPointError) as exc:
        raise NumericalFailure(f"{subcommand}: {exc}") from exc
    except (click.BadParameter, FrameError, JetError, GridError, CurveError, VariationalError,
            ValueError, KeyError) as exc:
        msg = exc.format_message() if isinstance(exc, click.ClickException) else str(exc)
        raise InvalidInput(f"{subcommand}: {msg}") from exc
    report = {"config_echo": {"subcommand": subcommand, **config}, "results": results,
              "tool_version": __version__, "wall_time": time.perf_counter() - t0}
    text = dumps(report)
    if out:
        atomic_write(out, text)
        click.echo(f"wrote {out}", err=True)
    else:
        click.echo(text, nl=False)
    return report


def _frame(name):
    from .frames import get_frame
    return get_frame(name)


def _box(lo, hi, n):
    lo, hi = vector(lo), vector(hi)
    if lo.shape != (n,) or hi.shape != (n,) or np.any(hi <= lo):
        raise click.BadParameter(f"box needs lo < hi with {n} coordinates each")
    return lo, hi


common_out = click.option("--out", type=click.Path(dir_okay=False), default=None,
                          help="Write the JSON report here (default: stdout).")


@click.group(cls=_Group)
@click.version_option(__version__)
def main():
    """Subelliptic infinity-Laplacian toolkit."""


# ---------------------------------------------------------------------------


@main.command()
@click.option("--map", "map_name", default="paper_exp", show_default=True)
@click.option("--frame", "frame_name", default="euclidean:2", show_default=True)
@click.option("--lo", default="0.1,-1.0", show_default=True)
@click.option("--hi", default="1.0,-0.1", show_default=True)
@click.option("--nodes", default=21, show_default=True, help="Lattice nodes per axis.")
@click.option("--p", "p", default="inf", show_default=True, help="'inf' or a finite p >= 2.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None,
              help="Heatmap CSV: coordinates and |total| per point.")
@common_out
@_with_config
def residual(map_name, frame_name, lo, hi, nodes, p, csv_path, out):
    """Evaluate the operator of an analytic map on a lattice."""
    from .calculus import get_map
    from .operators import operator_at

    config = dict(map=map_name, frame=frame_name, lo=lo, hi=hi, nodes=nodes, p=p)

    def body():
        frame = _frame(frame_name)
        umap = get_map(map_name, frame.n)
        a, b = _box(lo, hi, frame.n)
        axes = [np.linspace(x, y, int(nodes)) for x, y in zip(a, b)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, frame.n)
        recs = [operator_at(umap, frame, x, p=p) for x in pts]
        mags = np.array([np.max(np.abs(r["total"])) for r in recs])
        if csv_path:
            head = ",".join([f"x{k}" for k in range(frame.n)] + ["abs_total"])
            rows = [",".join(repr(float(v)) for v in np.r_[x, m]) for x, m in zip(pts, mags)]
            atomic_write(csv_path, "\n".join([head] + rows) + "\n")
        return {"points": recs, "max_abs_total": float(mags.max()), "nodes": int(nodes),
                "spacing": ((b - a) / (int(nodes) - 1)).tolist(), "operator": str(p)}

    _run("residual", config, body, out)


@main.command()
@click.option("--frame", "frame_name", default="euclidean:2", show_default=True)
@click.option("--lo", default="-0.5,-0.5", show_default=True)
@click.option("--hi", default="1.5,0.5", show_default=True)
@click.option("--x", "x", default="0,0", show_default=True)
@click.option("--y", "y", default="1,0", show_default=True)
@click.option("--resolution", default=0.02, show_default=True)
@click.option("--controls", "controls_per_step", default=16, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--backend", type=click.Choice(["python", "compiled"]), default=None)
@click.option("--curve-csv", type=click.Path(dir_okay=False), default=None)
@common_out
@_with_config
def ccdist(frame_name, lo, hi, x, y, resolution, controls_per_step, seed, backend, curve_csv, out):
    """Approximate the Carnot-Caratheodory distance between two points of a box."""
    from .ccgeometry import cc_distance

    config = dict(frame=frame_name, lo=lo, hi=hi, x=x, y=y, resolution=resolution,
                  controls=controls_per_step, seed=seed, backend=backend)

    def body():
        frame = _frame(frame_name)
        box = _box(lo, hi, frame.n)
        r = cc_distance(frame, box, vector(x), vector(y), float(resolution), int(controls_per_step),
                        int(seed), backend)
        if curve_csv and r.curve is not None:
            atomic_write(curve_csv, r.curve.to_csv())
        return r.as_dict()

    _run("ccdist", config, body, out)


@main.command()
@click.option("--map", "map_name", default="affine:1,1", show_default=True)
@click.option("--frame", "frame_name", default="euclidean:2", show_default=True)
@click.option("--x0", default="0,0", show_default=True)
@click.option("--xi", default="1", show_default=True)
@click.option("--dt", default=0.01, show_default=True)
@click.option("--lo", default="-1,-1", show_default=True)
@click.option("--hi", default="1,1", show_default=True)
@click.option("--max-steps", default=10_000, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None,
              help="Trajectory CSV (t, r, |Xu|^2, xi.u) with a slope column.")
@common_out
@_with_config
def flow(map_name, frame_name, x0, xi, dt, lo, hi, max_steps, csv_path, out):
    """Integrate the horizontal gradient flow and report its invariants."""
    from .calculus import get_map
    from .flow import affinity_report, integrate_flow

    config = dict(map=map_name, frame=frame_name, x0=x0, xi=xi, dt=dt, lo=lo, hi=hi, max_steps=max_steps)

    def body():
        frame = _frame(frame_name)
        umap = get_map(map_name, frame.n)
        tr = integrate_flow(umap, frame, vector(x0), vector(xi), float(dt), _box(lo, hi, frame.n),
                            int(max_steps))
        rep = affinity_report(tr)
        if csv_path:
            lines = tr.to_csv().splitlines()
            slopes = np.gradient(tr.projections, tr.times)
            lines = [lines[0] + ",slope"] + [f"{row},{float(s)!r}" for row, s in zip(lines[1:], slopes)]
            atomic_write(csv_path, "\n".join(lines) + "\n")
        return {"affinity_report": rep.as_dict(), "exit_time": tr.exit_time, "truncated": tr.truncated,
                "samples": int(tr.times.size), "dt": float(dt)}

    _run("flow", config, body, out)


@main.command()
@click.option("--kind", type=click.Choice(["rank-one", "vertical"]), default="rank-one", show_default=True)
@click.option("--map", "map_name", default="paper_exp", show_default=True)
@click.option("--frame", "frame_name", default="euclidean:2", show_default=True)
@click.option("--lo", default="0.5,-1.0", show_default=True)
@click.option("--hi", default="1.5,-0.2", show_default=True)
@click.option("--nodes", default=21, show_default=True)
@click.option("--draws", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@common_out
@_with_config
def varcheck(kind, map_name, frame_name, lo, hi, nodes, draws, seed, out):
    """Search admissible variations for a decrease of the sup-energy."""
    from .calculus import get_map
    from .variational import Subdomain, rank_one_draws, vertical_draws, vertical_field

    config = dict(kind=kind, map=map_name, frame=frame_name, lo=lo, hi=hi, nodes=nodes,
                  draws=draws, seed=seed)

    def body():
        frame = _frame(frame_name)
        umap = get_map(map_name, frame.n)
        a, b = _box(lo, hi, frame.n)
        D = Subdomain.box(a, b, int(nodes))
        if kind == "rank-one":
            reps = rank_one_draws(umap, frame, D, int(draws), int(seed))
        else:
            reps = vertical_draws(umap, frame, D, vertical_field(umap, frame, D), int(draws), int(seed))
        margins = [r.margin for r in reps]
        return {"reports": [r.as_dict() for r in reps], "min_margin": min(margins),
                "negative_draws": int(sum(m < 0 for m in margins)), "nodes": int(nodes),
                "spacing": D.spacing.tolist()}

    _run("varcheck", config, body, out)


@main.command()
@click.option("--map", "map_name", default="paper_exp", show_default=True)
@click.option("--frame", "frame_name", default="euclidean:2", show_default=True)
@click.option("--lo", default="0.2,-0.9", show_default=True)
@click.option("--hi", default="1.1,-0.1", show_default=True)
@click.option("--nodes", default=31, show_default=True)
@click.option("--tol", default=1e-10, show_default=True)
@common_out
@_with_config
def maxmin(map_name, frame_name, lo, hi, nodes, tol, out):
    """Compare interior and boundary extremes of |Xu| for an analytic map."""
    from .calculus import get_map
    from .variational import Subdomain, max_principle_check

    config = dict(map=map_name, frame=frame_name, lo=lo, hi=hi, nodes=nodes, tol=tol)

    def body():
        frame = _frame(frame_name)
        a, b = _box(lo, hi, frame.n)
        D = Subdomain.box(a, b, int(nodes))
        rep = max_principle_check(get_map(map_name, frame.n), frame, D, float(tol))
        return {**rep.as_dict(), "nodes": int(nodes), "spacing": D.spacing.tolist()}

    _run("maxmin", config, body, out)


@main.command()
@click.option("--frame", "frame_name", default="euclidean:2", show_default=True)
@click.option("--lo", default="0.5,0.5", show_default=True)
@click.option("--hi", default="1.5,1.5", show_default=True)
@click.option("--nodes", default=33, show_default=True, help="Lattice nodes per axis.")
@click.option("--boundary", "boundary_map", default="aronsson", show_default=True)
@click.option("--schedule", default="2,4,8,16,32", show_default=True)
@click.option("--gtol", default=1e-8, show_default=True)
@click.option("--max-iter", default=3000, show_default=True)
@click.option("--seed", default=0, show_default=True, help="Seeds the interior start (with --noise).")
@click.option("--noise", default=0.0, show_default=True, help="Amplitude of random interior start values.")
@click.option("--field-out", type=click.Path(dir_okay=False), default=None,
              help="Final field as .npz or .csv.")
@click.option("--curves-csv", type=click.Path(dir_okay=False), default=None,
              help="Continuation curves: p, energy, sup norm, normalized energy, residual.")
@common_out
@_with_config
def psolve(frame_name, lo, hi, nodes, boundary_map, schedule, gtol, max_iter, seed, noise,
           field_out, curves_csv, out):
    """Solve the discrete p-energy problem along a continuation schedule."""
    from .calculus import get_map
    from .grid import GridField
    from .psolve import MinimizeOptions, field_max_principle, p_continuation

    config = dict(frame=frame_name, lo=lo, hi=hi, nodes=nodes, boundary=boundary_map,
                  schedule=schedule, gtol=gtol, max_iter=max_iter, seed=seed, noise=noise)

    def body():
        frame = _frame(frame_name)
        umap = get_map(boundary_map, frame.n)
        a, b = _box(lo, hi, frame.n)
        rng = np.random.default_rng(int(seed))
        shape = (int(nodes),) * frame.n
        field0 = GridField.sample(lambda x: umap(x), a, b, shape,
                                  interior=lambda x: float(noise) * rng.uniform(-1, 1, x.shape[:-1] + (umap.N,)))
        sched = [float(s) for s in (schedule if isinstance(schedule, list) else vector(schedule))]
        if not sched or sched[0] != 2 or any(q <= r for r, q in zip(sched, sched[1:])):
            raise click.BadParameter("schedule must start at p = 2 and increase strictly")
        res = p_continuation(field0, frame, sched, MinimizeOptions(gtol=float(gtol), max_iter=int(max_iter)))
        if not res.fields:
            raise FloatingPointError(res.failure or "no stage completed")
        final = res.fields[-1]
        if field_out:
            path = Path(field_out)
            fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", suffix=path.suffix)
            os.close(fd)
            final.save(tmp)
            os.replace(tmp, path)
        if curves_csv:
            rows = ["p,energy,sup_norm,normalized_energy,residual"]
            rows += [",".join(repr(float(v)) for v in row) for row in
                     zip(res.schedule, res.energies, res.sup_norms, res.normalized_energies, res.residuals)]
            atomic_write(curves_csv, "\n".join(rows) + "\n")
        h = float(final.spacing.max())
        mp = field_max_principle(final, frame, tol=5 * h)
        return {**res.as_dict(), "max_principle": mp.as_dict(), "nodes": int(nodes),
                "spacing": final.spacing.tolist(), "gtol": float(gtol)}

    _run("psolve", config, body, out)


# ---------------------------------------------------------------------------


@main.group()
def frames():
    """Inspect built-in frames."""


@frames.command("info")
@click.argument("name")
@click.option("--x", "x", default=None, help="Evaluation point (default: origin).")
@common_out
def frames_info(name, x, out):
    """Coefficients and first brackets at a point."""
    from .frames import frame_info
    _run("frames.info", dict(name=name, x=x), lambda: frame_info(_frame(name), None if x is None else vector(x)), out)


@frames.command("bracket")
@click.argument("name")
@click.argument("i", type=int)
@click.argument("j", type=int)
@click.option("--x", "x", default=None)
@common_out
def frames_bracket(name, i, j, x, out):
    """Lie bracket [X_i, X_j] at a point (0-based indices)."""
    from .frames import lie_bracket

    def body():
        frame = _frame(name)
        r = lie_bracket(frame, i, j, np.zeros(frame.n) if x is None else vector(x))
        return {"vector": r.vector.tolist(), "order": r.order}

    _run("frames.bracket", dict(name=name, i=i, j=j, x=x), body, out)


@frames.command("rank")
@click.argument("name")
@click.option("--x", "x", default=None)
@click.option("--max-order", default=2, show_default=True)
@common_out
def frames_rank(name, x, max_order, out):
    """Rank of the iterated brackets up to a given depth."""
    from .frames import hormander_rank

    def body():
        frame = _frame(name)
        r = hormander_rank(frame, np.zeros(frame.n) if x is None else vector(x), max_order)
        return {"rank": r, "n": frame.n, "hormander": r == frame.n, "max_order": max_order}

    _run("frames.rank", dict(name=name, x=x, max_order=max_order), body, out)


# ---------------------------------------------------------------------------


@main.command()
@click.argument("name", default="acceptance")
@click.option("--workers", default=None, type=int,
              help="Concurrent checks (default: CCLINF_THREADS or 1).")
@common_out
def suite(name, workers, out):
    """Run the acceptance checks and print a pass/fail table."""
    from .acceptance import run_all

    if name != "acceptance":
        raise click.UsageError(f"unknown suite {name!r}; available: acceptance")
    workers = workers or int(_THREADS or 1)
    rows = []

    def body():
        results = run_all(workers)
        rows.extend(results)
        return {"rows": [r.as_dict() for r in results], "count": len(results),
                "passed": int(sum(r.passed for r in results))}

    report = _run("suite", dict(name=name, workers=workers), body, out)
    for r in rows:
        click.echo(r.line(), err=True)
    click.echo(f"{report['results']['passed']}/{report['results']['count']} checks passed", err=True)
    if report["results"]["passed"] != report["results"]["count"]:
        sys.exit(EXIT_NUMERICAL)


if __name__ == "__main__":
    main()
