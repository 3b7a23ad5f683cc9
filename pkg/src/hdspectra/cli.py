"""Command line interface.

Exit codes: 0 success, 2 bad input, 3 a spike outside the distant-spike
domain (or another estimator domain error), 4 problem too large for the
dense budget, 1 anything else.

JSON outputs are single objects with ``"schema": "hdspectra/1"``. The LSD
diagnostic written by ``--trace`` has the shape::

    {"schema": "hdspectra/1", "kind": "trace",
     "spike_count": {"m_max", "final_m", "iterations": [{"m", "s_psi",
                     "psi_at_s_psi", "first_violation_index"}]} | null,
     "lsd": {"m", "loss_kind", "loss_value", "t_points", "weights",
             "z_points": [[re, im]], "v_values": [[re, im]],
             "residuals": [[re, im]], "psi_at_s_psi"} | null}
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (BudgetError, DataError, DomainError, HDSpectraError, MissingModel,
                     NotDistantSpike)
from .estimators import METHODS, estimate_all
from .io import (csv_text, estimates_csv, estimates_json, json_text, read_table, read_vector)
from .lsd import LOSSES, fit_psi_model
from .pca import adjust_scores, fit_pca, sample_scores, ScoreSet
from .simulation import load_study, loocv_shrinkage_mse, resolve_threads, run_study
from .spectrum import SampleSpectrum
from .spike_count import estimate_num_spikes

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_DOMAIN, EXIT_BUDGET = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="override the random seed")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes for simulations (default: $HDSPECTRA_THREADS or 1)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--trace", metavar="FILE", default=None,
                   help="write spike-count and LSD diagnostics as JSON")
    p.add_argument("-o", "--output", metavar="FILE", default=None, help="write the result here instead of stdout")
    return p


def _spectrum_args(p):
    p.add_argument("eigs", help="CSV with a header and one column of eigenvalues")
    p.add_argument("--n", type=int, required=True, help="sample size")
    p.add_argument("--p", type=int, default=None,
                   help="dimension, when the file holds only the leading (for example n Gram) eigenvalues")


def build_parser():
    common = _common()
    ap = _Parser(prog="hdspectra", description="Spike, angle, correlation and shrinkage estimation for high-dimensional PCA.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("estimate", parents=[common], help="estimate distant spikes and related quantities")
    _spectrum_args(e)
    g = e.add_mutually_exclusive_group(required=True)
    g.add_argument("--m", type=int, help="number of spikes")
    g.add_argument("--m-max", type=int, help="upper bound; run the spike count first")
    e.add_argument("--method", choices=METHODS + ("all",), default="all")
    e.add_argument("--loss", choices=LOSSES, default="linf")

    c = sub.add_parser("count", parents=[common], help="estimate the number of distant spikes")
    _spectrum_args(c)
    c.add_argument("--m-max", type=int, required=True)
    c.add_argument("--loss", choices=LOSSES, default="linf")

    l = sub.add_parser("lsd", parents=[common], help="recover the non-spike population spectral distribution")
    _spectrum_args(l)
    l.add_argument("--m", type=int, default=0)
    l.add_argument("--loss", choices=LOSSES, default="linf")
    l.add_argument("--smooth", action="store_true", help="apply Gaussian kernel smoothing")
    l.add_argument("--bandwidth", type=float, default=None)

    pc = sub.add_parser("pca", parents=[common], help="sample PCA of a data matrix (rows are observations)")
    pc.add_argument("data")
    pc.add_argument("--r", type=int, required=True, help="number of components")
    pc.add_argument("--standardize", action="store_true")
    pc.add_argument("--scores", metavar="FILE", default=None, help="also write training scores (header pc1..pcr)")

    a = sub.add_parser("adjust", parents=[common], help="divide predicted scores by shrinkage factors")
    a.add_argument("scores", help="CSV of scores, one column per component")
    a.add_argument("shrinkage", help="CSV with one shrinkage factor per component")

    s = sub.add_parser("simulate", parents=[common], help="run a bundled or custom Monte-Carlo study")
    s.add_argument("study", help="bundled study name (e.g. study1_quarter) or a TOML/JSON file")
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--m-max", type=int, default=None)
    s.add_argument("--loocv", action="store_true", help="also run the leave-one-out shrinkage check")
    s.add_argument("--out-dir", default=None, help="write report.csv and report.json here")
    return ap


def _emit(args, text):
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _load_spectrum(args):
    _, data = read_table(args.eigs)
    if data.shape[1] != 1:
        raise DataError("eigenvalue file must have exactly one column")
    vals = data[:, 0]
    if np.any(np.diff(vals) > 0):
        raise DataError("eigenvalues must be listed in descending order")
    if args.n <= 0:
        raise DataError("--n must be positive")
    try:
        return SampleSpectrum.from_eigenvalues(vals, args.n, args.p)
    except DomainError as exc:
        raise DataError(str(exc)) from exc


def _lsd_dump(fit):
    if fit is None:
        return None
    d = fit.solution.to_dict()
    d["m"] = fit.m
    d["psi_at_s_psi"] = fit.psi_model.psi_at_s_psi
    return d


def _write_trace(args, trace=None, fit=None):
    if args.trace:
        doc = {"schema": "hdspectra/1", "kind": "trace",
               "spike_count": trace.to_dict() if trace is not None else None, "lsd": _lsd_dump(fit)}
        Path(args.trace).write_text(json_text(doc))


def cmd_estimate(args):
    sample = _load_spectrum(args)
    methods = METHODS if args.method == "all" else (args.method,)
    trace = None
    fit = None
    if args.m_max is not None:
        trace = estimate_num_spikes(sample, args.m_max, loss_kind=args.loss)
        m, fit = trace.final_m, trace.final_fit
        if m == 0:
            thr = trace.iterations[-1].psi_at_s_psi
            _write_trace(args, trace)
            raise NotDistantSpike(f"no sample eigenvalue exceeds psi-hat(S_psi)={thr:.6g}; no distant spikes", thr)
    else:
        m = args.m
        if m is None or m < 1:
            raise DataError("--m must be at least 1")
    if "lambda" in methods and fit is None:
        try:
            fit = fit_psi_model(sample, m, loss_kind=args.loss)
        except DataError as exc:
            raise MissingModel(f"the lambda method needs an LSD fit: {exc}") from exc
    _write_trace(args, trace, fit)
    results = []
    for meth in methods:
        est = estimate_all(sample, m, meth, fit.psi_model if fit is not None else None)
        for e in est.estimates:
            if not e.distant:
                thr = fit.psi_model.distant_threshold if meth == "lambda" else None
                if meth == "lambda":
                    msg = f"d_{e.k}={e.d:.6g} is not above psi-hat(S_psi)={thr:.6g}"
                else:
                    msg = f"d_{e.k}={e.d:.6g} is outside the distant-spike domain of the {meth} method"
                raise NotDistantSpike(msg, thr)
        results.append(est)
    meta = {"n": sample.n, "p": sample.p, "m": int(m)}
    if trace is not None:
        meta["final_m"] = trace.final_m
    _emit(args, estimates_json(results, **meta) if args.format == "json" else estimates_csv(results))


def cmd_count(args):
    sample = _load_spectrum(args)
    trace = estimate_num_spikes(sample, args.m_max, loss_kind=args.loss)
    _write_trace(args, trace, trace.final_fit)
    if args.format == "json":
        _emit(args, json_text({"schema": "hdspectra/1", "kind": "spike_count", **trace.to_dict()}))
    else:
        rows = [[it.m, it.s_psi, it.psi_at_s_psi, it.first_violation_index] for it in trace.iterations]
        text = csv_text(["m", "s_psi", "psi_at_s_psi", "first_violation_index"], rows)
        _emit(args, text + f"# final_m={trace.final_m}\n")


def cmd_lsd(args):
    sample = _load_spectrum(args)
    fit = fit_psi_model(sample, args.m, loss_kind=args.loss, smooth=args.smooth, bandwidth=args.bandwidth)
    _write_trace(args, None, fit)
    H = fit.H_hat
    if args.format == "json":
        doc = {"schema": "hdspectra/1", "kind": "lsd", "m": fit.m, "loss_kind": fit.solution.loss_kind,
               "loss_value": fit.solution.loss_value, "locations": H.locations, "weights": H.weights,
               "s_psi": fit.psi_model.s_psi, "psi_at_s_psi": fit.psi_model.psi_at_s_psi}
        _emit(args, json_text(doc))
    else:
        _emit(args, csv_text(["location", "weight"], zip(H.locations, H.weights)))


def cmd_pca(args):
    _, X = read_table(args.data)
    model = fit_pca(X, args.r, standardize=args.standardize)
    if args.scores:
        S = sample_scores(model, X).scores
        Path(args.scores).write_text(csv_text([f"pc{k + 1}" for k in range(model.r)], S))
    if args.format == "json":
        _emit(args, json_text({"schema": "hdspectra/1", "kind": "pca", "n": model.n, "p": model.p,
                               "eigenvalues": model.eigenvalues}))
    else:
        _emit(args, csv_text(["k", "eigenvalue"], ((k + 1, v) for k, v in enumerate(model.eigenvalues))))


def cmd_adjust(args):
    header, Q = read_table(args.scores)
    rho = read_vector(args.shrinkage)
    if rho.size != Q.shape[1]:
        raise DataError(f"{Q.shape[1]} score columns but {rho.size} shrinkage factors")
    try:
        adj = adjust_scores(ScoreSet(Q), rho).scores
    except DomainError as exc:
        raise DataError(str(exc)) from exc
    if args.format == "json":
        _emit(args, json_text({"schema": "hdspectra/1", "kind": "adjusted_scores", "columns": header, "scores": adj}))
    else:
        _emit(args, csv_text(header, adj))


def cmd_simulate(args):
    cfg = load_study(args.study)
    if args.seed is not None:
        cfg = replace(cfg, population=replace(cfg.population, seed=args.seed))
    threads = resolve_threads(args.threads)
    report = run_study(cfg, reps=args.reps, m_max=args.m_max, threads=threads)
    loo = loocv_shrinkage_mse(cfg) if (args.loocv or cfg.loocv) else None
    doc = report.to_dict()
    if loo is not None:
        doc["loocv"] = loo
    header = ["study", "method", "quantity", "spike", "bias_pct", "cv_pct", "se_pct", "reps_ok", "reps_failed"]
    csv_out = csv_text(header, ([r[h] for h in header] for r in report.rows))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(csv_out)
        (out / "report.json").write_text(json_text(doc))
    if args.trace:
        Path(args.trace).write_text(json_text({"schema": "hdspectra/1", "kind": "trace",
                                               "records": report.records}))
    summary = report.table()
    if loo is not None:
        summary += "\nleave-one-out MSE: " + ", ".join(f"{k}={v:.4g}" for k, v in loo["mse"].items())
    print(summary, file=sys.stderr if args.output is None and not args.out_dir else sys.stdout)
    _emit(args, json_text(doc) if args.format == "json" else csv_out)


COMMANDS = {"estimate": cmd_estimate, "count": cmd_count, "lsd": cmd_lsd, "pca": cmd_pca,
            "adjust": cmd_adjust, "simulate": cmd_simulate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except BudgetError as exc:
        print(f"hdspectra: budget: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except NotDistantSpike as exc:
        print(f"hdspectra: not a distant spike: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (DataError, MissingModel, OSError) as exc:
        print(f"hdspectra: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as exc:
        print(f"hdspectra: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except HDSpectraError as exc:
        print(f"hdspectra: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
