"""Command-line entry point.

Subcommands: ``fit`` / ``predict`` / ``screen`` / ``validate`` /
``benchmark`` / ``split``.  Error classes map to exit codes: configuration
2, data 3, numeric 4; a failing equivalence suite exits 1.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import csv_io, model_io
from .aom_pls import AomPlsConfig, fit_aom_plsda, fit_aom_pls, predict_labels, select_global
from .aom_ridge import AomRidgeConfig, fit_aom_ridge, screen_ridge
from .errors import ConfigError, DataError, OpfoldError
from .fastaom import FastAomConfig, fit_fastaom, survivors_to_csv
from .operators import bank_from_specs, compact_bank, parse_spec
from .oracle import equivalence_suite
from .pls_engine import center
from .selection_stats import holm_adjust, paired_summary, rmsep, spxy_split


def _resolve_bank(arg, p):
    """`compact`, a ;-joined list of operator specs, or the OPFOLD_BANK
    environment default."""
    if arg is None:
        arg = os.environ.get("OPFOLD_BANK", "compact")
    if arg == "compact":
        return compact_bank(p)
    specs = [parse_spec(s.strip()) for s in arg.split(";") if s.strip()]
    if not specs:
        raise ConfigError(f"empty bank specification {arg!r}")
    return bank_from_specs(specs, p)


def _atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _selection_log(table):
    text = table.csv_text()
    bi, second = table.chosen
    return text, {
        "selected_operator": table.names[bi],
        "selected_index": int(bi),
        "criterion": getattr(table, "criterion", "cv_rmse"),
        "selection_digest": model_io.selection_digest(text),
    }, second


def cmd_fit(args) -> int:
    X, header, ids = csv_io.load_csv(args.x)
    yvals, ycols, is_labels = csv_io.load_responses(args.y, X.shape[0], ids)
    bank = _resolve_bank(args.bank, X.shape[1])
    selection_csv = None
    if args.method == "aom-pls":
        cfg = AomPlsConfig(bank=bank, k_max=args.k_max, folds=args.folds,
                           seed=args.seed, criterion=args.criterion,
                           threads=args.threads)
        if is_labels:
            clf = fit_aom_plsda(X, yvals, cfg)
            fit = clf.pls
            selection_csv, log, K = _selection_log(fit.selection)
            log["components"] = int(K)
            model_io.save_model(
                args.out, task="classification", method="aom_pls",
                coefficients=fit.B, x_mean=fit.x_mean, y_mean=fit.y_mean,
                operator_log=log, wavelengths=header,
                classes=list(clf.classes),
            )
        else:
            fit = fit_aom_pls(X, yvals, cfg)
            selection_csv, log, K = _selection_log(fit.selection)
            log["components"] = int(K)
            model_io.save_model(
                args.out, task="regression", method="aom_pls",
                coefficients=fit.B, x_mean=fit.x_mean, y_mean=fit.y_mean,
                operator_log=log, wavelengths=header,
            )
    elif args.method == "aom-ridge":
        if is_labels:
            raise ConfigError("aom-ridge fits numeric responses; labels given")
        cfg = AomRidgeConfig(bank=bank, alpha_grid=_alpha_grid(args),
                             folds=args.folds, seed=args.seed,
                             threads=args.threads)
        rfit = fit_aom_ridge(X, yvals, cfg)
        table = rfit.selection
        buf = io.StringIO()
        table.to_csv(buf)
        selection_csv = buf.getvalue()
        log = {
            "selected_operator": table.names[table.chosen[0]],
            "selected_index": int(table.chosen[0]),
            "alpha": rfit.alpha,
            "selection_digest": model_io.selection_digest(selection_csv),
        }
        model_io.save_model(
            args.out, task="regression", method="aom_ridge",
            coefficients=rfit.beta, x_mean=rfit.x_mean, y_mean=rfit.y_mean,
            operator_log=log, wavelengths=header,
        )
    else:  # fastaom
        if is_labels:
            raise ConfigError("fastaom fits numeric responses; labels given")
        cfg = FastAomConfig(bank=bank, depth=args.depth, top_m=args.top_m,
                            svd_rank=args.svd_rank, folds=args.folds,
                            seed=args.seed, k_max=args.k_max)
        ffit = fit_fastaom(X, yvals, cfg)
        buf = io.StringIO()
        survivors_to_csv(ffit, buf)
        selection_csv = buf.getvalue()
        log = {
            "survivors": [
                {"chain": c.label, "score": float(c.score), "weight": float(w)}
                for c, w in zip(ffit.survivors, ffit.weights)
            ],
            "ridge_alpha": ffit.ridge_alpha,
            "components": int(ffit.pls_stage.n_components),
            "selection_digest": model_io.selection_digest(selection_csv),
        }
        model_io.save_model(
            args.out, task="regression", method="fastaom",
            coefficients=ffit.beta, x_mean=ffit.x_mean, y_mean=ffit.y_mean,
            operator_log=log, wavelengths=header,
        )
    if args.selection_out and selection_csv is not None:
        _atomic_write_text(args.selection_out, selection_csv)
    print(f"model written to {args.out}")
    return 0


def cmd_predict(args) -> int:
    model = model_io.load_model(args.model)
    X, header, ids = csv_io.load_csv(args.x)
    preds = model.predict(X)
    columns = None
    if model.task == "classification":
        columns = ["label"]
    csv_io.write_predictions(args.out, preds, ids=ids, columns=columns)
    print(f"predictions written to {args.out}")
    return 0


def cmd_screen(args) -> int:
    X, header, ids = csv_io.load_csv(args.x)
    yvals, _, is_labels = csv_io.load_responses(args.y, X.shape[0], ids)
    bank = _resolve_bank(args.bank, X.shape[1])
    if args.method == "aom-ridge":
        cfg = AomRidgeConfig(bank=bank, alpha_grid=_alpha_grid(args),
                             folds=args.folds, seed=args.seed,
                             threads=args.threads)
        table = screen_ridge(X, yvals, cfg)
        buf = io.StringIO()
        table.to_csv(buf)
        text = buf.getvalue()
    elif args.method == "fastaom":
        from .fastaom import score_all_chains, truncated_svd
        from .pls_engine import cross_covariance

        if is_labels:
            raise ConfigError("fastaom screens numeric responses; labels given")
        y = yvals if yvals.ndim == 1 else yvals[:, 0]
        d = center(X, y)
        rank = min(d.n - 1, d.p, 100) if args.svd_rank is None else args.svd_rank
        svd = truncated_svd(d.Xc, rank, seed=args.seed)
        cands = score_all_chains(
            cross_covariance(d).S, svd, bank, args.depth, float(np.sum(d.Yc**2))
        )
        cands.sort(key=lambda c: (-c.score, c.chain))
        lines = ["chain,score,weight"]
        lines += [f'"{c.label}",{c.score!r},' for c in cands]
        text = "\n".join(lines) + "\n"
    else:
        cfg = AomPlsConfig(bank=bank, k_max=args.k_max, folds=args.folds,
                           seed=args.seed, criterion=args.criterion,
                           threads=args.threads)
        if is_labels:
            clf_table = fit_aom_plsda(X, yvals, cfg).selection
            text = clf_table.csv_text()
        else:
            d = center(X, yvals)
            text = select_global(d, cfg).csv_text()
    _atomic_write_text(args.out, text)
    print(f"selection table written to {args.out}")
    return 0


def cmd_validate(args) -> int:
    report = equivalence_suite(seed=args.seed)
    print(report.format_table())
    if args.csv:
        buf = io.StringIO()
        report.to_csv(buf)
        _atomic_write_text(args.csv, buf.getvalue())
    return 0 if report.passed else 1


def cmd_split(args) -> int:
    X, _, _ = csv_io.load_csv(args.x)
    yvals, _, is_labels = csv_io.load_responses(args.y, X.shape[0], None)
    if is_labels:
        classes = {c: i for i, c in enumerate(sorted(set(yvals)))}
        yvals = np.asarray([classes[v] for v in yvals], dtype=np.float64)
    train, test = spxy_split(X, yvals, args.test_fraction)
    _atomic_write_text(args.out_prefix + "_train.txt", "\n".join(map(str, train)) + "\n")
    _atomic_write_text(args.out_prefix + "_test.txt", "\n".join(map(str, test)) + "\n")
    print(f"{train.size} train / {test.size} test indices written to "
          f"{args.out_prefix}_train.txt, {args.out_prefix}_test.txt")
    return 0


def _fit_for_benchmark(method, Xtr, ytr, bank, folds, seed):
    if method == "aom-pls":
        return fit_aom_pls(Xtr, ytr, AomPlsConfig(bank=bank, folds=folds, seed=seed))
    if method == "pls-identity":
        id_bank = bank_from_specs([], Xtr.shape[1])
        return fit_aom_pls(Xtr, ytr, AomPlsConfig(bank=id_bank, folds=folds, seed=seed))
    if method == "aom-ridge":
        return fit_aom_ridge(Xtr, ytr, AomRidgeConfig(bank=bank, folds=folds, seed=seed))
    if method == "ridge-identity":
        id_bank = bank_from_specs([], Xtr.shape[1])
        return fit_aom_ridge(Xtr, ytr, AomRidgeConfig(bank=id_bank, folds=folds, seed=seed))
    if method == "fastaom":
        return fit_fastaom(Xtr, ytr, FastAomConfig(bank=bank, folds=folds, seed=seed))
    raise ConfigError(f"unknown benchmark method {method!r}")


def _predict_any(fit, X):
    beta = getattr(fit, "B", None)
    if beta is None:
        beta = fit.beta
    return (X - fit.x_mean) @ beta + fit.y_mean


def cmd_benchmark(args) -> int:
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    if not isinstance(manifest, list) or not manifest:
        raise ConfigError("manifest must be a non-empty JSON list of datasets")
    pairs = [tuple(p.split("/")) for p in args.pairs.split(",")]
    for pr in pairs:
        if len(pr) != 2:
            raise ConfigError("pairs must be row-method/reference-method")
    methods = sorted({m for pr in pairs for m in pr})
    scores: dict = {m: [] for m in methods}
    for entry in manifest:
        X, header, ids = csv_io.load_csv(entry["x"])
        yvals, _, is_labels = csv_io.load_responses(entry["y"], X.shape[0], ids)
        if is_labels:
            raise ConfigError("benchmark handles regression manifests")
        y = yvals if yvals.ndim == 1 else yvals[:, 0]
        tr, te = spxy_split(X, y, args.test_fraction)
        bank = _resolve_bank(args.bank, X.shape[1])
        for m in methods:
            fit = _fit_for_benchmark(m, X[tr], y[tr], bank, args.folds, args.seed)
            scores[m].append(rmsep(_predict_any(fit, X[te]).ravel(), y[te]))
    summaries = []
    for row, ref in pairs:
        summaries.append(paired_summary(
            np.asarray(scores[row]), np.asarray(scores[ref]), seed=args.seed))
    adjusted = holm_adjust([s.p_one_sided for s in summaries])
    lines = ["comparison,N,median_ratio,ci_lo,ci_hi,wins,p_one_sided,p_holm"]
    for (row, ref), summ, ph in zip(pairs, summaries, adjusted):
        summ.p_holm = float(ph)
        lines.append(
            f"{row} vs {ref},{summ.n},{summ.median_ratio!r},{summ.ci_lo!r},"
            f"{summ.ci_hi!r},{summ.wins},{summ.p_one_sided!r},{summ.p_holm!r}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        _atomic_write_text(args.out, text)
    print(text, end="")
    return 0


def _alpha_grid(args):
    lo, hi, num = args.alpha_grid
    return np.logspace(np.log10(lo), np.log10(hi), int(num))


def _alpha_grid_type(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("alpha grid is lo,hi,count")
    return float(parts[0]), float(parts[1]), int(parts[2])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="opfold",
        description="Operator-adaptive linear calibration for spectral data. "
        "Derivative scaling uses the channel-index grid (spacing 1); physical "
        "wavelength spacing is absorbed by the regression coefficients.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(sp, ridge=False, fast=False):
        sp.add_argument("--x", required=True, help="spectra CSV (header row = wavelengths)")
        sp.add_argument("--y", required=True, help="response CSV aligned by row order or id")
        sp.add_argument("--bank", default=None,
                        help="'compact' or ';'-joined operator specs "
                        "(default from OPFOLD_BANK, else compact)")
        sp.add_argument("--folds", type=int, default=5)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--k-max", type=int, default=15)
        sp.add_argument("--criterion", default="cv_rmse",
                        choices=["cv_rmse", "press", "covariance"])
        sp.add_argument("--alpha-grid", type=_alpha_grid_type,
                        default=(1e-6, 1e3, 50), metavar="LO,HI,COUNT")
        sp.add_argument("--depth", type=int, default=2)
        sp.add_argument("--top-m", type=int, default=8)
        sp.add_argument("--svd-rank", type=int, default=None)

    fit = sub.add_parser("fit", help="fit a calibration and save the model file")
    fit.add_argument("--method", required=True,
                     choices=["aom-pls", "aom-ridge", "fastaom"])
    add_common(fit)
    fit.add_argument("--out", required=True, help="output model JSON")
    fit.add_argument("--selection-out", default=None,
                     help="also write the selection table CSV")
    fit.set_defaults(func=cmd_fit)

    pred = sub.add_parser("predict", help="predict from a saved model")
    pred.add_argument("--model", required=True)
    pred.add_argument("--x", required=True)
    pred.add_argument("--out", required=True)
    pred.set_defaults(func=cmd_predict)

    scr = sub.add_parser("screen", help="emit the selection table without refitting")
    scr.add_argument("--method", default="aom-pls",
                     choices=["aom-pls", "aom-ridge", "fastaom"])
    add_common(scr)
    scr.add_argument("--out", required=True)
    scr.set_defaults(func=cmd_screen)

    val = sub.add_parser("validate", help="run the numerical equivalence suite")
    val.add_argument("--seed", type=int, default=0)
    val.add_argument("--csv", default=None, help="also write the report CSV")
    val.set_defaults(func=cmd_validate)

    ben = sub.add_parser("benchmark", help="paired benchmark over a dataset manifest")
    ben.add_argument("--manifest", required=True,
                     help='JSON list of {"name", "x", "y"} entries')
    ben.add_argument("--pairs", default="aom-pls/pls-identity",
                     help="comma-separated row/reference method pairs")
    ben.add_argument("--bank", default=None)
    ben.add_argument("--folds", type=int, default=5)
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("--test-fraction", type=float, default=0.3)
    ben.add_argument("--out", default=None)
    ben.set_defaults(func=cmd_benchmark)

    spl = sub.add_parser("split", help="deterministic SPXY train/test split")
    spl.add_argument("--x", required=True)
    spl.add_argument("--y", required=True)
    spl.add_argument("--spxy", action="store_true", default=True)
    spl.add_argument("--test-fraction", type=float, required=True)
    spl.add_argument("--out-prefix", required=True)
    spl.set_defaults(func=cmd_split)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except OpfoldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
