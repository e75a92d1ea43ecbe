"""``semisup`` command line.

Exit codes: 0 success, 2 invalid input (bad flags, config, data or missing
files), 3 numerical failure.

Data files for ``fit-*`` subcommands are CSV with a header holding
``labeled`` (0/1), ``y`` (ignored on unlabeled rows) and covariate columns
``x1 .. xd``; ``simulate`` writes exactly this layout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data_io as io
from . import factor as fr
from . import harness as hs
from . import kernel as kn
from . import mixture as mx
from . import relevance as rel
from . import stochastics as st
from .errors import InvalidInputError, InvalidParameterError, MissingInputError, NumericalFailure


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config (ExperimentConfig schema) or a run manifest")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--replicates", type=int, help="number of replicates")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semisup", description="Semisupervised Bayesian predictive models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic dataset as CSV")
    _common(p)
    p.add_argument("--generator", choices=["mixture-scene", "two-cluster", "factor"], default="mixture-scene")

    for name, helptext in (("fit-mixture", "Gibbs-fit a mixture regression and emit the predictive curve"),
                           ("fit-factor", "empirical factors + probit; emit predictions"),
                           ("fit-kernel", "kernel probit or LapRLS; emit probability grid and contour")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--data", help="CSV with columns labeled, y, x1..xd")
        if name == "fit-factor":
            p.add_argument("--idx-images", help="MNIST IDX image file")
            p.add_argument("--idx-labels", help="MNIST IDX label file")
        if name == "fit-kernel":
            p.add_argument("--mode", choices=["bayes-probit", "laprls"], default="bayes-probit")

    p = sub.add_parser("binary-cell", help="posterior predictive for the 2x2 binary model")
    _common(p)

    p = sub.add_parser("analyze-relevance", help="decide whether unlabeled x can influence prediction")
    _common(p)
    p.add_argument("--spec", help="model spec JSON (defaults to the standard independent-prior model)")

    p = sub.add_parser("sweep", help="labeled-fraction sweep with repeated random splits")
    _common(p)

    p = sub.add_parser("scenario", help="run a named replication scenario")
    p.add_argument("name", choices=hs.SCENARIOS)
    _common(p)
    p.add_argument("--idx-images", help="MNIST IDX image file (digits-6v9)")
    p.add_argument("--idx-labels", help="MNIST IDX label file (digits-6v9)")
    p.add_argument("--synthetic-digits", action="store_true",
                   help="digits-6v9 on synthetic binary factor data instead of IDX files")
    return parser


def _config(args, scenario: str) -> hs.ExperimentConfig:
    over = hs.load_config(args.config) if args.config else {}
    if over.get("scenario") not in (None, scenario):
        raise InvalidParameterError(f"config is for scenario {over['scenario']!r}, not {scenario!r}")
    for key in ("seed", "out", "replicates"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    data = dict(over.get("data", {}))
    for key in ("idx_images", "idx_labels"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if getattr(args, "synthetic_digits", False):
        data["synthetic"] = True
    if data:
        over["data"] = data
    return hs.ExperimentConfig.resolve(scenario, over)


def _read_data(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not path:
        raise MissingInputError("pass the dataset with --data <path>")
    if not Path(path).exists():
        raise MissingInputError(f"--data file {path} does not exist")
    rows = io.read_results(path)
    if not rows:
        raise InvalidParameterError(f"{path} has no rows")
    xcols = sorted((c for c in rows[0] if c.startswith("x")), key=lambda c: int(c[1:]))
    for col in ("labeled", "y"):
        if col not in rows[0]:
            raise InvalidParameterError(f"{path} lacks the {col!r} column")
    labeled = np.array([int(r["labeled"]) for r in rows], dtype=bool)
    y = np.array([float(r["y"]) if r["y"] != "" else np.nan for r in rows])
    x = np.array([[float(r[c]) for c in xcols] for r in rows])
    return labeled, y, x


def _data_records(labeled, y, x) -> list[dict]:
    out = []
    for lab, yy, row in zip(labeled, y, x):
        rec = {"labeled": int(lab), "y": yy}
        rec.update({f"x{j + 1}": v for j, v in enumerate(row)})
        out.append(rec)
    return out


def _finish(config: hs.ExperimentConfig, out: Path, files: list[str], summary: dict) -> None:
    hs.write_manifest(config, out, files, summary)
    print(json.dumps({"out": str(out), "files": sorted(files), "summary": summary}, default=float, sort_keys=True))


_GENERATOR_DEFAULTS = {"mixture-scene": "mixture-fig1", "two-cluster": "kernel-synthetic", "factor": "sweep"}


def cmd_simulate(args) -> None:
    cfg = _config(args, _GENERATOR_DEFAULTS[args.generator])
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    d = cfg.data
    rng = st.child_rng(cfg.seed, hs.SCENE, 0)
    if args.generator == "mixture-scene":
        prior = mx.NIWMixturePrior.reference_default(iw_convention=cfg.model.get("iw_convention", "standard"))
        scene = io.generate_mixture_scene(prior, int(d.get("n", 175)), tuple(d.get("labeled_range", (-1, 1))), rng)
        recs = _data_records(scene.labeled_mask, scene.rows[:, 0], scene.rows[:, 1:])
    elif args.generator == "two-cluster":
        ds = io.generate_two_cluster_2d(int(d.get("n", 50)), float(d.get("noise", 0.05)), rng)
        frac = float(d.get("labeled_fraction", 1.0))
        lab, _ = hs.stratified_split(ds.labels, frac, st.child_rng(cfg.seed, hs.SCENE, 1))
        mask = np.isin(np.arange(len(ds.labels)), lab)
        recs = _data_records(mask, ds.labels, ds.features)
    else:
        model = hs.expression_model(int(d.get("p", 50)), int(d.get("k", 2)), rng)
        y, x = fr.simulate_factor_data(model, int(d.get("n", 100)), rng, binary=True)
        frac = float(d.get("labeled_fraction", 1.0))
        lab, _ = hs.stratified_split(y, frac, st.child_rng(cfg.seed, hs.SCENE, 1))
        recs = _data_records(np.isin(np.arange(len(y)), lab), y, x)
    io.write_results(recs, out / "data.csv")
    _finish(cfg, out, ["data.csv"], {"rows": len(recs), "generator": args.generator})


def cmd_fit_mixture(args) -> None:
    cfg = _config(args, "mixture-fig1")
    labeled, y, x = _read_data(args.data)
    if x.shape[1] != 1:
        raise InvalidParameterError("fit-mixture expects a single covariate column x1")
    m = cfg.model
    prior = mx.NIWMixturePrior.reference_default(iw_convention=m.get("iw_convention", "standard"))
    data = mx.SemiSupDataset(y[labeled], x[labeled], x[~labeled])
    draws = mx.fit_mixture(data, prior, int(m.get("n_burn", 500)), int(m.get("n_keep", 500)), int(m.get("thin", 2)),
                           st.child_rng(cfg.seed, hs.MIXFIT, 0))
    lo, hi, npts = m.get("grid", [-2.0, 2.0, 81])
    grid = np.linspace(float(lo), float(hi), int(npts))
    curve = mx.predictive_regression_curve(draws, grid)
    out = Path(cfg.out)
    io.write_results([{"x": g, "predictive_mean": v} for g, v in zip(grid, curve)], out / "curve.csv")
    _finish(cfg, out, ["curve.csv"], {"n_labeled": int(labeled.sum()), "n_unlabeled": int((~labeled).sum())})


def cmd_fit_factor(args) -> None:
    cfg = _config(args, "digits-6v9")
    out = Path(cfg.out)
    if args.idx_images or args.idx_labels:
        res = hs.run_scenario(cfg, out)
        print(json.dumps({"out": str(out), "files": sorted(res.files), "summary": res.summary}, default=float))
        return
    labeled, y, x = _read_data(args.data)
    m = cfg.model
    use_unl = bool(m.get("use_unlabeled", True))
    rows = x if use_unl else x[labeled]
    factors = fr.compute_empirical_factors(rows, int(m.get("k", 2)))
    fit = fr.probit_mcmc(fr.project(factors, x[labeled]), y[labeled].astype(int), float(m.get("prior_scale", 4.0)),
                         int(m.get("n_burn", 300)), int(m.get("n_keep", 600)), st.child_rng(cfg.seed, hs.DIGITS, 0, 1),
                         prior_rows=fr.project(factors, rows))
    prob = fr.predict_probit(fit, fr.project(factors, x))
    recs = [{"row": i, "labeled": int(l), "probability": p} for i, (l, p) in enumerate(zip(labeled, prob))]
    io.write_results(recs, out / "factor_predictions.csv")
    summary = {}
    unl = ~labeled & ~np.isnan(y)
    if unl.any():
        summary["unlabeled_error"] = hs.error_rate(prob[unl], y[unl].astype(int))
    _finish(cfg, out, ["factor_predictions.csv"], summary)


def cmd_fit_kernel(args) -> None:
    cfg = _config(args, "kernel-synthetic")
    labeled, y, x = _read_data(args.data)
    out = Path(cfg.out)
    m = cfg.model
    kcfg = hs.kernel_fit_cfg(m)
    if args.mode == "laprls":
        fit = kn.laprls_fit(x[labeled], 2.0 * y[labeled] - 1.0, x[~labeled], kcfg["kernel"],
                            float(m.get("gamma_a", 1e-3)), float(m.get("gamma_i", 1e-2)),
                            kn.LaplacianConfig(m.get("laplacian_bandwidth"), m.get("knn")))
        # squared-loss scores on {-1, +1} mapped to a pseudo-probability (f + 1) / 2 for thresholding
        predict = lambda pts: np.clip((kn.laprls_predict(fit, pts) + 1.0) / 2.0, 0.0, 1.0)  # noqa: E731
    else:
        fit = kn.rb_fit(x[labeled], y[labeled].astype(int), x[~labeled], rng=st.child_rng(cfg.seed, hs.KERNEL, 0, 0, 1), **kcfg)
        predict = lambda pts: kn.rb_predict_many(fit, pts)  # noqa: E731
    files = []
    if x.shape[1] == 2:
        grid = hs.grid_for(x, int(m.get("grid_size", 40)), float(m.get("grid_margin", 0.5)))
        fld = kn.probability_field(fit, grid, predict)
        io.write_results(hs.field_records(grid, fld), out / "field.csv")
        io.write_results(hs.contour_records(kn.contour_points(fld, grid)), out / "contour.csv", ["x1", "x2"])
        files += ["field.csv", "contour.csv"]
    prob = predict(x)
    io.write_results([{"row": i, "labeled": int(l), "probability": p} for i, (l, p) in enumerate(zip(labeled, prob))],
                     out / "kernel_predictions.csv")
    files.append("kernel_predictions.csv")
    summary = {"mode": args.mode, "bandwidth": fit.kernel.bandwidth}
    unl = ~labeled & ~np.isnan(y)
    if unl.any():
        summary["unlabeled_error"] = hs.error_rate(prob[unl], y[unl].astype(int))
    _finish(cfg, out, files, summary)


def cmd_binary_cell(args) -> None:
    cfg = _config(args, "binary-cell")
    rec = hs.binary_cell_record(cfg.model, cfg.data)
    if args.out:
        out = Path(cfg.out)
        io.write_results([rec], out / "binary_cell.csv")
        hs.write_manifest(cfg, out, ["binary_cell.csv"], {"p_star": rec["p_star"]})
    print(json.dumps(rec, default=float, sort_keys=True))


def cmd_analyze_relevance(args) -> None:
    cfg = _config(args, "relevance")
    spec = rel.load_spec(args.spec) if args.spec else hs.relevance_spec(cfg.data)
    verdict = rel.unlabeled_relevant(spec)
    doc = verdict.to_dict()
    doc["explanation"] = verdict.explanation()
    if args.out:
        out = Path(cfg.out)
        io.write_results([{"verdict": verdict.label, "explanation": verdict.explanation()}], out / "relevance.csv")
        hs.write_manifest(cfg, out, ["relevance.csv"], {"verdict": verdict.label})
    print(json.dumps(doc, sort_keys=True))


def _run_named(args, scenario: str) -> None:
    cfg = _config(args, scenario)
    res = hs.run_scenario(cfg)
    print(json.dumps({"out": cfg.out, "files": sorted(res.files), "summary": res.summary}, default=float, sort_keys=True))


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-mixture": cmd_fit_mixture,
    "fit-factor": cmd_fit_factor,
    "fit-kernel": cmd_fit_kernel,
    "binary-cell": cmd_binary_cell,
    "analyze-relevance": cmd_analyze_relevance,
    "sweep": lambda a: _run_named(a, "sweep"),
    "scenario": lambda a: _run_named(a, a.name),
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(json.dumps(exc.diagnostics, default=float), file=sys.stderr)
        return 3
    except (InvalidInputError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
