"""Replication scenarios and labeled-fraction sweeps.

Seeding: every random stream is ``child_rng(config.seed, *keys)``. Sweeps use
``keys = (SWEEP, j, r, s)`` for fraction index ``j``, replicate ``r`` and
stream ``s`` (0 = split, 1 = model fit). Both arms of a replicate share the
fit stream, so a split with no unlabeled cases gives identical arms.

An error is counted when the predictive probability of the true label is at
most 0.5, so exact ties count as errors.
"""

from __future__ import annotations

import copy
import json
import platform
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Callable

import numpy as np

from . import binary as bn
from . import data_io as io
from . import factor as fr
from . import kernel as kn
from . import mixture as mx
from . import relevance as rel
from . import stochastics as st
from .errors import InvalidParameterError, MissingInputError, NumericalFailure, SemisupError

SCENARIOS = ("mixture-fig1", "digits-6v9", "kernel-synthetic", "binary-cell", "relevance")

# stream keys
SCENE, SWEEP, DIGITS, KERNEL, MIXFIT = 1, 2, 3, 4, 5

DEFAULTS: dict[str, dict] = {
    "mixture-fig1": {
        "replicates": 1,
        "model": {"iw_convention": "standard", "n_burn": 2000, "n_keep": 2000, "thin": 2,
                  "grid": [-2.0, 2.0, 81], "density_x": [-1.5, 0.0, 1.5], "density_grid": [-4.0, 4.0, 161]},
        "data": {"n": 175, "labeled_range": [-1.0, 1.0]},
    },
    "digits-6v9": {
        "replicates": 20,
        "model": {"k": 2, "prior_scale": 4.0, "n_burn": 300, "n_keep": 600},
        "data": {"train_per_class": 400, "labeled_per_class": 2, "digits": [6, 9], "synthetic": False,
                 "synthetic_data": {"p": 400, "n_test": 1000, "loading_norm2": [10.0, 2.5], "noise": 1.0,
                                    "sigma2": 0.05, "seed": 1}},
    },
    "kernel-synthetic": {
        "replicates": 50,
        "labeled_counts": [4, 8],
        "model": {"bandwidth": 0.35, "prior": "iid", "prior_scale": 10.0, "intercept_scale": 4.0,
                  "n_burn": 300, "n_keep": 600, "grid_size": 40, "grid_margin": 0.5},
        "data": {"n": 50, "noise": 0.05, "seed": 3},
    },
    "binary-cell": {
        "replicates": 1,
        "model": {"prior": {"type": "dirichlet-mixture", "a": 0.5, "dir0": [4, 1, 1, 1], "dir1": [1, 1, 1, 4]}},
        "data": {"labeled": [[3, 1], [2, 5]], "unlabeled": [30, 10], "x_star": 1},
    },
    "relevance": {
        "replicates": 1,
        "model": {},
        "data": {"spec": {"standard": {"designs": ["YX", "Xm"], "prior_dependent": False}}},
    },
    "sweep": {
        "replicates": 50,
        "labeled_fractions": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        "model": {"kind": "kernel", "bandwidth": None, "prior": "iid", "prior_scale": 10.0,
                  "intercept_scale": 4.0, "n_burn": 200, "n_keep": 400},
        "data": {"kind": "expression", "n": 100, "p": 200, "k": 3, "seed": 17},
    },
}


@dataclass
class ExperimentConfig:
    """Resolved run configuration; also the schema of ``--config`` JSON files.

    Unknown keys in ``model``/``data`` are kept and passed to the scenario.
    ``labeled_fractions`` are fractions of each class kept labeled (the
    rest is designated unlabeled and scored); ``labeled_counts`` are total
    labeled counts split evenly across classes.
    """

    scenario: str
    seed: int = 20240601
    replicates: int = 1
    labeled_fractions: list[float] | None = None
    labeled_counts: list[int] | None = None
    out: str = "results"
    model: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS + ("sweep",):
            raise InvalidParameterError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS + ('sweep',)}")
        if int(self.replicates) < 1:
            raise InvalidParameterError("replicates must be at least 1")
        self.replicates = int(self.replicates)
        st.make_rng(self.seed)  # validates the seed range
        if self.labeled_fractions is not None:
            fr_ = [float(f) for f in self.labeled_fractions]
            if not fr_ or any(not 0.0 < f <= 1.0 for f in fr_):
                raise InvalidParameterError("labeled fractions must lie in (0, 1]")
            self.labeled_fractions = fr_
        if self.labeled_counts is not None:
            cnt = [int(c) for c in self.labeled_counts]
            if not cnt or any(c < 1 for c in cnt):
                raise InvalidParameterError("labeled counts must be at least 1")
            self.labeled_counts = cnt

    @classmethod
    def resolve(cls, scenario: str, overrides: dict | None = None) -> "ExperimentConfig":
        """Scenario defaults updated by ``overrides`` (nested dicts merge one level)."""
        base = copy.deepcopy(DEFAULTS.get(scenario, {}))
        over = dict(overrides or {})
        over.pop("scenario", None)
        for key in ("model", "data"):
            merged = dict(base.get(key, {}))
            merged.update(over.pop(key, {}) or {})
            base[key] = merged
        base.update(over)
        known = {f for f in cls.__dataclass_fields__}
        extra = set(base) - known
        if extra:
            raise InvalidParameterError(f"unknown config keys: {sorted(extra)}")
        return cls(scenario=scenario, **base)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> dict:
    """Read a JSON config; a run manifest is accepted and its ``config`` used."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise MissingInputError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidParameterError("config must be a JSON object")
    return doc.get("config", doc)


def versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "networkx"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    try:
        out["semisup"] = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        out["semisup"] = "source"
    return out


def write_manifest(config: ExperimentConfig, out_dir: Path, files: list[str], summary: dict | None = None) -> Path:
    doc = {"config": config.to_dict(), "seed": config.seed, "versions": versions(),
           "files": sorted(files), "summary": summary or {}}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n")
    return path


# --------------------------------------------------------------------------
# Shared helpers


def stratified_split(labels, fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Keep ``round(fraction * n_c)`` (at least 1) cases of each class labeled."""
    labels = np.asarray(labels).astype(int)
    keep = []
    for c in np.unique(labels):
        pool = np.flatnonzero(labels == c)
        k = min(len(pool), max(1, int(round(fraction * len(pool)))))
        keep.append(rng.choice(pool, k, replace=False))
    lab = np.sort(np.concatenate(keep))
    unl = np.setdiff1d(np.arange(len(labels)), lab)
    return lab, unl


def error_rate(prob_one, labels) -> float:
    return float(fr.classification_errors(prob_one, labels).mean())


def grid_for(points, size: int, margin: float) -> kn.Grid2D:
    lo = points.min(axis=0) - margin
    hi = points.max(axis=0) + margin
    return kn.Grid2D((float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1])), size, size)


def field_records(grid: kn.Grid2D, values: np.ndarray) -> list[dict]:
    pts = grid.points()
    return [{"x1": p[0], "x2": p[1], "probability": v} for p, v in zip(pts, values.ravel())]


def contour_records(points: np.ndarray) -> list[dict]:
    return [{"x1": p[0], "x2": p[1]} for p in points]


# --------------------------------------------------------------------------
# Synthetic datasets for sweeps


def sweep_dataset(data_cfg: dict) -> io.TabularDataset:
    kind = data_cfg.get("kind", "expression")
    rng = st.child_rng(int(data_cfg.get("seed", 17)))
    if kind == "two-cluster":
        return io.generate_two_cluster_2d(int(data_cfg.get("n", 50)), float(data_cfg.get("noise", 0.05)), rng)
    if kind == "expression":
        # high-dimensional factor data of the shape of an expression study
        p, k, n = int(data_cfg.get("p", 200)), int(data_cfg.get("k", 3)), int(data_cfg.get("n", 100))
        model = expression_model(p, k, rng)
        y, x = fr.simulate_factor_data(model, n, rng, binary=True)
        return io.TabularDataset(x, y)
    raise InvalidParameterError(f"unknown sweep data kind {kind!r}")


def expression_model(p: int, k: int, rng, signal: float = 2.0) -> fr.FactorModel:
    """Factor model with strong loadings and a response driven by the first factor."""
    b = rng.standard_normal((p, k)) * np.sqrt(1.0 / k)
    alpha = np.zeros(k)
    alpha[0] = signal
    return fr.FactorModel(b, np.full(p, 0.5), alpha, 0.25)


# --------------------------------------------------------------------------
# Sweep


SWEEP_MODELS = ("kernel", "factor-probit")


@dataclass
class ArmInputs:
    labeled_x: np.ndarray
    labeled_y: np.ndarray
    unlabeled_x: np.ndarray | None
    test_x: np.ndarray
    test_y: np.ndarray


def _fit_and_score(model_cfg: dict, arm: ArmInputs, rng) -> float:
    kind = model_cfg.get("kind", "kernel")
    if kind == "kernel":
        bw = model_cfg.get("bandwidth")
        fit = kn.rb_fit(arm.labeled_x, arm.labeled_y, arm.unlabeled_x,
                        kernel=kn.RbfKernel(bw) if bw else None,
                        prior_scale=float(model_cfg.get("prior_scale", 10.0)),
                        n_burn=int(model_cfg.get("n_burn", 200)), n_keep=int(model_cfg.get("n_keep", 400)),
                        rng=rng, prior=model_cfg.get("prior", "iid"),
                        intercept_scale=float(model_cfg.get("intercept_scale", 4.0)))
        return error_rate(kn.rb_predict_many(fit, arm.test_x), arm.test_y)
    if kind == "factor-probit":
        rows = arm.labeled_x if arm.unlabeled_x is None else np.vstack([arm.labeled_x, arm.unlabeled_x])
        factors = fr.compute_empirical_factors(rows, int(model_cfg.get("k", 2)))
        pfit = fr.probit_mcmc(fr.project(factors, arm.labeled_x), arm.labeled_y,
                              float(model_cfg.get("prior_scale", 4.0)), int(model_cfg.get("n_burn", 300)),
                              int(model_cfg.get("n_keep", 600)), rng, prior_rows=fr.project(factors, rows))
        return error_rate(fr.predict_probit(pfit, fr.project(factors, arm.test_x)), arm.test_y)
    raise InvalidParameterError(f"unknown sweep model kind {kind!r}")


def run_sweep(config: ExperimentConfig, dataset: io.TabularDataset | None = None,
              row_log: Callable[[str, float, int, np.ndarray], None] | None = None):
    """Labeled-fraction sweep comparing labeled-only and semisupervised fits.

    Returns ``(summary_rows, replicate_rows)``. Failed fits are recorded with
    an error message and excluded from the means, with failure counts in the
    summary. ``row_log(arm, fraction, replicate, row_indices)`` is called
    whenever an arm gathers design rows, which lets tests audit data access.
    """
    if config.model.get("kind", "kernel") not in SWEEP_MODELS:
        raise InvalidParameterError(f"unknown sweep model kind {config.model.get('kind')!r}; choose from {SWEEP_MODELS}")
    data = dataset if dataset is not None else sweep_dataset(config.data)
    x, y = data.features, np.asarray(data.labels).astype(int)
    fractions = config.labeled_fractions or [0.5]
    per_rep = []
    for j, frac in enumerate(fractions):
        for r in range(config.replicates):
            lab, unl = stratified_split(y, frac, st.child_rng(config.seed, SWEEP, j, r, 0))
            test = unl if unl.size else lab
            rec = {"fraction": frac, "replicate": r, "n_labeled": int(lab.size), "n_unlabeled": int(unl.size)}
            for arm in ("labeled_only", "semisupervised"):
                rows = lab if arm == "labeled_only" else np.concatenate([lab, unl])
                if row_log is not None:
                    row_log(arm, frac, r, rows)
                inputs = ArmInputs(x[lab], y[lab], None if arm == "labeled_only" or not unl.size else x[unl],
                                   x[test], y[test])
                try:
                    rec[f"{arm}_error"] = _fit_and_score(config.model, inputs, st.child_rng(config.seed, SWEEP, j, r, 1))
                    rec[f"{arm}_status"] = "ok"
                except SemisupError as exc:
                    rec[f"{arm}_error"] = float("nan")
                    rec[f"{arm}_status"] = f"failed: {type(exc).__name__}"
            per_rep.append(rec)
    per_rep.sort(key=lambda d: (d["fraction"], d["replicate"]))
    summary = []
    for frac in sorted(set(fractions)):
        rows = [d for d in per_rep if d["fraction"] == frac]
        out = {"labeled_fraction": frac, "unlabeled_percent": round(100.0 * (1.0 - frac), 10), "replicates": len(rows)}
        for arm in ("labeled_only", "semisupervised"):
            ok = [d[f"{arm}_error"] for d in rows if d[f"{arm}_status"] == "ok"]
            out[f"{arm}_mean_error"] = float(np.mean(ok)) if ok else float("nan")
            out[f"{arm}_failures"] = len(rows) - len(ok)
        summary.append(out)
    return summary, per_rep


# --------------------------------------------------------------------------
# Scenarios


@dataclass
class ScenarioResult:
    files: list[str]
    summary: dict


def _emit(out_dir: Path, name: str, records, columns=None) -> str:
    io.write_results(records, out_dir / name, columns)
    return name


def mixture_fig1(config: ExperimentConfig, replicate: int = 0) -> dict:
    """Fit full-data, labeled-only and semisupervised mixtures to one seeded scene.

    Returns the three curves, the scene and the mean squared deviations of
    the two partial-label curves from the full-data curve.
    """
    m, d = config.model, config.data
    prior = mx.NIWMixturePrior.reference_default(iw_convention=m.get("iw_convention", "standard"))
    scene = io.generate_mixture_scene(prior, int(d.get("n", 175)), tuple(d.get("labeled_range", (-1.0, 1.0))),
                                      st.child_rng(config.seed, SCENE, replicate))
    lo, hi, npts = m.get("grid", [-2.0, 2.0, 81])
    grid = np.linspace(float(lo), float(hi), int(npts))
    datasets = {"full": scene.full, "labeled_only": scene.data.labeled_only(), "semisupervised": scene.data}
    curves, samples = {}, {}
    for arm, ds in datasets.items():
        draws = mx.fit_mixture(ds, prior, int(m.get("n_burn", 500)), int(m.get("n_keep", 500)),
                               int(m.get("thin", 2)), st.child_rng(config.seed, MIXFIT, replicate))
        samples[arm] = draws
        curves[arm] = mx.predictive_regression_curve(draws, grid)
    msd_lab = float(np.mean((curves["labeled_only"] - curves["full"]) ** 2))
    msd_semi = float(np.mean((curves["semisupervised"] - curves["full"]) ** 2))
    return {"grid": grid, "curves": curves, "samples": samples, "scene": scene,
            "msd_labeled_only": msd_lab, "msd_semisupervised": msd_semi}


def _scenario_mixture(config: ExperimentConfig, out_dir: Path) -> ScenarioResult:
    files, reps = [], []
    m = config.model
    for r in range(config.replicates):
        res = mixture_fig1(config, r)
        suffix = "" if config.replicates == 1 else f"_rep{r}"
        for arm in ("full", "labeled_only", "semisupervised"):
            recs = [{"x": g, "predictive_mean": v} for g, v in zip(res["grid"], res["curves"][arm])]
            files.append(_emit(out_dir, f"curve_{arm}{suffix}.csv", recs))
        lo, hi, npts = m.get("density_grid", [-4.0, 4.0, 161])
        ygrid = np.linspace(float(lo), float(hi), int(npts))
        dens = []
        for xs in m.get("density_x", []):
            for arm in ("full", "labeled_only", "semisupervised"):
                vals = mx.predictive_density(res["samples"][arm], float(xs), ygrid)
                dens.extend({"arm": arm, "x_star": float(xs), "y": yv, "density": dv} for yv, dv in zip(ygrid, vals))
        if dens:
            files.append(_emit(out_dir, f"density{suffix}.csv", dens))
        scene = res["scene"]
        pts = [{"y": row[0], "x": row[1], "labeled": int(lab)} for row, lab in zip(scene.rows, scene.labeled_mask)]
        files.append(_emit(out_dir, f"scene{suffix}.csv", pts))
        ratio = res["msd_semisupervised"] / res["msd_labeled_only"] if res["msd_labeled_only"] > 0 else float("nan")
        reps.append({"replicate": r, "n_labeled": int(scene.labeled_mask.sum()),
                     "msd_labeled_only": res["msd_labeled_only"], "msd_semisupervised": res["msd_semisupervised"],
                     "ratio": ratio})
    files.append(_emit(out_dir, "summary.csv", reps))
    wins = sum(1 for d in reps if d["ratio"] <= 0.5)
    return ScenarioResult(files, {"replicates": len(reps), "ratio_at_most_half": wins})


def digits_split(x, labels, digits=(6, 9), train_per_class: int = 400):
    """First ``train_per_class`` images of each digit train; the rest test. ``y = 1`` marks the second digit."""
    labels = np.asarray(labels).astype(int)
    tr, te = [], []
    for dgt in digits:
        idx = np.flatnonzero(labels == dgt)
        if len(idx) <= train_per_class:
            raise InvalidParameterError(f"digit {dgt} has only {len(idx)} images")
        tr.append(idx[:train_per_class])
        te.append(idx[train_per_class:])
    tr, te = np.concatenate(tr), np.concatenate(te)
    y = (labels == digits[1]).astype(int)
    return x[tr], y[tr], x[te], y[te]


def synthetic_digits(train_per_class: int = 400, p: int = 400, n_test: int = 1000, loading_norm2=(10.0, 2.5),
                     noise: float = 1.0, sigma2: float = 0.05, seed: int = 1):
    """Stand-in for the digit images when no IDX files are available.

    Binary factor data: ``k = len(loading_norm2)`` factors whose loading
    columns have the given expected squared norms over ``p`` variables, noise
    variance ``noise`` per variable, and the class a probit threshold on the
    first factor. The pool is balanced by taking the first ``train_per_class``
    cases of each class; the next ``n_test`` draws are the test set.
    """
    rng = st.child_rng(int(seed), DIGITS)
    scales = np.sqrt(np.asarray(loading_norm2, dtype=float) / p)
    model = fr.FactorModel(rng.standard_normal((p, scales.size)) * scales, np.full(p, float(noise)),
                           np.eye(scales.size)[0], float(sigma2))
    y, x = fr.simulate_factor_data(model, 4 * train_per_class + n_test, rng, binary=True)
    pool_x, pool_y = x[: 4 * train_per_class], y[: 4 * train_per_class]
    tr = np.sort(np.concatenate([np.flatnonzero(pool_y == c)[:train_per_class] for c in (0, 1)]))
    if len(tr) < 2 * train_per_class:
        raise NumericalFailure("synthetic pool too unbalanced", {"class_counts": np.bincount(pool_y).tolist()})
    return pool_x[tr], pool_y[tr], x[4 * train_per_class:], y[4 * train_per_class:]


def digits_replicates(config: ExperimentConfig, x, labels) -> list[dict]:
    d = config.data
    digits = tuple(d.get("digits", (6, 9)))
    return digit_arms(config, *digits_split(x, labels, digits, int(d.get("train_per_class", 400))))


def synthetic_digits_replicates(config: ExperimentConfig) -> list[dict]:
    d = config.data
    syn = dict(d.get("synthetic_data", {}))
    return digit_arms(config, *synthetic_digits(int(d.get("train_per_class", 400)), **syn))


def digit_arms(config: ExperimentConfig, trx, try_, tex, tey) -> list[dict]:
    """Labeled-only and semisupervised factor-probit errors per replicate; both arms share the fit seed."""
    m, d = config.model, config.data
    out = []
    for r in range(config.replicates):
        lab = fr.draw_balanced_labels(try_, int(d.get("labeled_per_class", 2)), st.child_rng(config.seed, DIGITS, r, 0))
        kw = {"prior_scale": float(m.get("prior_scale", 4.0)), "n_burn": int(m.get("n_burn", 300)),
              "n_keep": int(m.get("n_keep", 600))}
        fit_rng = lambda: st.child_rng(config.seed, DIGITS, r, 1)  # noqa: E731
        e_lab = fr.factor_probit_pipeline(trx, try_, lab, tex, tey, int(m.get("k", 2)), False, fit_rng(), **kw)
        e_semi = fr.factor_probit_pipeline(trx, try_, lab, tex, tey, int(m.get("k", 2)), True, fit_rng(), **kw)
        out.append({"replicate": r, "labeled_only_error": e_lab, "semisupervised_error": e_semi})
    return out


def _scenario_digits(config: ExperimentConfig, out_dir: Path) -> ScenarioResult:
    d = config.data
    img, lab = d.get("idx_images"), d.get("idx_labels")
    if d.get("synthetic") and not (img or lab):
        return _digits_result(out_dir, synthetic_digits_replicates(config))
    if not img:
        raise MissingInputError("digits-6v9 needs MNIST images: pass --idx-images <path>")
    if not lab:
        raise MissingInputError("digits-6v9 needs MNIST labels: pass --idx-labels <path>")
    for flag, p in (("--idx-images", img), ("--idx-labels", lab)):
        if not Path(p).exists():
            raise MissingInputError(f"{flag} file {p} does not exist")
    x, labels = io.load_idx_pair(img, lab)
    return _digits_result(out_dir, digits_replicates(config, x, labels))


def _digits_result(out_dir: Path, reps: list[dict]) -> ScenarioResult:
    files = [_emit(out_dir, "digits_errors.csv", reps)]
    summary = {"labeled_only_mean_error": float(np.mean([r["labeled_only_error"] for r in reps])),
               "semisupervised_mean_error": float(np.mean([r["semisupervised_error"] for r in reps]))}
    files.append(_emit(out_dir, "digits_summary.csv", [summary]))
    return ScenarioResult(files, summary)


def kernel_fit_cfg(m: dict) -> dict:
    return {"kernel": kn.RbfKernel(float(m["bandwidth"])) if m.get("bandwidth") else None,
            "prior_scale": float(m.get("prior_scale", 10.0)), "n_burn": int(m.get("n_burn", 300)),
            "n_keep": int(m.get("n_keep", 600)), "prior": m.get("prior", "iid"),
            "intercept_scale": float(m.get("intercept_scale", 4.0))}


def kernel_dataset(config: ExperimentConfig) -> io.TabularDataset:
    d = config.data
    return io.generate_two_cluster_2d(int(d.get("n", 50)), float(d.get("noise", 0.05)), st.child_rng(int(d.get("seed", 3))))


def kernel_replicates(config: ExperimentConfig, n_labeled: int, data: io.TabularDataset | None = None) -> list[dict]:
    """Errors on the unlabeled cases for random balanced labeled sets of size ``n_labeled``."""
    data = data or kernel_dataset(config)
    x, y = data.features, np.asarray(data.labels).astype(int)
    cfg = kernel_fit_cfg(config.model)
    out = []
    for r in range(config.replicates):
        lab = fr.draw_balanced_labels(y, n_labeled // 2, st.child_rng(config.seed, KERNEL, n_labeled, r, 0))
        unl = np.setdiff1d(np.arange(len(y)), lab)
        rec = {"n_labeled": n_labeled, "replicate": r}
        for arm, ux in (("labeled_only", None), ("semisupervised", x[unl])):
            fit = kn.rb_fit(x[lab], y[lab], ux, rng=st.child_rng(config.seed, KERNEL, n_labeled, r, 1), **cfg)
            rec[f"{arm}_error"] = error_rate(kn.rb_predict_many(fit, x[unl]), y[unl])
        out.append(rec)
    return out


def kernel_fields(config: ExperimentConfig, n_labeled: int, draw: int = 0, data: io.TabularDataset | None = None):
    """Probability fields on the grid for full labels and for one labeled draw of each arm."""
    data = data or kernel_dataset(config)
    m = config.model
    x, y = data.features, np.asarray(data.labels).astype(int)
    grid = grid_for(x, int(m.get("grid_size", 40)), float(m.get("grid_margin", 0.5)))
    cfg = kernel_fit_cfg(m)
    fits = {"full": kn.rb_fit(x, y, None, rng=st.child_rng(config.seed, KERNEL, 0, 0, 1), **cfg)}
    lab = fr.draw_balanced_labels(y, n_labeled // 2, st.child_rng(config.seed, KERNEL, n_labeled, draw, 0))
    unl = np.setdiff1d(np.arange(len(y)), lab)
    rng = lambda: st.child_rng(config.seed, KERNEL, n_labeled, draw, 1)  # noqa: E731
    fits["labeled_only"] = kn.rb_fit(x[lab], y[lab], None, rng=rng(), **cfg)
    fits["semisupervised"] = kn.rb_fit(x[lab], y[lab], x[unl], rng=rng(), **cfg)
    fields = {k: kn.probability_field(f, grid) for k, f in fits.items()}
    return grid, fields, fits, lab


def _scenario_kernel(config: ExperimentConfig, out_dir: Path) -> ScenarioResult:
    data = kernel_dataset(config)
    files = [_emit(out_dir, "kernel_data.csv",
                   [{"x1": p[0], "x2": p[1], "y": int(c)} for p, c in zip(data.features, data.labels)])]
    summary = {}
    for n_lab in config.labeled_counts or [4, 8]:
        grid, fields, _, lab = kernel_fields(config, n_lab, 0, data)
        for arm, fld in fields.items():
            if arm == "full" and n_lab != (config.labeled_counts or [4, 8])[0]:
                continue
            tag = "full" if arm == "full" else f"{arm}_{n_lab}"
            files.append(_emit(out_dir, f"field_{tag}.csv", field_records(grid, fld)))
            files.append(_emit(out_dir, f"contour_{tag}.csv", contour_records(kn.contour_points(fld, grid)),
                               ["x1", "x2"]))
        summary[f"field_correlation_{n_lab}"] = float(np.corrcoef(fields["semisupervised"].ravel(),
                                                                  fields["full"].ravel())[0, 1])
        reps = kernel_replicates(config, n_lab, data)
        files.append(_emit(out_dir, f"kernel_errors_{n_lab}.csv", reps))
        summary[f"labeled_only_mean_error_{n_lab}"] = float(np.mean([r["labeled_only_error"] for r in reps]))
        summary[f"semisupervised_mean_error_{n_lab}"] = float(np.mean([r["semisupervised_error"] for r in reps]))
    files.append(_emit(out_dir, "kernel_summary.csv", [summary]))
    return ScenarioResult(files, summary)


def binary_cell_record(model: dict, data: dict) -> dict:
    prior = bn.prior_from_dict(model.get("prior", {"type": "product-beta"}))
    counts = bn.CountData(tuple(tuple(r) for r in data.get("labeled", [[0, 0], [0, 0]])),
                          tuple(data.get("unlabeled", [0, 0])))
    x_star = int(data.get("x_star", 1))
    pred = bn.posterior_predictive(prior, counts, x_star)
    rec = {"prior": prior_type(prior), "x_star": x_star,
           "n00": counts.labeled[0][0], "n01": counts.labeled[0][1],
           "n10": counts.labeled[1][0], "n11": counts.labeled[1][1],
           "m0": counts.unlabeled[0], "m1": counts.unlabeled[1],
           "p_star": pred.p_star, "method": pred.method}
    return rec


def prior_type(prior) -> str:
    return bn.prior_to_dict(prior)["type"]


def _scenario_binary(config: ExperimentConfig, out_dir: Path) -> ScenarioResult:
    rec = binary_cell_record(config.model, config.data)
    no_unl = dict(config.data, unlabeled=[0, 0])
    base = binary_cell_record(config.model, no_unl)
    rows = [base, rec] if rec != base else [rec]
    return ScenarioResult([_emit(out_dir, "binary_cell.csv", rows)], {"p_star": rec["p_star"], "method": rec["method"]})


def relevance_spec(data: dict) -> rel.ModelSpecGraph:
    spec = data.get("spec")
    if isinstance(spec, str):
        return rel.load_spec(spec)
    if isinstance(spec, dict):
        return rel.spec_from_dict(spec)
    raise InvalidParameterError("relevance needs data.spec as a path or an inline spec object")


def _scenario_relevance(config: ExperimentConfig, out_dir: Path) -> ScenarioResult:
    verdict = rel.unlabeled_relevant(relevance_spec(config.data))
    rows = [{"case": "input", "verdict": verdict.label, "explanation": verdict.explanation()}]
    for case in rel.reference_cases():
        v = rel.unlabeled_relevant(case.spec)
        rows.append({"case": case.name, "verdict": v.label, "explanation": v.explanation()})
    return ScenarioResult([_emit(out_dir, "relevance.csv", rows)], {"verdict": verdict.label})


def _scenario_sweep(config: ExperimentConfig, out_dir: Path) -> ScenarioResult:
    summary, reps = run_sweep(config)
    files = [_emit(out_dir, "sweep_summary.csv", summary), _emit(out_dir, "sweep_replicates.csv", reps)]
    return ScenarioResult(files, {"cells": len(summary)})


_RUNNERS = {
    "mixture-fig1": _scenario_mixture,
    "digits-6v9": _scenario_digits,
    "kernel-synthetic": _scenario_kernel,
    "binary-cell": _scenario_binary,
    "relevance": _scenario_relevance,
    "sweep": _scenario_sweep,
}


def run_scenario(config: ExperimentConfig, out_dir=None) -> ScenarioResult:
    """Run a scenario, write its CSV tables and ``manifest.json`` into ``out_dir``."""
    out_dir = Path(out_dir or config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = _RUNNERS[config.scenario](config, out_dir)
    write_manifest(config, out_dir, result.files, result.summary)
    return result
